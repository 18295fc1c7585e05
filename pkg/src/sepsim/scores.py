"""SOFA and SIRS severity scores, in hard (clinical table) and soft (sigmoid) form.

The hard scorers implement the standard clinical threshold tables. The soft
scorers replace each threshold indicator with sigmoid(tau * (x - theta) / w),
where w is 10% of the feature's reference dispersion, so they are
differentiable in the state and converge to the hard scores as tau grows.
The cardiovascular sub-score depends on the vasopressor dose in effect
(norepinephrine-equivalent, mcg/kg/min), which is passed in separately
because it is a treatment, not a state feature.

The *_with_grad variants are used inside the world-model training loss and
return d(score)/d(feature) for every contributing feature.
"""

from __future__ import annotations

import numpy as np

from .errors import ScoringError
from .features import IDX, ref_std

# (threshold, direction) per sub-score; direction +1 means "worse when above"
_RESP = ((400.0, -1), (300.0, -1), (200.0, -1), (100.0, -1))
_COAG = ((150.0, -1), (100.0, -1), (50.0, -1), (20.0, -1))
_LIVER = ((1.2, +1), (2.0, +1), (6.0, +1), (12.0, +1))
# GCS is integer-valued; thresholds sit at bin midpoints so the table is
# reproduced exactly on integers while a perfect score of 15 stays off the
# sigmoid's center when scoring continuous predictions
_CNS = ((14.5, -1), (12.5, -1), (9.5, -1), (5.5, -1))
_RENAL_CR = ((1.2, +1), (2.0, +1), (3.5, +1), (5.0, +1))
# urine: < 500 mL/day scores 3, < 200 mL/day scores 4 (feature is mL/4h)
_RENAL_URINE = ((500.0 / 6.0, -1, 3.0), (200.0 / 6.0, -1, 1.0))
# cardio vasopressor steps on the NE-equivalent scale (dopamine 5/15 mapped /100)
_CARDIO_NE = (0.05, 0.1)

_SOFA_FEATURES = ("meanbp", "pao2fio2_ratio", "platelet", "bilirubin_total",
                  "gcs", "creatinine", "urine_output")
_SIRS_FEATURES = ("temp_c", "heart_rate", "resp_rate", "paco2", "wbc")


def _width(name: str) -> float:
    return 0.1 * ref_std(name)


def _hard_steps(x: float, steps) -> int:
    s = 0
    for theta, sign in steps:
        if (sign > 0 and x >= theta) or (sign < 0 and x < theta):
            s += 1
    return s


def _require(values: np.ndarray, names) -> None:
    for n in names:
        if not np.isfinite(values[IDX[n]]):
            raise ScoringError(f"feature '{n}' is missing (NaN); impute before scoring")


def hard_sofa(values: np.ndarray, ne_eq: float = 0.0) -> int:
    """Total SOFA 0-24 from a clinical-unit state vector.

    ne_eq is the vasopressor support in effect over the window the state
    summarizes; 0 means no vasopressors.
    """
    _require(values, _SOFA_FEATURES)
    resp = _hard_steps(values[IDX["pao2fio2_ratio"]], _RESP)
    coag = _hard_steps(values[IDX["platelet"]], _COAG)
    liver = _hard_steps(values[IDX["bilirubin_total"]], _LIVER)
    cns = _hard_steps(values[IDX["gcs"]], _CNS)
    if ne_eq > _CARDIO_NE[1]:
        cardio = 4
    elif ne_eq > _CARDIO_NE[0]:
        cardio = 3
    elif ne_eq > 0:
        cardio = 2
    else:
        cardio = 1 if values[IDX["meanbp"]] < 70.0 else 0
    cr = _hard_steps(values[IDX["creatinine"]], _RENAL_CR)
    u = values[IDX["urine_output"]]
    urine = sum(int(u < theta) * int(pts) for theta, _, pts in _RENAL_URINE)
    renal = max(cr, urine)
    return resp + coag + liver + cns + cardio + renal


def hard_sirs(values: np.ndarray) -> int:
    """SIRS criteria count 0-4."""
    _require(values, _SIRS_FEATURES)
    t = values[IDX["temp_c"]]
    c1 = t > 38.0 or t < 36.0
    c2 = values[IDX["heart_rate"]] > 90.0
    c3 = values[IDX["resp_rate"]] > 20.0 or values[IDX["paco2"]] < 32.0
    w = values[IDX["wbc"]]
    c4 = w > 12.0 or w < 4.0
    return int(c1) + int(c2) + int(c3) + int(c4)


def _sig(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _soft_steps(x: np.ndarray, steps, w: float, tau: float):
    """Sum of sigmoid threshold crossings; returns (value, dvalue/dx)."""
    val = np.zeros_like(x)
    grad = np.zeros_like(x)
    for entry in steps:
        theta, sign = entry[0], entry[1]
        pts = entry[2] if len(entry) > 2 else 1.0
        s = _sig(sign * tau * (x - theta) / w)
        val += pts * s
        grad += pts * s * (1.0 - s) * sign * tau / w
    return val, grad


def soft_sofa_with_grad(vals: dict[str, np.ndarray], tau: float, ne_eq: np.ndarray):
    """Soft SOFA over batched clinical-unit features.

    vals maps each of meanbp, pao2fio2_ratio, platelet, bilirubin_total, gcs,
    creatinine, urine_output to a [B] array. Returns (score [B], grads dict).
    The vasopressor steps of the cardio sub-score are treated as constants of
    ne_eq (a treatment input), so gradients flow only through state features.
    """
    resp, g_resp = _soft_steps(vals["pao2fio2_ratio"], _RESP, _width("pao2fio2_ratio"), tau)
    coag, g_coag = _soft_steps(vals["platelet"], _COAG, _width("platelet"), tau)
    liver, g_liver = _soft_steps(vals["bilirubin_total"], _LIVER, _width("bilirubin_total"), tau)
    cns, g_cns = _soft_steps(vals["gcs"], _CNS, _width("gcs"), tau)
    cr, g_cr = _soft_steps(vals["creatinine"], _RENAL_CR, _width("creatinine"), tau)
    urine, g_urine = _soft_steps(vals["urine_output"], _RENAL_URINE, _width("urine_output"), tau)

    # renal = max(creatinine, urine); gradient follows the active branch
    cr_wins = cr >= urine
    renal = np.where(cr_wins, cr, urine)
    g_cr = np.where(cr_wins, g_cr, 0.0)
    g_urine = np.where(cr_wins, 0.0, g_urine)

    on_vaso = ne_eq > 0
    vaso_pts = 2.0 + (ne_eq > _CARDIO_NE[0]) + (ne_eq > _CARDIO_NE[1])
    map_soft, g_map = _soft_steps(vals["meanbp"], ((70.0, -1),), _width("meanbp"), tau)
    cardio = np.where(on_vaso, vaso_pts, map_soft)
    g_map = np.where(on_vaso, 0.0, g_map)

    score = resp + coag + liver + cns + cardio + renal
    grads = {
        "pao2fio2_ratio": g_resp, "platelet": g_coag, "bilirubin_total": g_liver,
        "gcs": g_cns, "creatinine": g_cr, "urine_output": g_urine, "meanbp": g_map,
    }
    return score, grads


def _soft_or(a, da, b, db):
    # probabilistic OR of two soft indicators: a + b - ab
    return a + b - a * b, da * (1.0 - b), db * (1.0 - a)


def soft_sirs_with_grad(vals: dict[str, np.ndarray], tau: float):
    """Soft SIRS over batched features temp_c, heart_rate, resp_rate, paco2, wbc."""
    t_hi, gt_hi = _soft_steps(vals["temp_c"], ((38.0, +1),), _width("temp_c"), tau)
    t_lo, gt_lo = _soft_steps(vals["temp_c"], ((36.0, -1),), _width("temp_c"), tau)
    c1, d_t1, d_t2 = _soft_or(t_hi, gt_hi, t_lo, gt_lo)

    c2, g_hr = _soft_steps(vals["heart_rate"], ((90.0, +1),), _width("heart_rate"), tau)

    rr, g_rr = _soft_steps(vals["resp_rate"], ((20.0, +1),), _width("resp_rate"), tau)
    pc, g_pc = _soft_steps(vals["paco2"], ((32.0, -1),), _width("paco2"), tau)
    c3, d_rr, d_pc = _soft_or(rr, g_rr, pc, g_pc)

    w_hi, gw_hi = _soft_steps(vals["wbc"], ((12.0, +1),), _width("wbc"), tau)
    w_lo, gw_lo = _soft_steps(vals["wbc"], ((4.0, -1),), _width("wbc"), tau)
    c4, d_w1, d_w2 = _soft_or(w_hi, gw_hi, w_lo, gw_lo)

    score = c1 + c2 + c3 + c4
    grads = {
        "temp_c": d_t1 + d_t2, "heart_rate": g_hr,
        "resp_rate": d_rr, "paco2": d_pc, "wbc": d_w1 + d_w2,
    }
    return score, grads


def _as_batch(values: np.ndarray, names) -> dict[str, np.ndarray]:
    return {n: np.asarray([float(values[IDX[n]])]) for n in names}


def soft_sofa(values: np.ndarray, tau: float, ne_eq: float = 0.0) -> float:
    """Scalar soft SOFA of one clinical-unit state vector."""
    _require(values, _SOFA_FEATURES)
    score, _ = soft_sofa_with_grad(_as_batch(values, _SOFA_FEATURES), tau,
                                   np.asarray([ne_eq]))
    return float(score[0])


def soft_sirs(values: np.ndarray, tau: float) -> float:
    """Scalar soft SIRS of one clinical-unit state vector."""
    _require(values, _SIRS_FEATURES)
    score, _ = soft_sirs_with_grad(_as_batch(values, _SIRS_FEATURES), tau)
    return float(score[0])
