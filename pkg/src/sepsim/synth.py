"""Synthetic sepsis cohort generator with planted ground-truth dynamics.

A scalar latent severity drives every observable: MAP and most labs worsen
monotonically with severity, vasopressors raise MAP (and transiently clear
lactate) with dose-dependent effect, early fluids reduce severity while
cumulative volume beyond an overload cap becomes harmful, and 90-day
mortality is a logistic in terminal severity plus overload excess. Because
the truth is known, treatment policies can be scored exactly by replaying
them through the generator.

The logged behavior policy is clinician-like: it follows the guideline rules
with a configurable adherence rate, scheduling deliberate violations (always
of the zero-dose kind, so the judgment is invariant to where the fitted dose
quantile edges land) to hit that rate, and explores off its base action with
small probability.

Values are produced through a sub-window event layer and aggregated with the
4-hour rules: vitals mean, GCS minimum, labs last value, ventilation most
severe, urine/fluids summed, vasopressor rate maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import safety
from .cohort import (Action, Cohort, DiscretizationSpec, RawDoses, Static, Step,
                     Trajectory, discretize_action, fit_discretization,
                     fit_normalization)
from .errors import ConfigError
from .features import D, IDX, FEATURES
from .scores import hard_sofa

# log-uniform dose maps from intensity u in (0, 1] to physical dose
VASO_DOSE_RANGE = (0.012, 1.2)    # NE-equivalent mcg/kg/min
FLUID_TEV_RANGE = (60.0, 3600.0)  # effective mL per 4h window


@dataclass(frozen=True)
class SynthConfig:
    adherence_target: float = 0.90   # fraction of logged decisions left adherent
    explore_eps: float = 0.20        # chance the behavior policy goes off-script
    lab_obs_rate: float = 0.55       # per-window observation rate for slow labs
    overload_cap_ml_per_kg: float = 70.0
    mort_slope: float = 0.85
    mort_center: float = 7.4         # severity at which mortality crosses 50%
    mean_steps: float = 11.6
    sd_steps: float = 3.2
    min_steps: int = 4
    max_steps: int = 18
    fixed_steps: int | None = None   # force equal-length trajectories
    split: tuple[float, float, float] = (0.7, 0.2, 0.1)

    def __post_init__(self):
        if not 0.0 < self.adherence_target <= 1.0:
            raise ConfigError("adherence_target must be in (0, 1]")
        if not 0.0 <= self.explore_eps < 1.0:
            raise ConfigError("explore_eps must be in [0, 1)")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")
        if self.fixed_steps is not None and self.fixed_steps < 1:
            raise ConfigError("fixed_steps must be >= 1")
        if self.min_steps < 1 or self.max_steps < self.min_steps:
            raise ConfigError("bad step-count range")


def vaso_dose_from_intensity(u: float) -> float:
    lo, hi = VASO_DOSE_RANGE
    return math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo)))


def tev_from_intensity(u: float) -> float:
    lo, hi = FLUID_TEV_RANGE
    return math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo)))


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def _sat(dose: float) -> float:
    # saturating dose response on the NE-eq scale
    return dose / (dose + 0.25)


def _clip_feature(name: str, x: float) -> float:
    f = FEATURES[IDX[name]]
    return float(min(max(x, f.lo), f.hi))


# ---------------------------------------------------------------------------
# event layer: sub-window samples aggregated by the 4-hour rules

_VITAL_MEAN = ("heart_rate", "meanbp", "resp_rate", "spo2", "temp_c", "shock_index", "fio2")
_SLOW_LABS = ("ph", "bicarbonate", "base_excess", "anion_gap", "bun", "sodium",
              "potassium", "chloride", "glucose", "hemoglobin", "hematocrit",
              "wbc", "platelet", "inr", "pt", "ptt", "bilirubin_total", "albumin",
              "alt", "ast", "pao2fio2_ratio", "paco2", "total_co2", "magnesium",
              "creatinine")


def aggregate_window(hourly: dict[str, np.ndarray], labs_last: dict[str, float],
                     urine_hourly: np.ndarray, gcs_hourly: np.ndarray,
                     vent_hourly: np.ndarray) -> dict[str, float]:
    """4-hour aggregation: vitals mean, GCS min, labs last, urine sum, vent max."""
    out = {name: float(np.mean(vals)) for name, vals in hourly.items()}
    out.update(labs_last)
    out["urine_output"] = float(np.sum(urine_hourly))
    out["gcs"] = float(np.min(gcs_hourly))
    out["vent_status"] = float(np.max(vent_hourly))
    return out


def _window_targets(z: float, d_v: float, tev: float, overload_l: float) -> dict[str, float]:
    """Window-level expected observables given severity and the treatment in effect."""
    # vasopressors overshoot in recovering patients, and recovered patients
    # rebound to a high-normal baseline: the substrate of the extreme-
    # overdosing failure mode (pressure is already high, more vaso is harmful)
    vaso_gain = 14.0 + 20.0 * max(0.0, 5.0 - z) / 5.0
    rebound = 4.0 * max(0.0, 2.5 - z)
    map_ = (82.0 + rebound - 3.6 * z + vaso_gain * _sat(d_v)
            + 2.2 * min(tev, 2500.0) / 1000.0 - 1.2 * overload_l)
    hr = 76.0 + 5.2 * z
    return {
        "heart_rate": hr,
        "meanbp": map_,
        "resp_rate": 15.0 + 1.1 * z,
        "spo2": 98.0 - 0.55 * z,
        "temp_c": 36.8 + 0.18 * z,
        "shock_index": hr / max(1.45 * map_, 1.0),
        "fio2": 0.21 + 0.04 * z,
        "gcs": 15.0 - 0.75 * z,
        "urine_output": 320.0 * math.exp(-0.13 * z),
        "lactate": 0.8 * math.exp(0.23 * z) * math.exp(-0.35 * _sat(d_v)),
        "ph": 7.42 - 0.02 * z,
        "bicarbonate": 24.0 - 0.9 * z,
        "base_excess": 1.0 - 1.1 * z,
        "anion_gap": 10.0 + 0.9 * z,
        "bun": 16.0 * math.exp(0.09 * z),
        "creatinine": 0.8 * math.exp(0.16 * z),
        "sodium": 138.0,
        "potassium": 4.0 + 0.06 * z,
        "chloride": 104.0,
        "glucose": 130.0 * math.exp(0.03 * z),
        "hemoglobin": 11.5 - 0.12 * z,
        "hematocrit": 34.5 - 0.36 * z,
        "wbc": 9.0 * math.exp(0.07 * z),
        "platelet": 260.0 * math.exp(-0.09 * z),
        "inr": 1.1 * math.exp(0.05 * z),
        "pt": 12.5 * math.exp(0.04 * z),
        "ptt": 30.0 * math.exp(0.04 * z),
        "bilirubin_total": 0.7 * math.exp(0.16 * z),
        "albumin": 3.4 - 0.09 * z,
        "alt": 35.0 * math.exp(0.11 * z),
        "ast": 40.0 * math.exp(0.12 * z),
        "pao2fio2_ratio": 420.0 * math.exp(-0.085 * z),
        "paco2": 40.0 - 0.8 * z,
        "total_co2": 25.0 - 0.9 * z,
        "magnesium": 2.0,
    }


def _observe_window(z: float, d_v: float, tev: float, overload_l: float,
                    vent_prev: int, statics: Static, rng: np.random.Generator,
                    cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray, int]:
    """One recorded 4h window: (values, observed mask, vent ordinal)."""
    tgt = _window_targets(z, d_v, tev, overload_l)

    hourly = {}
    for name in _VITAL_MEAN:
        scale = 0.25 * FEATURES[IDX[name]].ref_std
        hourly[name] = tgt[name] + rng.normal(0.0, scale, size=4)
    labs = {}
    for name in _SLOW_LABS:
        scale = 0.30 * FEATURES[IDX[name]].ref_std
        labs[name] = tgt[name] + rng.normal(0.0, scale)
    labs["lactate"] = tgt["lactate"] * math.exp(rng.normal(0.0, 0.08))
    urine_hourly = np.maximum(tgt["urine_output"] / 4.0 + rng.normal(0, 12.0, size=4), 0.0)
    gcs_hourly = np.round(tgt["gcs"] + rng.normal(0, 0.6, size=4))

    p_vent = _sigmoid(1.0 * (z - 5.5)) + (0.30 if vent_prev > 0 else 0.0)
    if rng.random() < min(p_vent, 0.97):
        level = int(min(4, max(1, round(z / 3.0))))
    else:
        level = 0
    vent_hourly = np.array([vent_prev, level, level, level])

    agg = aggregate_window(hourly, labs, urine_hourly, gcs_hourly, vent_hourly)

    values = np.full(D, np.nan)
    mask = np.zeros(D, dtype=bool)

    def put(name: str, x: float):
        values[IDX[name]] = _clip_feature(name, x)
        mask[IDX[name]] = True

    put("age", statics.age)
    put("gender", statics.gender)
    put("weight", statics.weight)
    put("readmission", statics.readmission)
    put("comorbidity_index", statics.comorbidity_index)
    for name in _VITAL_MEAN + ("urine_output", "vent_status"):
        put(name, agg[name])
    put("gcs", round(agg["gcs"]))
    put("lactate", agg["lactate"])  # perfusion marker, checked every window
    scored = values.copy()          # full picture, before dropping unrecorded labs
    for name in _SLOW_LABS:
        x = _clip_feature(name, agg[name])
        scored[IDX[name]] = x
        if rng.random() < cfg.lab_obs_rate:
            values[IDX[name]] = x
            mask[IDX[name]] = True
    # SOFA is recalculated from the window aggregate, so it is always present
    scored[IDX["sofa"]] = 0.0
    put("sofa", float(hard_sofa(scored, ne_eq=d_v)))
    return values, mask, level


# ---------------------------------------------------------------------------
# planted dynamics

def _advance(z: float, d_v: float, tev: float, map_now: float, lactate_now: float,
             cum_before: float, cap: float, rng: np.random.Generator) -> float:
    hypotensive = map_now < 65.0
    hypoperf = lactate_now > 2.0 or hypotensive
    drift = -0.15 + 0.10 * z
    benefit_v = 1.1 * _sat(d_v) if hypotensive else -1.0 * _sat(d_v)
    if hypoperf and cum_before < cap:
        benefit_f = 0.55 * tev / 1000.0
    elif cum_before + tev > cap:
        benefit_f = -0.25 * tev / 1000.0
    else:
        benefit_f = 0.10 * tev / 1000.0
    overload_l = max(0.0, cum_before + tev - cap) / 1000.0
    harm = 0.16 * overload_l
    z_next = z + drift - benefit_v - benefit_f + harm + rng.normal(0.0, 0.30)
    return float(min(max(z_next, 0.0), 12.0))


def _mortality_prob(z_final: float, cum_tev: float, cap: float, age: float,
                    cfg: SynthConfig) -> float:
    overload_l = max(0.0, cum_tev - cap) / 1000.0
    x = cfg.mort_slope * (z_final - cfg.mort_center)
    x += 0.12 * min(overload_l, 8.0)
    x += 0.20 * (age - 65.0) / 15.0
    return _sigmoid(x)


# ---------------------------------------------------------------------------
# intensity-level policies over the planted truth

@dataclass
class Obs:
    """What a dosing policy sees at a decision point."""

    values: np.ndarray
    hour: int
    step: int
    cum_tev: float
    weight: float
    cap: float
    prev_vaso_dose: float
    prev_vaso_intensity: float
    history: list          # prior Steps (actions may be provisional)

    @property
    def map_(self) -> float:
        return float(self.values[IDX["meanbp"]])

    @property
    def lactate(self) -> float:
        return float(self.values[IDX["lactate"]])

    @property
    def hypoperfusion(self) -> bool:
        return self.lactate > 2.0 or self.map_ < 65.0

    @property
    def fluids_adequate(self) -> bool:
        return safety.prior_fluid_adequate(self.history, self.weight)


def zero_policy(obs: Obs, rng: np.random.Generator) -> tuple[float, float]:
    return 0.0, 0.0


def optimal_intensity_policy(obs: Obs, rng: np.random.Generator) -> tuple[float, float]:
    """Exploits the planted dynamics: strong vaso only under hypotension,
    front-loaded fluids strictly below the overload cap."""
    u_v = 0.9 if obs.map_ < 65.0 else 0.0
    if obs.hypoperfusion and obs.cum_tev < obs.cap - tev_from_intensity(0.85):
        u_f = 0.85
    elif obs.hypoperfusion and obs.cum_tev < obs.cap - tev_from_intensity(0.4):
        u_f = 0.4
    else:
        u_f = 0.0
    return u_v, u_f


class _BehaviorPolicy:
    """Clinician-like dosing with scheduled guideline violations.

    Deliberate violations use only zero-dose patterns (withhold fluids under
    rule G2 conditions, withhold vasopressors under rule G3 conditions), so
    whether a logged step is judged adherent does not depend on the fitted
    dose quantile edges.
    """

    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self.decisions = 0
        self.violations = 0

    def _base(self, obs: Obs, rng: np.random.Generator) -> tuple[float, float]:
        map_, cum, cap = obs.map_, obs.cum_tev, obs.cap
        # fluids
        if obs.hypoperfusion and cum < cap:
            u_f = rng.uniform(0.60, 0.98) if obs.hour < 8 else rng.uniform(0.40, 0.90)
        elif cum >= cap:
            u_f = 0.0 if rng.random() < 0.8 else rng.uniform(0.05, 0.30)
        else:
            u_f = 0.0 if rng.random() < 0.5 else rng.uniform(0.05, 0.50)
        # vasopressors
        on_vaso = obs.prev_vaso_dose > 0
        if map_ < 65.0 and obs.fluids_adequate:
            u_v = min(0.98, max(0.35, 0.35 + 0.04 * (65.0 - map_) + rng.uniform(-0.1, 0.25)))
        elif map_ < 65.0:
            u_v = rng.uniform(0.05, 0.50) if rng.random() < 0.4 else 0.0
        elif on_vaso and map_ >= 80.0:
            u_v = 0.0 if rng.random() < 0.6 else rng.uniform(0.02, 0.20)
        elif on_vaso:
            # weaning is slow in practice; the dose often carries over
            u_v = min(obs.prev_vaso_intensity * rng.uniform(0.7, 1.05), 0.98)
        else:
            u_v = 0.0
        return u_v, u_f

    def _explore(self, obs: Obs, u_v: float, u_f: float,
                 rng: np.random.Generator) -> tuple[float, float]:
        # random dose changes that provably keep the step adherent
        if rng.random() < 0.5:
            if obs.hour < safety.EARLY_WINDOW_HOURS and obs.hypoperfusion:
                u_f = rng.uniform(0.05, 0.95)       # must stay nonzero (G2)
            else:
                u_f = 0.0 if rng.random() < 0.3 else rng.uniform(0.02, 0.95)
        else:
            over_target = obs.prev_vaso_dose > 0 and obs.map_ >= 80.0
            if obs.map_ < 65.0 and obs.fluids_adequate:
                u_v = rng.uniform(0.05, 0.95)       # must stay nonzero (G3)
            elif over_target:
                u_v = 0.0 if rng.random() < 0.5 else rng.uniform(0.02, 0.20)
            else:
                u_v = 0.0 if rng.random() < 0.4 else rng.uniform(0.02, 0.95)
        return u_v, u_f

    def __call__(self, obs: Obs, rng: np.random.Generator) -> tuple[float, float]:
        u_v, u_f = self._base(obs, rng)
        if rng.random() < self.cfg.explore_eps:
            u_v, u_f = self._explore(obs, u_v, u_f, rng)

        g2_feasible = obs.hour < safety.EARLY_WINDOW_HOURS and obs.hypoperfusion
        g3_feasible = obs.map_ < 65.0 and obs.fluids_adequate
        want = self.violations < (1.0 - self.cfg.adherence_target) * (self.decisions + 1)
        violated = False
        if want and g3_feasible:
            u_v = 0.0
            violated = True
        elif want and g2_feasible:
            u_f = 0.0
            if obs.map_ < safety.UNDERDOSE_MAP and u_v == 0.0:
                u_v = rng.uniform(0.1, 0.5)  # breach G2 without extreme underdosing
            violated = True

        self.decisions += 1
        self.violations += int(violated)
        return u_v, u_f


# ---------------------------------------------------------------------------
# dose composition: turn intensities into raw dose records

def _compose_vaso(dose: float, rng: np.random.Generator) -> dict[str, float]:
    if dose <= 0:
        return {}
    style = rng.random()
    if style < 0.70:
        return {"norepinephrine": dose}
    if style < 0.90:
        return {"norepinephrine": 0.7 * dose, "phenylephrine": 0.3 * dose * 10.0}
    # vasopressin adjunct: U/hr so that its NE-eq share is 20%
    return {"norepinephrine": 0.8 * dose, "vasopressin": 0.2 * dose * 60.0 / 2.5}


def _compose_fluids(tev: float, rng: np.random.Generator) -> tuple[tuple[str, float], ...]:
    if tev <= 0:
        return ()
    style = rng.random()
    if style < 0.70:
        return (("NaCl 0.9%", tev),)
    if style < 0.90:
        return (("Lactated Ringers", tev),)
    if style < 0.98:
        return (("NaCl 0.9%", 0.7 * tev), ("Albumin 5%", 0.3 * tev / 2.0))
    return (("NaCl 0.9%", 0.5 * tev), ("Albumin 25%", 0.5 * tev / 5.0))


# ---------------------------------------------------------------------------
# cohort generation

_PROVISIONAL_SPEC = DiscretizationSpec(
    vaso_edges=(0.04, 0.12, 0.37), fluid_edges=(160.0, 420.0, 1130.0))


@dataclass
class _Rollout:
    steps: list[Step]
    outcome: str
    z_path: list[float]
    cum_tev: float
    statics: Static | None = None


def _roll_patient(pid: int, rng: np.random.Generator, cfg: SynthConfig,
                  policy, statics: Static | None = None) -> _Rollout:
    if statics is None:
        statics = Static(
            age=float(np.clip(rng.normal(65.0, 16.0), 18, 95)),
            gender=int(rng.random() < 0.43),
            weight=float(np.clip(rng.normal(80.0, 18.0), 40, 160)),
            readmission=int(rng.random() < 0.12),
            comorbidity_index=float(rng.poisson(3.0)),
        )
    cap = cfg.overload_cap_ml_per_kg * statics.weight
    if cfg.fixed_steps is not None:
        n_steps = cfg.fixed_steps
    else:
        n_steps = int(np.clip(round(rng.normal(cfg.mean_steps, cfg.sd_steps)),
                              cfg.min_steps, cfg.max_steps))

    z = float(np.clip(rng.normal(4.3, 2.1), 0.3, 10.8))
    cum_tev = 0.0
    prev_dose_v = 0.0
    prev_u_v = 0.0
    prev_tev = 0.0
    vent = 0
    steps: list[Step] = []
    z_path = [z]

    for t in range(n_steps):
        overload_l = max(0.0, cum_tev - cap) / 1000.0
        values, mask, vent = _observe_window(z, prev_dose_v, prev_tev, overload_l,
                                             vent, statics, rng, cfg)
        obs = Obs(values=values, hour=4 * t, step=t, cum_tev=cum_tev,
                  weight=statics.weight, cap=cap, prev_vaso_dose=prev_dose_v,
                  prev_vaso_intensity=prev_u_v, history=steps)
        u_v, u_f = policy(obs, rng)

        dose_v = vaso_dose_from_intensity(u_v) if u_v > 0 else 0.0
        tev = tev_from_intensity(u_f) if u_f > 0 else 0.0
        doses = RawDoses(**_compose_vaso(dose_v, rng), fluids=_compose_fluids(tev, rng))
        action = discretize_action(doses, _PROVISIONAL_SPEC)  # rebinned after fitting
        steps.append(Step(values=values, mask=mask, doses=doses, action=action, hour=4 * t))

        map_now = float(values[IDX["meanbp"]])
        lac_now = float(values[IDX["lactate"]])
        z = _advance(z, dose_v, tev, map_now, lac_now, cum_tev, cap, rng)
        z_path.append(z)
        cum_tev += tev
        prev_dose_v, prev_u_v, prev_tev = dose_v, u_v, tev

    p_die = _mortality_prob(z, cum_tev, cap, statics.age, cfg)
    outcome = "died" if rng.random() < p_die else "survived"
    return _Rollout(steps=steps, outcome=outcome, z_path=z_path,
                    cum_tev=cum_tev, statics=statics)


def _split_labels(n: int, fractions) -> list[str]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    labels = ["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val)
    return labels[:n]


def generate_synthetic_cohort(seed: int, n_patients: int,
                              config: SynthConfig = SynthConfig()) -> Cohort:
    """Deterministic cohort of behavior-policy trajectories.

    The discretization spec is fitted on the training-split doses and every
    logged action is re-binned under it; the normalization spec is fitted on
    training-split observed values.
    """
    if n_patients < 1:
        raise ConfigError("n_patients must be >= 1")
    root = np.random.SeedSequence(seed)
    patient_seeds = root.spawn(n_patients)
    behavior = _BehaviorPolicy(config)

    rollouts = []
    for i in range(n_patients):
        rng = np.random.default_rng(patient_seeds[i])
        rollouts.append(_roll_patient(i, rng, config, behavior))

    splits = _split_labels(n_patients, config.split)
    trajectories = [
        Trajectory(patient_id=f"synth-{seed}-{i:05d}", static=r.statics,
                   steps=r.steps, outcome=r.outcome)
        for i, r in enumerate(rollouts)
    ]
    train = [t for t, s in zip(trajectories, splits) if s == "train"]
    disc = fit_discretization(train)
    for traj in trajectories:
        traj.steps = [Step(values=s.values, mask=s.mask, doses=s.doses,
                           action=discretize_action(s.doses, disc), hour=s.hour)
                      for s in traj.steps]
    norm = fit_normalization(train)
    meta = {
        "generator_seed": seed,
        "n_patients": n_patients,
        "adherence_target_pct": 100.0 * config.adherence_target,
        "scheduled_violation_pct": 100.0 * behavior.violations / max(behavior.decisions, 1),
        "overload_cap_ml_per_kg": config.overload_cap_ml_per_kg,
        "fixed_steps": config.fixed_steps,
    }
    return Cohort(trajectories, disc, norm, splits, meta)


def replay_policy_survival(seed: int, n_patients: int, policy,
                           config: SynthConfig = SynthConfig()) -> float:
    """Survival fraction when `policy(obs, rng) -> (u_vaso, u_fluid)` is rolled
    through the planted dynamics; the ground-truth score of a policy."""
    root = np.random.SeedSequence(seed)
    survived = 0
    for i, child in enumerate(root.spawn(n_patients)):
        rng = np.random.default_rng(child)
        r = _roll_patient(i, rng, config, policy)
        survived += r.outcome == "survived"
    return survived / n_patients


class PlantedOptimalPolicy:
    """Grid-action policy that exploits the generator's planted dynamics:
    maximal vasopressors only under hypotension, front-loaded fluids strictly
    below the overload cap. Its intensity twin is optimal_intensity_policy."""

    name = "planted_optimal"

    def __init__(self, overload_cap_ml_per_kg: float = 70.0):
        self.cap_per_kg = overload_cap_ml_per_kg

    def propose(self, ctx):
        return [self.decide(ctx, [])]

    def decide(self, ctx, candidates):
        cap = self.cap_per_kg * ctx.weight
        vaso = 4 if ctx.map_ < 65.0 else 0
        fluid = 0
        if ctx.hypoperfusion:
            for level in (4, 3, 2):
                if ctx.cum_tev + ctx.disc.representative_tev(level) < cap:
                    fluid = level
                    break
        return Action(vaso, fluid)

    def action_distribution(self, ctx):
        import numpy as _np
        p = _np.zeros(25)
        p[self.decide(ctx, []).index] = 1.0
        return p


def sample_admission(seed: int, config: SynthConfig = SynthConfig()) -> Trajectory:
    """One freshly sampled hour-0 patient (single recorded window)."""
    cfg = SynthConfig(adherence_target=config.adherence_target,
                      explore_eps=config.explore_eps,
                      lab_obs_rate=config.lab_obs_rate,
                      overload_cap_ml_per_kg=config.overload_cap_ml_per_kg,
                      mort_slope=config.mort_slope, mort_center=config.mort_center,
                      fixed_steps=1)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    r = _roll_patient(0, rng, cfg, zero_policy)
    return Trajectory(patient_id=f"admission-{seed}", static=r.statics,
                      steps=r.steps, outcome=r.outcome)


def demo_admission() -> Trajectory:
    """A bundled single-step admission used by the docs, demos, and tests:
    an elderly male with mild hyperlactatemia who is not in shock."""
    values = np.full(D, np.nan)
    mask = np.zeros(D, dtype=bool)

    def put(name, x):
        values[IDX[name]] = x
        mask[IDX[name]] = True

    put("age", 76.0); put("gender", 0.0); put("weight", 82.0)
    put("readmission", 0.0); put("comorbidity_index", 3.0)
    put("heart_rate", 63.9); put("meanbp", 69.8); put("resp_rate", 21.4)
    put("spo2", 99.0); put("temp_c", 37.0); put("gcs", 14.0)
    put("shock_index", 63.9 / (1.45 * 69.8)); put("urine_output", 600.0)
    put("ph", 7.4); put("lactate", 2.6); put("bicarbonate", 21.0)
    put("base_excess", 4.0); put("anion_gap", 12.0); put("bun", 21.0)
    put("creatinine", 1.1); put("sodium", 134.0); put("potassium", 4.1)
    put("chloride", 102.0); put("glucose", 217.0); put("hemoglobin", 12.1)
    put("hematocrit", 36.0); put("wbc", 9.1); put("platelet", 151.0)
    put("inr", 1.2); put("pt", 12.9); put("ptt", 22.1)
    put("bilirubin_total", 0.6); put("albumin", 3.1); put("alt", 19.0)
    put("ast", 30.0); put("pao2fio2_ratio", 107.0 / 0.35)
    put("vent_status", 0.0); put("fio2", 0.35); put("paco2", 34.0)
    put("total_co2", 23.0); put("magnesium", 2.2)
    put("sofa", float(hard_sofa(values, ne_eq=0.0)))

    step = Step(values=values, mask=mask, doses=RawDoses(), action=Action(0, 0), hour=0)
    static = Static(age=76.0, gender=0, weight=82.0, readmission=0, comorbidity_index=3.0)
    return Trajectory(patient_id="demo-admission", static=static,
                      steps=[step], outcome="survived")
