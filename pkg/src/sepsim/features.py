"""Canonical 42-feature patient state schema.

Every state vector in the toolkit is a float array of length 42 in the
clinical units listed here, ordered exactly as FEATURES. The table also
carries the per-feature plumbing the rest of the package needs: which
features are log1p-transformed before z-scoring, physiologic clip ranges
for simulation, and a reference scale used to set soft-threshold widths.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Feature:
    name: str
    unit: str
    lo: float          # physiologic floor (simulation clip)
    hi: float          # physiologic ceiling
    ref_std: float     # reference dispersion in clinical units
    log: bool = False  # log1p-transform before z-scoring


# fmt: off
FEATURES: tuple[Feature, ...] = (
    # demographics (constant across a stay)
    Feature("age", "years", 18, 100, 16.0),
    Feature("gender", "0=male,1=female", 0, 1, 0.5),
    Feature("weight", "kg", 35, 200, 22.0),
    Feature("readmission", "0/1", 0, 1, 0.35),
    Feature("comorbidity_index", "points", 0, 20, 2.5),
    # vital signs
    Feature("heart_rate", "bpm", 25, 210, 17.0),
    Feature("meanbp", "mmHg", 30, 140, 15.0),
    Feature("resp_rate", "breaths/min", 4, 55, 5.5),
    Feature("spo2", "%", 60, 100, 3.5),
    Feature("temp_c", "C", 32, 42, 0.8),
    Feature("gcs", "points", 3, 15, 3.5),
    Feature("shock_index", "ratio", 0.2, 2.5, 0.22),
    Feature("urine_output", "mL/4h", 0, 2000, 180.0),
    # metabolic and renal
    Feature("ph", "", 6.8, 7.8, 0.07),
    Feature("lactate", "mmol/L", 0.3, 20, 1.8, log=True),
    Feature("bicarbonate", "mEq/L", 5, 45, 4.5),
    Feature("base_excess", "mEq/L", -25, 25, 5.0),
    Feature("anion_gap", "mEq/L", 3, 35, 4.0),
    Feature("bun", "mg/dL", 2, 180, 20.0, log=True),
    Feature("creatinine", "mg/dL", 0.2, 15, 1.4, log=True),
    Feature("sodium", "mEq/L", 115, 165, 5.0),
    Feature("potassium", "mEq/L", 2.0, 7.5, 0.6),
    Feature("chloride", "mEq/L", 80, 130, 6.0),
    Feature("glucose", "mg/dL", 30, 900, 55.0, log=True),
    # hematology
    Feature("hemoglobin", "g/dL", 4, 20, 2.2),
    Feature("hematocrit", "%", 12, 60, 6.5),
    Feature("wbc", "K/uL", 0.1, 80, 6.0, log=True),
    Feature("platelet", "K/uL", 5, 1000, 110.0),
    Feature("inr", "ratio", 0.8, 12, 0.8),
    Feature("pt", "sec", 9, 80, 6.0),
    Feature("ptt", "sec", 18, 150, 14.0),
    # organ function
    Feature("bilirubin_total", "mg/dL", 0.1, 40, 2.5, log=True),
    Feature("albumin", "g/dL", 1.0, 5.5, 0.6),
    Feature("alt", "U/L", 5, 5000, 90.0, log=True),
    Feature("ast", "U/L", 5, 5000, 110.0, log=True),
    Feature("pao2fio2_ratio", "mmHg", 40, 600, 100.0),
    Feature("sofa", "points", 0, 24, 3.5),
    # respiratory
    Feature("vent_status", "ordinal 0-4", 0, 4, 1.2),
    Feature("fio2", "fraction", 0.21, 1.0, 0.15),
    Feature("paco2", "mmHg", 15, 110, 9.0),
    # others
    Feature("total_co2", "mEq/L", 5, 50, 4.5),
    Feature("magnesium", "mEq/L", 0.8, 5.0, 0.35),
)
# fmt: on

D = len(FEATURES)
assert D == 42

NAMES: tuple[str, ...] = tuple(f.name for f in FEATURES)
IDX: dict[str, int] = {f.name: i for i, f in enumerate(FEATURES)}
LOG_FLAGS: tuple[bool, ...] = tuple(f.log for f in FEATURES)

# demographics live in both the static record and the state vector
STATIC_NAMES = ("age", "gender", "weight", "readmission", "comorbidity_index")
STATIC_IDX = tuple(IDX[n] for n in STATIC_NAMES)

VENT_LEVELS = ("None", "O2", "HFNC", "NIV", "Invasive")


def ref_std(name: str) -> float:
    return FEATURES[IDX[name]].ref_std
