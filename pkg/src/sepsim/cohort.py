"""Patient data model: trajectories, dose aggregation, action grid, persistence.

A trajectory is a sequence of 4-hour windows. Each window carries the
42-feature state (NaN where unmeasured, with an observed mask), the raw
vasopressor/fluid doses given during the window, and the discrete action
those doses map to on the 5x5 grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, FittingError, ParseError, VersionError
from .features import D, IDX, LOG_FLAGS, NAMES

COHORT_SCHEMA_VERSION = 1

N_LEVELS = 5
N_ACTIONS = N_LEVELS * N_LEVELS
LEVEL_NAMES = ("None", "Low", "Medium", "High", "Very High")

# volume-expansion coefficient per fluid kind
FLUID_COEFF: dict[str, float] = {
    "Saline 0.255%": 0.25,
    "Saline 0.3%": 0.30,
    "NaCl 0.45%": 0.50,
    "D5 1/2NS": 0.50,
    "NaCl 0.9%": 1.00,
    "Lactated Ringers": 1.00,
    "Plasma-Lyte": 1.00,
    "Albumin 5%": 2.00,
    "FFP": 2.00,
    "Platelets": 2.00,
    "Mannitol": 2.75,
    "NaCl 3%": 3.00,
    "Albumin 25%": 5.00,
    "Sodium Bicarbonate 8.4%": 6.66,
    "NaCl 23.4%": 8.00,
}


@dataclass(frozen=True)
class RawDoses:
    """Doses administered over one 4-hour window.

    Vasopressor rates are mcg/kg/min except vasopressin (U/hr).
    fluids is a sequence of (kind, volume mL) with kinds from FLUID_COEFF.
    """

    norepinephrine: float = 0.0
    epinephrine: float = 0.0
    phenylephrine: float = 0.0
    dopamine: float = 0.0
    vasopressin: float = 0.0
    fluids: tuple[tuple[str, float], ...] = ()


def compute_ne_eq(doses: RawDoses) -> float:
    """Norepinephrine-equivalent dose in mcg/kg/min.

    NE + Epi + Phenylephrine/10 + Dopamine/100 + Vasopressin * 2.5/60,
    with vasopressin given in U/hr (the 2.5/60 factor converts to per-minute).
    """
    rates = (doses.norepinephrine, doses.epinephrine, doses.phenylephrine,
             doses.dopamine, doses.vasopressin)
    if any(r < 0 for r in rates):
        raise DomainError("vasopressor rates must be non-negative")
    return (doses.norepinephrine + doses.epinephrine + doses.phenylephrine / 10.0
            + doses.dopamine / 100.0 + doses.vasopressin * 2.5 / 60.0)


def compute_tev(fluids) -> float:
    """Total effective volume (mL): sum of volume times expansion coefficient."""
    total = 0.0
    for kind, volume in fluids:
        if kind not in FLUID_COEFF:
            raise DomainError(f"unknown fluid kind: {kind!r}")
        if volume < 0:
            raise DomainError(f"negative volume for fluid kind {kind!r}")
        total += FLUID_COEFF[kind] * volume
    return total


@dataclass(frozen=True)
class Action:
    """Point on the 5x5 treatment grid; bin 0 means zero dose on that axis."""

    vaso_bin: int
    fluid_bin: int

    def __post_init__(self):
        if self.vaso_bin not in range(N_LEVELS) or self.fluid_bin not in range(N_LEVELS):
            raise DomainError(f"action bins must be 0-4, got {(self.vaso_bin, self.fluid_bin)}")

    @property
    def index(self) -> int:
        """Joint index 0-24, vaso-major."""
        return self.vaso_bin * N_LEVELS + self.fluid_bin

    @staticmethod
    def from_index(idx: int) -> "Action":
        if not 0 <= idx < N_ACTIONS:
            raise DomainError(f"action index must be 0-24, got {idx}")
        return Action(idx // N_LEVELS, idx % N_LEVELS)


@dataclass(frozen=True)
class DiscretizationSpec:
    """Nonzero-dose quartile edges for each treatment axis."""

    vaso_edges: tuple[float, float, float]
    fluid_edges: tuple[float, float, float]

    def __post_init__(self):
        for edges in (self.vaso_edges, self.fluid_edges):
            if not (edges[0] <= edges[1] <= edges[2]):
                raise DomainError(f"edges must be non-decreasing, got {edges}")

    def vaso_bin(self, ne_eq: float) -> int:
        return _bin_of(ne_eq, self.vaso_edges)

    def fluid_bin(self, tev: float) -> int:
        return _bin_of(tev, self.fluid_edges)

    def representative_ne_eq(self, vaso_bin: int) -> float:
        return _representative(vaso_bin, self.vaso_edges)

    def representative_tev(self, fluid_bin: int) -> float:
        return _representative(fluid_bin, self.fluid_edges)


def _bin_of(dose: float, edges) -> int:
    if dose < 0:
        raise DomainError("doses must be non-negative")
    if dose == 0:
        return 0
    # right-closed intervals: dose exactly on an edge goes to the lower bin
    if dose <= edges[0]:
        return 1
    if dose <= edges[1]:
        return 2
    if dose <= edges[2]:
        return 3
    return 4


def _representative(b: int, edges) -> float:
    # interior dose per bin; discretizing it recovers the bin
    if b == 0:
        return 0.0
    if b == 1:
        return edges[0] / 2.0
    if b == 2:
        return (edges[0] + edges[1]) / 2.0
    if b == 3:
        return (edges[1] + edges[2]) / 2.0
    return edges[2] * 1.5


def fit_discretization(trajectories) -> DiscretizationSpec:
    """25/50/75th percentiles of nonzero NE-Eq and nonzero TEV (linear interpolation)."""
    vaso = []
    fluid = []
    for traj in trajectories:
        for step in traj.steps:
            ne = compute_ne_eq(step.doses)
            tev = compute_tev(step.doses.fluids)
            if ne > 0:
                vaso.append(ne)
            if tev > 0:
                fluid.append(tev)
    if not vaso or not fluid:
        raise FittingError("need at least one nonzero dose on each axis to fit edges")
    q = (25, 50, 75)
    return DiscretizationSpec(
        vaso_edges=tuple(float(v) for v in np.percentile(vaso, q)),
        fluid_edges=tuple(float(v) for v in np.percentile(fluid, q)),
    )


def discretize_action(doses: RawDoses, spec: DiscretizationSpec) -> Action:
    return Action(spec.vaso_bin(compute_ne_eq(doses)),
                  spec.fluid_bin(compute_tev(doses.fluids)))


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-feature median (clinical units) and z-score stats in transformed space."""

    median: np.ndarray      # [42] clinical units, for imputation
    mean: np.ndarray        # [42] after optional log1p
    std: np.ndarray         # [42] > 0
    log_flags: tuple[bool, ...] = LOG_FLAGS

    def transform(self, values: np.ndarray) -> np.ndarray:
        x = np.array(values, dtype=float)
        flags = np.asarray(self.log_flags)
        x[..., flags] = np.log1p(np.maximum(x[..., flags], 0.0))
        return (x - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        x = np.asarray(z, dtype=float) * self.std + self.mean
        flags = np.asarray(self.log_flags)
        out = np.array(x)
        out[..., flags] = np.expm1(np.minimum(x[..., flags], 30.0))
        return out


def fit_normalization(trajectories) -> NormalizationSpec:
    """Fit medians and z-score stats from observed entries only."""
    stacked = np.concatenate([t.values_matrix() for t in trajectories], axis=0)
    masks = np.concatenate([t.masks_matrix() for t in trajectories], axis=0)
    median = np.empty(D)
    mean = np.empty(D)
    std = np.empty(D)
    flags = np.asarray(LOG_FLAGS)
    for j in range(D):
        col = stacked[masks[:, j], j]
        if col.size == 0:
            raise FittingError(f"feature '{NAMES[j]}' never observed; cannot fit normalization")
        median[j] = np.median(col)
        tcol = np.log1p(np.maximum(col, 0.0)) if flags[j] else col
        mean[j] = tcol.mean()
        std[j] = max(float(tcol.std()), 1e-6)
    return NormalizationSpec(median=median, mean=mean, std=std)


@dataclass(frozen=True)
class Static:
    age: float
    gender: int
    weight: float
    readmission: int
    comorbidity_index: float


@dataclass(frozen=True)
class Step:
    values: np.ndarray              # [42] clinical units, NaN = missing
    mask: np.ndarray                # [42] bool, True = measured this window
    doses: RawDoses
    action: Action
    hour: int

    def feature(self, name: str) -> float:
        return float(self.values[IDX[name]])


@dataclass
class Trajectory:
    patient_id: str
    static: Static
    steps: list[Step]
    outcome: str                    # "survived" | "died" (90-day mortality)

    def __post_init__(self):
        if not self.steps:
            raise DomainError("trajectory must have at least one step")
        if self.outcome not in ("survived", "died"):
            raise DomainError(f"unknown outcome {self.outcome!r}")

    def __len__(self) -> int:
        return len(self.steps)

    def values_matrix(self) -> np.ndarray:
        return np.stack([s.values for s in self.steps])

    def masks_matrix(self) -> np.ndarray:
        return np.stack([s.mask for s in self.steps])

    def actions(self) -> list[Action]:
        return [s.action for s in self.steps]


def impute(trajectory: Trajectory, medians: np.ndarray) -> Trajectory:
    """Fill missing values: forward-fill, then the population median for cold starts.

    Observed values are never altered and the mask is preserved, so the
    operation is idempotent.
    """
    filled = trajectory.values_matrix()
    mask = trajectory.masks_matrix()
    last = np.array(medians, dtype=float)
    for t in range(filled.shape[0]):
        row = filled[t]
        missing = ~np.isfinite(row)
        row[missing] = last[missing]
        last = row
    steps = [replace(s, values=filled[t], mask=mask[t])
             for t, s in enumerate(trajectory.steps)]
    return Trajectory(trajectory.patient_id, trajectory.static, steps, trajectory.outcome)


@dataclass
class Cohort:
    trajectories: list[Trajectory]
    disc: DiscretizationSpec
    norm: NormalizationSpec
    splits: list[str]               # "train" | "val" | "test" per trajectory
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.splits) != len(self.trajectories):
            raise DomainError("one split label per trajectory required")

    def split(self, name: str) -> list[Trajectory]:
        return [t for t, s in zip(self.trajectories, self.splits) if s == name]

    def imputed(self) -> "Cohort":
        trajs = [impute(t, self.norm.median) for t in self.trajectories]
        return Cohort(trajs, self.disc, self.norm, list(self.splits), dict(self.meta))

    def mortality(self) -> float:
        died = sum(t.outcome == "died" for t in self.trajectories)
        return died / len(self.trajectories)


def _values_to_json(values: np.ndarray) -> list:
    return [None if not np.isfinite(v) else float(v) for v in values]


def _values_from_json(raw: list) -> np.ndarray:
    return np.array([np.nan if v is None else float(v) for v in raw], dtype=float)


def _traj_to_obj(traj: Trajectory, split: str) -> dict:
    return {
        "patient_id": traj.patient_id,
        "split": split,
        "static": vars(traj.static),
        "outcome": traj.outcome,
        "steps": [
            {
                "hour": s.hour,
                "values": _values_to_json(s.values),
                "mask": [bool(b) for b in s.mask],
                "action": [s.action.vaso_bin, s.action.fluid_bin],
                "doses": {
                    "norepinephrine": s.doses.norepinephrine,
                    "epinephrine": s.doses.epinephrine,
                    "phenylephrine": s.doses.phenylephrine,
                    "dopamine": s.doses.dopamine,
                    "vasopressin": s.doses.vasopressin,
                    "fluids": [[k, v] for k, v in s.doses.fluids],
                },
            }
            for s in traj.steps
        ],
    }


def _traj_from_obj(obj: dict) -> tuple[Trajectory, str]:
    steps = []
    for s in obj["steps"]:
        d = s["doses"]
        doses = RawDoses(
            norepinephrine=d["norepinephrine"], epinephrine=d["epinephrine"],
            phenylephrine=d["phenylephrine"], dopamine=d["dopamine"],
            vasopressin=d["vasopressin"],
            fluids=tuple((k, float(v)) for k, v in d["fluids"]),
        )
        steps.append(Step(
            values=_values_from_json(s["values"]),
            mask=np.array(s["mask"], dtype=bool),
            doses=doses,
            action=Action(*s["action"]),
            hour=int(s["hour"]),
        ))
    traj = Trajectory(obj["patient_id"], Static(**obj["static"]), steps, obj["outcome"])
    return traj, obj["split"]


def save_cohort(cohort: Cohort, path) -> None:
    """Line-delimited records: one header line, then one trajectory per line."""
    header = {
        "schema_version": COHORT_SCHEMA_VERSION,
        "disc": {"vaso_edges": list(cohort.disc.vaso_edges),
                 "fluid_edges": list(cohort.disc.fluid_edges)},
        "norm": {"median": cohort.norm.median.tolist(),
                 "mean": cohort.norm.mean.tolist(),
                 "std": cohort.norm.std.tolist(),
                 "log_flags": list(cohort.norm.log_flags)},
        "meta": cohort.meta,
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, allow_nan=False) + "\n")
        for traj, split in zip(cohort.trajectories, cohort.splits):
            f.write(json.dumps(_traj_to_obj(traj, split), allow_nan=False) + "\n")


def load_cohort(path) -> Cohort:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError("empty cohort file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ParseError(f"bad header: {e}", line=1) from e
    version = header.get("schema_version")
    if version != COHORT_SCHEMA_VERSION:
        raise VersionError(f"unsupported cohort schema version {version!r}")
    disc = DiscretizationSpec(tuple(header["disc"]["vaso_edges"]),
                              tuple(header["disc"]["fluid_edges"]))
    norm = NormalizationSpec(
        median=np.array(header["norm"]["median"]),
        mean=np.array(header["norm"]["mean"]),
        std=np.array(header["norm"]["std"]),
        log_flags=tuple(bool(b) for b in header["norm"]["log_flags"]),
    )
    trajectories = []
    splits = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            traj, split = _traj_from_obj(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ParseError(f"bad trajectory record: {e}", line=i) from e
        trajectories.append(traj)
        splits.append(split)
    return Cohort(trajectories, disc, norm, splits, header.get("meta", {}))
