"""Septic-shock definition, guideline rules, and unsafe-action detectors.

Rule ids are stable:
  G1  emergency priority (informational, never violated by an action alone)
  G2  early resuscitation: hour < 3 with hypoperfusion requires fluid_bin >= 1
  G3  vasopressor threshold: MAP < 65 after adequate fluids requires vaso_bin >= 1
  G4  MAP target: on vasopressors with MAP >= 80, vaso_bin must not be 4
  G5  septic shock definition (informational)
  U1  extreme underdosing (MAP < 55, no vasopressor, fluid at most Low)
  O1  extreme overdosing (MAP > 95, vasopressor Very High)

All comparisons are strict exactly as written; boundary values do not trigger.
These rules only judge actions, they never rewrite them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cohort import Action, Trajectory, compute_tev
from .features import IDX

_MAP = IDX["meanbp"]
_LACTATE = IDX["lactate"]

UNDERDOSE_MAP = 55.0
OVERDOSE_MAP = 95.0
MAP_TARGET = 65.0
OVER_TARGET_MAP = 80.0
FLUID_BOLUS_ML_PER_KG = 30.0
EARLY_WINDOW_HOURS = 3


@dataclass(frozen=True)
class SafetyVerdict:
    adherent: bool
    violated_rules: tuple[str, ...] = ()
    unsafe: str = "none"            # "none" | "underdose" | "overdose"

    def __post_init__(self):
        assert self.adherent == (len(self.violated_rules) == 0)


def is_septic_shock(state: np.ndarray, current_vaso_level: float) -> bool:
    """All three: on vasopressors, MAP < 65, lactate > 2."""
    return (current_vaso_level > 0
            and state[_MAP] < MAP_TARGET
            and state[_LACTATE] > 2.0)


def hypoperfusion(state: np.ndarray) -> bool:
    return state[_LACTATE] > 2.0 or state[_MAP] < MAP_TARGET


def detect_unsafe(state: np.ndarray, action: Action) -> str:
    """Returns "underdose", "overdose", or "none" for a single decision."""
    map_ = state[_MAP]
    if map_ < UNDERDOSE_MAP and action.vaso_bin == 0 and action.fluid_bin <= 1:
        return "underdose"
    if map_ > OVERDOSE_MAP and action.vaso_bin == 4:
        return "overdose"
    return "none"


def prior_fluid_adequate(history, weight: float | None) -> bool:
    """Whether resuscitation fluids given before this decision were adequate.

    Adequate := cumulative total effective volume over the stay reaches
    30 mL/kg. Without a usable weight, falls back to two consecutive trailing
    windows at fluid level Medium or above.
    """
    steps = list(history)
    if not steps:
        return False
    if weight is not None and weight > 0:
        tev = sum(compute_tev(s.doses.fluids) for s in steps)
        return tev >= FLUID_BOLUS_ML_PER_KG * weight
    recent = steps[-2:]
    return len(recent) == 2 and all(s.action.fluid_bin >= 2 for s in recent)


def check_guideline(history, state: np.ndarray, action: Action, hour: int,
                    weight: float | None = None) -> SafetyVerdict:
    """Judge one decision against rules G2-G4 and the unsafe detectors.

    history is the sequence of prior Steps (possibly empty); state is the
    42-feature vector the decision was made on.
    """
    violations: list[str] = []
    if hour < EARLY_WINDOW_HOURS and hypoperfusion(state) and action.fluid_bin == 0:
        violations.append("G2")
    prev_vaso = history[-1].action.vaso_bin if history else 0
    if (state[_MAP] < MAP_TARGET and prior_fluid_adequate(history, weight)
            and action.vaso_bin <= prev_vaso and action.vaso_bin == 0):
        violations.append("G3")
    if prev_vaso > 0 and state[_MAP] >= OVER_TARGET_MAP and action.vaso_bin == 4:
        violations.append("G4")
    return SafetyVerdict(adherent=not violations,
                         violated_rules=tuple(violations),
                         unsafe=detect_unsafe(state, action))


@dataclass
class SafetyRates:
    adherence_pct: float
    underdose_pct: float
    overdose_pct: float
    n_steps: int
    violations_by_rule: dict = field(default_factory=dict)


def judge_trajectory(traj: Trajectory, actions) -> list[SafetyVerdict]:
    """Per-step verdicts for a sequence of actions on a logged trajectory."""
    verdicts = []
    for t, action in enumerate(actions):
        verdicts.append(check_guideline(
            traj.steps[:t], traj.steps[t].values, action,
            hour=traj.steps[t].hour, weight=traj.static.weight))
    return verdicts


def safety_rates(trajectories, actions_per_traj) -> SafetyRates:
    """Step-level adherence and unsafe-action percentages over a cohort.

    actions_per_traj holds one Action sequence per trajectory (the policy's
    choices on the logged states).
    """
    n = 0
    adherent = 0
    under = 0
    over = 0
    by_rule: dict[str, int] = {}
    for traj, actions in zip(trajectories, actions_per_traj):
        for v in judge_trajectory(traj, actions):
            n += 1
            adherent += v.adherent
            under += v.unsafe == "underdose"
            over += v.unsafe == "overdose"
            for rule in v.violated_rules:
                by_rule[rule] = by_rule.get(rule, 0) + 1
    if n == 0:
        raise ValueError("no decisions to judge")
    return SafetyRates(
        adherence_pct=100.0 * adherent / n,
        underdose_pct=100.0 * under / n,
        overdose_pct=100.0 * over / n,
        n_steps=n,
        violations_by_rule=by_rule,
    )
