"""Treatment-policy abstraction shared by the rollout loop and the evaluators.

A policy sees a PolicyContext (the decision point: patient statics, history,
current state, and optionally a world model with the encoder state through
the current step) and must provide:

  propose(ctx)              up to 3 candidate actions worth simulating
  decide(ctx, candidates)   the committed action, given simulated candidates
  action_distribution(ctx)  probabilities over the 25 grid actions (for
                            off-policy evaluation); deterministic policies
                            return a delta distribution
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cohort import Action, DiscretizationSpec, Static, Step, compute_tev
from .features import IDX

N_ACTIONS = 25
MAX_CANDIDATES = 3


@dataclass
class PolicyContext:
    static: Static
    history: list[Step]                  # steps strictly before the decision
    state: np.ndarray                    # [42] imputed clinical values at t
    mask: np.ndarray
    hour: int
    t: int
    cum_tev: float                       # fluids given before this decision
    prev_action: Optional[Action]
    disc: DiscretizationSpec
    world: object = None                 # WorldModelParams when simulations exist
    hidden: object = None                # encoder HiddenState through step t
    extra: dict = field(default_factory=dict)

    @property
    def map_(self) -> float:
        return float(self.state[IDX["meanbp"]])

    @property
    def lactate(self) -> float:
        return float(self.state[IDX["lactate"]])

    @property
    def weight(self) -> float:
        return float(self.static.weight)

    @property
    def hypoperfusion(self) -> bool:
        return self.lactate > 2.0 or self.map_ < 65.0


def delta_distribution(action: Action) -> np.ndarray:
    p = np.zeros(N_ACTIONS)
    p[action.index] = 1.0
    return p


class Policy:
    """Base class; concrete policies override decide and usually propose."""

    name = "policy"

    def propose(self, ctx: PolicyContext) -> list[Action]:
        return [self.decide(ctx, [])]

    def decide(self, ctx: PolicyContext, candidates: list) -> Action:
        raise NotImplementedError

    def action_distribution(self, ctx: PolicyContext) -> np.ndarray:
        return delta_distribution(self.decide(ctx, []))


def cumulative_tev(history) -> float:
    return sum(compute_tev(s.doses.fluids) for s in history)
