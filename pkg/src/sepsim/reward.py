"""Step-wise physiological rewards, terminal rewards, and shaped trajectory returns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ScoringError
from .features import IDX

_SOFA = IDX["sofa"]
_LACTATE = IDX["lactate"]


@dataclass(frozen=True)
class RewardConfig:
    stagnation: float = -0.025        # fires when SOFA is unchanged and > 0
    sofa_delta: float = -0.125        # per point of SOFA increase
    lactate_delta: float = -2.0       # times tanh(lactate change)
    terminal_survive: float = 15.0
    terminal_die: float = -15.0
    guideline_penalty: float = -10.0  # per violating decision step
    overrun_penalty: float = -5.0     # episode exceeded its interaction budget
    scale: float = 0.1
    clip: tuple[float, float] = (-2.0, 2.0)
    gamma: float = 0.99

    def __post_init__(self):
        if not self.clip[0] < self.clip[1]:
            raise ValueError("clip range must be increasing")
        if self.scale <= 0 or not 0 < self.gamma <= 1:
            raise ValueError("scale must be > 0 and gamma in (0, 1]")


def step_reward(s_t: np.ndarray, s_next: np.ndarray, config: RewardConfig = RewardConfig()) -> float:
    """Reward for the physiological transition s_t -> s_next."""
    sofa0, sofa1 = s_t[_SOFA], s_next[_SOFA]
    lac0, lac1 = s_t[_LACTATE], s_next[_LACTATE]
    if not (np.isfinite(sofa0) and np.isfinite(sofa1) and np.isfinite(lac0) and np.isfinite(lac1)):
        raise ScoringError("SOFA and lactate must be present in both states")
    r = 0.0
    if sofa1 == sofa0 and sofa1 > 0:
        r += config.stagnation
    r += config.sofa_delta * (sofa1 - sofa0)
    r += config.lactate_delta * float(np.tanh(lac1 - lac0))
    return r


@dataclass
class TraceSummary:
    """The reward-relevant facts of one rollout or logged episode."""

    step_rewards: list[float] = field(default_factory=list)
    terminal: str = "truncated"       # "survived" | "died" | "truncated"
    violation_steps: int = 0          # decision steps with >= 1 guideline violation
    overrun: bool = False


def trajectory_reward(trace: TraceSummary, config: RewardConfig = RewardConfig()) -> tuple[float, float]:
    """Returns (raw_total, shaped_total); shaped is scaled by 0.1 and clipped to [-2, 2]."""
    raw = float(sum(trace.step_rewards))
    if trace.terminal == "survived":
        raw += config.terminal_survive
    elif trace.terminal == "died":
        raw += config.terminal_die
    raw += config.guideline_penalty * trace.violation_steps
    if trace.overrun:
        raw += config.overrun_penalty
    shaped = float(np.clip(raw * config.scale, *config.clip))
    return raw, shaped


def discounted_return(step_rewards, terminal: float, gamma: float) -> float:
    """Discounted sum of step rewards with the terminal reward at the final index."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must be in (0, 1]")
    rewards = list(step_rewards)
    total = sum(r * gamma ** t for t, r in enumerate(rewards))
    last = max(len(rewards) - 1, 0)
    return total + terminal * gamma ** last
