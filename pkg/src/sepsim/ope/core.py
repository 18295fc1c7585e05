"""Importance-weighted policy-value estimators over generic episodes.

An Episode is the minimal logged record: one feature row, action index, and
reward per decision. Target-policy probabilities, behavior probabilities, and
action values are supplied as per-episode arrays so the same estimators serve
both the clinical cohorts and exactly solvable tabular fixtures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


@dataclass
class Episode:
    features: np.ndarray     # [T, d]
    actions: np.ndarray      # [T] ints in [0, n_actions)
    rewards: np.ndarray      # [T]

    def __post_init__(self):
        if not (len(self.features) == len(self.actions) == len(self.rewards) > 0):
            raise ContractError("episode arrays must share a positive length")

    def __len__(self):
        return len(self.actions)


@dataclass(frozen=True)
class OpeConfig:
    gamma: float = 0.99
    eps: float = 1e-8                      # normalizer stabilizer
    ratio_clip: tuple[float, float] | None = (1e-3, 1e3)  # per-step; None = off


def step_ratios(pi_e_logged: np.ndarray, pi_b_logged: np.ndarray,
                clip: tuple[float, float] | None) -> np.ndarray:
    """Per-step importance ratios of the logged actions, optionally clipped.

    Clipping bounds only positive ratios; an exact zero (the target policy
    forbids the logged action) is preserved so downstream products vanish.
    """
    if np.any(pi_b_logged <= 0):
        raise ContractError("behavior probabilities must be positive (floor them)")
    rho = pi_e_logged / pi_b_logged
    if clip is not None:
        rho = np.where(rho > 0, np.clip(rho, clip[0], clip[1]), 0.0)
    return rho


def importance_ratios(pi_e_logged: np.ndarray, pi_b_logged: np.ndarray,
                      clip: tuple[float, float] | None = None):
    """(trajectory ratio, per-decision cumulative ratios) for one episode.

    With clipping enabled, both the per-step ratios and the running product
    are bounded by the same interval (cumulative products of near-
    deterministic policies otherwise grow geometrically in the horizon);
    exact zeros propagate regardless.
    """
    per_step = step_ratios(pi_e_logged, pi_b_logged, clip)
    cum = np.empty_like(per_step)
    running = 1.0
    for t, w in enumerate(per_step):
        running = running * w
        if clip is not None and running > 0:
            running = min(max(running, clip[0]), clip[1])
        cum[t] = running
    return float(cum[-1]), cum


def discounted_returns(episodes, gamma: float) -> np.ndarray:
    return np.array([float(np.sum(ep.rewards * gamma ** np.arange(len(ep))))
                     for ep in episodes])


def _logged_probs(episodes, probs_list):
    out = []
    for ep, probs in zip(episodes, probs_list):
        out.append(probs[np.arange(len(ep)), ep.actions])
    return out


def wis(episodes, pi_e_probs, pi_b_probs, config: OpeConfig = OpeConfig()) -> float:
    """Weighted importance sampling with trajectory-level normalization."""
    if not episodes:
        raise ContractError("need at least one episode")
    returns = discounted_returns(episodes, config.gamma)
    rhos = np.array([
        importance_ratios(pe, pb, config.ratio_clip)[0]
        for pe, pb in zip(_logged_probs(episodes, pi_e_probs),
                          _logged_probs(episodes, pi_b_probs))
    ])
    return float((rhos * returns).sum() / (rhos.sum() + config.eps))


def wpdis(episodes, pi_e_probs, pi_b_probs, config: OpeConfig = OpeConfig()) -> float:
    """Weighted per-decision importance sampling: normalization at each step;
    episodes shorter than t drop out of both sums at t."""
    if not episodes:
        raise ContractError("need at least one episode")
    cums = [importance_ratios(pe, pb, config.ratio_clip)[1]
            for pe, pb in zip(_logged_probs(episodes, pi_e_probs),
                              _logged_probs(episodes, pi_b_probs))]
    t_max = max(len(ep) for ep in episodes)
    total = 0.0
    for t in range(t_max):
        num = 0.0
        den = 0.0
        for ep, cum in zip(episodes, cums):
            if t < len(ep):
                num += cum[t] * ep.rewards[t]
                den += cum[t]
        total += config.gamma ** t * num / (den + config.eps)
    return float(total)


def dr(episodes, pi_e_probs, pi_b_probs, q_values, config: OpeConfig = OpeConfig()) -> float:
    """Doubly robust estimate via the per-trajectory backward recursion.

    The recursion applies the step-t ratio at level t; unrolled, each
    correction term is therefore weighted by the cumulative ratio up to t.
    q_values holds one [T, n_actions] array per episode with Q-hat at every
    logged state; the state value is its pi_e expectation.
    """
    if not episodes:
        raise ContractError("need at least one episode")
    estimates = np.empty(len(episodes))
    for i, (ep, pe_probs, q) in enumerate(zip(episodes, pi_e_probs, q_values)):
        T = len(ep)
        _, cum = importance_ratios(pe_probs[np.arange(T), ep.actions],
                                   _logged_probs([ep], [pi_b_probs[i]])[0],
                                   config.ratio_clip)
        v = (pe_probs * q).sum(axis=1)          # V-hat per step
        v_next = np.append(v[1:], 0.0)          # V-hat(s_{T+1}) = 0
        q_logged = q[np.arange(T), ep.actions]
        corrections = (config.gamma ** np.arange(T)) * cum \
            * (ep.rewards + config.gamma * v_next - q_logged)
        estimates[i] = v[0] + corrections.sum()
    return float(estimates.mean())
