"""Fitted-Q evaluation: iterative Bellman regression for a fixed target policy.

Q(s, a) = w_a . phi(s) with one ridge-regularized weight vector per action.
The design matrices never change across iterations, so each per-action normal
system is factored once and re-solved against fresh Bellman targets.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError


class QModel:
    """Per-action linear action-value model over episode features."""

    def __init__(self, weights: np.ndarray):
        self.weights = weights            # [n_actions, d]

    @property
    def n_actions(self) -> int:
        return self.weights.shape[0]

    def q_values(self, features: np.ndarray) -> np.ndarray:
        """[T, n_actions] for a [T, d] feature matrix."""
        return np.atleast_2d(features) @ self.weights.T

    def v_values(self, features: np.ndarray, pi_probs: np.ndarray) -> np.ndarray:
        return (self.q_values(features) * pi_probs).sum(axis=1)


def fit_q_fqe(episodes, pi_e_probs, gamma: float, iterations: int = 50,
              n_actions: int = 25, ridge: float = 0.1,
              target_clip: tuple[float, float] | None = None) -> QModel:
    """Fit Q-hat for the policy whose per-state probabilities are pi_e_probs.

    Bellman targets bootstrap 0 at each episode's final decision. With
    iterations=0 the model is identically zero. target_clip bounds the
    regression targets to a known return range, which keeps the iteration
    from diverging under off-policy bootstrapping with poorly covered
    actions; pass None to disable.
    """
    if not episodes:
        raise ContractError("need at least one episode")
    d = episodes[0].features.shape[1]
    X = np.concatenate([ep.features for ep in episodes])
    A = np.concatenate([ep.actions for ep in episodes])
    R = np.concatenate([ep.rewards for ep in episodes])
    # next-state features and target-policy probabilities, aligned per row;
    # terminal rows (episode ends) carry no bootstrap
    terminal = np.concatenate([
        np.arange(len(ep)) == len(ep) - 1 for ep in episodes])
    X_next = np.concatenate([
        np.vstack([ep.features[1:], np.zeros((1, d))]) for ep in episodes])
    P_next = np.concatenate([
        np.vstack([probs[1:], np.zeros((1, n_actions))])
        for ep, probs in zip(episodes, pi_e_probs)])

    weights = np.zeros((n_actions, d))
    if iterations == 0:
        return QModel(weights)

    # pre-factor the per-action ridge systems
    solves = {}
    for a in range(n_actions):
        rows = A == a
        if not rows.any():
            solves[a] = None
            continue
        Xa = X[rows]
        gram = Xa.T @ Xa + ridge * np.eye(d)
        solves[a] = (np.linalg.cholesky(gram), Xa, rows)

    for _ in range(iterations):
        q_next = X_next @ weights.T                       # [N, n_actions]
        v_next = (q_next * P_next).sum(axis=1)
        y = R + gamma * np.where(terminal, 0.0, v_next)
        if target_clip is not None:
            y = np.clip(y, target_clip[0], target_clip[1])
        new_w = np.zeros_like(weights)
        for a, packed in solves.items():
            if packed is None:
                continue
            chol, Xa, rows = packed
            rhs = Xa.T @ y[rows]
            new_w[a] = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        weights = new_w
    return QModel(weights)
