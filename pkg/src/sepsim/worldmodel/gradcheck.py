"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

from .loss import Batch, loss_and_grads
from .params import WorldModelParams


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_block: dict[str, float]
    worst_param: str
    n_params: int

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err <= tol


def check_gradients(params: WorldModelParams, batch: Batch, eps: float = 1e-5,
                    grad_fn=None) -> GradCheckReport:
    """Compare analytic gradients of the composite loss against central
    differences, coordinate by coordinate, in inference mode (no dropout).

    grad_fn lets tests substitute a (possibly corrupted) gradient source; it
    defaults to the model's own backward pass.
    """
    if grad_fn is None:
        analytic = loss_and_grads(params, batch, train=False)[2]
    else:
        analytic = grad_fn(params, batch)

    def loss_only() -> float:
        return loss_and_grads(params, batch, train=False, with_grads=False)[0]

    per_block: dict[str, float] = {}
    worst = ("", 0.0)
    for name, arr in params.arrays.items():
        an = analytic[name].ravel()
        block_err = 0.0
        flat = arr.ravel()
        for i in range(flat.size):
            theta = flat[i]
            flat[i] = theta + eps
            lp = loss_only()
            flat[i] = theta - eps
            lm = loss_only()
            flat[i] = theta
            fd = (lp - lm) / (2.0 * eps)
            rel = abs(fd - an[i]) / max(abs(fd), abs(an[i]), 1e-5)
            if rel > block_err:
                block_err = rel
            if rel > worst[1]:
                worst = (f"{name}[{i}]", rel)
        per_block[name] = block_err
    return GradCheckReport(max_rel_err=worst[1], per_block=per_block,
                           worst_param=worst[0], n_params=params.n_params())
