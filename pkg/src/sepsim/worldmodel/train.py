"""Optimizer, learning-rate schedule, training loop, and model evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import average_precision_score, roc_auc_score

from ..cohort import Cohort
from ..errors import ContractError
from .config import ModelConfig
from .loss import (build_batch, forward_batch, loss_and_grads,
                   prepare_trajectory, transition_samples)
from .params import WorldModelParams, init_params


@dataclass
class AdamW:
    """Adaptive moments with decoupled weight decay."""

    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: WorldModelParams, grads: dict) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, w in params.arrays.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(w)
                self.v[name] = np.zeros_like(w)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            w -= self.lr * ((m / b1c) / (np.sqrt(v / b2c) + self.eps)
                            + self.weight_decay * w)


@dataclass
class PlateauScheduler:
    """Halve the learning rate after `patience` epochs without improvement."""

    lr: float
    factor: float = 0.5
    patience: int = 3
    best: float = np.inf
    bad_epochs: int = 0

    def step(self, metric: float) -> float:
        if metric < self.best:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs > self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr


def _eval_loss(params: WorldModelParams, tensors, samples, batch_size: int):
    total = 0.0
    comps_sum: dict[str, float] = {}
    n = 0
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo:lo + batch_size]
        batch = build_batch(tensors, chunk, params.config.window_k)
        loss, comps, _ = loss_and_grads(params, batch, train=False, with_grads=False)
        total += loss * len(chunk)
        for k, v in comps.items():
            comps_sum[k] = comps_sum.get(k, 0.0) + v * len(chunk)
        n += len(chunk)
    return total / n, {k: v / n for k, v in comps_sum.items()}


def train(params: WorldModelParams, cohort: Cohort, seed: int = 0,
          log=None) -> tuple[WorldModelParams, list[dict]]:
    """Fit the world model on the cohort's train split, selecting on val loss.

    Deterministic given (params, cohort, seed). Returns the best-validation
    parameters with the epoch history attached.
    """
    cfg = params.config
    imputed = cohort.imputed()
    train_tr = [prepare_trajectory(t, params) for t in imputed.split("train")]
    val_tr = [prepare_trajectory(t, params) for t in imputed.split("val")]
    if not train_tr or not val_tr:
        raise ContractError("cohort needs non-empty train and val splits")
    train_samples = transition_samples(train_tr)
    val_samples = transition_samples(val_tr)

    opt = AdamW(lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    sched = PlateauScheduler(lr=cfg.learning_rate, factor=cfg.plateau_factor,
                             patience=cfg.plateau_patience)
    seeds = np.random.SeedSequence(seed).spawn(cfg.max_epochs)

    history: list[dict] = []
    val0, comps0 = _eval_loss(params, val_tr, val_samples, cfg.batch_size)
    history.append({"epoch": 0, "train_loss": None, "val_loss": val0,
                    "lr": opt.lr, **{f"val_{k}": v for k, v in comps0.items()}})
    if log:
        log(f"epoch 0 (init): val_loss={val0:.4f}")

    best_val = val0
    best_arrays = {k: v.copy() for k, v in params.arrays.items()}
    bad_epochs = 0

    for epoch in range(1, cfg.max_epochs + 1):
        rng = np.random.default_rng(seeds[epoch - 1])
        order = rng.permutation(len(train_samples))
        epoch_loss = 0.0
        n_seen = 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            chunk = [train_samples[i] for i in idx]
            batch = build_batch(train_tr, chunk, cfg.window_k)
            loss, _, grads = loss_and_grads(params, batch, train=True, dropout_rng=rng)
            opt.step(params, grads)
            epoch_loss += loss * len(chunk)
            n_seen += len(chunk)
        train_loss = epoch_loss / n_seen

        val_loss, comps = _eval_loss(params, val_tr, val_samples, cfg.batch_size)
        opt.lr = sched.step(val_loss)
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss, "lr": opt.lr,
                        **{f"val_{k}": v for k, v in comps.items()}})
        if log:
            log(f"epoch {epoch}: train={train_loss:.4f} val={val_loss:.4f} lr={opt.lr:.2e}")

        if val_loss < best_val:
            best_val = val_loss
            best_arrays = {k: v.copy() for k, v in params.arrays.items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.early_stop_patience:
                if log:
                    log(f"early stop at epoch {epoch}")
                break

    best = WorldModelParams(best_arrays, cfg, params.norm, params.disc, history)
    return best, history


def train_new(cohort: Cohort, config: ModelConfig | None = None,
              seed: int = 0, log=None) -> WorldModelParams:
    cfg = config or ModelConfig()
    params = init_params(seed, cfg, cohort.norm, cohort.disc)
    best, _ = train(params, cohort, seed=seed, log=log)
    return best


def evaluate_model(params: WorldModelParams, trajectories) -> dict[str, float]:
    """Held-out metrics: normalized-space MAE on observed next-state features,
    ventilation AUC over transitions, and mortality AUROC/AUPRC over final
    windows (one score per trajectory)."""
    imputed_required = [t for t in trajectories]
    tensors = [prepare_trajectory(t, params) for t in imputed_required]
    samples = transition_samples(tensors)
    if not samples:
        raise ContractError("need at least one transition to evaluate")
    cfg = params.config

    abs_err = 0.0
    n_obs = 0
    vent_scores: list[np.ndarray] = []
    vent_labels: list[np.ndarray] = []
    for lo in range(0, len(samples), cfg.batch_size):
        chunk = samples[lo:lo + cfg.batch_size]
        batch = build_batch(tensors, chunk, cfg.window_k)
        fw = forward_batch(params, batch, train=False)
        m = batch.target_mask
        abs_err += np.abs(fw.mu - batch.target)[m].sum()
        n_obs += m.sum()
        vent_scores.append(fw.p_vent)
        vent_labels.append(batch.vent_label)

    # outcome scored on each trajectory's final window
    final_samples = [(i, tt.dyn.shape[0] - 1) for i, tt in enumerate(tensors)]
    outcome_labels = [tt.outcome for tt in tensors]
    outcome_scores: list[np.ndarray] = []
    for lo in range(0, len(final_samples), cfg.batch_size):
        chunk = final_samples[lo:lo + cfg.batch_size]
        batch = build_batch(tensors, chunk, cfg.window_k)
        fw = forward_batch(params, batch, train=False)
        outcome_scores.append(fw.p_out)

    vent_y = np.concatenate(vent_labels)
    vent_p = np.concatenate(vent_scores)
    out_y = np.array(outcome_labels)
    out_p = np.concatenate(outcome_scores)
    return {
        "state_mae": float(abs_err / n_obs),
        "vent_auc": _safe_auc(vent_y, vent_p),
        "outcome_auroc": _safe_auc(out_y, out_p),
        "outcome_auprc": float(average_precision_score(out_y, out_p))
        if len(set(out_y.tolist())) > 1 else float("nan"),
        "n_transitions": len(samples),
        "n_trajectories": len(tensors),
    }


def _safe_auc(y, p) -> float:
    if len(set(np.asarray(y).tolist())) < 2:
        return float("nan")
    return float(roc_auc_score(y, p))
