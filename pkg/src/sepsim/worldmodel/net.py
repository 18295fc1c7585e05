"""Forward computation of the patient world model.

Architecture: a stacked gated-recurrent encoder reads one 4-hour window per
step. The input at each step concatenates the normalized state, its observed
mask, a learned static-feature embedding, and the embedding of the action
that led into the step (a start token for the first). Prediction heads run on
the final hidden state: the ventilation head first, whose probability is
appended to the head input before the Gaussian projection over all 42 next-
state features; an outcome head estimates 90-day mortality from the same
representation.

Two execution paths share the same parameters: a batched path used by
training (with caches for backpropagation through time) and a single-sample
streaming path used by rollouts, where updating step by step is bitwise
identical to re-encoding the whole prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cohort import Action, Static
from ..errors import ContractError
from ..features import D
from ..scores import soft_sirs, soft_sofa
from .config import ModelConfig
from .params import START_TOKEN, WorldModelParams


def sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def softplus(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def static_raw(static: Static) -> np.ndarray:
    """Fixed affine scaling of the five static fields (no fitting involved)."""
    return np.array([
        (static.age - 60.0) / 20.0,
        float(static.gender),
        (static.weight - 80.0) / 20.0,
        float(static.readmission),
        static.comorbidity_index / 5.0,
    ])


def step_input(params: WorldModelParams, values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Normalized dynamics concatenated with the observation mask."""
    z = params.norm.transform(values)
    return np.concatenate([z, mask.astype(float)])


def prev_action_indices(steps) -> list[int]:
    """Token fed at each position: the action taken at the previous step."""
    return [START_TOKEN if i == 0 else steps[i - 1].action.index
            for i in range(len(steps))]


# ---------------------------------------------------------------------------
# single-sample streaming path

@dataclass
class HiddenState:
    layers: list[np.ndarray]      # one [H] vector per recurrent layer

    def copy(self) -> "HiddenState":
        return HiddenState([h.copy() for h in self.layers])

    @property
    def top(self) -> np.ndarray:
        return self.layers[-1]


def initial_hidden(config: ModelConfig) -> HiddenState:
    return HiddenState([np.zeros(config.hidden_dim) for _ in range(config.num_recurrent_layers)])


def _gru_cell(arrays, layer: int, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    h = h_prev.shape[-1]
    gi = x @ arrays[f"gru{layer}.W_ih"].T + arrays[f"gru{layer}.b_ih"]
    gh = h_prev @ arrays[f"gru{layer}.W_hh"].T + arrays[f"gru{layer}.b_hh"]
    r = sigmoid(gi[..., :h] + gh[..., :h])
    z = sigmoid(gi[..., h:2 * h] + gh[..., h:2 * h])
    n = np.tanh(gi[..., 2 * h:] + r * gh[..., 2 * h:])
    return (1.0 - z) * n + z * h_prev


def encode_step(params: WorldModelParams, hidden: HiddenState, values: np.ndarray,
                mask: np.ndarray, prev_action_idx: int,
                static_embed: np.ndarray) -> HiddenState:
    """Advance the recurrent state by one observed window (inference mode)."""
    if values.shape != (D,) or mask.shape != (D,):
        raise ContractError(f"state and mask must have shape ({D},)")
    x = np.concatenate([step_input(params, values, mask), static_embed,
                        params.arrays["act.E"][prev_action_idx]])
    layers = []
    for layer in range(params.config.num_recurrent_layers):
        x = _gru_cell(params.arrays, layer, x, hidden.layers[layer])
        layers.append(x)
    return HiddenState(layers)


def static_embedding(params: WorldModelParams, static: Static) -> np.ndarray:
    return static_raw(static) @ params.arrays["static.W"] + params.arrays["static.b"]


def encode_history(params: WorldModelParams, steps, static: Static) -> HiddenState:
    """Encode a trajectory prefix by folding encode_step over its windows.

    The action stored on the final step is not consumed; it is the pending
    decision and is supplied separately to predict_transition.
    """
    steps = list(steps)
    if not steps:
        raise ContractError("prefix must contain at least one state")
    e_s = static_embedding(params, static)
    hidden = initial_hidden(params.config)
    for i, (step, aprev) in enumerate(zip(steps, prev_action_indices(steps))):
        hidden = encode_step(params, hidden, step.values, step.mask, aprev, e_s)
    return hidden


# ---------------------------------------------------------------------------
# heads

@dataclass
class TransitionPrediction:
    mu: np.ndarray                # [42] normalized space
    sigma: np.ndarray             # [42] >= sigma_min
    vent_prob: float
    soft_sofa: float
    soft_sirs: float
    denormalized_mean: np.ndarray  # [42] clinical units


@dataclass
class OutcomePrediction:
    p_mortality: float


def _heads_core(params: WorldModelParams, h_top: np.ndarray, action_idx,
                vent_override=None):
    """Shared head computation; works for [H] vectors and [B, H] batches."""
    a = params.arrays
    e_a = a["act.E"][action_idx]
    g = np.concatenate([h_top, e_a], axis=-1)
    vh = np.maximum(g @ a["vent.W1"] + a["vent.b1"], 0.0)
    v_logit = vh @ a["vent.w2"] + a["vent.b2"][0]
    p_vent = sigmoid(v_logit)
    if vent_override is not None:
        p_vent = np.asarray(vent_override, dtype=float)
    u = np.concatenate([g, np.expand_dims(p_vent, -1)], axis=-1)
    mu = u @ a["gauss.W_mu"] + a["gauss.b_mu"]
    raw = u @ a["gauss.W_sig"] + a["gauss.b_sig"]
    sigma = softplus(raw) + params.config.sigma_min
    return mu, sigma, p_vent


def predict_transition(params: WorldModelParams, hidden: HiddenState,
                       action: Action, vent_override: float | None = None) -> TransitionPrediction:
    """Next-state distribution for one (history, candidate action) query.

    The ventilation probability is predicted first and appended to the head
    input before the Gaussian projection; vent_override substitutes a fixed
    probability there (ablation hook for the hierarchy wiring).
    """
    mu, sigma, p_vent = _heads_core(params, hidden.top, action.index, vent_override)
    denorm = params.norm.inverse(mu)
    ne_eq = params.disc.representative_ne_eq(action.vaso_bin)
    tau = params.config.soft_logic_tau
    return TransitionPrediction(
        mu=mu, sigma=sigma, vent_prob=float(p_vent),
        soft_sofa=soft_sofa(denorm, tau, ne_eq=ne_eq),
        soft_sirs=soft_sirs(denorm, tau),
        denormalized_mean=denorm,
    )


def predict_outcome(params: WorldModelParams, steps, static: Static) -> OutcomePrediction:
    """Mortality probability from the final hidden state of a window (len <= K
    accepted; shorter prefixes are encoded as they are)."""
    steps = list(steps)[-params.config.window_k:]
    hidden = encode_history(params, steps, static)
    return OutcomePrediction(p_mortality=float(outcome_prob(params, hidden.top)))


def outcome_prob(params: WorldModelParams, h_top: np.ndarray):
    a = params.arrays
    oh = np.maximum(h_top @ a["out.W1"] + a["out.b1"], 0.0)
    return sigmoid(oh @ a["out.w2"] + a["out.b2"][0])


# ---------------------------------------------------------------------------
# batched training path with caches

@dataclass
class ForwardCache:
    x0: np.ndarray                  # [B, K, I0] layer-0 inputs
    active: np.ndarray              # [B, K] bool
    aprev: np.ndarray               # [B, K] int tokens
    static: np.ndarray              # [B, 5] raw scaled statics
    h: list[np.ndarray]             # per layer [B, K+1, H], slot 0 is the zero state
    r: list[np.ndarray]             # per layer [B, K, H]
    z: list[np.ndarray]
    n: list[np.ndarray]
    ghn: list[np.ndarray]           # W_hn h_prev + b_hn per layer
    drop_mask: list[np.ndarray]     # per layer boundary [B, H] (inverted dropout)
    layer_in: list[np.ndarray]      # inputs actually fed to layers 1.. [B, K, H]


def encode_batch(params: WorldModelParams, dyn: np.ndarray, aprev: np.ndarray,
                 static: np.ndarray, active: np.ndarray, train: bool = False,
                 dropout_rng: np.random.Generator | None = None):
    """Encode left-aligned-padded windows; returns (h_top [B, H], cache)."""
    cfg = params.config
    a = params.arrays
    B, K, _ = dyn.shape
    h_dim = cfg.hidden_dim

    e_s = static @ a["static.W"] + a["static.b"]                  # [B, Es]
    e_a = a["act.E"][aprev]                                       # [B, K, Ea]
    x0 = np.concatenate([dyn, np.repeat(e_s[:, None, :], K, axis=1), e_a], axis=2)

    cache = ForwardCache(x0=x0, active=active, aprev=aprev, static=static,
                         h=[], r=[], z=[], n=[], ghn=[], drop_mask=[], layer_in=[])
    layer_input = x0
    for layer in range(cfg.num_recurrent_layers):
        W_ih, W_hh = a[f"gru{layer}.W_ih"], a[f"gru{layer}.W_hh"]
        b_ih, b_hh = a[f"gru{layer}.b_ih"], a[f"gru{layer}.b_hh"]
        h = np.zeros((B, K + 1, h_dim))
        r = np.zeros((B, K, h_dim))
        z = np.zeros((B, K, h_dim))
        n = np.zeros((B, K, h_dim))
        ghn = np.zeros((B, K, h_dim))
        for j in range(K):
            x_j = layer_input[:, j]
            h_prev = h[:, j]
            gi = x_j @ W_ih.T + b_ih
            gh = h_prev @ W_hh.T + b_hh
            r_j = sigmoid(gi[:, :h_dim] + gh[:, :h_dim])
            z_j = sigmoid(gi[:, h_dim:2 * h_dim] + gh[:, h_dim:2 * h_dim])
            ghn_j = gh[:, 2 * h_dim:]
            n_j = np.tanh(gi[:, 2 * h_dim:] + r_j * ghn_j)
            h_new = (1.0 - z_j) * n_j + z_j * h_prev
            act = active[:, j][:, None]
            h[:, j + 1] = np.where(act, h_new, h_prev)
            r[:, j], z[:, j], n[:, j], ghn[:, j] = r_j, z_j, n_j, ghn_j
        cache.h.append(h)
        cache.r.append(r)
        cache.z.append(z)
        cache.n.append(n)
        cache.ghn.append(ghn)
        out = h[:, 1:]
        if layer < cfg.num_recurrent_layers - 1:
            if train and cfg.dropout > 0:
                rng = dropout_rng if dropout_rng is not None else np.random.default_rng(0)
                keep = (rng.random((B, h_dim)) >= cfg.dropout) / (1.0 - cfg.dropout)
            else:
                keep = np.ones((B, h_dim))
            cache.drop_mask.append(keep)
            out = out * keep[:, None, :]
            cache.layer_in.append(out)
        layer_input = out

    h_top = cache.h[-1][:, K]
    return h_top, cache
