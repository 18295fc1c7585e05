"""World-model parameters: initialization, flattening, and checkpoint IO.

A checkpoint is a single .npz container. Weight arrays are stored
little-endian float64 under their parameter names; configuration, the frozen
normalization/discretization specs, and the training history travel in a
JSON blob under "__meta__". The layout is versioned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..cohort import DiscretizationSpec, NormalizationSpec
from ..errors import VersionError
from ..features import D
from .config import ModelConfig

CHECKPOINT_VERSION = 1
N_ACTION_TOKENS = 26    # 25 grid actions plus the sequence-start token
START_TOKEN = 25
N_STATIC = 5


@dataclass
class WorldModelParams:
    arrays: dict[str, np.ndarray]
    config: ModelConfig
    norm: NormalizationSpec
    disc: DiscretizationSpec
    history: list = field(default_factory=list)

    def copy(self) -> "WorldModelParams":
        return WorldModelParams({k: v.copy() for k, v in self.arrays.items()},
                                self.config, self.norm, self.disc, list(self.history))

    def flatten(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    def load_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for v in self.arrays.values():
            v[...] = flat[pos:pos + v.size].reshape(v.shape)
            pos += v.size
        assert pos == flat.size

    def n_params(self) -> int:
        return sum(v.size for v in self.arrays.values())


def gru_input_dim(config: ModelConfig, layer: int) -> int:
    if layer == 0:
        return 2 * D + config.static_embed_dim + config.action_embed_dim
    return config.hidden_dim


def init_params(seed: int, config: ModelConfig, norm: NormalizationSpec,
                disc: DiscretizationSpec) -> WorldModelParams:
    """Deterministic initialization; the final layers of the classification
    heads start at zero so untrained probabilities are exactly 0.5."""
    rng = np.random.default_rng(seed)
    h = config.hidden_dim
    arrays: dict[str, np.ndarray] = {}

    def uniform(shape, fan_in):
        k = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-k, k, size=shape)

    arrays["static.W"] = uniform((N_STATIC, config.static_embed_dim), N_STATIC)
    arrays["static.b"] = np.zeros(config.static_embed_dim)
    arrays["act.E"] = rng.normal(0.0, 0.2, size=(N_ACTION_TOKENS, config.action_embed_dim))

    for layer in range(config.num_recurrent_layers):
        in_dim = gru_input_dim(config, layer)
        arrays[f"gru{layer}.W_ih"] = uniform((3 * h, in_dim), h)
        arrays[f"gru{layer}.W_hh"] = uniform((3 * h, h), h)
        arrays[f"gru{layer}.b_ih"] = np.zeros(3 * h)
        arrays[f"gru{layer}.b_hh"] = np.zeros(3 * h)

    g_dim = h + config.action_embed_dim
    u_dim = g_dim + 1   # ventilation probability appended before the Gaussian head
    arrays["vent.W1"] = uniform((g_dim, config.vent_hidden_dim), g_dim)
    arrays["vent.b1"] = np.zeros(config.vent_hidden_dim)
    arrays["vent.w2"] = np.zeros(config.vent_hidden_dim)
    arrays["vent.b2"] = np.zeros(1)
    arrays["gauss.W_mu"] = uniform((u_dim, D), u_dim)
    arrays["gauss.b_mu"] = np.zeros(D)
    arrays["gauss.W_sig"] = np.zeros((u_dim, D))
    arrays["gauss.b_sig"] = np.full(D, np.log(np.e - 1.0))  # softplus -> 1.0
    arrays["out.W1"] = uniform((h, config.outcome_hidden_dim), h)
    arrays["out.b1"] = np.zeros(config.outcome_hidden_dim)
    arrays["out.w2"] = np.zeros(config.outcome_hidden_dim)
    arrays["out.b2"] = np.zeros(1)

    arrays = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in arrays.items()}
    return WorldModelParams(arrays, config, norm, disc)


def zero_grads(params: WorldModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.arrays.items()}


def save_checkpoint(params: WorldModelParams, path) -> None:
    meta = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "norm": {"median": params.norm.median.tolist(),
                 "mean": params.norm.mean.tolist(),
                 "std": params.norm.std.tolist(),
                 "log_flags": list(params.norm.log_flags)},
        "disc": {"vaso_edges": list(params.disc.vaso_edges),
                 "fluid_edges": list(params.disc.fluid_edges)},
        "history": params.history,
        "shapes": {k: list(v.shape) for k, v in params.arrays.items()},
    }
    payload = {k: v.astype("<f8") for k, v in params.arrays.items()}
    payload["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **payload)


def load_checkpoint(path) -> WorldModelParams:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
            raise VersionError(
                f"unsupported checkpoint version {meta.get('checkpoint_version')!r}")
        arrays = {k: np.ascontiguousarray(data[k], dtype=np.float64)
                  for k in meta["shapes"]}
    config = ModelConfig.from_dict(meta["config"])
    norm = NormalizationSpec(
        median=np.array(meta["norm"]["median"]),
        mean=np.array(meta["norm"]["mean"]),
        std=np.array(meta["norm"]["std"]),
        log_flags=tuple(bool(b) for b in meta["norm"]["log_flags"]),
    )
    disc = DiscretizationSpec(tuple(meta["disc"]["vaso_edges"]),
                              tuple(meta["disc"]["fluid_edges"]))
    return WorldModelParams(arrays, config, norm, disc, meta["history"])
