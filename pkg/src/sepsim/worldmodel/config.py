"""World-model hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 128
    num_recurrent_layers: int = 2
    dropout: float = 0.2
    static_embed_dim: int = 32
    action_embed_dim: int = 32
    vent_hidden_dim: int = 64
    outcome_hidden_dim: int = 64
    window_k: int = 12                 # trajectory window, 48h at 4h steps
    soft_logic_tau: float = 10.0
    lambda_outcome: float = 1.0
    lambda_reg: float = 0.01
    lambda_vent: float = 0.3
    sigma_min: float = 1e-3            # floor under the predictive stdev
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 2048
    max_epochs: int = 50
    plateau_factor: float = 0.5
    plateau_patience: int = 3
    early_stop_patience: int = 8

    def __post_init__(self):
        positive = ("hidden_dim", "num_recurrent_layers", "static_embed_dim",
                    "action_embed_dim", "vent_hidden_dim", "outcome_hidden_dim",
                    "window_k", "soft_logic_tau", "sigma_min", "learning_rate",
                    "batch_size", "max_epochs", "plateau_factor")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.weight_decay < 0 or self.lambda_outcome < 0 or self.lambda_reg < 0 \
                or self.lambda_vent < 0:
            raise ConfigError("loss weights and weight decay must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)
