from .config import ModelConfig
from .gradcheck import GradCheckReport, check_gradients
from .loss import Batch, build_batch, compute_loss, loss_and_grads, prepare_trajectory, transition_samples
from .net import (HiddenState, OutcomePrediction, TransitionPrediction,
                  encode_history, encode_step, initial_hidden, predict_outcome,
                  predict_transition, static_embedding)
from .params import (WorldModelParams, init_params, load_checkpoint,
                     save_checkpoint)
from .train import AdamW, PlateauScheduler, evaluate_model, train, train_new

__all__ = [
    "ModelConfig", "GradCheckReport", "check_gradients", "Batch", "build_batch",
    "compute_loss", "loss_and_grads", "prepare_trajectory", "transition_samples",
    "HiddenState", "OutcomePrediction", "TransitionPrediction", "encode_history",
    "encode_step", "initial_hidden", "predict_outcome", "predict_transition",
    "static_embedding", "WorldModelParams", "init_params", "load_checkpoint",
    "save_checkpoint", "AdamW", "PlateauScheduler", "evaluate_model", "train",
    "train_new",
]
