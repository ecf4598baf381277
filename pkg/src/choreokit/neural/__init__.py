"""Recurrent pose generator: model, losses, training, gradient verification."""

from .model import NetConfig, RolloutPlan, forward_step, init_params, rollout, zero_state
from .training import (Adam, TrainSequence, TrainingDiverged, gradient_check,
                       load_checkpoint, make_toy_sequence, save_checkpoint,
                       toy_skeleton, train, window_loss)

__all__ = [
    "Adam", "NetConfig", "RolloutPlan", "TrainSequence", "TrainingDiverged",
    "forward_step", "gradient_check", "init_params", "load_checkpoint",
    "make_toy_sequence", "rollout", "save_checkpoint", "toy_skeleton", "train",
    "window_loss", "zero_state",
]
