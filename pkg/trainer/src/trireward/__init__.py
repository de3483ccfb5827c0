"""Toy tri-head attention reward model over step-labeled CoT records."""

from .data import TrainExample, build_input_text, examples_from_records
from .model import DIMENSIONS, TriHeadRewardModel
from .serve import make_http_server, score_reply, serve_stdio, squash
from .train import (
    DegenerateBatch,
    TrainConfig,
    calibrate_bias,
    contrastive_step,
    fit,
    margin_ranking_loss,
    thresholded_accuracy,
    train_from_records,
)

__all__ = [
    "DIMENSIONS",
    "DegenerateBatch",
    "TrainConfig",
    "TrainExample",
    "TriHeadRewardModel",
    "build_input_text",
    "calibrate_bias",
    "contrastive_step",
    "examples_from_records",
    "fit",
    "make_http_server",
    "margin_ranking_loss",
    "score_reply",
    "serve_stdio",
    "squash",
    "thresholded_accuracy",
    "train_from_records",
]
