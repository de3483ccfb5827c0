"""Per-dimension margin ranking training.

The loss for one dimension averages relu(margin - (positive - negative))
over every in-batch positive/negative pair of that dimension's raw scores;
the batch loss sums the three dimension terms. A dimension with no

positive or no negative contributes nothing; a batch where all three
dimensions are skipped raises DegenerateBatch instead of silently taking a
zero-gradient step.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch

from .data import TrainExample, batch_tensors, examples_from_records
from .model import DIMENSIONS, TriHeadRewardModel
from .tokenizer import MAX_TOKENS


class DegenerateBatch(Exception):
    """No dimension had both a positive and a negative example."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.05
    margin: float = 1.0
    seed: int = 0
    max_tokens: int = MAX_TOKENS

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


def margin_ranking_loss(
    scores: torch.Tensor, labels: torch.Tensor, margin: float = 1.0
) -> torch.Tensor:
    """Sum over dimensions of the mean pairwise hinge; raises DegenerateBatch."""
    terms = []
    for dim in range(len(DIMENSIONS)):
        positive = scores[labels[:, dim], dim]
        negative = scores[~labels[:, dim], dim]
        if positive.numel() == 0 or negative.numel() == 0:
            continue
        gaps = positive.unsqueeze(1) - negative.unsqueeze(0)  # (P, N)
        terms.append(torch.relu(margin - gaps).mean())
    if not terms:
        raise DegenerateBatch("no dimension has both positive and negative examples")
    return sum(terms)


def contrastive_step(
    model: TriHeadRewardModel,
    ids: torch.Tensor,
    mask: torch.Tensor,
    labels: torch.Tensor,
    optimizer: torch.optim.Optimizer,
    margin: float = 1.0,
) -> float:
    """One forward/backward/update over the batch; returns the loss value."""
    loss = margin_ranking_loss(model(ids, mask), labels, margin)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.item())


def calibrate_bias(
    model: TriHeadRewardModel,
    ids: torch.Tensor,
    mask: torch.Tensor,
    labels: torch.Tensor,
) -> None:
    """Pin each dimension's zero point at the max-margin midpoint.

    The pairwise loss is blind to a per-dimension constant shift (the
    scoring-head bias receives exactly zero gradient), so the decision
    boundary it implies is free-floating. Shifting the bias so that zero
    falls halfway between the lowest positive and highest negative makes
    thresholding at zero — logistic 0.5 on the wire — read the separation
    the loss actually trained. Dimensions without both classes keep their
    bias.
    """
    model.eval()
    with torch.no_grad():
        scores = model(ids, mask)
        for dim in range(len(DIMENSIONS)):
            positive = scores[labels[:, dim], dim]
            negative = scores[~labels[:, dim], dim]
            if positive.numel() == 0 or negative.numel() == 0:
                continue
            cut = (positive.min() + negative.max()) / 2
            model.scoring_heads[dim].bias -= cut


def thresholded_accuracy(scores: torch.Tensor, labels: torch.Tensor) -> dict[str, float]:
    """Fraction of examples whose sign-thresholded score matches the label.

    Raw score > 0 is exactly logistic(score) > 0.5, keeping the training
    metric aligned with how served scores are consumed.
    """
    predictions = scores > 0
    return {
        name: float((predictions[:, dim] == labels[:, dim]).float().mean().item())
        for dim, name in enumerate(DIMENSIONS)
    }


def fit(
    model: TriHeadRewardModel, examples: list[TrainExample], config: TrainConfig
) -> list[dict]:
    """Full-batch training; returns one history row per epoch."""
    torch.manual_seed(config.seed)
    ids, mask, labels = batch_tensors(examples, config.max_tokens)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    history = []
    for epoch in range(1, config.epochs + 1):
        model.train()
        loss = contrastive_step(model, ids, mask, labels, optimizer, config.margin)
        calibrate_bias(model, ids, mask, labels)
        model.eval()
        with torch.no_grad():
            accuracy = thresholded_accuracy(model(ids, mask), labels)
        history.append({"epoch": epoch, "loss": loss, "accuracy": accuracy})
    return history


def train_from_records(
    records_path: str | Path, checkpoint_path: str | Path, config: TrainConfig
) -> dict:
    """Train on a record file, save the checkpoint, return the last history row."""
    examples = examples_from_records(records_path)
    torch.manual_seed(config.seed)
    model = TriHeadRewardModel()
    history = fit(model, examples, config)
    Path(checkpoint_path).parent.mkdir(parents=True, exist_ok=True)
    model.save(checkpoint_path)
    return history[-1]
