"""Shared builders for the trainer suite."""

from __future__ import annotations

from pathlib import Path

import torch

from trireward import TrainExample, TriHeadRewardModel
from trireward.data import batch_tensors

REPO = Path(__file__).resolve().parent.parent.parent
GOLDEN_RECORDS = REPO / "fixtures" / "golden" / "records.jsonl"

VALID_TRIPLES = (
    (True, True, True),
    (True, True, False),
    (True, False, True),
    (True, False, False),
    (False, False, False),
)

WORDS = ("count", "region", "answer", "boxes", "video",
         "frame", "compare", "colour", "detect", "measure")


def toy_examples(n: int) -> list[TrainExample]:
    """n distinct texts cycling through every lattice-valid label triple."""
    return [
        TrainExample(
            input_text=(
                f"task {WORDS[i % 10]} sample {i} asks about "
                f"{WORDS[(i * 3 + 1) % 10]} item{i * 7 % 53}"
            ),
            labels=VALID_TRIPLES[i % len(VALID_TRIPLES)],
        )
        for i in range(n)
    ]


def seeded_model(seed: int = 0) -> TriHeadRewardModel:
    torch.manual_seed(seed)
    return TriHeadRewardModel()


MIXED_TRIPLES = (
    (True, True, True),
    (True, True, False),
    (True, False, True),
    (False, False, False),
)


def toy_batch(n: int = 4, seed: int = 0):
    """(model, ids, mask, labels) with every dimension mixed for n >= 4."""
    model = seeded_model(seed)
    examples = [
        TrainExample(
            input_text=example.input_text,
            labels=MIXED_TRIPLES[index % len(MIXED_TRIPLES)],
        )
        for index, example in enumerate(toy_examples(n))
    ]
    ids, mask, labels = batch_tensors(examples)
    return model, ids, mask, labels
