"""Training examples from step-labeled record files.

Consumes the pipeline's records.jsonl rows (task_id, path_id, step_index,
query, cot, labels). A step's input text is the task query followed by the
CoT sentences of the steps before it on the same path, then its own
sentence — the same query/context/step recipe the scoring protocol uses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .tokenizer import MAX_TOKENS, encode_batch

LABEL_FIELDS = ("relevance", "logic", "attribute")


@dataclass(frozen=True)
class TrainExample:
    input_text: str
    labels: tuple[bool, bool, bool]

    def __post_init__(self) -> None:
        if not self.input_text.strip():
            raise ValueError("input_text must be non-empty")
        if len(self.labels) != 3 or not all(isinstance(v, bool) for v in self.labels):
            raise ValueError("labels must be three booleans")
        relevance, logic, attribute = self.labels
        if not relevance and (logic or attribute):
            raise ValueError("labels break the lattice: failed step cannot be "
                             "logical or attribute-correct")


def build_input_text(query: str, context: list[str], step_text: str) -> str:
    return "\n".join([query, *context, step_text])


def examples_from_records(path: str | Path) -> list[TrainExample]:
    rows = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                rows.append(
                    {
                        "key": (data["task_id"], data["path_id"], int(data["step_index"])),
                        "query": data["query"],
                        "cot": data["cot"],
                        "labels": tuple(bool(data["labels"][field]) for field in LABEL_FIELDS),
                    }
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"bad record row at line {line_number}: {exc}") from None

    by_path: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        by_path.setdefault(row["key"][:2], []).append(row)

    examples = []
    for path_rows in by_path.values():
        path_rows.sort(key=lambda row: row["key"][2])
        for position, row in enumerate(path_rows):
            context = [earlier["cot"] for earlier in path_rows[:position]]
            examples.append(
                TrainExample(
                    input_text=build_input_text(row["query"], context, row["cot"]),
                    labels=row["labels"],
                )
            )
    return examples


def batch_tensors(
    examples: list[TrainExample], max_tokens: int = MAX_TOKENS
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(ids, mask, labels) tensors for one batch; labels is (B, 3) bool."""
    ids, mask = encode_batch([example.input_text for example in examples], max_tokens)
    labels = torch.tensor([example.labels for example in examples], dtype=torch.bool)
    return ids, mask, labels
