"""Training examples from record files and their invariants."""

from __future__ import annotations

import json

import pytest

from reward_helpers import GOLDEN_RECORDS
from trireward import TrainExample, build_input_text, examples_from_records
from trireward.data import batch_tensors

# --- TrainExample invariants ----------------------------------------------------


def test_valid_examples_accepted():
    TrainExample(input_text="how many dogs", labels=(True, True, True))
    TrainExample(input_text="which island", labels=(False, False, False))
    TrainExample(input_text="what colour", labels=(True, False, True))


@pytest.mark.parametrize("text", ["", "   ", "\n\t"])
def test_blank_text_rejected(text):
    with pytest.raises(ValueError, match="non-empty"):
        TrainExample(input_text=text, labels=(True, True, True))


@pytest.mark.parametrize(
    "labels",
    [(False, True, False), (False, False, True), (False, True, True)],
)
def test_lattice_violations_rejected(labels):
    with pytest.raises(ValueError, match="lattice"):
        TrainExample(input_text="step text", labels=labels)


@pytest.mark.parametrize("labels", [(True, True), (True, 1, False), ("T", "T", "T")])
def test_malformed_labels_rejected(labels):
    with pytest.raises(ValueError, match="three booleans"):
        TrainExample(input_text="step text", labels=labels)


def test_build_input_text_joins_query_context_step():
    assert build_input_text("q", ["c1", "c2"], "s") == "q\nc1\nc2\ns"
    assert build_input_text("q", [], "s") == "q\ns"


# --- record-file consumption ---------------------------------------------------------


def test_examples_from_golden_corpus():
    examples = examples_from_records(GOLDEN_RECORDS)
    assert len(examples) == 15
    # every example carries its task query up front
    assert all(example.input_text.strip() for example in examples)
    labels_seen = {example.labels for example in examples}
    assert (True, True, True) in labels_seen
    assert (True, True, False) in labels_seen     # verifier-rejected landmark step
    assert (True, False, True) in labels_seen     # off-menu colour answer
    assert (False, False, False) in labels_seen   # failed/skipped chain


def test_context_accumulates_along_a_path():
    examples = examples_from_records(GOLDEN_RECORDS)
    rows = [json.loads(line) for line in GOLDEN_RECORDS.open() if line.strip()]
    path_rows = sorted(
        (row for row in rows if (row["task_id"], row["path_id"]) == ("t-count-dogs", "1.1")),
        key=lambda row: row["step_index"],
    )
    assert len(path_rows) == 2
    first_cot, second_cot = path_rows[0]["cot"], path_rows[1]["cot"]
    second_example = next(e for e in examples if e.input_text.endswith(second_cot))
    assert first_cot in second_example.input_text
    assert second_example.input_text.startswith(path_rows[1]["query"])


def test_bad_record_rows_name_their_line(tmp_path):
    target = tmp_path / "records.jsonl"
    good = {
        "task_id": "t", "path_id": "1", "step_index": 1, "query": "q", "cot": "c",
        "labels": {"relevance": True, "logic": True, "attribute": True},
    }
    target.write_text(json.dumps(good) + "\n" + "{broken\n")
    with pytest.raises(ValueError, match="line 2"):
        examples_from_records(target)

    target.write_text(json.dumps({"task_id": "t"}) + "\n")
    with pytest.raises(ValueError, match="line 1"):
        examples_from_records(target)


def test_lattice_violation_in_file_rejected(tmp_path):
    target = tmp_path / "records.jsonl"
    bad = {
        "task_id": "t", "path_id": "1", "step_index": 1, "query": "q", "cot": "c",
        "labels": {"relevance": False, "logic": True, "attribute": False},
    }
    target.write_text(json.dumps(bad) + "\n")
    with pytest.raises(ValueError, match="lattice"):
        examples_from_records(target)


def test_batch_tensors_shapes():
    examples = examples_from_records(GOLDEN_RECORDS)[:4]
    ids, mask, labels = batch_tensors(examples)
    assert ids.shape == mask.shape
    assert ids.shape[0] == 4
    assert labels.shape == (4, 3)
    assert labels.dtype.is_floating_point is False
