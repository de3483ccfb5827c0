"""Record serialization, strict re-loading, and label-accuracy metrics.

The JSONL emitter is canonical: fixed key order, compact separators,
ASCII-only escapes, rows sorted by (task_id, path_id, step_index), one
trailing newline per row. Emitting what was loaded reproduces the file
byte for byte, which is what the golden-run idempotence check leans on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import SchemaViolation, UnknownKey
from .model import KIND_TAGS, SPLITS, StepLabels, StepRecord, VarValue, VisualTask

RECORD_FIELDS = (
    "task_id",
    "query",
    "visual_ref",
    "step_index",
    "code",
    "variables",
    "cot",
    "labels",
    "path_id",
    "split",
    "gold_answer",
    "final_answer",
)

LABEL_FIELDS = ("relevance", "logic", "attribute")

DIMENSIONS = LABEL_FIELDS


def record_to_dict(record: StepRecord) -> dict:
    return {
        "task_id": record.task_id,
        "query": record.query,
        "visual_ref": record.visual_ref,
        "step_index": record.step_index,
        "code": record.code_source,
        "variables": {
            name: {"kind": record.variables[name].kind, "value": record.variables[name].value_text}
            for name in sorted(record.variables)
        },
        "cot": record.cot_text,
        "labels": {
            "relevance": record.labels.relevance,
            "logic": record.labels.logic,
            "attribute": record.labels.attribute,
        },
        "path_id": record.path_id,
        "split": record.split,
        "gold_answer": record.gold_answer,
        "final_answer": record.final_answer,
    }


def emit_records(records: list[StepRecord], path: str | Path) -> None:
    """Write records as canonical JSONL, sorted by record key."""
    ordered = sorted(records, key=lambda r: r.key())
    with Path(path).open("w", encoding="utf-8", newline="\n") as handle:
        for record in ordered:
            handle.write(
                json.dumps(record_to_dict(record), ensure_ascii=True, separators=(",", ":"))
            )
            handle.write("\n")


def _require(condition: bool, message: str, line_number: int) -> None:
    if not condition:
        raise SchemaViolation(message, line_number=line_number)


def _record_from_dict(data: dict, line_number: int) -> StepRecord:
    _require(isinstance(data, dict), "row is not an object", line_number)
    missing = [key for key in RECORD_FIELDS if key not in data]
    _require(not missing, f"missing fields {missing}", line_number)
    extra = [key for key in data if key not in RECORD_FIELDS]
    _require(not extra, f"unknown fields {extra}", line_number)

    for key in ("task_id", "query", "visual_ref", "code", "cot", "path_id", "split"):
        _require(isinstance(data[key], str), f"{key} must be a string", line_number)
    _require(isinstance(data["step_index"], int) and not isinstance(data["step_index"], bool),
             "step_index must be an integer", line_number)
    _require(data["step_index"] >= 1, "step_index must be positive", line_number)
    _require(data["split"] in SPLITS, f"unknown split {data['split']!r}", line_number)
    for key in ("gold_answer", "final_answer"):
        _require(data[key] is None or isinstance(data[key], str),
                 f"{key} must be a string or null", line_number)

    _require(isinstance(data["variables"], dict), "variables must be an object", line_number)
    variables: dict[str, VarValue] = {}
    for name, spec in data["variables"].items():
        _require(isinstance(spec, dict) and set(spec) == {"kind", "value"},
                 f"variable {name!r} must be a kind/value object", line_number)
        _require(spec["kind"] in KIND_TAGS, f"variable {name!r} has unknown kind", line_number)
        _require(isinstance(spec["value"], str), f"variable {name!r} value must be text", line_number)
        variables[name] = VarValue(spec["kind"], spec["value"])

    labels_obj = data["labels"]
    _require(isinstance(labels_obj, dict) and set(labels_obj) == set(LABEL_FIELDS),
             "labels must carry exactly relevance/logic/attribute", line_number)
    for key in LABEL_FIELDS:
        _require(isinstance(labels_obj[key], bool), f"label {key} must be boolean", line_number)
    labels = StepLabels(labels_obj["relevance"], labels_obj["logic"], labels_obj["attribute"])
    _require(labels.satisfies_lattice(),
             "labels break the lattice: failed step marked logical or attribute-correct",
             line_number)

    return StepRecord(
        task_id=data["task_id"],
        query=data["query"],
        visual_ref=data["visual_ref"],
        step_index=data["step_index"],
        code_source=data["code"],
        variables=variables,
        cot_text=data["cot"],
        labels=labels,
        path_id=data["path_id"],
        split=data["split"],
        gold_answer=data["gold_answer"],
        final_answer=data["final_answer"],
    )


def load_records(path: str | Path) -> list[StepRecord]:
    """Load and fully revalidate a records file; bad rows name their line."""
    records: list[StepRecord] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"invalid JSON: {exc}", line_number=line_number) from None
            records.append(_record_from_dict(data, line_number))
    return records


def load_predictions(path: str | Path) -> list["Prediction"]:
    """Read prediction rows: record-key fields plus predicted labels and an
    optional answer_correct judgment."""
    predictions: list[Prediction] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"invalid JSON: {exc}", line_number=line_number) from None
            try:
                key = (data["task_id"], data["path_id"], data["step_index"])
                labels_obj = data["labels"]
                labels = StepLabels(
                    labels_obj["relevance"], labels_obj["logic"], labels_obj["attribute"]
                )
            except (KeyError, TypeError) as exc:
                raise SchemaViolation(f"bad prediction row: {exc}", line_number=line_number) from None
            if "answer_correct" in data and data["answer_correct"] is not None:
                predictions.append((key, labels, bool(data["answer_correct"])))
            else:
                predictions.append((key, labels))
    return predictions


# --- task manifests -----------------------------------------------------------


def load_tasks(path: str | Path) -> list[VisualTask]:
    tasks: list[VisualTask] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            data = json.loads(line)
            tasks.append(
                VisualTask(
                    task_id=data["task_id"],
                    query=data["query"],
                    visual_ref=data.get("visual_ref", ""),
                    modality=data.get("modality", "single-image"),
                    gold_answer=data.get("gold_answer"),
                )
            )
    return tasks


# --- metrics ------------------------------------------------------------------

Prediction = tuple  # (record_key, StepLabels) or (record_key, StepLabels, answer_correct)


@dataclass(frozen=True)
class EvalReport:
    """Per-dimension label accuracy over a set of predictions.

    Dimensions with an empty denominator are absent from
    per_dimension_accuracy rather than reported as zero; the average runs
    over present dimensions only. overall_correctness_accuracy measures
    agreement between supplied answer_correct judgments and whether the
    record's final answer actually matches its gold answer; it is None
    when no prediction supplies one.
    """

    per_dimension_accuracy: dict[str, float]
    counts: dict[str, int]
    overall_correctness_accuracy: float | None
    evaluated: int

    @property
    def dimension_average(self) -> float | None:
        if not self.per_dimension_accuracy:
            return None
        return sum(self.per_dimension_accuracy.values()) / len(self.per_dimension_accuracy)

    def to_dict(self) -> dict:
        return {
            "evaluated": self.evaluated,
            "per_dimension_accuracy": dict(self.per_dimension_accuracy),
            "counts": dict(self.counts),
            "dimension_average": self.dimension_average,
            "overall_correctness_accuracy": self.overall_correctness_accuracy,
        }


def _answer_actually_correct(record: StepRecord) -> bool:
    if record.final_answer is None or record.gold_answer is None:
        return False
    return record.final_answer.strip().lower() == record.gold_answer.strip().lower()


def evaluate(predictions: list[Prediction], records: list[StepRecord]) -> EvalReport:
    """Compare predicted label triples against record labels.

    Each prediction is (key, StepLabels) or (key, StepLabels,
    answer_correct) with key = (task_id, path_id, step_index). Every key
    must address a known record; an unknown key raises UnknownKey rather
    than silently deflating (or inflating) a denominator. Order of
    predictions never matters.
    """
    by_key = {record.key(): record for record in records}

    correct = {dim: 0 for dim in DIMENSIONS}
    total = 0
    correctness_right = 0
    correctness_total = 0
    for prediction in predictions:
        key, predicted = prediction[0], prediction[1]
        answer_correct = prediction[2] if len(prediction) > 2 else None
        record = by_key.get(tuple(key))
        if record is None:
            raise UnknownKey(f"prediction for unknown step {tuple(key)!r}")
        total += 1
        gold = record.labels
        for dim in DIMENSIONS:
            if getattr(predicted, dim) == getattr(gold, dim):
                correct[dim] += 1
        if answer_correct is not None and record.gold_answer is not None:
            correctness_total += 1
            if bool(answer_correct) == _answer_actually_correct(record):
                correctness_right += 1

    per_dimension = {dim: correct[dim] / total for dim in DIMENSIONS} if total else {}
    counts = {dim: total for dim in DIMENSIONS} if total else {}
    overall = correctness_right / correctness_total if correctness_total else None
    return EvalReport(
        per_dimension_accuracy=per_dimension,
        counts=counts,
        overall_correctness_accuracy=overall,
        evaluated=total,
    )
