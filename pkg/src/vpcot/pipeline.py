"""The four dataset-construction stages and their on-disk artifacts.

Each stage writes one artifact under the output directory and can be run
standalone (re-reading the previous stage's artifact) or chained in
memory by run_pipeline — both produce byte-identical records because every
artifact round-trips losslessly and all iteration orders are fixed.

    generate -> trees.json
    execute  -> traces.jsonl   (wall times vary run to run; nothing below reads them)
    label    -> labels.jsonl
    convert  -> records.jsonl + report.json
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .backends import Backend, ChatCompletionsAdapter, FixtureBackend, LiveBackend
from .config import RunConfig
from .converter import make_record, to_cot_step
from .dataset import emit_records, load_tasks
from .errors import InvalidCoT, VpcotError
from .executor import FINAL_BLOCK_ID, ModuleStubSet, ProgramRun, run_program
from .generator import expand_tree, tree_from_dict, tree_to_dict
from .labeler import PropTestDeps, label_step
from .model import (
    BlockTrace,
    CoTStep,
    ProgramTree,
    StepLabels,
    StepRecord,
    VarValue,
    VisualTask,
    node_sort_key,
    validate_tree,
)
from .ranker import rank_key
from .scaler import HttpScoringClient, ScalerConfig, StdioScoringClient, run_inference

TREES_FILE = "trees.json"
TRACES_FILE = "traces.jsonl"
LABELS_FILE = "labels.jsonl"
RECORDS_FILE = "records.jsonl"
REPORT_FILE = "report.json"
INFERENCE_FILE = "inference.jsonl"

LABEL_ORDER = tuple(
    sorted(
        (StepLabels(r, l, a) for r in (True, False) for l in (True, False) for a in (True, False)),
        key=rank_key,
        reverse=True,
    )
)


def _backend_factory(config: RunConfig):
    if config.backend_mode == "live":
        live = LiveBackend(
            endpoint_url=config.endpoint_url,
            api_key=config.api_key,
            adapter=ChatCompletionsAdapter(config.model),
        )
        return lambda task_id: live
    fixtures_dir = config.fixtures_dir
    assert fixtures_dir is not None
    return lambda task_id: FixtureBackend.from_dir(fixtures_dir / task_id)


def _stub_set(config: RunConfig, task_id: str) -> ModuleStubSet:
    if config.fixtures_dir is not None:
        path = config.fixtures_dir / task_id / "stubs.jsonl"
        if path.is_file():
            return ModuleStubSet.from_jsonl(path)
    return ModuleStubSet()


def _pool_map(config: RunConfig, fn, items: list):
    if config.worker_count == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=config.worker_count) as pool:
        return list(pool.map(fn, items))


def _out(config: RunConfig, name: str) -> Path:
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return config.output_dir / name


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=True, separators=(",", ":")))
            handle.write("\n")


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                rows.append(json.loads(line))
    return rows


# --- generate ------------------------------------------------------------------


def stage_generate(config: RunConfig) -> dict[str, ProgramTree]:
    tasks = load_tasks(config.tasks_path)
    factory = _backend_factory(config)

    def one(task: VisualTask) -> ProgramTree:
        tree = expand_tree(task, factory(task.task_id), config.generation)
        report = validate_tree(tree)
        if not report.ok:
            first = report.violations[0]
            raise VpcotError(
                f"generated tree for {task.task_id!r} is invalid: "
                f"{first.kind} at {first.node_id} ({first.detail})"
            )
        return tree

    trees = {task.task_id: tree for task, tree in zip(tasks, _pool_map(config, one, tasks))}
    payload = {"trees": [tree_to_dict(trees[task.task_id]) for task in tasks]}
    _out(config, TREES_FILE).write_text(
        json.dumps(payload, ensure_ascii=True, indent=2) + "\n", encoding="utf-8"
    )
    return trees


def read_trees(config: RunConfig) -> dict[str, ProgramTree]:
    path = config.output_dir / TREES_FILE
    if not path.is_file():
        raise VpcotError(f"missing artifact {path}; run the generate stage first")
    payload = json.loads(path.read_text(encoding="utf-8"))
    return {data["task_id"]: tree_from_dict(data) for data in payload["trees"]}


# --- execute -------------------------------------------------------------------


def stage_execute(
    config: RunConfig, trees: dict[str, ProgramTree] | None = None
) -> dict[str, dict[str, ProgramRun]]:
    tasks = load_tasks(config.tasks_path)
    trees = trees if trees is not None else read_trees(config)

    def one(task: VisualTask) -> dict[str, ProgramRun]:
        tree = trees[task.task_id]
        stubs = _stub_set(config, task.task_id)
        runs: dict[str, ProgramRun] = {}
        for path in tree.complete_paths():
            leaf = path[-1].node_id
            runs[leaf] = run_program(
                path, task, stubs, config.sandbox, final_segment=tree.final_segments.get(leaf)
            )
        return runs

    runs_by_task = {
        task.task_id: runs for task, runs in zip(tasks, _pool_map(config, one, tasks))
    }

    rows: list[dict] = []
    for task in tasks:
        for leaf in sorted(runs_by_task[task.task_id], key=node_sort_key):
            run = runs_by_task[task.task_id][leaf]
            units = list(run.traces) + ([run.final_trace] if run.final_trace else [])
            for position, trace in enumerate(units):
                row = {
                    "task_id": task.task_id,
                    "path_id": leaf,
                    "position": position,
                    "node_id": trace.node_id,
                    "status": trace.status,
                    "variables": {
                        name: {"kind": trace.variables[name].kind,
                               "value": trace.variables[name].value_text}
                        for name in sorted(trace.variables)
                    },
                    "stderr": trace.stderr_excerpt,
                    "wall_time_ms": trace.wall_time_ms,
                }
                if trace.node_id == FINAL_BLOCK_ID:
                    row["answer"] = run.final_answer
                rows.append(row)
    _write_jsonl(_out(config, TRACES_FILE), rows)
    return runs_by_task


def read_runs(config: RunConfig) -> dict[str, dict[str, ProgramRun]]:
    path = config.output_dir / TRACES_FILE
    if not path.is_file():
        raise VpcotError(f"missing artifact {path}; run the execute stage first")
    grouped: dict[tuple[str, str], list[dict]] = {}
    for row in _read_jsonl(path):
        grouped.setdefault((row["task_id"], row["path_id"]), []).append(row)

    runs: dict[str, dict[str, ProgramRun]] = {}
    for (task_id, path_id), rows in grouped.items():
        rows.sort(key=lambda r: r["position"])
        traces: list[BlockTrace] = []
        final_trace: BlockTrace | None = None
        final_answer: str | None = None
        for row in rows:
            trace = BlockTrace(
                node_id=row["node_id"],
                status=row["status"],
                variables={
                    name: VarValue(spec["kind"], spec["value"])
                    for name, spec in row["variables"].items()
                },
                stderr_excerpt=row["stderr"],
                wall_time_ms=row["wall_time_ms"],
            )
            if row["node_id"] == FINAL_BLOCK_ID:
                final_trace = trace
                final_answer = row.get("answer")
            else:
                traces.append(trace)
        runs.setdefault(task_id, {})[path_id] = ProgramRun(
            traces=tuple(traces), final_trace=final_trace, final_answer=final_answer
        )
    return runs


# --- label ---------------------------------------------------------------------


def stage_label(
    config: RunConfig,
    trees: dict[str, ProgramTree] | None = None,
    runs: dict[str, dict[str, ProgramRun]] | None = None,
) -> dict[str, dict[str, StepLabels]]:
    tasks = load_tasks(config.tasks_path)
    trees = trees if trees is not None else read_trees(config)
    runs = runs if runs is not None else read_runs(config)
    factory = _backend_factory(config)

    def one(task: VisualTask) -> dict[str, StepLabels]:
        tree = trees[task.task_id]
        task_runs = runs[task.task_id]
        verifier = factory(task.task_id)
        stubs = _stub_set(config, task.task_id) if config.use_proptest else None
        labels: dict[str, StepLabels] = {}
        for path in tree.complete_paths():
            run = task_runs[path[-1].node_id]
            env: dict[str, VarValue] = {}
            for index, (block, trace) in enumerate(zip(path, run.traces)):
                if block.node_id not in labels:
                    proptest = None
                    if config.use_proptest and stubs is not None:
                        proptest = PropTestDeps(
                            backend=verifier,
                            stubs=stubs,
                            policy=config.sandbox,
                            prefix=tuple(path[:index]),
                        )
                    step_labels, _, _ = label_step(
                        block, trace, env, task, verifier_backend=verifier, proptest=proptest
                    )
                    labels[block.node_id] = step_labels
                env.update(trace.variables)
        return labels

    labels_by_task = {
        task.task_id: labels for task, labels in zip(tasks, _pool_map(config, one, tasks))
    }

    rows = []
    for task in tasks:
        labels = labels_by_task[task.task_id]
        for node_id in sorted(labels, key=node_sort_key):
            triple = labels[node_id]
            rows.append(
                {
                    "task_id": task.task_id,
                    "node_id": node_id,
                    "relevance": triple.relevance,
                    "logic": triple.logic,
                    "attribute": triple.attribute,
                }
            )
    _write_jsonl(_out(config, LABELS_FILE), rows)
    return labels_by_task


def read_labels(config: RunConfig) -> dict[str, dict[str, StepLabels]]:
    path = config.output_dir / LABELS_FILE
    if not path.is_file():
        raise VpcotError(f"missing artifact {path}; run the label stage first")
    labels: dict[str, dict[str, StepLabels]] = {}
    for row in _read_jsonl(path):
        labels.setdefault(row["task_id"], {})[row["node_id"]] = StepLabels(
            row["relevance"], row["logic"], row["attribute"]
        )
    return labels


# --- convert -------------------------------------------------------------------


def stage_convert(
    config: RunConfig,
    trees: dict[str, ProgramTree] | None = None,
    runs: dict[str, dict[str, ProgramRun]] | None = None,
    labels: dict[str, dict[str, StepLabels]] | None = None,
) -> tuple[list[StepRecord], dict]:
    tasks = load_tasks(config.tasks_path)
    trees = trees if trees is not None else read_trees(config)
    runs = runs if runs is not None else read_runs(config)
    labels = labels if labels is not None else read_labels(config)
    factory = _backend_factory(config)

    def one(task: VisualTask) -> tuple[list[StepRecord], int]:
        tree = trees[task.task_id]
        task_runs = runs[task.task_id]
        task_labels = labels[task.task_id]
        converter = factory(task.task_id)
        cots: dict[str, CoTStep | None] = {}
        invalid = 0
        records: list[StepRecord] = []
        for path in tree.complete_paths():
            leaf = path[-1].node_id
            run = task_runs[leaf]
            for block, trace in zip(path, run.traces):
                if block.node_id not in cots:
                    try:
                        cots[block.node_id] = to_cot_step(
                            block, trace, task_labels[block.node_id], converter
                        )
                    except InvalidCoT:
                        cots[block.node_id] = None
                        invalid += 1
                cot = cots[block.node_id]
                if cot is None:
                    continue
                records.append(
                    make_record(task, block, trace, cot, path_id=leaf, final_answer=run.final_answer)
                )
        return records, invalid

    results = _pool_map(config, one, tasks)
    all_records = [record for records, _ in results for record in records]
    invalid_total = sum(invalid for _, invalid in results)

    emit_records(all_records, _out(config, RECORDS_FILE))

    distribution = {labels_combo.short(): 0 for labels_combo in LABEL_ORDER}
    splits = {"train": 0, "test": 0}
    for record in all_records:
        distribution[record.labels.short()] += 1
        splits[record.split] += 1
    report = {
        "tasks": len(tasks),
        "trees": len(trees),
        "complete_paths": sum(len(tree.terminal_leaves) for tree in trees.values()),
        "records": len(all_records),
        "invalid_cot": invalid_total,
        "label_distribution": distribution,
        "splits": splits,
    }
    _out(config, REPORT_FILE).write_text(
        json.dumps(report, ensure_ascii=True, indent=2) + "\n", encoding="utf-8"
    )
    return all_records, report


def run_pipeline(config: RunConfig) -> dict:
    """generate → execute → label → convert, handing artifacts in memory."""
    trees = stage_generate(config)
    runs = stage_execute(config, trees)
    labels = stage_label(config, trees, runs)
    _, report = stage_convert(config, trees, runs, labels)
    return report


# --- inference (scale) ----------------------------------------------------------


def run_scale(config: RunConfig) -> list[dict]:
    """Best-of-N inference over every task in the manifest."""
    tasks = load_tasks(config.tasks_path)
    factory = _backend_factory(config)

    client = None
    owns_client = False
    if config.scaler.scorer_mode == "external":
        if config.scorer_command:
            client = StdioScoringClient(list(config.scorer_command))
            owns_client = True
        elif config.scorer_url:
            client = HttpScoringClient(config.scorer_url)
        else:
            raise VpcotError("external scoring needs scorer.url or scorer.command")

    rows: list[dict] = []
    try:
        for task in tasks:
            stubs = _stub_set(config, task.task_id)
            backend = factory(task.task_id)
            try:
                result = run_inference(
                    task, backend, stubs, config.sandbox, config.scaler,
                    client=client, tiebreak_backend=backend,
                )
            except VpcotError as exc:
                rows.append({"task_id": task.task_id, "error": str(exc)})
                continue
            rows.append(
                {
                    "task_id": task.task_id,
                    "final_answer": result.final_answer,
                    "no_answer": result.no_answer,
                    "steps": len(result.chosen),
                    "matched_gold": result.answer_matches_gold(task),
                }
            )
    finally:
        if owns_client and client is not None:
            client.close()

    _write_jsonl(_out(config, INFERENCE_FILE), rows)
    return rows
