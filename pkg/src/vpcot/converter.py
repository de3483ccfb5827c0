"""Code blocks to natural-language reasoning steps and dataset rows."""

from __future__ import annotations

import hashlib

from .backends import Backend, BackendRequest
from .errors import InvalidCoT
from .model import COT_PREFIX, BlockTrace, CodeBlock, CoTStep, StepLabels, StepRecord, VisualTask
from .prompting import render_cot_convert

CONVERT_RETRIES = 1  # one re-ask when the rendering drops the required prefix

TRAIN_BUCKETS = 8  # of 10: an 80/20 split keyed on the task id


def variables_text(trace: BlockTrace) -> str:
    """Deterministic rendering of a trace for conversion prompts."""
    if trace.status != "ok":
        excerpt = trace.stderr_excerpt or "no output"
        return f"<{trace.status}> {excerpt}"
    if not trace.variables:
        return "(none)"
    return "\n".join(
        f"{name} = {trace.variables[name].value_text}" for name in sorted(trace.variables)
    )


def to_cot_step(
    block: CodeBlock,
    trace: BlockTrace,
    labels: StepLabels,
    backend: Backend,
) -> CoTStep:
    """Convert one executed block into its reasoning step.

    The conversion backend must open with the fixed step prefix; one retry
    is allowed, after which the step is rejected with InvalidCoT.
    """
    prompt = render_cot_convert(block.source, variables_text(trace))
    request = BackendRequest.user(prompt, tag="converter")
    attempts = 1 + CONVERT_RETRIES
    text = ""
    for _ in range(attempts):
        text = backend.complete(request).text.strip()
        if text.startswith(COT_PREFIX):
            return CoTStep(
                text=text,
                labels=labels,
                source_node_id=block.node_id,
                step_index=block.step_index,
            )
    raise InvalidCoT(
        f"node {block.node_id}: conversion lacks the {COT_PREFIX!r} prefix after {attempts} attempts"
    )


def split_for_task(task_id: str) -> str:
    """Stable 80/20 train/test assignment from the task id alone."""
    digest = hashlib.md5(task_id.encode("utf-8")).hexdigest()
    return "train" if int(digest, 16) % 10 < TRAIN_BUCKETS else "test"


def make_record(
    task: VisualTask,
    block: CodeBlock,
    trace: BlockTrace,
    cot: CoTStep,
    path_id: str,
    final_answer: str | None,
) -> StepRecord:
    return StepRecord(
        task_id=task.task_id,
        query=task.query,
        visual_ref=task.visual_ref,
        step_index=block.step_index,
        code_source=block.source,
        variables=dict(trace.variables),
        cot_text=cot.text,
        labels=cot.labels,
        path_id=path_id,
        split=split_for_task(task.task_id),
        gold_answer=task.gold_answer,
        final_answer=final_answer,
    )
