"""Reward-guided best-of-N decoding.

At inference time each step is sampled N times; every candidate is run in
a fresh sandbox on top of the chosen prefix and scored along the three
label dimensions, either by the built-in labeling oracle or by an external
scorer speaking the scoring protocol. The ranker picks the winner and the
walk continues until the generator terminates the path.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass
from typing import Protocol

import requests

from .backends import Backend
from .errors import MalformedIndex, MissingHeader, NoCandidates
from .executor import ModuleStubSet, SandboxPolicy, run_program
from .generator import GenerationConfig, Terminal, first_block, next_blocks
from .labeler import ANSWER_NAMES, label_step
from .model import BlockTrace, CodeBlock, ScorerVerdict, StepLabels, VarValue, VisualTask
from .ranker import select_best

SCORER_MODES = ("oracle", "external")

SCORE_FIELDS = ("relevance", "logic", "attribute")


@dataclass(frozen=True)
class ScalerConfig:
    candidates_n: int = 4
    max_depth: int = 8
    scorer_mode: str = "oracle"

    def __post_init__(self) -> None:
        if self.candidates_n < 1:
            raise ValueError("candidates_n must be at least 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.scorer_mode not in SCORER_MODES:
            raise ValueError(f"unknown scorer mode {self.scorer_mode!r}")


class ScoringClient(Protocol):
    def score(self, payload: dict) -> dict: ...


@dataclass
class HttpScoringClient:
    """POSTs step payloads to <base_url>/score."""

    base_url: str
    timeout_s: float = 10.0

    def score(self, payload: dict) -> dict:
        response = requests.post(
            self.base_url.rstrip("/") + "/score", json=payload, timeout=self.timeout_s
        )
        response.raise_for_status()
        return response.json()


class StdioScoringClient:
    """Speaks the scoring protocol over a child process's stdio.

    One JSON object per line in, one JSON object of per-dimension scores
    per line out.
    """

    def __init__(self, command: list[str]):
        self._proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def score(self, payload: dict) -> dict:
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(json.dumps(payload) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError("scorer process closed its output")
        return json.loads(line)

    def close(self) -> None:
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()

    def __enter__(self) -> "StdioScoringClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def score_payload(
    task: VisualTask,
    prefix: list[CodeBlock],
    candidate: CodeBlock,
    trace: BlockTrace,
) -> dict:
    """The scoring-protocol request body for one candidate step."""
    return {
        "query": task.query,
        "context": [block.source for block in prefix],
        "step_text": candidate.description,
        "code": candidate.source,
        "variables": {name: value.value_text for name, value in sorted(trace.variables.items())},
    }


def _fold_variables(traces) -> dict[str, VarValue]:
    env: dict[str, VarValue] = {}
    for trace in traces:
        env.update(trace.variables)
    return env


def score_candidate(
    task: VisualTask,
    prefix: list[CodeBlock],
    candidate: CodeBlock,
    stubs: ModuleStubSet,
    policy: SandboxPolicy,
    config: ScalerConfig,
    client: ScoringClient | None = None,
) -> ScorerVerdict:
    """Execute prefix+candidate in a fresh sandbox and score the candidate.

    Oracle mode labels the candidate's trace directly (scores are exactly
    0 or 1). External mode sends the execution evidence to the scorer; any
    scorer failure yields an all-zero verdict with a diagnostic rather
    than an exception, so one bad reply cannot sink a whole run.
    """
    run = run_program(prefix + [candidate], task, stubs, policy)
    trace = run.traces[-1]
    if config.scorer_mode == "oracle":
        env_before = _fold_variables(run.traces[:-1])
        labels, _, _ = label_step(candidate, trace, env_before, task, verifier_backend=None)
        r, l, a = (float(v) for v in labels.as_tuple())
        return ScorerVerdict(r, l, a, labels)
    if client is None:
        raise ValueError("external scoring needs a client")
    try:
        scores = client.score(score_payload(task, prefix, candidate, trace))
        return ScorerVerdict.from_scores(*(float(scores[field]) for field in SCORE_FIELDS))
    except Exception as exc:  # protocol errors are data, not crashes
        return ScorerVerdict(0.0, 0.0, 0.0, StepLabels(False, False, False), diagnostic=str(exc))


@dataclass(frozen=True)
class InferenceResult:
    task_id: str
    chosen: tuple[CodeBlock, ...]
    final_segment: str | None
    final_answer: str | None
    no_answer: bool
    step_verdicts: tuple[tuple[ScorerVerdict, ...], ...] = ()

    def answer_matches_gold(self, task: VisualTask) -> bool:
        if self.final_answer is None or task.gold_answer is None:
            return False
        return self.final_answer.strip().lower() == task.gold_answer.strip().lower()


def _answer_variable(traces) -> str | None:
    """Latest answer-typed binding along the path, name priority on ties."""
    latest: str | None = None
    for trace in traces:
        for name in ANSWER_NAMES:
            if name in trace.variables:
                latest = trace.variables[name].value_text
                break
    return latest


def run_inference(
    task: VisualTask,
    backend: Backend,
    stubs: ModuleStubSet,
    policy: SandboxPolicy,
    config: ScalerConfig,
    client: ScoringClient | None = None,
    tiebreak_backend: Backend | None = None,
) -> InferenceResult:
    """Best-of-N decode of one task.

    Every step draws candidates_n samples; parse failures drop out, and
    the survivors are scored and ranked. Termination comes from the
    generator's marker; the final answer is the terminal segment's printed
    output, falling back to the last captured answer-typed variable, else
    None with the no_answer flag set. A step with zero usable candidates
    raises NoCandidates carrying the partial path.
    """
    gen_config = GenerationConfig(branch_factor_x=config.candidates_n, max_depth=config.max_depth)

    def _pick(candidates: list[CodeBlock], verdicts: list[ScorerVerdict]) -> int:
        return select_best(
            [(index, verdict.thresholded_labels) for index, verdict in enumerate(verdicts)],
            tiebreak_backend=tiebreak_backend,
            candidate_texts=[c.description for c in candidates],
            context=task.query,
        )

    def _score_all(prefix: list[CodeBlock], candidates: list[CodeBlock]) -> list[ScorerVerdict]:
        return [
            score_candidate(task, prefix, candidate, stubs, policy, config, client)
            for candidate in candidates
        ]

    def _abort(chosen: list[CodeBlock], depth: int) -> NoCandidates:
        error = NoCandidates(f"no usable candidate at step {depth} of task {task.task_id!r}")
        error.partial_path = tuple(chosen)  # type: ignore[attr-defined]
        return error

    candidates: list[CodeBlock] = []
    for _ in range(config.candidates_n):
        try:
            candidates.append(
                first_block(task, backend, gen_config, node_id=str(len(candidates) + 1))
            )
        except (MissingHeader, MalformedIndex):
            continue
    if not candidates:
        raise _abort([], 1)
    verdicts = _score_all([], candidates)
    chosen: list[CodeBlock] = [candidates[_pick(candidates, verdicts)]]
    all_verdicts: list[tuple[ScorerVerdict, ...]] = [tuple(verdicts)]

    final_segment: str | None = None
    while len(chosen) < config.max_depth:
        expansion = next_blocks(task, chosen, backend, gen_config)
        if isinstance(expansion, Terminal):
            final_segment = expansion.segment
            break
        if not expansion:
            raise _abort(chosen, len(chosen) + 1)
        verdicts = _score_all(chosen, expansion)
        chosen.append(expansion[_pick(expansion, verdicts)])
        all_verdicts.append(tuple(verdicts))

    run = run_program(chosen, task, stubs, policy, final_segment=final_segment)
    final_answer = run.final_answer
    if final_answer is None:
        final_answer = _answer_variable(run.traces)

    return InferenceResult(
        task_id=task.task_id,
        chosen=tuple(chosen),
        final_segment=final_segment,
        final_answer=final_answer,
        no_answer=final_answer is None,
        step_verdicts=tuple(all_verdicts),
    )
