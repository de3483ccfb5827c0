"""Shared builders for the test suite.

Most tests construct small in-memory objects; only the golden and
inference tests touch the bundled fixture corpus.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from vpcot.backends import FixtureBackend, FixtureEntry, FixtureScript
from vpcot.config import RunConfig, load_config
from vpcot.executor import SandboxPolicy
from vpcot.model import BlockTrace, CodeBlock, StepLabels, VarValue, VisualTask

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def demo_config(tmp_path) -> RunConfig:
    """The bundled corpus config, writing artifacts into a fresh tmp dir."""
    return load_config(FIXTURES / "demo.cfg", overrides={"out": str(tmp_path / "out")})


@pytest.fixture
def fast_policy() -> SandboxPolicy:
    return SandboxPolicy(wall_timeout_s=10.0, memory_cap_mb=512)


def make_task(
    task_id: str = "t-unit",
    query: str = "How many dogs are in the image?",
    visual_ref: str = "img://unit",
    modality: str = "single-image",
    gold_answer: str | None = None,
) -> VisualTask:
    return VisualTask(task_id, query, visual_ref, modality, gold_answer)


def make_block(
    node_id: str = "1",
    step_index: int = 1,
    description: str = "do the thing",
    body: str = "x = 1",
    parent_id: str | None = None,
) -> CodeBlock:
    source = f"# Step {step_index}: {description}\n{body}"
    return CodeBlock(
        node_id=node_id,
        parent_id=parent_id,
        step_index=step_index,
        description=description,
        source=source,
    )


def make_trace(
    node_id: str = "1",
    status: str = "ok",
    variables: dict[str, VarValue] | None = None,
    stderr: str = "",
) -> BlockTrace:
    return BlockTrace(
        node_id=node_id,
        status=status,
        variables=variables or {},
        stderr_excerpt=stderr if status in ("compile_error", "runtime_error") else "",
        wall_time_ms=0,
    )


def boolean(value: bool) -> VarValue:
    return VarValue("boolean", "true" if value else "false")


def number(value) -> VarValue:
    return VarValue("number", repr(value))


def text(value: str) -> VarValue:
    return VarValue("text", value)


def labels(short: str) -> StepLabels:
    return StepLabels.from_short(short)


def scripted_backend(tag_entries: dict[str, list[tuple[str | None, str]]]) -> FixtureBackend:
    """An in-memory fixture backend: {tag: [(substring_guard, response), ...]}."""
    scripts = {
        tag: FixtureScript(
            [FixtureEntry(substring=s, response=r) for s, r in pairs], name=f"mem-{tag}"
        )
        for tag, pairs in tag_entries.items()
    }
    return FixtureBackend(scripts)


def make_scale_bundle(root: Path, **config_extras) -> Path:
    """One-task on-disk fixture corpus sized for best-of-1 inference.

    Returns the config path. The single viable path asks one stubbed
    question and terminates; gold answer 'lantern'.
    """
    import json

    step = "# Step 1: Ask for the word\nclue = vqa(image, 'What is the code word?')"
    (root / "tasks.jsonl").write_text(
        json.dumps({"task_id": "t-mini", "query": "What is the code word?",
                    "visual_ref": "mini.png", "gold_answer": "lantern"}) + "\n"
    )
    bundle = root / "t-mini"
    bundle.mkdir()
    entries = [
        {"match": {"substring": "Determine the first step"}, "response": step},
        {"match": {"substring": "# Step 1: Ask for the word"},
         "response": "print(clue)\nWork is Done!"},
    ]
    (bundle / "generator.jsonl").write_text(
        "".join(json.dumps(entry) + "\n" for entry in entries)
    )
    (bundle / "stubs.jsonl").write_text(
        json.dumps({"fn": "vqa", "args": ["<image>", "What is the code word?"],
                    "ret": "lantern"}) + "\n"
    )
    body = {"tasks": "tasks.jsonl", "out": "out", "backend": "fixture",
            "fixture_dir": ".", "candidates_n": 1}
    body.update(config_extras)
    config_path = root / "mini.cfg"
    config_path.write_text(json.dumps(body))
    return config_path
