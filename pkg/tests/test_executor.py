"""Sandboxed execution: canonical values, status propagation, and limits.

The canonical-form expectations in ORACLE_BINDINGS are hand-written; the
sandbox must reproduce them byte for byte.
"""

from __future__ import annotations

import pytest

from conftest import make_block, make_task
from vpcot.errors import SandboxSpawnFailure
from vpcot.executor import (
    FINAL_BLOCK_ID,
    VALUE_TRUNC_LIMIT,
    VALUE_TRUNC_SUFFIX,
    ModuleStubSet,
    SandboxPolicy,
    run_path,
    run_program,
)

TASK = make_task(task_id="t-exec", query="What is shown?", visual_ref="img://exec")
POLICY = SandboxPolicy(wall_timeout_s=10.0)
NO_STUBS = ModuleStubSet()


def single(body: str, stubs: ModuleStubSet = NO_STUBS, policy: SandboxPolicy = POLICY,
           final_segment: str | None = None):
    block = make_block(description="unit body", body=body)
    return run_program([block], TASK, stubs, policy, final_segment=final_segment)


# --- value canonicalization -----------------------------------------------------------

ORACLE_BINDINGS = [
    ("flag = True", "flag", "boolean", "true"),
    ("flag = False", "flag", "boolean", "false"),
    ("n = 42", "n", "number", "42"),
    ("n = -7", "n", "number", "-7"),
    ("n = 2.5", "n", "number", "2.5"),
    ("s = 'brown'", "s", "text", "brown"),
    ("s = ''", "s", "text", ""),
    ("xs = [1, 'a', True]", "xs", "list", '[1, "a", true]'),
    ("xs = (1, 2)", "xs", "list", "[1, 2]"),
    ("xs = []", "xs", "list", "[]"),
    ("m = {'b': 2, 'a': 1}", "m", "map", '{"a": 1, "b": 2}'),
    ("m = {}", "m", "map", "{}"),
    ("r = Region(1, 2, 3, 4)", "r", "image_region", "region(1,2,3,4)"),
    ("rs = [Region(1, 2, 3, 4), Region(5, 6, 7, 8)]", "rs", "list",
     "[region(1,2,3,4), region(5,6,7,8)]"),
    ("v = None", "v", "opaque", "<NoneType>"),
    ("v = {1, 2}", "v", "opaque", "<set>"),
    ("m = {'k': [True, 'x']}", "m", "map", '{"k": [true, "x"]}'),
    ("h = image", "h", "opaque", "<image>"),
]


@pytest.mark.parametrize("body,name,kind,value", ORACLE_BINDINGS)
def test_value_canonical_forms(body, name, kind, value):
    trace = single(body).traces[0]
    assert trace.status == "ok", trace.stderr_excerpt
    captured = trace.variables[name]
    assert (captured.kind, captured.value_text) == (kind, value)


def test_long_value_truncated():
    trace = single("s = 'x' * 5000").traces[0]
    text = trace.variables["s"].value_text
    assert text == "x" * VALUE_TRUNC_LIMIT + VALUE_TRUNC_SUFFIX


def test_reserved_and_underscore_names_not_snapshotted():
    trace = single("_secret = 1\nvisible = 2").traces[0]
    assert set(trace.variables) == {"visible"}


def test_snapshots_are_deltas():
    blocks = [
        make_block(node_id="1", step_index=1, description="first", body="x = 1\ny = 'keep'"),
        make_block(node_id="1.1", step_index=2, description="second", body="z = x + 1",
                   parent_id="1"),
        make_block(node_id="1.1.1", step_index=3, description="third", body="x = 99",
                   parent_id="1.1"),
    ]
    traces = run_program(blocks, TASK, NO_STUBS, POLICY).traces
    assert set(traces[0].variables) == {"x", "y"}
    assert set(traces[1].variables) == {"z"}  # x and y unchanged, not re-emitted
    assert set(traces[2].variables) == {"x"}
    assert traces[2].variables["x"].value_text == "99"


# --- statuses and propagation ----------------------------------------------------------


def test_compile_error_then_skips():
    blocks = [
        make_block(node_id="1", step_index=1, description="a", body="x = 1"),
        make_block(node_id="1.1", step_index=2, description="b", body="y = =", parent_id="1"),
        make_block(node_id="1.1.1", step_index=3, description="c", body="z = 3",
                   parent_id="1.1"),
    ]
    traces = run_program(blocks, TASK, NO_STUBS, POLICY).traces
    assert [t.status for t in traces] == ["ok", "compile_error", "skipped"]
    assert "SyntaxError" in traces[1].stderr_excerpt
    assert traces[1].variables == {} and traces[2].variables == {}
    assert traces[2].stderr_excerpt == ""


def test_runtime_error_then_skips():
    blocks = [
        make_block(node_id="1", step_index=1, description="a", body="x = 1"),
        make_block(node_id="1.1", step_index=2, description="b", body="y = missing + 1",
                   parent_id="1"),
        make_block(node_id="1.1.1", step_index=3, description="c", body="z = 3",
                   parent_id="1.1"),
    ]
    traces = run_program(blocks, TASK, NO_STUBS, POLICY).traces
    assert [t.status for t in traces] == ["ok", "runtime_error", "skipped"]
    assert "NameError" in traces[1].stderr_excerpt


def test_run_path_returns_block_traces_only():
    block = make_block(body="x = 1")
    traces = run_path([block], TASK, NO_STUBS, POLICY)
    assert len(traces) == 1
    assert traces[0].node_id == "1"


# --- final segment ----------------------------------------------------------------------


def test_final_segment_prints_answer():
    run = single("answer = 'two'", final_segment="print(answer)")
    assert run.final_trace is not None
    assert run.final_trace.node_id == FINAL_BLOCK_ID
    assert run.final_trace.status == "ok"
    assert run.final_answer == "two"


def test_final_segment_failure_yields_no_answer():
    run = single("answer = 'two'", final_segment="print(missing_name)")
    assert run.final_trace is not None
    assert run.final_trace.status == "runtime_error"
    assert run.final_answer is None


def test_final_segment_skipped_after_block_failure():
    run = single("answer = =", final_segment="print(answer)")
    assert run.traces[0].status == "compile_error"
    assert run.final_trace is not None
    assert run.final_trace.status == "skipped"
    assert run.final_answer is None


def test_no_final_segment():
    run = single("x = 1")
    assert run.final_trace is None
    assert run.final_answer is None


def test_multiline_stdout_stripped_once():
    run = single("x = 1", final_segment="print('  padded  ')")
    assert run.final_answer == "padded"


# --- module stubs ------------------------------------------------------------------------


STUBS = ModuleStubSet.from_rows(
    [
        {"fn": "find", "args": ["<image>", "dog"],
         "ret": [{"__region__": [10, 20, 110, 220]}]},
        {"fn": "exists", "args": ["<image>", "cat"], "ret": False},
        {"fn": "vqa", "args": ["<image>", "What breed?"], "ret": "corgi"},
        {"fn": "llm_query", "args": ["capital of France?"], "ret": "Paris"},
        {"fn": "compute", "args": ["2 + 3"], "ret": 5},
        {"fn": "vqa", "args": ["region(10,20,110,220)", "Is it small?"], "ret": "yes"},
    ]
)


def test_all_stub_functions_resolve():
    body = "\n".join(
        [
            "boxes = find(image, 'dog')",
            "has_cat = exists(image, 'cat')",
            "breed = vqa(image, 'What breed?')",
            "capital = llm_query('capital of France?')",
            "total = compute('2 + 3')",
        ]
    )
    trace = single(body, stubs=STUBS).traces[0]
    assert trace.status == "ok", trace.stderr_excerpt
    values = {name: v.value_text for name, v in trace.variables.items()}
    assert values == {
        "boxes": "[region(10,20,110,220)]",
        "has_cat": "false",
        "breed": "corgi",
        "capital": "Paris",
        "total": "5",
    }


def test_region_argument_canonicalized_for_lookup():
    body = "boxes = find(image, 'dog')\nsmall = vqa(boxes[0], 'Is it small?')"
    trace = single(body, stubs=STUBS).traces[0]
    assert trace.status == "ok", trace.stderr_excerpt
    assert trace.variables["small"].value_text == "yes"


def test_missing_stub_is_runtime_error():
    trace = single("x = vqa(image, 'unscripted question')", stubs=STUBS).traces[0]
    assert trace.status == "runtime_error"
    assert "StubLookupError" in trace.stderr_excerpt
    assert "unscripted question" in trace.stderr_excerpt


def test_repeated_identical_call_replays():
    body = "a = vqa(image, 'What breed?')\nb = vqa(image, 'What breed?')"
    trace = single(body, stubs=STUBS).traces[0]
    assert trace.status == "ok"
    assert trace.variables["a"].value_text == trace.variables["b"].value_text == "corgi"


# --- isolation and limits ------------------------------------------------------------------


def test_network_denied():
    body = "import socket\nsocket.create_connection(('127.0.0.1', 9))"
    trace = single(body).traces[0]
    assert trace.status == "runtime_error"
    assert "network" in trace.stderr_excerpt.lower()


def test_socket_constructor_denied():
    body = "import socket\ns = socket.socket()"
    trace = single(body).traces[0]
    assert trace.status == "runtime_error"


def test_memory_cap_enforced():
    policy = SandboxPolicy(wall_timeout_s=10.0, memory_cap_mb=128)
    trace = single("blob = bytearray(512 * 1024 * 1024)", policy=policy).traces[0]
    assert trace.status == "runtime_error"
    assert "MemoryError" in trace.stderr_excerpt


def test_timeout_marks_inflight_block(fast_policy):
    policy = SandboxPolicy(wall_timeout_s=1.5)
    blocks = [
        make_block(node_id="1", step_index=1, description="ok", body="x = 1"),
        make_block(node_id="1.1", step_index=2, description="spin",
                   body="while True:\n    pass", parent_id="1"),
        make_block(node_id="1.1.1", step_index=3, description="never", body="y = 2",
                   parent_id="1.1"),
    ]
    run = run_program(blocks, TASK, NO_STUBS, policy)
    assert run.timed_out
    assert [t.status for t in run.traces] == ["ok", "runtime_error", "skipped"]
    assert "timeout" in run.traces[1].stderr_excerpt.lower()


def test_policy_validation():
    with pytest.raises(ValueError):
        SandboxPolicy(wall_timeout_s=0)
    with pytest.raises(ValueError):
        SandboxPolicy(network="allowed")


def test_stub_set_round_trip(tmp_path):
    path = tmp_path / "stubs.jsonl"
    rows = STUBS.to_payload()
    with path.open("w") as handle:
        import json

        for row in rows:
            handle.write(json.dumps(row) + "\n")
    assert ModuleStubSet.from_jsonl(path) == STUBS


def test_spawn_failure_raises(monkeypatch):
    import subprocess

    def boom(*args, **kwargs):
        raise OSError("no exec for you")

    monkeypatch.setattr(subprocess, "Popen", boom)
    with pytest.raises(SandboxSpawnFailure):
        single("x = 1")
