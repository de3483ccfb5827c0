"""Sandboxed execution of generated program paths.

Each path runs in a fresh guest interpreter (`python -I -S`) with a wall
timeout, a memory cap, and network access disabled. An instrumentation
prelude executes the blocks in order and, after every block, writes a
snapshot of newly bound or rebound top-level variables as one JSON line on
a dedicated file descriptor, separate from guest stdout. Vision and
knowledge functions resolve from per-task lookup tables, so runs are byte
reproducible offline.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SandboxSpawnFailure
from .model import BlockTrace, CodeBlock, VarValue, VisualTask

STUB_FUNCTIONS = ("find", "exists", "vqa", "llm_query", "compute")

FINAL_BLOCK_ID = "<final>"

VALUE_TRUNC_LIMIT = 2048
VALUE_TRUNC_SUFFIX = "...[truncated]"

_SNAP_FD_ENV = "VPCOT_SNAP_FD"


@dataclass(frozen=True)
class SandboxPolicy:
    """Resource limits for one path run; network access has no open state."""

    wall_timeout_s: float = 10.0
    memory_cap_mb: int = 512
    output_cap_bytes: int = 1 << 20
    network: str = "denied"

    def __post_init__(self) -> None:
        if self.wall_timeout_s <= 0 or self.memory_cap_mb <= 0 or self.output_cap_bytes <= 0:
            raise ValueError("sandbox limits must be positive")
        if self.network != "denied":
            raise ValueError("the sandbox never grants network access")


@dataclass(frozen=True)
class StubCall:
    fn: str
    args: tuple
    ret: object


@dataclass(frozen=True)
class ModuleStubSet:
    """Deterministic lookup table backing the guest's module functions.

    Args in the table are stored pre-canonicalized: the task image is the
    string "<image>", regions are "region(x1,y1,x2,y2)" strings, scalars
    and strings are plain JSON values. Return values may encode an image
    region as {"__region__": [x1, y1, x2, y2]} (or a list of those).
    """

    calls: tuple[StubCall, ...] = ()

    @classmethod
    def from_rows(cls, rows: list[dict]) -> "ModuleStubSet":
        return cls(tuple(StubCall(row["fn"], tuple(row["args"]), row["ret"]) for row in rows))

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ModuleStubSet":
        rows: list[dict] = []
        with Path(path).open("r", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    rows.append(json.loads(line))
        return cls.from_rows(rows)

    def to_payload(self) -> list[dict]:
        return [{"fn": c.fn, "args": list(c.args), "ret": c.ret} for c in self.calls]


@dataclass(frozen=True)
class ProgramRun:
    """Outcome of one sandboxed path run."""

    traces: tuple[BlockTrace, ...]
    final_trace: BlockTrace | None = None
    final_answer: str | None = None
    timed_out: bool = False


# The guest prelude. It receives a single JSON payload on stdin:
#   {"blocks": [{"id", "source"}...], "final": {"id", "source"}|null,
#    "stubs": [...], "visual_ref": str, "memory_cap_mb": int,
#    "output_cap_bytes": int}
# and emits one JSON line per executed block on the fd named by
# VPCOT_SNAP_FD. It uses only the stdlib and never touches the network.
_GUEST_DRIVER = r'''
import io, json, os, sys, time

PAYLOAD = json.load(sys.stdin)
sys.stdin = io.StringIO("")

try:
    import resource
    _cap = int(PAYLOAD["memory_cap_mb"]) * 1024 * 1024
    resource.setrlimit(resource.RLIMIT_AS, (_cap, _cap))
except Exception:
    pass

try:
    import socket
    def _no_network(*args, **kwargs):
        raise RuntimeError("network access denied by sandbox policy")
    socket.socket = _no_network
    socket.create_connection = _no_network
    socket.socketpair = _no_network
    socket.getaddrinfo = _no_network
except Exception:
    pass

SNAP = os.fdopen(int(os.environ["VPCOT_SNAP_FD"]), "w", encoding="utf-8")
OUTPUT_CAP = int(PAYLOAD["output_cap_bytes"])
TRUNC_LIMIT = 2048
TRUNC_SUFFIX = "...[truncated]"


class Region:
    __slots__ = ("x1", "y1", "x2", "y2")

    def __init__(self, x1, y1, x2, y2):
        self.x1, self.y1, self.x2, self.y2 = x1, y1, x2, y2

    def canonical(self):
        return "region(%s,%s,%s,%s)" % tuple(_num(v) for v in (self.x1, self.y1, self.x2, self.y2))

    def __repr__(self):
        return self.canonical()

    def __eq__(self, other):
        return isinstance(other, Region) and self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())


class VisualHandle:
    __slots__ = ("ref",)

    def __init__(self, ref):
        self.ref = ref

    def canonical(self):
        return "<image>"

    def __repr__(self):
        return "<image>"


def _num(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    return repr(v)


def _truncate(text):
    if len(text) > TRUNC_LIMIT:
        return text[:TRUNC_LIMIT] + TRUNC_SUFFIX
    return text


def _inner_text(v):
    if isinstance(v, Region):
        return v.canonical()
    if isinstance(v, VisualHandle):
        return v.canonical()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return _num(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_inner_text(x) for x in v) + "]"
    if isinstance(v, dict):
        items = sorted(((str(k), x) for k, x in v.items()), key=lambda p: p[0])
        return "{" + ", ".join("%s: %s" % (json.dumps(k), _inner_text(x)) for k, x in items) + "}"
    return "<" + type(v).__name__ + ">"


def _kind_and_text(v):
    if isinstance(v, Region):
        return "image_region", v.canonical()
    if isinstance(v, bool):
        return "boolean", "true" if v else "false"
    if isinstance(v, (int, float)):
        return "number", _num(v)
    if isinstance(v, str):
        return "text", _truncate(v)
    if isinstance(v, (list, tuple)):
        return "list", _truncate(_inner_text(v))
    if isinstance(v, dict):
        return "map", _truncate(_inner_text(v))
    return "opaque", _truncate(_inner_text(v))


def _canon_arg(v):
    if isinstance(v, VisualHandle):
        return "<image>"
    if isinstance(v, Region):
        return v.canonical()
    if isinstance(v, bool) or isinstance(v, (int, float, str)):
        return v
    if isinstance(v, (list, tuple)):
        return [_canon_arg(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _canon_arg(x) for k, x in sorted(v.items(), key=lambda p: str(p[0]))}
    return "<" + type(v).__name__ + ">"


def _decode_ret(v):
    if isinstance(v, dict):
        if set(v) == {"__region__"}:
            return Region(*v["__region__"])
        return {k: _decode_ret(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_decode_ret(x) for x in v]
    return v


class StubLookupError(RuntimeError):
    pass


_TABLE = {}
for _rec in PAYLOAD["stubs"]:
    _key = json.dumps([_rec["fn"], _rec["args"]], separators=(",", ":"), sort_keys=True)
    _TABLE[_key] = _decode_ret(_rec["ret"])


def _stub(name, args):
    key = json.dumps([name, [_canon_arg(a) for a in args]], separators=(",", ":"), sort_keys=True)
    if key not in _TABLE:
        raise StubLookupError("no stubbed result for %s" % key)
    return _TABLE[key]


def find(image, name):
    return _stub("find", [image, name])


def exists(image, name):
    return _stub("exists", [image, name])


def vqa(image, question):
    return _stub("vqa", [image, question])


def llm_query(question):
    return _stub("llm_query", [question])


def compute(expression):
    return _stub("compute", [expression])


_HANDLE = VisualHandle(PAYLOAD.get("visual_ref", ""))
GLOBALS = {
    "__name__": "__guest__",
    "find": find,
    "exists": exists,
    "vqa": vqa,
    "llm_query": llm_query,
    "compute": compute,
    "Region": Region,
    "image": _HANDLE,
    "video": _HANDLE,
}
RESERVED = set(GLOBALS)


def _snapshot_vars():
    out = {}
    for name, value in GLOBALS.items():
        if name in RESERVED or name.startswith("_"):
            continue
        kind, text = _kind_and_text(value)
        out[name] = (kind, text)
    return out


def _emit(record):
    SNAP.write(json.dumps(record, ensure_ascii=True) + "\n")
    SNAP.flush()


_prev = {}
_failed = False
_units = list(PAYLOAD["blocks"])
if PAYLOAD.get("final"):
    _units.append(PAYLOAD["final"])

for _unit in _units:
    _rec = {"block": _unit["id"], "vars": {}, "stdout": "", "ms": 0, "status": "ok"}
    if _failed:
        _rec["status"] = "skipped"
        _emit(_rec)
        continue
    _t0 = time.perf_counter()
    _buf = io.StringIO()
    _old_stdout = sys.stdout
    sys.stdout = _buf
    _err = ""
    try:
        try:
            _code = compile(_unit["source"], "<block %s>" % _unit["id"], "exec")
        except SyntaxError as exc:
            _rec["status"] = "compile_error"
            _err = "%s: %s" % (type(exc).__name__, exc)
        else:
            try:
                exec(_code, GLOBALS)
            except BaseException as exc:
                _rec["status"] = "runtime_error"
                _err = "%s: %s" % (type(exc).__name__, exc)
    finally:
        sys.stdout = _old_stdout
    _rec["ms"] = int((time.perf_counter() - _t0) * 1000)
    _rec["stdout"] = _buf.getvalue()[:OUTPUT_CAP]
    if _rec["status"] == "ok":
        _now = _snapshot_vars()
        _delta = {}
        for _name, _pair in _now.items():
            if _prev.get(_name) != _pair:
                _delta[_name] = {"kind": _pair[0], "value": _pair[1]}
        _prev = _now
        _rec["vars"] = _delta
    else:
        _failed = True
        _rec["error"] = _err[:500]
    _emit(_rec)

SNAP.close()
'''


def _read_stream(fd: int, sink: list[bytes], cap: int) -> None:
    total = 0
    with os.fdopen(fd, "rb") as stream:
        while True:
            chunk = stream.read(65536)
            if not chunk:
                return
            if total < cap:
                sink.append(chunk[: cap - total])
            total += len(chunk)


def _trace_from_record(record: dict) -> BlockTrace:
    status = record.get("status", "runtime_error")
    variables: dict[str, VarValue] = {}
    if status == "ok":
        for name, spec in record.get("vars", {}).items():
            variables[name] = VarValue(spec["kind"], spec["value"])
    stderr = "" if status in ("ok", "skipped") else record.get("error", "")
    return BlockTrace(
        node_id=record["block"],
        status=status,
        variables=variables,
        stderr_excerpt=stderr,
        wall_time_ms=max(int(record.get("ms", 0)), 0),
    )


def run_program(
    path: list[CodeBlock],
    task: VisualTask,
    stubs: ModuleStubSet,
    policy: SandboxPolicy,
    final_segment: str | None = None,
) -> ProgramRun:
    """Execute a path (plus optional terminal segment) in a fresh sandbox.

    Returns one trace per block, in order. The first failing block gets
    compile_error/runtime_error status and every later block is skipped;
    a wall timeout marks the in-flight block as runtime_error. The final
    segment's printed output, when it runs cleanly, is the path's answer.
    """
    payload = {
        "blocks": [{"id": block.node_id, "source": block.source} for block in path],
        "final": {"id": FINAL_BLOCK_ID, "source": final_segment} if final_segment else None,
        "stubs": stubs.to_payload(),
        "visual_ref": task.visual_ref,
        "memory_cap_mb": policy.memory_cap_mb,
        "output_cap_bytes": policy.output_cap_bytes,
    }

    read_fd, write_fd = os.pipe()
    env = {_SNAP_FD_ENV: str(write_fd), "PATH": os.environ.get("PATH", "")}
    started = time.perf_counter()
    try:
        proc = subprocess.Popen(
            [sys.executable, "-I", "-S", "-c", _GUEST_DRIVER],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            pass_fds=(write_fd,),
            env=env,
        )
    except OSError as exc:
        os.close(read_fd)
        os.close(write_fd)
        raise SandboxSpawnFailure(f"could not start sandbox: {exc}") from exc
    os.close(write_fd)

    chunks: list[bytes] = []
    reader = threading.Thread(
        target=_read_stream, args=(read_fd, chunks, policy.output_cap_bytes * 8), daemon=True
    )
    reader.start()

    timed_out = False
    stderr_bytes = b""
    try:
        _, stderr_bytes = proc.communicate(
            input=json.dumps(payload).encode("utf-8"), timeout=policy.wall_timeout_s
        )
    except subprocess.TimeoutExpired:
        timed_out = True
        proc.kill()
        try:
            _, stderr_bytes = proc.communicate(timeout=5)
        except subprocess.TimeoutExpired:
            pass
    finally:
        reader.join(timeout=5)

    elapsed_ms = int((time.perf_counter() - started) * 1000)

    records: dict[str, dict] = {}
    for line in b"".join(chunks).decode("utf-8", errors="replace").splitlines():
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            continue
        records[record.get("block", "")] = record

    unit_ids = [block.node_id for block in path]
    if final_segment:
        unit_ids.append(FINAL_BLOCK_ID)

    traces: list[BlockTrace] = []
    recorded_ms = sum(int(records[u].get("ms", 0)) for u in unit_ids if u in records)
    crashed = False
    for unit_id in unit_ids:
        record = records.get(unit_id)
        if crashed:
            traces.append(BlockTrace(node_id=unit_id, status="skipped"))
            continue
        if record is not None:
            traces.append(_trace_from_record(record))
            continue
        # First unit without a snapshot: the guest died while running it.
        reason = (
            "sandbox wall timeout exceeded"
            if timed_out
            else (stderr_bytes.decode("utf-8", errors="replace").strip()[-500:] or "sandbox terminated")
        )
        traces.append(
            BlockTrace(
                node_id=unit_id,
                status="runtime_error",
                stderr_excerpt=reason,
                wall_time_ms=max(elapsed_ms - recorded_ms, 0),
            )
        )
        crashed = True

    final_trace: BlockTrace | None = None
    final_answer: str | None = None
    if final_segment:
        final_trace = traces.pop()
        record = records.get(FINAL_BLOCK_ID)
        if final_trace.status == "ok" and record is not None:
            printed = record.get("stdout", "").strip()
            final_answer = printed if printed else None

    return ProgramRun(
        traces=tuple(traces),
        final_trace=final_trace,
        final_answer=final_answer,
        timed_out=timed_out,
    )


def run_path(
    path: list[CodeBlock],
    task: VisualTask,
    stubs: ModuleStubSet,
    policy: SandboxPolicy,
) -> list[BlockTrace]:
    """Spec-shaped entry point: one BlockTrace per block, in order."""
    return list(run_program(path, task, stubs, policy).traces)
