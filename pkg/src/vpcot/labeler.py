"""Per-block label assignment along the three quality dimensions.

Relevance is purely observational (did the block execute). Logic replays
every boolean-connective and comparison assignment against the captured
variable values and additionally format-checks answer-typed variables
against the query's expected answer shape. Attribute cross-validates each
captured vision/knowledge module return value with a verifier backend.

A failed block cannot be logically or attribute-correct, so label_step
short-circuits both checkers when relevance is false.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass

from .backends import Backend, BackendRequest
from .errors import BackendError
from .executor import STUB_FUNCTIONS, ModuleStubSet, SandboxPolicy, run_program
from .generator import strip_code_fences
from .model import BlockTrace, CodeBlock, StepLabels, VarValue, VisualTask
from .prompting import render_evaluator, render_proptest

ANSWER_NAMES = ("answer", "final_answer", "result", "ans")

_YES_NO = ("yes", "no")

_AUX_WORDS = frozenset(
    "is are was were am do does did can could will would shall should has have had".split()
)

_OR_TAIL_RE = re.compile(
    r"([A-Za-z0-9_'\- ]+?(?:\s*,\s*[A-Za-z0-9_'\- ]+?)*)\s*,?\s+or\s+([A-Za-z0-9_'\-]+)\s*[?.!]*\s*$"
)


@dataclass(frozen=True)
class LogicCheck:
    kind: str  # connective_replay | or_options | boolean_form
    name: str
    expected: str
    actual: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class LogicCheckReport:
    checks: tuple[LogicCheck, ...] = ()

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


@dataclass(frozen=True)
class AttributeCheck:
    name: str
    call_text: str
    verdict_text: str
    passed: bool


@dataclass(frozen=True)
class AttributeCheckReport:
    checks: tuple[AttributeCheck, ...] = ()

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


def label_relevance(trace: BlockTrace) -> bool:
    return trace.status == "ok"


# --- logic: connective replay -------------------------------------------------


class _Unsupported(Exception):
    pass


def _scalar(value: VarValue):
    if value.kind == "boolean":
        return value.value_text == "true"
    if value.kind == "number":
        try:
            return int(value.value_text)
        except ValueError:
            try:
                return float(value.value_text)
            except ValueError:
                raise _Unsupported from None
    if value.kind == "text":
        return value.value_text
    raise _Unsupported


def _eval(node: ast.expr, env: dict[str, VarValue]):
    if isinstance(node, ast.Constant):
        if node.value is None or isinstance(node.value, (bool, int, float, str)):
            return node.value
        raise _Unsupported
    if isinstance(node, ast.Name):
        if node.id not in env:
            raise _Unsupported
        return _scalar(env[node.id])
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not):
        return not _eval(node.operand, env)
    if isinstance(node, ast.BoolOp):
        # Mirror Python's short-circuit value semantics, not bare truth.
        values = [_eval(v, env) for v in node.values]
        if isinstance(node.op, ast.And):
            for value in values:
                if not value:
                    return value
            return values[-1]
        for value in values:
            if value:
                return value
        return values[-1]
    if isinstance(node, ast.Compare):
        left = _eval(node.left, env)
        try:
            for op, comparator_node in zip(node.ops, node.comparators):
                right = _eval(comparator_node, env)
                if isinstance(op, ast.Eq):
                    ok = left == right
                elif isinstance(op, ast.NotEq):
                    ok = left != right
                elif isinstance(op, ast.Lt):
                    ok = left < right
                elif isinstance(op, ast.LtE):
                    ok = left <= right
                elif isinstance(op, ast.Gt):
                    ok = left > right
                elif isinstance(op, ast.GtE):
                    ok = left >= right
                elif isinstance(op, ast.In):
                    ok = left in right
                elif isinstance(op, ast.NotIn):
                    ok = left not in right
                else:
                    raise _Unsupported
                if not ok:
                    return False
                left = right
        except TypeError:
            raise _Unsupported from None
        return True
    raise _Unsupported


def _is_connective(node: ast.expr) -> bool:
    return isinstance(node, (ast.BoolOp, ast.Compare)) or (
        isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not)
    )


def _names_in(node: ast.expr) -> set[str]:
    return {n.id for n in ast.walk(node) if isinstance(n, ast.Name)}


def _replay_checks(block: CodeBlock, env_after: dict[str, VarValue]) -> list[LogicCheck]:
    try:
        module = ast.parse(block.source)
    except SyntaxError:
        return []
    # Last assignment per target wins; earlier ones are overwritten values
    # the snapshot no longer holds.
    last_assign: dict[str, ast.expr] = {}
    for stmt in module.body:
        if isinstance(stmt, ast.Assign) and len(stmt.targets) == 1:
            target = stmt.targets[0]
            if isinstance(target, ast.Name):
                last_assign[target.id] = stmt.value

    checks: list[LogicCheck] = []
    for name, expr in last_assign.items():
        if not _is_connective(expr):
            continue
        if name in _names_in(expr):
            continue  # self-referential; the pre-value is unrecoverable
        if name not in env_after:
            continue
        try:
            replayed = _eval(expr, env_after)
            captured = _scalar(env_after[name])
        except _Unsupported:
            checks.append(
                LogicCheck("connective_replay", name, "", "", True, "skipped: operand unavailable")
            )
            continue
        checks.append(
            LogicCheck(
                kind="connective_replay",
                name=name,
                expected=repr(replayed),
                actual=repr(captured),
                passed=bool(replayed == captured)
                and (isinstance(replayed, bool) == isinstance(captured, bool)),
            )
        )
    return checks


# --- logic: answer format -----------------------------------------------------


def or_options(query: str) -> tuple[str, ...]:
    """Closed answer options when the query tail is an 'A or B' choice."""
    match = _OR_TAIL_RE.search(query)
    if not match:
        return ()
    head = [part.strip() for part in match.group(1).split(",")]
    # Keep only the final noun phrase of the first option's clause: "Is the
    # cat black" contributes "black".
    options = []
    for index, part in enumerate(head):
        if not part:
            continue
        options.append(part.split()[-1] if index == 0 else part)
    options.append(match.group(2))
    return tuple(option.strip().lower() for option in options if option.strip())


def is_boolean_form(query: str) -> bool:
    """True for queries whose answer should be the literal yes or no."""
    lowered = query.strip().lower()
    if "true or false" in lowered:
        return True
    words = lowered.split()
    return bool(words) and words[0].strip(",:") in _AUX_WORDS and lowered.rstrip().endswith("?")


def _normalize_answer(text: str) -> str:
    return text.strip().strip(".!").strip().lower()


def _format_checks(trace: BlockTrace, query: str) -> list[LogicCheck]:
    checks: list[LogicCheck] = []
    options = or_options(query)
    boolean_form = not options and is_boolean_form(query)
    if not options and not boolean_form:
        return checks
    for name in ANSWER_NAMES:
        if name not in trace.variables:
            continue
        value = trace.variables[name]
        answer = _normalize_answer(value.value_text)
        if options:
            checks.append(
                LogicCheck(
                    kind="or_options",
                    name=name,
                    expected="|".join(options),
                    actual=answer,
                    passed=answer in options,
                )
            )
        else:
            checks.append(
                LogicCheck(
                    kind="boolean_form",
                    name=name,
                    expected="yes|no",
                    actual=answer,
                    passed=answer in _YES_NO,
                )
            )
    return checks


@dataclass(frozen=True)
class PropTestDeps:
    """Opt-in extras for LLM-generated test functions.

    Off by default: golden runs need fully deterministic labels, so the
    built-in checks carry the verdict unless a caller wires these in.
    """

    backend: Backend
    stubs: ModuleStubSet
    policy: SandboxPolicy
    prefix: tuple[CodeBlock, ...] = ()


def _proptest_check(block: CodeBlock, task: VisualTask, deps: PropTestDeps) -> LogicCheck:
    try:
        reply = deps.backend.complete(
            BackendRequest.user(render_proptest(task.query), tag="verifier")
        ).text
    except BackendError as exc:
        return LogicCheck("proptest", block.node_id, "test ran", "backend error", False, str(exc))
    test_source = strip_code_fences(reply)
    run = run_program(
        list(deps.prefix) + [block], task, deps.stubs, deps.policy, final_segment=test_source
    )
    final = run.final_trace
    passed = final is not None and final.status == "ok"
    detail = "" if passed else (final.stderr_excerpt if final else "no test trace")
    return LogicCheck("proptest", block.node_id, "test ran", final.status if final else "missing",
                      passed, detail)


def label_logic(
    block: CodeBlock,
    trace: BlockTrace,
    env_before: dict[str, VarValue],
    task: VisualTask,
    proptest: PropTestDeps | None = None,
) -> tuple[bool, LogicCheckReport]:
    """Replay connectives and format-check answers; vacuously true when no
    check applies. With PropTestDeps, a generated test function runs in the
    sandbox and its pass/fail joins the checks."""
    env_after = dict(env_before)
    env_after.update(trace.variables)
    checks = _replay_checks(block, env_after)
    checks.extend(_format_checks(trace, task.query))
    if proptest is not None:
        checks.append(_proptest_check(block, task, proptest))
    report = LogicCheckReport(tuple(checks))
    return report.passed, report


# --- attribute: verifier cross-validation -------------------------------------


def _module_calls(block: CodeBlock, trace: BlockTrace) -> list[tuple[str, str]]:
    """(target, call_text) for each captured assignment from a module call."""
    try:
        module = ast.parse(block.source)
    except SyntaxError:
        return []
    calls: list[tuple[str, str]] = []
    for stmt in module.body:
        if not (isinstance(stmt, ast.Assign) and len(stmt.targets) == 1):
            continue
        target = stmt.targets[0]
        value = stmt.value
        if not (isinstance(target, ast.Name) and isinstance(value, ast.Call)):
            continue
        func = value.func
        if isinstance(func, ast.Name) and func.id in STUB_FUNCTIONS and target.id in trace.variables:
            calls.append((target.id, ast.unparse(stmt)))
    return calls


def parse_verdict(text: str) -> bool | None:
    """Map verifier prose to accept/reject; None when undecidable."""
    lowered = text.strip().lower()
    if not lowered:
        return None
    if "incorrect" in lowered:
        return False
    if "correct" in lowered or lowered.startswith("yes"):
        return True
    if lowered.startswith("no"):
        return False
    return None


def label_attribute(
    block: CodeBlock,
    trace: BlockTrace,
    task: VisualTask,
    verifier_backend: Backend | None,
) -> tuple[bool, AttributeCheckReport]:
    """Ask the verifier about each captured module return value.

    With no verifier configured (or no module calls in the block) the
    dimension is vacuously true; an unreadable or failed verdict counts
    against the block.
    """
    if verifier_backend is None:
        return True, AttributeCheckReport()
    checks: list[AttributeCheck] = []
    for target, call_text in _module_calls(block, trace):
        variables_text = f"{target} = {trace.variables[target].value_text}"
        prompt = render_evaluator(task.query, block.source, variables_text)
        try:
            verdict_text = verifier_backend.complete(
                BackendRequest.user(prompt, tag="verifier", visual_refs=(task.visual_ref,))
            ).text
        except BackendError as exc:
            checks.append(AttributeCheck(target, call_text, f"backend error: {exc}", False))
            continue
        verdict = parse_verdict(verdict_text)
        checks.append(AttributeCheck(target, call_text, verdict_text, verdict is True))
    report = AttributeCheckReport(tuple(checks))
    return report.passed, report


# --- combined -----------------------------------------------------------------


def label_step(
    block: CodeBlock,
    trace: BlockTrace,
    env_before: dict[str, VarValue],
    task: VisualTask,
    verifier_backend: Backend | None = None,
    proptest: PropTestDeps | None = None,
) -> tuple[StepLabels, LogicCheckReport, AttributeCheckReport]:
    """Full three-dimensional labels for one block of one path."""
    if not label_relevance(trace):
        return StepLabels(False, False, False), LogicCheckReport(), AttributeCheckReport()
    logic_ok, logic_report = label_logic(block, trace, env_before, task, proptest)
    attribute_ok, attribute_report = label_attribute(block, trace, task, verifier_backend)
    return StepLabels(True, logic_ok, attribute_ok), logic_report, attribute_report
