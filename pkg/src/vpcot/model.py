"""Shared domain types, their validation, and block-header parsing.

Everything here is an immutable value object; instances are safe to share
across worker threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import MalformedIndex, MissingHeader

MODALITIES = ("single-image", "multi-image", "video")

KIND_TAGS = ("text", "number", "boolean", "list", "map", "image_region", "opaque")

TRACE_STATUSES = ("ok", "compile_error", "runtime_error", "skipped")

SPLITS = ("train", "test")

COT_PREFIX = "In this step, we use"

REQUEST_TAGS = ("generator", "converter", "verifier", "tiebreak")

_HEADER_RE = re.compile(r"^\s*#\s*Step\s+([^:\n]+?)\s*:[ \t]*(.*)$")


@dataclass(frozen=True)
class VisualTask:
    """One unit of pipeline work: a query over an opaque visual input."""

    task_id: str
    query: str
    visual_ref: str
    modality: str = "single-image"
    gold_answer: str | None = None

    def __post_init__(self) -> None:
        if not self.task_id:
            raise ValueError("task_id must be non-empty")
        if not self.query:
            raise ValueError("query must be non-empty")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")


@dataclass(frozen=True)
class CodeBlock:
    """One generated step: a `# Step N:` header plus its statements."""

    node_id: str
    parent_id: str | None
    step_index: int
    description: str
    source: str

    def __post_init__(self) -> None:
        if self.step_index < 1:
            raise ValueError("step_index must be positive")


@dataclass(frozen=True)
class VarValue:
    """A captured intermediate variable: kind tag plus canonical text."""

    kind: str
    value_text: str

    def __post_init__(self) -> None:
        if self.kind not in KIND_TAGS:
            raise ValueError(f"unknown kind tag {self.kind!r}")


@dataclass(frozen=True)
class BlockTrace:
    """Execution outcome for one block, with its variable snapshot."""

    node_id: str
    status: str
    variables: dict[str, VarValue] = field(default_factory=dict)
    stderr_excerpt: str = ""
    wall_time_ms: int = 0

    def __post_init__(self) -> None:
        if self.status not in TRACE_STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status != "ok" and self.variables:
            raise ValueError("non-ok trace must carry no variables")
        if self.status == "skipped" and self.stderr_excerpt:
            raise ValueError("skipped trace must carry no stderr")
        if self.wall_time_ms < 0:
            raise ValueError("wall_time_ms must be non-negative")


@dataclass(frozen=True)
class StepLabels:
    """The three per-step quality dimensions.

    Pipeline-produced labels always satisfy the lattice (a failed block can
    be neither logical nor attribute-correct), but the type itself admits
    all eight combinations: external scorers can and do emit inconsistent
    triples, and the ranker must still order them.
    """

    relevance: bool
    logic: bool
    attribute: bool

    def satisfies_lattice(self) -> bool:
        return self.relevance or not (self.logic or self.attribute)

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.relevance, self.logic, self.attribute)

    def short(self) -> str:
        return "".join("T" if v else "F" for v in self.as_tuple())

    @classmethod
    def from_short(cls, text: str) -> "StepLabels":
        if len(text) != 3 or any(c not in "TF" for c in text.upper()):
            raise ValueError(f"expected a TTF-style triple, got {text!r}")
        r, l, a = (c == "T" for c in text.upper())
        return cls(r, l, a)


@dataclass(frozen=True)
class CoTStep:
    """A natural-language reasoning step derived from one executed block."""

    text: str
    labels: StepLabels
    source_node_id: str
    step_index: int

    def __post_init__(self) -> None:
        if not self.text.startswith(COT_PREFIX):
            raise ValueError(f"step text must start with {COT_PREFIX!r}")


@dataclass(frozen=True)
class StepRecord:
    """One dataset row: a labeled step of one complete program path."""

    task_id: str
    query: str
    visual_ref: str
    step_index: int
    code_source: str
    variables: dict[str, VarValue]
    cot_text: str
    labels: StepLabels
    path_id: str
    split: str
    gold_answer: str | None = None
    final_answer: str | None = None

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    def key(self) -> tuple[str, str, int]:
        return (self.task_id, self.path_id, self.step_index)


@dataclass(frozen=True)
class ScorerVerdict:
    """Per-dimension scores from any scorer, thresholded for the ranker."""

    relevance_score: float
    logic_score: float
    attribute_score: float
    thresholded_labels: StepLabels
    diagnostic: str = ""

    @classmethod
    def from_scores(
        cls,
        relevance: float,
        logic: float,
        attribute: float,
        diagnostic: str = "",
    ) -> "ScorerVerdict":
        """Threshold at 0.5; an exact 0.5 rounds down to False."""
        labels = StepLabels(relevance > 0.5, logic > 0.5, attribute > 0.5)
        return cls(relevance, logic, attribute, labels, diagnostic)


# --- block headers ----------------------------------------------------------


def parse_block_header(source: str) -> tuple[int, str]:
    """Extract (step_index, description) from a block's first non-blank line.

    Whitespace around the marker tokens is tolerated; the description is
    trimmed. Raises MissingHeader when the line is not a step header at
    all, MalformedIndex when the index slot is not a positive integer.
    """
    if not source:
        raise MissingHeader("empty source")
    first_line = next((line for line in source.splitlines() if line.strip()), None)
    if first_line is None:
        raise MissingHeader("source is blank")
    match = _HEADER_RE.match(first_line)
    if match is None:
        raise MissingHeader(f"no step header in {first_line!r}")
    index_text, description = match.group(1), match.group(2).strip()
    try:
        index = int(index_text)
    except ValueError:
        raise MalformedIndex(f"step index {index_text!r} is not an integer") from None
    if index < 1:
        raise MalformedIndex(f"step index {index} is not positive")
    return index, description


def render_header(step_index: int, description: str) -> str:
    """Canonical header line for a block."""
    return f"# Step {step_index}: {description}"


# --- program trees ----------------------------------------------------------


@dataclass
class ProgramTree:
    """Least-to-most decision tree; root-to-terminal-leaf paths are programs.

    ``final_segments`` maps each terminal leaf to the code emitted before
    the termination marker (the part that prints the final answer).
    """

    task_id: str
    nodes: dict[str, CodeBlock] = field(default_factory=dict)
    children: dict[str, list[str]] = field(default_factory=dict)
    terminal_leaves: set[str] = field(default_factory=set)
    final_segments: dict[str, str] = field(default_factory=dict)

    def roots(self) -> list[str]:
        return [nid for nid, block in self.nodes.items() if block.parent_id is None]

    def path_to(self, node_id: str) -> list[CodeBlock]:
        """Blocks from the root down to ``node_id`` inclusive."""
        path: list[CodeBlock] = []
        cursor: str | None = node_id
        seen: set[str] = set()
        while cursor is not None:
            if cursor in seen or cursor not in self.nodes:
                raise ValueError(f"broken parent chain at {cursor!r}")
            seen.add(cursor)
            block = self.nodes[cursor]
            path.append(block)
            cursor = block.parent_id
        path.reverse()
        return path

    def complete_paths(self) -> list[list[CodeBlock]]:
        """The program set: one block list per terminal leaf, in id order."""
        return [self.path_to(leaf) for leaf in sorted(self.terminal_leaves, key=node_sort_key)]


def node_sort_key(node_id: str) -> tuple[int, ...]:
    """Sort key for dot-separated ordinal node ids ('1.2' < '1.10' < '2')."""
    try:
        return tuple(int(part) for part in node_id.split("."))
    except ValueError:
        return (1 << 30,)


@dataclass(frozen=True)
class TreeViolation:
    kind: str
    node_id: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[TreeViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_tree(tree: ProgramTree) -> ValidationReport:
    """Check every tree and block invariant; violations are data, not errors."""
    found: list[TreeViolation] = []

    for node_id, block in tree.nodes.items():
        if block.node_id != node_id:
            found.append(TreeViolation("id_mismatch", node_id, "keyed under a different id"))
        parent = block.parent_id
        if parent is not None:
            if parent not in tree.nodes:
                found.append(TreeViolation("orphan", node_id, f"parent {parent!r} missing"))
            else:
                expected = tree.nodes[parent].step_index + 1
                if block.step_index != expected:
                    found.append(
                        TreeViolation(
                            "index_mismatch",
                            node_id,
                            f"step_index {block.step_index}, expected {expected}",
                        )
                    )
        elif block.step_index != 1:
            found.append(
                TreeViolation("index_mismatch", node_id, f"root block has step_index {block.step_index}")
            )
        try:
            index, description = parse_block_header(block.source)
        except (MissingHeader, MalformedIndex) as exc:
            found.append(TreeViolation("bad_header", node_id, str(exc)))
        else:
            if index != block.step_index or description != block.description:
                found.append(TreeViolation("bad_header", node_id, "header disagrees with block fields"))

    for parent, child_ids in tree.children.items():
        if parent not in tree.nodes:
            found.append(TreeViolation("orphan", parent, "children listed for unknown node"))
            continue
        for child in child_ids:
            if child not in tree.nodes:
                found.append(TreeViolation("orphan", child, "child listed but not present"))
            elif tree.nodes[child].parent_id != parent:
                found.append(TreeViolation("orphan", child, "child does not point back at parent"))

    # Cycle check: following parent links from every node must reach a root.
    for node_id in tree.nodes:
        seen: set[str] = set()
        cursor: str | None = node_id
        while cursor is not None:
            if cursor in seen:
                found.append(TreeViolation("cycle", node_id, "parent chain loops"))
                break
            seen.add(cursor)
            block = tree.nodes.get(cursor)
            if block is None:
                break
            cursor = block.parent_id

    for leaf in tree.terminal_leaves:
        if leaf not in tree.nodes:
            found.append(TreeViolation("orphan", leaf, "terminal leaf not in tree"))
        elif not tree.final_segments.get(leaf, "").strip():
            found.append(TreeViolation("empty_terminal", leaf, "terminal leaf has no final segment"))

    return ValidationReport(tuple(found))
