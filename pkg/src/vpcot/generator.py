"""Block-by-block program tree growth.

Every expansion point asks the generation backend for ``branch_factor_x``
continuations of the path so far. A continuation is either one more code
block (validated against its expected step header) or the termination
marker, which seals the path and keeps the code emitted before the marker
as the answer-printing final segment.
"""

from __future__ import annotations

import logging
import re
from collections import deque
from dataclasses import dataclass

from .backends import Backend, BackendRequest
from .errors import EmptyTree, MalformedIndex, MissingHeader
from .model import CodeBlock, ProgramTree, VisualTask, node_sort_key, parse_block_header
from .prompting import render_first_step, render_next_step

log = logging.getLogger(__name__)

TERMINATION_MARKER = "Work is Done!"

_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_+-]*[ \t]*\n(.*?)\n?```\s*$", re.DOTALL)


@dataclass(frozen=True)
class GenerationConfig:
    branch_factor_x: int = 2
    max_depth: int = 8
    termination_marker: str = TERMINATION_MARKER

    def __post_init__(self) -> None:
        if self.branch_factor_x < 1:
            raise ValueError("branch_factor_x must be at least 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if not self.termination_marker:
            raise ValueError("termination_marker must be non-empty")


@dataclass(frozen=True)
class Terminal:
    """A continuation that ends the path.

    ``segment`` is the code emitted before the marker; running it prints
    the path's final answer (the generator itself never executes).
    """

    segment: str


def strip_code_fences(text: str) -> str:
    """Drop one surrounding markdown code fence, if present."""
    text = text.strip()
    match = _FENCE_RE.match(text)
    if match:
        return match.group(1).strip("\n")
    return text


def path_source(path: list[CodeBlock]) -> str:
    """The completed-steps context shown to the backend: blocks joined blank-line."""
    return "\n\n".join(block.source for block in path)


def _ask(backend: Backend, prompt: str) -> str:
    return backend.complete(BackendRequest.user(prompt, tag="generator")).text


def first_block(
    task: VisualTask,
    backend: Backend,
    config: GenerationConfig,
    node_id: str = "1",
) -> CodeBlock:
    """One backend call for a step-1 block; header failures propagate so the
    caller can discard the draft."""
    text = _ask(backend, render_first_step(task.query))
    source = strip_code_fences(text)
    index, description = parse_block_header(source)
    if index != 1:
        raise MalformedIndex(f"first step announced index {index}")
    return CodeBlock(
        node_id=node_id, parent_id=None, step_index=1, description=description, source=source
    )


def next_blocks(
    task: VisualTask,
    path: list[CodeBlock],
    backend: Backend,
    config: GenerationConfig,
) -> Terminal | list[CodeBlock]:
    """Sample branch_factor_x continuations of ``path``.

    Exactly branch_factor_x backend calls are issued regardless of content.
    If any response carries the termination marker with a non-empty
    preceding segment, the first such response wins and the expansion is
    Terminal. Otherwise each response must parse as a step len(path)+1
    block; survivors become children of the path tail, child ordinals in
    response order (an empty list prunes the path).
    """
    if not path:
        raise ValueError("next_blocks needs a non-empty path")
    prompt = render_next_step(task.query, path_source(path))
    responses = [_ask(backend, prompt) for _ in range(config.branch_factor_x)]

    for text in responses:
        if config.termination_marker in text:
            segment = strip_code_fences(text.split(config.termination_marker, 1)[0]).strip()
            if segment:
                return Terminal(segment=segment)
            log.debug("termination marker with empty segment dropped at %s", path[-1].node_id)

    parent = path[-1]
    expected = len(path) + 1
    children: list[CodeBlock] = []
    for text in responses:
        if config.termination_marker in text:
            continue
        source = strip_code_fences(text)
        try:
            index, description = parse_block_header(source)
        except (MissingHeader, MalformedIndex) as exc:
            log.debug("continuation of %s dropped: %s", parent.node_id, exc)
            continue
        if index != expected:
            log.debug("continuation of %s announced index %d, expected %d",
                      parent.node_id, index, expected)
            continue
        children.append(
            CodeBlock(
                node_id=f"{parent.node_id}.{len(children) + 1}",
                parent_id=parent.node_id,
                step_index=expected,
                description=description,
                source=source,
            )
        )
    return children


def expand_tree(task: VisualTask, backend: Backend, config: GenerationConfig) -> ProgramTree:
    """Grow the full program tree breadth-first up to max_depth.

    Node ids are dot-separated ordinals over surviving siblings ("2",
    "2.1", "2.1.2"). Paths whose expansions all fail to parse are pruned;
    paths still open at max_depth are abandoned without a terminal. A task
    whose first step yields no parseable block raises EmptyTree.
    """
    tree = ProgramTree(task_id=task.task_id)

    queue: deque[str] = deque()
    for _ in range(config.branch_factor_x):
        try:
            root = first_block(task, backend, config, node_id=str(len(tree.nodes) + 1))
        except (MissingHeader, MalformedIndex) as exc:
            log.debug("first-step draft for %s discarded: %s", task.task_id, exc)
            continue
        tree.nodes[root.node_id] = root
        tree.children[root.node_id] = []
        queue.append(root.node_id)
    if not tree.nodes:
        raise EmptyTree(f"no parseable first step for task {task.task_id!r}")

    while queue:
        node_id = queue.popleft()
        depth = tree.nodes[node_id].step_index
        if depth >= config.max_depth:
            continue
        expansion = next_blocks(task, tree.path_to(node_id), backend, config)
        if isinstance(expansion, Terminal):
            tree.terminal_leaves.add(node_id)
            tree.final_segments[node_id] = expansion.segment
            continue
        for child in expansion:
            tree.nodes[child.node_id] = child
            tree.children[child.node_id] = []
            tree.children[node_id].append(child.node_id)
            queue.append(child.node_id)

    return tree


# --- tree (de)serialization ---------------------------------------------------


def tree_to_dict(tree: ProgramTree) -> dict:
    ordered = sorted(tree.nodes.values(), key=lambda b: node_sort_key(b.node_id))
    return {
        "task_id": tree.task_id,
        "nodes": [
            {
                "node_id": block.node_id,
                "parent_id": block.parent_id,
                "step_index": block.step_index,
                "description": block.description,
                "source": block.source,
            }
            for block in ordered
        ],
        "terminal_leaves": sorted(tree.terminal_leaves, key=node_sort_key),
        "final_segments": {
            leaf: tree.final_segments[leaf]
            for leaf in sorted(tree.final_segments, key=node_sort_key)
        },
    }


def tree_from_dict(data: dict) -> ProgramTree:
    tree = ProgramTree(task_id=data["task_id"])
    for spec in data["nodes"]:
        block = CodeBlock(
            node_id=spec["node_id"],
            parent_id=spec["parent_id"],
            step_index=spec["step_index"],
            description=spec["description"],
            source=spec["source"],
        )
        tree.nodes[block.node_id] = block
        tree.children.setdefault(block.node_id, [])
        if block.parent_id is not None:
            tree.children.setdefault(block.parent_id, []).append(block.node_id)
    tree.terminal_leaves.update(data.get("terminal_leaves", []))
    tree.final_segments.update(data.get("final_segments", {}))
    return tree
