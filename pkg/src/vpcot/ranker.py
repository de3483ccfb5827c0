"""Label-driven candidate ordering.

Candidates are ranked first by how many of the three dimensions are true,
then lexicographically by (relevance, logic, attribute) with true beating
false. The full descending order over label triples is therefore
TTT > TTF > TFT > FTT > TFF > FTF > FFT > FFF.
"""

from __future__ import annotations

import re

from .backends import Backend, BackendRequest
from .errors import EmptyCandidates
from .model import StepLabels
from .prompting import render_tiebreak

A_WINS = "a_wins"
B_WINS = "b_wins"
TIE = "tie"

_INT_RE = re.compile(r"-?\d+")


def rank_key(labels: StepLabels) -> tuple[int, int, int, int]:
    """Sort key, higher is better."""
    r, l, a = labels.as_tuple()
    return (int(r) + int(l) + int(a), int(r), int(l), int(a))


def compare(a: StepLabels, b: StepLabels) -> str:
    key_a, key_b = rank_key(a), rank_key(b)
    if key_a > key_b:
        return A_WINS
    if key_b > key_a:
        return B_WINS
    return TIE


def _tied_choice(
    tied_positions: list[int],
    candidate_texts: list[str] | None,
    tiebreak_backend: Backend | None,
    context: str,
) -> int:
    if tiebreak_backend is None or len(tied_positions) == 1:
        return tied_positions[0]
    lines = []
    for rank, position in enumerate(tied_positions, start=1):
        text = candidate_texts[position] if candidate_texts else f"candidate {position}"
        lines.append(f"{rank}. {text}")
    prompt = render_tiebreak(context, "\n".join(lines))
    try:
        reply = tiebreak_backend.complete(BackendRequest.user(prompt, tag="tiebreak")).text
    except Exception:
        return tied_positions[0]
    match = _INT_RE.search(reply)
    if match is None:
        return tied_positions[0]
    choice = int(match.group())
    if 1 <= choice <= len(tied_positions):
        return tied_positions[choice - 1]
    return tied_positions[0]


def select_best(
    candidates: list[tuple],
    tiebreak_backend: Backend | None = None,
    candidate_texts: list[str] | None = None,
    context: str = "",
):
    """Id of the best (candidate_id, StepLabels) pair.

    Exact label ties go to the tiebreak backend when one is configured;
    without one (or when its reply is absent or unusable) the earliest
    tied entry wins, keeping selection fully deterministic.
    """
    if not candidates:
        raise EmptyCandidates("no candidates to rank")
    best = max(rank_key(labels) for _, labels in candidates)
    tied = [index for index, (_, labels) in enumerate(candidates) if rank_key(labels) == best]
    position = _tied_choice(tied, candidate_texts, tiebreak_backend, context)
    return candidates[position][0]


def sort_candidates(labels_list: list[StepLabels]) -> list[int]:
    """Indices ordered best-first; equal keys keep their original order."""
    return sorted(range(len(labels_list)), key=lambda i: (tuple(-v for v in rank_key(labels_list[i])), i))
