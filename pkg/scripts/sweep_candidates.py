#!/usr/bin/env python3
"""Best-of-N recovery sweep on a synthetic single-viable-candidate family.

Each trial scripts a generator that serves N drafts per step: one viable
step hidden at a seeded position among broken decoys. Oracle-scored
inference must rank the viable draft first to recover the gold answer, so
the recovery rate climbs with N and hits 1.0 once N covers every possible
hiding position.
"""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from vpcot.backends import FixtureBackend, FixtureEntry, FixtureScript  # noqa: E402
from vpcot.errors import NoCandidates  # noqa: E402
from vpcot.executor import ModuleStubSet, SandboxPolicy  # noqa: E402
from vpcot.model import VisualTask  # noqa: E402
from vpcot.scaler import ScalerConfig, run_inference  # noqa: E402

POSITIONS = 4  # decoy pool size; N=POSITIONS covers every hiding spot

TASK = VisualTask(
    task_id="t-sweep",
    query="What is the secret code word?",
    visual_ref="img://sweep",
    modality="single-image",
    gold_answer="lantern",
)

STUBS = ModuleStubSet.from_rows(
    [{"fn": "vqa", "args": ["<image>", "What is the secret code word?"], "ret": "lantern"}]
)

VIABLE_STEPS = [
    "# Step 1: Ask the oracle for the code word\n"
    "clue = vqa(image, 'What is the secret code word?')",
    "# Step 2: Record the answer\nanswer = clue",
]
TERMINAL_STEP = "print(answer)\nWork is Done!"


def decoy(step_index: int, variant: int) -> str:
    return f"# Step {step_index}: Unusable draft {variant}\nvalue_{variant} = = 'broken'"


def trial_backend(seed: int, n: int) -> FixtureBackend:
    """Script one trial: per step, n drafts with the viable one at a seeded
    position in a POSITIONS-wide pool, then n terminal responses."""
    rng = random.Random(seed)
    entries: list[FixtureEntry] = []
    recoverable = True
    for step_index, viable in enumerate(VIABLE_STEPS, start=1):
        position = rng.randrange(POSITIONS)
        recoverable &= position < n
        pool = [decoy(step_index, variant) for variant in range(POSITIONS - 1)]
        pool.insert(position, viable)
        entries.extend(FixtureEntry(substring=None, response=draft) for draft in pool[:n])
    entries.extend(FixtureEntry(substring=None, response=TERMINAL_STEP) for _ in range(n))
    backend = FixtureBackend({"generator": FixtureScript(entries, name=f"sweep-{seed}")})
    backend.recoverable = recoverable  # type: ignore[attr-defined]
    return backend


def recovery_rate(n: int, trials: int, base_seed: int) -> float:
    policy = SandboxPolicy(wall_timeout_s=10.0)
    config = ScalerConfig(candidates_n=n, max_depth=8)
    hits = 0
    for trial in range(trials):
        backend = trial_backend(base_seed + trial, n)
        try:
            result = run_inference(TASK, backend, STUBS, policy, config)
            got = result.answer_matches_gold(TASK)
        except NoCandidates:
            got = False
        assert got == backend.recoverable, f"trial {trial}: oracle disagrees with construction"
        hits += got
    return hits / trials


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--seed", type=int, default=1000)
    parser.add_argument("--candidates", type=int, nargs="+", default=[1, 2, 4])
    args = parser.parse_args()

    print(f"{'N':>3}  {'recovered':>9}")
    for n in args.candidates:
        rate = recovery_rate(n, args.trials, args.seed)
        print(f"{n:>3}  {rate:>9.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
