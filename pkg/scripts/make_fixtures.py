#!/usr/bin/env python3
"""Materialize the bundled fixture corpus under fixtures/.

Five hand-designed tasks exercise every labeling outcome the pipeline can
produce: clean multi-path trees, verifier rejection, runtime failure with
skip propagation, pruned branches, headerless drafts, fenced responses,
closed-option answer checks, and a CoT that stays invalid through its retry.

Running this script is idempotent: fixture bytes are fully determined by
the tables below. Expected pipeline totals over the corpus:

    trees 5, complete_paths 8, records 15 (TTT 11, TTF 1, TFT 1, FFF 2),
    invalid_cot 1, splits {train 13, test 2}
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from vpcot.backends import FixtureEntry, dump_script_jsonl  # noqa: E402

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

SEED_GUARD = "Determine the first step"
TERMINAL = "Work is Done!"


def entry(substring: str | None, response: str) -> FixtureEntry:
    return FixtureEntry(substring=substring, response=response)


def fenced(code: str) -> str:
    return f"```python\n{code}\n```"


# --- t-count-dogs: two seeds, one branching, three complete paths -----------

DOGS_N1 = "# Step 1: Find all dogs in the image\nboxes = find(image, 'dog')"
DOGS_N2 = (
    "# Step 1: Ask directly how many dogs are visible\n"
    "direct_count = vqa(image, 'How many dogs are in the image?')"
)
DOGS_N11 = "# Step 2: Count the detected dogs\ncount = len(boxes)"
DOGS_N12 = (
    "# Step 2: Verify each detection is a dog\n"
    "checks = [vqa(image, 'Is this a dog?') for box in boxes]\n"
    "all_dogs = len(checks) == len(boxes)"
)

DOGS = {
    "task": {
        "task_id": "t-count-dogs",
        "query": "How many dogs are in the image?",
        "visual_ref": "img://park-dogs",
        "modality": "single-image",
        "gold_answer": "2",
    },
    "generator": [
        entry(SEED_GUARD, fenced(DOGS_N1)),
        entry(SEED_GUARD, DOGS_N2),
        entry("# Step 1: Find all dogs", DOGS_N11),
        entry("# Step 1: Find all dogs", DOGS_N12),
        entry("# Step 1: Ask directly", f"print(direct_count)\n{TERMINAL}"),
        entry("# Step 1: Ask directly", f"print(direct_count)\n{TERMINAL}"),
        entry("# Step 2: Count the detected dogs", f"print(count)\n{TERMINAL}"),
        entry("# Step 2: Count the detected dogs", f"print(count)\n{TERMINAL}"),
        entry(
            "# Step 2: Verify each detection",
            f"final_count = len(boxes)\nprint(final_count)\n{TERMINAL}",
        ),
        entry(
            "# Step 2: Verify each detection",
            f"final_count = len(boxes)\nprint(final_count)\n{TERMINAL}",
        ),
    ],
    "converter": [
        entry(
            "Code Block: # Step 1: Find all dogs",
            "In this step, we use the find module to locate every dog in the "
            "image, and it returns two bounding boxes.",
        ),
        entry(
            "Code Block: # Step 2: Count the detected dogs",
            "In this step, we use the number of detected boxes as the dog "
            "count, which comes out to 2.",
        ),
        entry(
            "Code Block: # Step 2: Verify each detection",
            "In this step, we use the question-answering module to confirm "
            "each detected box is a dog, and every check comes back yes.",
        ),
        entry(
            "Code Block: # Step 1: Ask directly",
            "In this step, we use the question-answering module to ask how "
            "many dogs are visible, and it answers 2.",
        ),
    ],
    "verifier": [
        entry(
            "boxes = [region(10,20,110,220)",
            "correct. The two returned boxes plausibly cover distinct dogs in the scene.",
        ),
        entry(
            "direct_count = 2",
            "correct. A count of 2 is consistent with the image content.",
        ),
    ],
    "stubs": [
        {
            "fn": "find",
            "args": ["<image>", "dog"],
            "ret": [{"__region__": [10, 20, 110, 220]}, {"__region__": [300, 40, 420, 260]}],
        },
        {"fn": "vqa", "args": ["<image>", "How many dogs are in the image?"], "ret": "2"},
        {"fn": "vqa", "args": ["<image>", "Is this a dog?"], "ret": "yes"},
    ],
}


# --- t-landmark: verifier rejects the module return (TTF) -------------------

ISLAND_N1 = (
    "# Step 1: Identify the island in the photo\n"
    "island = vqa(image, 'Which island is shown in the photo?')"
)

LANDMARK = {
    "task": {
        "task_id": "t-landmark",
        "query": "Which island is shown in the photo?",
        "visual_ref": "img://island",
        "modality": "single-image",
        "gold_answer": None,
    },
    "generator": [
        entry(SEED_GUARD, fenced(ISLAND_N1)),
        entry(SEED_GUARD, "island = vqa(image, 'Which island is shown?')"),
        entry("# Step 1: Identify the island", f"print(island)\n{TERMINAL}"),
        entry("# Step 1: Identify the island", f"print(island)\n{TERMINAL}"),
    ],
    "converter": [
        entry(
            "Code Block: # Step 1: Identify the island",
            "In this step, we use the question-answering module to name the "
            "island, but it replies that it does not know which island it is.",
        ),
    ],
    "verifier": [
        entry(
            "island = I don't know",
            "incorrect. The module failed to identify the island, so its "
            "return value does not answer the question.",
        ),
    ],
    "stubs": [
        {
            "fn": "vqa",
            "args": ["<image>", "Which island is shown in the photo?"],
            "ret": "I don't know what island it is",
        },
    ],
}


# --- t-cups-compare: multi-image, one branch pruned -------------------------

CUPS_N1 = (
    "# Step 1: Count the cups in each image\n"
    "first_count = vqa(image, 'How many cups are in the first image?')\n"
    "second_count = vqa(image, 'How many cups are in the second image?')"
)
CUPS_N2 = "# Step 1: Look for cups on the table\ncup_boxes = find(image, 'cup')"
CUPS_N11 = (
    "# Step 2: Compare the two counts\n"
    "more_in_first = first_count > second_count\n"
    "answer = 'yes' if more_in_first else 'no'"
)
CUPS_N12 = (
    "# Step 2: Ask directly about the comparison\n"
    "answer = vqa(image, 'Are there more cups in the first image than in the second image?')"
)

CUPS = {
    "task": {
        "task_id": "t-cups-compare",
        "query": "Are there more cups in the first image than in the second image?",
        "visual_ref": "img://cups-a,img://cups-b",
        "modality": "multi-image",
        "gold_answer": "no",
    },
    "generator": [
        entry(SEED_GUARD, CUPS_N1),
        entry(SEED_GUARD, CUPS_N2),
        entry("# Step 1: Count the cups", CUPS_N11),
        entry("# Step 1: Count the cups", CUPS_N12),
        entry("# Step 1: Look for cups", "I cannot continue without more information."),
        entry("# Step 1: Look for cups", "I cannot continue without more information."),
        entry("# Step 2: Compare the two counts", f"print(answer)\n{TERMINAL}"),
        entry("# Step 2: Compare the two counts", f"print(answer)\n{TERMINAL}"),
        entry("# Step 2: Ask directly about the comparison", f"print(answer)\n{TERMINAL}"),
        entry("# Step 2: Ask directly about the comparison", f"print(answer)\n{TERMINAL}"),
    ],
    "converter": [
        entry(
            "Code Block: # Step 1: Count the cups",
            "In this step, we use the question-answering module to count the "
            "cups per image, getting 2 for the first and 3 for the second.",
        ),
        entry(
            "Code Block: # Step 2: Compare the two counts",
            "In this step, we use a comparison of the two counts to see the "
            "first image does not have more cups, so the answer is no.",
        ),
        entry(
            "Code Block: # Step 2: Ask directly about the comparison",
            "In this step, we use the question-answering module to compare "
            "the images directly, and it answers no.",
        ),
    ],
    "verifier": [
        entry("first_count = 2", "correct. Two cups is a faithful count for the first image."),
        entry("second_count = 3", "correct. Three cups is a faithful count for the second image."),
        entry("answer = no", "correct. The direct comparison answer matches the images."),
    ],
    "stubs": [
        {"fn": "vqa", "args": ["<image>", "How many cups are in the first image?"], "ret": 2},
        {"fn": "vqa", "args": ["<image>", "How many cups are in the second image?"], "ret": 3},
        {
            "fn": "vqa",
            "args": ["<image>", "Are there more cups in the first image than in the second image?"],
            "ret": "no",
        },
    ],
}


# --- t-video-actions: runtime failure mid-chain, skips to the end -----------

VIDEO_N1 = (
    "# Step 1: Check when the person stands up\n"
    "stands = vqa(video, 'Does the person stand up in the video?')"
)
VIDEO_N11 = "# Step 2: Check the wave gesture\nwaves = vqa(video, wave_question)"
VIDEO_N111 = (
    "# Step 3: Combine the checks\n"
    "answer = 'yes' if (stands == 'yes' and waves == 'yes') else 'no'"
)

VIDEO = {
    "task": {
        "task_id": "t-video-actions",
        "query": "Does the person wave after standing up in the video?",
        "visual_ref": "vid://person",
        "modality": "video",
        "gold_answer": "yes",
    },
    "generator": [
        entry(SEED_GUARD, VIDEO_N1),
        entry(SEED_GUARD, TERMINAL),
        entry("# Step 1: Check when the person stands", VIDEO_N11),
        entry("# Step 1: Check when the person stands", "# Stage 2: check the gesture"),
        entry("# Step 2: Check the wave gesture", VIDEO_N111),
        entry("# Step 2: Check the wave gesture", "cannot proceed"),
        entry("# Step 3: Combine the checks", f"print(answer)\n{TERMINAL}"),
        entry("# Step 3: Combine the checks", f"print(answer)\n{TERMINAL}"),
    ],
    "converter": [
        entry(
            "Code Block: # Step 1: Check when the person stands",
            "In this step, we use the question-answering module to check the "
            "standing action, and it confirms the person stands up.",
        ),
        entry(
            "Code Block: # Step 2: Check the wave gesture",
            "In this step, we use a gesture check that fails to run because "
            "its question was never defined.",
        ),
        entry(
            "Code Block: # Step 3: Combine the checks",
            "In this step, we use the combination of both checks, but it is "
            "skipped because the previous step failed.",
        ),
    ],
    "verifier": [
        entry("stands = yes", "correct. The person does stand up partway through the clip."),
    ],
    "stubs": [
        {"fn": "vqa", "args": ["<image>", "Does the person stand up in the video?"], "ret": "yes"},
    ],
}


# --- t-cat-bw: closed-option answer check, invalid CoT at the tail ----------

CAT_N1 = (
    "# Step 1: Look at the cat and note its color\n"
    "answer = vqa(image, 'Is the cat black or white?')"
)
CAT_N11 = (
    "# Step 2: Double-check using the fur color\n"
    "fur = vqa(image, 'What color is the fur?')\n"
    "answer = fur"
)
CAT_N111 = "# Step 3: Report the final answer\nfinal_answer = answer"

CAT = {
    "task": {
        "task_id": "t-cat-bw",
        "query": "Is the cat black or white?",
        "visual_ref": "img://cat",
        "modality": "single-image",
        "gold_answer": "white",
    },
    "generator": [
        entry(SEED_GUARD, CAT_N1),
        entry(SEED_GUARD, "the cat's color should be checked first"),
        entry("# Step 1: Look at the cat", fenced(CAT_N11)),
        entry("# Step 1: Look at the cat", "double check the fur"),
        entry("# Step 2: Double-check using the fur color", CAT_N111),
        entry("# Step 2: Double-check using the fur color", "report it"),
        entry("# Step 3: Report the final answer", f"print(final_answer)\n{TERMINAL}"),
        entry("# Step 3: Report the final answer", f"print(final_answer)\n{TERMINAL}"),
    ],
    "converter": [
        entry(
            "Code Block: # Step 1: Look at the cat",
            "In this step, we use the question-answering module to pick "
            "between the two offered colors, and it answers white.",
        ),
        entry(
            "Code Block: # Step 2: Double-check using the fur color",
            "In this step, we use the fur color reported by the module, "
            "which is grey, as the new answer.",
        ),
        entry("Code Block: # Step 3: Report the final answer", "The final answer is grey."),
        entry(
            "Code Block: # Step 3: Report the final answer",
            "We could not produce a sentence for this step.",
        ),
    ],
    "verifier": [
        entry("answer = white", "correct. The cat in the image is white."),
        entry("fur = grey", "correct. The module faithfully reports the fur as grey."),
    ],
    "stubs": [
        {"fn": "vqa", "args": ["<image>", "Is the cat black or white?"], "ret": "white"},
        {"fn": "vqa", "args": ["<image>", "What color is the fur?"], "ret": "grey"},
    ],
}


BUNDLES = [DOGS, LANDMARK, CUPS, VIDEO, CAT]

DEMO_CONFIG = {
    "tasks": "tasks.jsonl",
    "out": "../out",
    "backend": "fixture",
    "fixture_dir": ".",
    "branch_x": 2,
    "max_depth": 8,
    "workers": 1,
    "seed": 0,
}


def write_stubs(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=True) + "\n")


def freeze_golden() -> None:
    """Run the pipeline over the fresh fixtures and pin its stable artifacts."""
    import shutil
    import tempfile

    from vpcot.config import load_config
    from vpcot.pipeline import run_pipeline

    golden = FIXTURES / "golden"
    golden.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as out:
        config = load_config(FIXTURES / "demo.cfg", overrides={"out": out})
        run_pipeline(config)
        for name in ("records.jsonl", "report.json"):
            shutil.copyfile(Path(out) / name, golden / name)


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)

    with (FIXTURES / "tasks.jsonl").open("w", encoding="utf-8", newline="\n") as handle:
        for bundle in BUNDLES:
            handle.write(json.dumps(bundle["task"], ensure_ascii=True) + "\n")

    (FIXTURES / "demo.cfg").write_text(
        json.dumps(DEMO_CONFIG, indent=2) + "\n", encoding="utf-8"
    )

    for bundle in BUNDLES:
        task_dir = FIXTURES / bundle["task"]["task_id"]
        dump_script_jsonl(bundle["generator"], task_dir / "generator.jsonl")
        dump_script_jsonl(bundle["converter"], task_dir / "converter.jsonl")
        dump_script_jsonl(bundle["verifier"], task_dir / "verifier.jsonl")
        write_stubs(task_dir / "stubs.jsonl", bundle["stubs"])

    freeze_golden()
    print(f"wrote fixtures and golden artifacts for {len(BUNDLES)} tasks under {FIXTURES}")


if __name__ == "__main__":
    main()
