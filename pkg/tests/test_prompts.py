"""Template loading and placeholder substitution."""

from __future__ import annotations

import pytest

from vpcot.prompting import (
    EVALUATOR_SECTION_START,
    TEMPLATE_NAMES,
    load_template,
    render_cot_convert,
    render_evaluator,
    render_first_step,
    render_next_step,
    render_proptest,
    render_tiebreak,
)

QUERY = "How many dogs are in the image?"


def test_all_templates_load_nonempty():
    for name in TEMPLATE_NAMES:
        body = load_template(name).body
        assert body.strip()
        assert body.endswith("\n") and not body.endswith("\n\n")


def test_load_unknown_template():
    with pytest.raises(KeyError):
        load_template("nonexistent")


def test_render_missing_marker_raises():
    template = load_template("first_step")
    with pytest.raises(KeyError):
        template.render(**{"[NOT_A_MARKER]": "x"})


def test_first_step_substitutes_question():
    rendered = render_first_step(QUERY)
    assert QUERY in rendered
    assert "[QUESTION]" not in rendered
    # Everything except the substitution is untouched.
    assert rendered == load_template("first_step").body.replace("[QUESTION]", QUERY)


def test_next_step_substitutes_question_and_steps():
    steps = "# Step 1: Find the dogs\nboxes = find(image, 'dog')"
    rendered = render_next_step(QUERY, steps)
    assert QUERY in rendered and steps in rendered
    assert "[QUESTION]" not in rendered
    assert "[All the code steps completed so far]" not in rendered


def test_cot_convert_substitutes_block_and_variables():
    rendered = render_cot_convert("# Step 1: Count\nn = 2", "n = 2")
    assert "Code Block: # Step 1: Count\nn = 2" in rendered
    assert "Intermediate Variables: n = 2" in rendered
    assert "[CODE_BLOCK]" not in rendered
    assert "[Values of intermediate variables]" not in rendered


def test_proptest_fills_every_query_slot():
    rendered = render_proptest(QUERY, examples="EX")
    assert "[QUERY]" not in rendered
    assert "INSERT_QUERY_HERE" not in rendered
    assert "[EXAMPLES]" not in rendered
    assert rendered.count(QUERY) >= 2  # query appears in prose and code slots
    assert "EX" in rendered


def test_evaluator_renders_only_the_evaluator_section():
    rendered = render_evaluator(QUERY, "# Step 1: x\nv = vqa(image, 'q')", "v = yes")
    assert rendered.startswith(EVALUATOR_SECTION_START)
    assert QUERY in rendered
    assert "v = yes" in rendered
    assert "[ORIGIN_CODE]" not in rendered
    assert "[FEEDBACK_V]" not in rendered
    assert "[FEEDBACK_T]" not in rendered
    assert "[FEEDBACK_C]" not in rendered
    # The feedback-definition preamble is module context, not sent per call.
    full = load_template("define_evaluator").body
    assert len(rendered) < len(full)


def test_evaluator_feedback_defaults():
    rendered = render_evaluator(QUERY, "code", "vars")
    assert "(none)" in rendered


def test_tiebreak_substitutes_candidates():
    rendered = render_tiebreak(QUERY, "1. first\n2. second")
    assert "1. first\n2. second" in rendered
    assert "[CANDIDATES]" not in rendered
    assert "[QUESTION]" not in rendered
