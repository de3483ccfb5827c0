"""Prompt template loading and rendering.

Templates ship as package data under ``vpcot/prompts/``. Rendering is plain
placeholder substitution: the delivered prompt is byte-identical to the
template with the named markers replaced, nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

TEMPLATE_NAMES = (
    "first_step",
    "next_step",
    "cot_convert",
    "proptest",
    "define_evaluator",
    "tiebreak",
)

# The evaluator template bundles several feedback sub-prompts; only the
# final evaluator section is sent to the verifier.
EVALUATOR_SECTION_START = "You are a program evaluator."


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    def render(self, **replacements: str) -> str:
        """Substitute ``marker -> value`` pairs; every marker must exist."""
        text = self.body
        for marker, value in replacements.items():
            if marker not in text:
                raise KeyError(f"template {self.name!r} has no placeholder {marker!r}")
            text = text.replace(marker, value)
        return text


def load_template(name: str) -> PromptTemplate:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown template {name!r}")
    body = (
        resources.files("vpcot")
        .joinpath("prompts", f"{name}.txt")
        .read_text(encoding="utf-8")
    )
    return PromptTemplate(name, body)


def render_first_step(query: str) -> str:
    return load_template("first_step").render(**{"[QUESTION]": query})


def render_next_step(query: str, path_source: str) -> str:
    return load_template("next_step").render(
        **{
            "[QUESTION]": query,
            "[All the code steps completed so far]": path_source,
        }
    )


def render_cot_convert(code_block: str, variables_text: str) -> str:
    return load_template("cot_convert").render(
        **{
            "[CODE_BLOCK]": code_block,
            "[Values of intermediate variables]": variables_text,
        }
    )


def render_proptest(query: str, examples: str = "(no examples)") -> str:
    body = load_template("proptest").body
    body = body.replace("[QUERY]", query)
    body = body.replace("INSERT_QUERY_HERE", query)
    body = body.replace("[EXAMPLES]", examples)
    return body


def render_evaluator(
    query: str,
    code: str,
    variables_text: str,
    feedback_visual: str = "(none)",
    feedback_textual: str = "(none)",
    feedback_compile: str = "(none)",
) -> str:
    """Render the evaluator section with the call under judgement filled in."""
    body = load_template("define_evaluator").body
    start = body.index(EVALUATOR_SECTION_START)
    section = body[start:]
    template = PromptTemplate("define_evaluator", section)
    return template.render(
        **{
            "[QUERY]": query,
            "[ORIGIN_CODE]": code,
            "[Values of intermediate variables]": variables_text,
            "[FEEDBACK_V]": feedback_visual,
            "[FEEDBACK_T]": feedback_textual,
            "[FEEDBACK_C]": feedback_compile,
        }
    )


def render_tiebreak(question: str, candidates_text: str) -> str:
    return load_template("tiebreak").render(
        **{
            "[QUESTION]": question,
            "[CANDIDATES]": candidates_text,
        }
    )
