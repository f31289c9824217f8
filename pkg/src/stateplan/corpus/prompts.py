"""Chain-of-thought prompts for state-change descriptions and response parsing."""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class StepDescriptionSet:
    task_name: str
    step_name: str
    verb: str
    step_description: str
    before: tuple[str, ...]
    after: tuple[str, ...]

    @property
    def K(self) -> int:
        return len(self.before)

    def sentences(self, side: str) -> tuple[str, ...]:
        if side == "before":
            return self.before
        if side == "after":
            return self.after
        raise ValueError(f"side must be 'before' or 'after', got {side!r}")


@dataclass(frozen=True)
class Exemplar:
    goal: str
    step: str
    verb: str
    description: str
    before: tuple[str, ...]
    after: tuple[str, ...]


APPENDIX_EXEMPLARS: tuple[Exemplar, ...] = (
    Exemplar(
        goal="Grill steak",
        step="season steak",
        verb="season",
        description="Season steak with salt and pepper",
        before=(
            "The steak is unseasoned.",
            "The steak has no salt or pepper on it.",
            "The steak is raw.",
        ),
        after=(
            "The steak is with salt and pepper.",
            "The steak has salt and pepper on it.",
            "The steak is ready to be grilled.",
        ),
    ),
    Exemplar(
        goal="Make Kimchi Fried Rice",
        step="add ham",
        verb="add",
        description="Incorporate diced ham into the fried rice",
        before=(
            "The diced ham is separate from the pan.",
            "The pan contains fried rice.",
            "The pan has no ham on it.",
        ),
        after=(
            "The diced ham is blended with the fried rice.",
            "The ham is on the pan.",
            "The pan contains ham.",
        ),
    ),
)


def instruction(K: int = 3) -> str:
    return (
        "First, describe the details of [step] for [goal] with one verb.\n"
        f"Second, use {K} sentences to describe the status changes of objects before and after "
        "[step], avoiding using [verb]."
    )


def _render_exemplar(ex: Exemplar) -> str:
    lines = [f"[goal]: {ex.goal}", f"[step]: {ex.step}", f"[verb]: {ex.verb}", "Description:", ex.description, "Before:"]
    lines += [f"- {s}" for s in ex.before]
    lines.append("After:")
    lines += [f"- {s}" for s in ex.after]
    return "\n".join(lines)


def build_prompt(task: str, step: str, exemplars=APPENDIX_EXEMPLARS, K: int = 3) -> str:
    """Instruction, worked exemplars, then the query block ending at ``[step]: <step>``."""
    task, step = task.strip(), step.strip()
    if not task or not step:
        raise ValueError("build_prompt: task and step must be non-empty")
    blocks = [instruction(K)]
    blocks += [_render_exemplar(ex) for ex in exemplars]
    blocks.append(f"[goal]: {task}\n[step]: {step}")
    return "\n\n".join(blocks)


_WS = re.compile(r"\s+")
_HEADER = re.compile(r"^(description|before|after)\s*:\s*(.*)$", re.IGNORECASE)
_TAG = re.compile(r"^\[(verb|goal|step)\]\s*:\s*(.*)$", re.IGNORECASE)


def _norm(text: str) -> str:
    return _WS.sub(" ", text).strip()


def parse_llm_response(raw: str, K: int = 3, task: str = "", step: str = "") -> StepDescriptionSet:
    """Parse a ``[verb]`` / Description / Before / After block."""
    verb = None
    sections: dict[str, list[str]] = {}
    current = None
    for line in raw.splitlines():
        text = line.strip()
        if not text:
            continue
        tag = _TAG.match(text)
        if tag:
            key, value = tag.group(1).lower(), _norm(tag.group(2))
            if key == "verb":
                verb = value
            elif key == "step" and not step:
                step = value
            elif key == "goal" and not task:
                task = value
            current = None
            continue
        header = _HEADER.match(text)
        if header:
            current = header.group(1).lower()
            if current in sections:
                raise ParseError(f"{current}: section appears twice")
            sections[current] = []
            rest = header.group(2).strip()
            if rest:
                sections[current].append(rest)
            continue
        if current is None:
            raise ParseError(f"unexpected line outside any section: {text!r}")
        sections[current].append(text)

    if verb is None:
        raise ParseError("missing section: [verb]")
    for name in ("description", "before", "after"):
        if name not in sections:
            raise ParseError(f"missing section: {name.capitalize()}")
    description = _norm(" ".join(sections["description"]))
    if not description:
        raise ParseError("description: empty")
    bullets = {}
    for side in ("before", "after"):
        items = []
        for line in sections[side]:
            if not line.startswith(("-", "*", "•")):
                raise ParseError(f"{side}: expected bullet lines starting with '-', got {line!r}")
            items.append(_norm(line.lstrip("-*• ")))
        if len(items) != K:
            raise ParseError(f"{side}: expected {K}, got {len(items)}")
        bullets[side] = tuple(items)
    return StepDescriptionSet(
        task_name=_norm(task), step_name=_norm(step), verb=verb, step_description=description,
        before=bullets["before"], after=bullets["after"],
    )


def render_response(sds: StepDescriptionSet) -> str:
    """Inverse of ``parse_llm_response`` for a parsed set."""
    lines = [f"[verb]: {sds.verb}", "Description:", sds.step_description, "Before:"]
    lines += [f"- {s}" for s in sds.before]
    lines.append("After:")
    lines += [f"- {s}" for s in sds.after]
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(r"[a-z0-9']+")


def _tokens(text: str) -> set[str]:
    return set(_TOKEN.findall(text.lower()))


def validate_descriptions(sds: StepDescriptionSet, K: int | None = None) -> list[str]:
    """Problems with a description set: sentence counts, empty text, verb leakage."""
    issues = []
    K = sds.K if K is None else K
    for side in ("before", "after"):
        items = sds.sentences(side)
        if len(items) != K:
            issues.append(f"{side}: expected {K} sentences, got {len(items)}")
        verb_tokens = _tokens(sds.verb)
        for j, s in enumerate(items):
            if not s.strip():
                issues.append(f"{side}[{j}]: empty sentence")
            elif verb_tokens & _tokens(s):
                issues.append(f"{side}[{j}]: uses the verb {sds.verb!r}: {s!r}")
    if not sds.step_description.strip():
        issues.append("description: empty")
    return issues
