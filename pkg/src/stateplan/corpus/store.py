"""The description corpus: one description set per step class, persisted as JSON."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .llm import LlmClient, mock_llm_generate
from .prompts import ParseError, StepDescriptionSet, build_prompt, parse_llm_response, validate_descriptions

log = logging.getLogger(__name__)

CORPUS_VERSION = 1


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class DescriptionCorpus:
    entries: Mapping[int, StepDescriptionSet]
    K: int = 3

    def __post_init__(self):
        ids = sorted(self.entries)
        if ids and ids[0] < 0:
            raise CorpusError(f"negative step class ids: {[i for i in ids if i < 0]}")
        gaps = sorted(set(range(ids[-1] + 1)) - set(ids)) if ids else []
        if gaps:
            raise CorpusError(f"missing step classes: {gaps}")
        for cid, sds in self.entries.items():
            if len(sds.before) != self.K or len(sds.after) != self.K:
                raise CorpusError(f"class {cid}: expected {self.K} before/after sentences")
        object.__setattr__(self, "entries", {i: self.entries[i] for i in ids})

    @property
    def C(self) -> int:
        return len(self.entries)

    def __getitem__(self, cid: int) -> StepDescriptionSet:
        return self.entries[cid]

    def __iter__(self):
        return iter(self.entries.items())

    def covers(self, class_ids: Iterable[int]) -> list[int]:
        """Class ids referenced but absent from the corpus."""
        return sorted(set(int(c) for c in class_ids) - set(self.entries))

    def issues(self) -> dict[int, list[str]]:
        out = {}
        for cid, sds in self:
            found = validate_descriptions(sds, self.K)
            if found:
                out[cid] = found
        return out


def corpus_to_dict(corpus: DescriptionCorpus) -> dict:
    return {
        "version": CORPUS_VERSION,
        "K": corpus.K,
        "classes": [
            {
                "id": cid,
                "task": s.task_name,
                "step": s.step_name,
                "verb": s.verb,
                "step_description": s.step_description,
                "before": list(s.before),
                "after": list(s.after),
            }
            for cid, s in corpus
        ],
    }


def save_corpus(corpus: DescriptionCorpus, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(corpus_to_dict(corpus), indent=1, sort_keys=True) + "\n")
    return path


_FIELDS = {"id": int, "task": str, "step": str, "verb": str, "step_description": str, "before": list, "after": list}


def corpus_from_dict(doc: dict, source: str = "<corpus>") -> DescriptionCorpus:
    if not isinstance(doc, dict):
        raise CorpusError(f"{source}: top level must be an object")
    for key in ("version", "K", "classes"):
        if key not in doc:
            raise CorpusError(f"{source}: missing field '{key}'")
    if doc["version"] != CORPUS_VERSION:
        raise CorpusError(f"{source}: unsupported version {doc['version']!r}")
    K = doc["K"]
    if not isinstance(K, int) or K <= 0:
        raise CorpusError(f"{source}: field 'K' must be a positive integer")
    entries: dict[int, StepDescriptionSet] = {}
    for n, item in enumerate(doc["classes"]):
        where = f"{source}: classes[{n}]"
        if not isinstance(item, dict):
            raise CorpusError(f"{where}: expected an object")
        for key, typ in _FIELDS.items():
            if key not in item:
                raise CorpusError(f"{where}: missing field '{key}'")
            if not isinstance(item[key], typ):
                raise CorpusError(f"{where}.{key}: expected {typ.__name__}")
        for side in ("before", "after"):
            if len(item[side]) != K:
                raise CorpusError(f"{where}.{side}: expected {K} sentences, got {len(item[side])}")
        cid = item["id"]
        if cid in entries:
            raise CorpusError(f"{where}: duplicate class id {cid}")
        entries[cid] = StepDescriptionSet(
            task_name=item["task"], step_name=item["step"], verb=item["verb"],
            step_description=item["step_description"],
            before=tuple(item["before"]), after=tuple(item["after"]),
        )
    return DescriptionCorpus(entries=entries, K=K)


def load_corpus(path: str | os.PathLike) -> DescriptionCorpus:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise CorpusError(f"{path}: line {err.lineno} column {err.colno}: {err.msg}") from None
    return corpus_from_dict(doc, str(path))


def describe_steps(
    steps: Iterable[tuple[int, str, str]],
    K: int = 3,
    client: LlmClient | None = None,
    seed: int = 0,
    verbs: Mapping[int, str] | None = None,
) -> DescriptionCorpus:
    """Build a corpus for ``(class_id, task, step)`` triples.

    Without ``client`` the offline mock answers. Output from a real client must
    pass validation; mock output issues are only logged.
    """
    steps = list(steps)
    verbs = verbs or {}
    if client is not None:
        prompts = [build_prompt(task, step, K=K) for _, task, step in steps]
        raws = client.complete_many(prompts)
    else:
        raws = [mock_llm_generate(task, step, verbs.get(cid), K=K, seed=seed) for cid, task, step in steps]
    entries = {}
    for (cid, task, step), raw in zip(steps, raws):
        try:
            sds = parse_llm_response(raw, K=K, task=task, step=step)
        except ParseError as err:
            raise CorpusError(f"class {cid} ({step!r}): {err}") from None
        problems = validate_descriptions(sds, K)
        if problems:
            if client is not None:
                raise CorpusError(f"class {cid} ({step!r}): " + "; ".join(problems))
            log.warning("class %d (%r): %s", cid, step, "; ".join(problems))
        entries[cid] = sds
    return DescriptionCorpus(entries=entries, K=K)
