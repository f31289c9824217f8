"""Description generators: a deterministic offline mock and a cached HTTP client."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

_BEFORE_TEMPLATES = (
    "The {obj} is {b}.",
    "The {obj} for {task} has not been handled yet.",
    "The {obj} is still in its starting condition.",
    "Nothing has happened to the {obj} so far.",
    "The {obj} sits untouched on the counter.",
    "The {obj} looks {b} at this point.",
)
_AFTER_TEMPLATES = (
    "The {obj} is {a}.",
    "The {obj} for {task} has now been handled.",
    "The {obj} is in its finished condition.",
    "A visible change has happened to the {obj}.",
    "The {obj} is ready for the next stage.",
    "The {obj} looks {a} at this point.",
)
_ADJECTIVES = (
    ("whole", "in pieces"), ("dry", "wet"), ("cold", "warm"), ("closed", "uncovered"),
    ("empty", "full"), ("loose", "attached"), ("dirty", "clean"), ("raw", "prepared"),
    ("separate", "combined"), ("flat", "folded"), ("plain", "coated"), ("low", "raised"),
)
_WORD = re.compile(r"[A-Za-z0-9']+")


def _strip_tokens(text: str, banned: set[str]) -> str:
    kept = [w for w in text.split() if not (set(t.lower() for t in _WORD.findall(w)) & banned)]
    return " ".join(kept)


def _seed_from(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def mock_llm_generate(task: str, step: str, verb: str | None = None, K: int = 3, seed: int = 0) -> str:
    """Template-based stand-in for an LLM answer to ``build_prompt(task, step)``.

    Deterministic in its arguments; the verb never appears in the state sentences.
    """
    verb = (verb or step.split()[0]).strip()
    banned = {t.lower() for t in _WORD.findall(verb)}
    obj = _strip_tokens(step, banned) or "item"
    task_clean = _strip_tokens(task, banned) or "the task"
    rng = np.random.default_rng(_seed_from(task, step, verb, seed))
    b_adj, a_adj = _ADJECTIVES[int(rng.integers(len(_ADJECTIVES)))]

    def pick(templates, adj_key, adj):
        order = rng.permutation(len(templates))
        out = []
        for i in order:
            s = templates[i].format(obj=obj, task=task_clean, **{adj_key: adj})
            if not (set(t.lower() for t in _WORD.findall(s)) & banned):
                out.append(s)
            if len(out) == K:
                break
        n = 0
        while len(out) < K:
            n += 1
            out.append(f"The {obj} shows detail number {len(templates) + n}.")
        return out

    before = pick(_BEFORE_TEMPLATES, "b", b_adj)
    after = pick(_AFTER_TEMPLATES, "a", a_adj)
    lines = [f"[verb]: {verb}", "Description:", f"{verb.capitalize()} the {obj} for {task}", "Before:"]
    lines += [f"- {s}" for s in before]
    lines.append("After:")
    lines += [f"- {s}" for s in after]
    return "\n".join(lines) + "\n"


@dataclass
class LlmClientConfig:
    endpoint: str
    model: str
    timeout: float = 60.0
    max_retries: int = 2
    cache_dir: str | None = None
    max_concurrency: int = 4
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.cache_dir is None:
            self.cache_dir = os.environ.get("SCHEMA_CACHE_DIR")


class LlmError(RuntimeError):
    pass


class LlmClient:
    """Chat-completion style HTTP client with an on-disk cache keyed by prompt hash.

    Decoding parameters (temperature etc.) go in ``config.params`` and are sent as-is.
    """

    def __init__(self, config: LlmClientConfig):
        self.config = config
        self.cache = Path(config.cache_dir) if config.cache_dir else None
        if self.cache is not None:
            self.cache.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def prompt_key(prompt: str) -> str:
        return hashlib.sha256(prompt.encode("utf-8")).hexdigest()

    def _request_body(self, prompt: str) -> dict:
        body = {"model": self.config.model, "messages": [{"role": "user", "content": prompt}]}
        body.update(self.config.params)
        return body

    def _cached(self, key: str) -> str | None:
        if self.cache is None:
            return None
        path = self.cache / f"{key}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())["content"]

    def _store(self, key: str, request: dict, response: dict, content: str) -> None:
        if self.cache is None:
            return
        record = {"request": request, "response": response, "content": content}
        fd, tmp = tempfile.mkstemp(dir=self.cache, prefix=f".{key}.", suffix=".tmp")
        with os.fdopen(fd, "w") as f:
            json.dump(record, f, indent=1, sort_keys=True)
        os.replace(tmp, self.cache / f"{key}.json")

    def complete(self, prompt: str) -> str:
        key = self.prompt_key(prompt)
        hit = self._cached(key)
        if hit is not None:
            return hit
        body = self._request_body(prompt)
        data = json.dumps(body).encode("utf-8")
        last_err: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            req = urllib.request.Request(
                self.config.endpoint, data=data, headers={"Content-Type": "application/json"}, method="POST",
            )
            try:
                with urllib.request.urlopen(req, timeout=self.config.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                content = payload["choices"][0]["message"]["content"]
            except (urllib.error.URLError, OSError, KeyError, IndexError, ValueError) as err:
                last_err = err
                log.warning("LLM request failed (attempt %d): %s", attempt + 1, err)
                if attempt < self.config.max_retries:
                    time.sleep(min(2.0 ** attempt * 0.1, 5.0))
                continue
            self._store(key, body, payload, content)
            return content
        raise LlmError(f"LLM request failed after {self.config.max_retries + 1} attempts: {last_err}")

    def complete_many(self, prompts: list[str]) -> list[str]:
        workers = max(1, self.config.max_concurrency)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.complete, prompts))
