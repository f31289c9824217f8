"""CSV / JSON / Markdown reports; each carries the config hash and seed."""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Sequence

FORMATS = ("csv", "json", "md")


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def render_csv(rows: Sequence[dict], columns: Sequence[str], config_hash: str, seed: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*columns, "config_hash", "seed"])
    for r in rows:
        w.writerow([*(_cell(r.get(c, "")) for c in columns), config_hash, seed])
    return buf.getvalue()


def render_markdown(rows: Sequence[dict], columns: Sequence[str], config_hash: str, seed: int,
                    title: str | None = None) -> str:
    lines = [f"## {title}", ""] if title else []
    lines.append("| " + " | ".join(columns) + " |")
    lines.append("|" + "|".join("---:" for _ in columns) + "|")
    for r in rows:
        lines.append("| " + " | ".join(
            f"{r[c]:.2f}" if isinstance(r.get(c), float) else str(r.get(c, "")) for c in columns) + " |")
    lines += ["", f"config_hash: `{config_hash}`, seed: {seed}"]
    return "\n".join(lines) + "\n"


def render_json(rows: Sequence[dict], config_hash: str, seed: int, extra: dict | None = None) -> str:
    doc = {"config_hash": config_hash, "seed": seed, "rows": list(rows), **(extra or {})}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def write_report(out_dir: str | os.PathLike, name: str, rows: Sequence[dict], columns: Sequence[str],
                 config_hash: str, seed: int, formats: Sequence[str] = FORMATS,
                 title: str | None = None, extra: dict | None = None) -> list[Path]:
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ValueError(f"unknown report formats {bad}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        path = out_dir / f"{name}.{fmt}"
        if fmt == "csv":
            text = render_csv(rows, columns, config_hash, seed)
        elif fmt == "json":
            text = render_json(rows, config_hash, seed, extra)
        else:
            text = render_markdown(rows, columns, config_hash, seed, title)
        path.write_text(text)
        written.append(path)
    return written
