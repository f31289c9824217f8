"""Command-line entry point: ``stateplan <command> [--config FILE] [flags]``.

Every command writes under the configured output directory and prints one
JSON summary line on success. Failures print one JSON line on stderr and exit
nonzero: 2 for invalid configuration, 3 for missing or unwritable files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .config import ConfigError, RunConfig, load_config
from .corpus import LlmClient, LlmClientConfig, describe_steps, load_corpus, save_corpus
from .dataworld import extract_procedures, generate_world
from .evalmetrics import evaluate_model, group_by_context, mode_metrics, stepcls_zero_shot
from .evalmetrics.ablation import ablate
from .inference import sample_plans, write_plans, plan as plan_samples
from .pipeline import (
    build_model, horizon_dir, load_dataset, load_model, load_transition, sample_ids, save_model,
    save_transition, write_world,
)
from .reports import write_report
from .training import fit

log = logging.getLogger("stateplan")

EXIT_CONFIG = 2
EXIT_FILES = 3
COMMANDS = ("gen-world", "describe", "train", "eval", "plan", "ablate", "stepcls")


def _emit(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def _provenance(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed}


# -- commands ----------------------------------------------------------------

def cmd_gen_world(cfg: RunConfig) -> dict:
    world = generate_world(cfg.world_spec())
    out = Path(cfg.out_dir) / "world"
    paths = write_world(world, out)
    info = {"C": world.C, "num_tasks": world.num_tasks, "videos": len(world.videos), **_provenance(cfg)}
    (out / "world_info.json").write_text(json.dumps(info, indent=1, sort_keys=True) + "\n")
    return {"command": "gen-world", "out": str(out), "files": sorted(p.name for p in paths.values()), **info}


def cmd_describe(cfg: RunConfig) -> dict:
    if cfg.data.corpus:
        source = load_corpus(cfg.data.corpus)
        steps = [(cid, sds.task_name, sds.step_name) for cid, sds in source]
        verbs = {cid: sds.verb for cid, sds in source}
    else:
        world = generate_world(cfg.world_spec())
        steps = [(c, world.task_names[world.class_task[c]], world.step_names[c]) for c in range(world.C)]
        verbs = dict(enumerate(world.verbs))
    client = None
    if cfg.llm.endpoint:
        client = LlmClient(LlmClientConfig(
            endpoint=cfg.llm.endpoint, model=cfg.llm.model, timeout=cfg.llm.timeout,
            max_retries=cfg.llm.max_retries, max_concurrency=cfg.llm.max_concurrency, params=dict(cfg.llm.params),
        ))
    corpus = describe_steps(steps, K=cfg.data.world.K, client=client, seed=cfg.seed, verbs=verbs)
    path = save_corpus(corpus, Path(cfg.out_dir) / "corpus.json")
    return {"command": "describe", "out": str(path), "classes": corpus.C, "source": "llm" if client else "mock",
            **_provenance(cfg)}


def cmd_train(cfg: RunConfig) -> dict:
    data = load_dataset(cfg)
    summary = []
    for T in cfg.data.horizons:
        train, test = data.procedures(T, cfg.data.split_ratio, cfg.seed)
        model = build_model(cfg.model_cfg(), data, train.s0.shape[1])
        hd = horizon_dir(cfg, T)
        meta = {**_provenance(cfg), "T": T}
        result = fit(model, train, data.memory, cfg.train_cfg(), cfg.loss, eval_set=test, corpus=data.corpus,
                     log_path=hd / "epoch_log.csv", checkpoint_path=hd / "best.json", checkpoint_meta=meta)
        save_model(hd / "model.json", model, train.s0.shape[1], data.memory.feature_dim, meta)
        save_transition(hd / "transition.json", result.transition)
        summary.append({"T": T, "train": len(train), "test": len(test), "best_epoch": result.best_epoch})
    return {"command": "train", "out": cfg.out_dir, "horizons": summary, **_provenance(cfg)}


def _decode_mode(cfg: RunConfig) -> str:
    return cfg.inference.sample_decode if cfg.inference.mode == "prob" else cfg.inference.mode


def cmd_eval(cfg: RunConfig) -> dict:
    data = load_dataset(cfg)
    rows = []
    mode = _decode_mode(cfg)
    for T in cfg.data.horizons:
        hd = horizon_dir(cfg, T)
        model, _ = load_model(hd / "model.json")
        _, test = data.procedures(T, cfg.data.split_ratio, cfg.seed)
        m = evaluate_model(model, test, data.memory, mode, load_transition(hd / "transition.json"))
        rows.append({"T": T, **m, "n": len(test)})
    write_report(cfg.out_dir, "eval", rows, ["T", "SR", "mAcc", "mIoU", "n"], cfg.config_hash(), cfg.seed,
                 title=f"Evaluation ({mode})")
    return {"command": "eval", "mode": mode, "rows": rows, **_provenance(cfg)}


def cmd_plan(cfg: RunConfig) -> dict:
    data = load_dataset(cfg)
    written = []
    inf = cfg.inference
    for T in cfg.data.horizons:
        hd = horizon_dir(cfg, T)
        model, _ = load_model(hd / "model.json")
        transition = load_transition(hd / "transition.json")
        train, test = data.procedures(T, cfg.data.split_ratio, cfg.seed)
        ids = sample_ids(test)
        path = hd / f"plans_{inf.mode}.jsonl"
        if inf.mode != "prob":
            written.append(str(write_plans(path, plan_samples(model, test, data.memory, inf.mode, transition), ids)))
            continue
        plans, plan_ids, sampled = [], [], {}
        contexts = test.contexts()
        for i in range(len(test)):
            got = sample_plans(model, test.s0[i], test.sT[i], T, data.memory, n=inf.num_samples,
                               seed=cfg.seed + i, mode=inf.sample_decode, transition=transition,
                               noise_scale=inf.noise_scale)
            plans.extend(got)
            plan_ids.extend(f"{ids[i]}#{k}" for k in range(len(got)))
            sampled.setdefault(contexts[i], []).extend(tuple(int(s) for s in p.steps) for p in got)
        written.append(str(write_plans(path, plans, plan_ids)))
        both = [*train.contexts(), *test.contexts()]
        gts = group_by_context(both, [*train.steps, *test.steps])
        report = mode_metrics(sampled, {c: gts[c] for c in sampled})
        write_report(hd, "modes", [{"T": T, **report.as_dict()}],
                     ["T", "kl_div", "nll", "mode_prec", "mode_rec", "num_contexts"], cfg.config_hash(), cfg.seed)
    return {"command": "plan", "mode": inf.mode, "files": written, **_provenance(cfg)}


def cmd_ablate(cfg: RunConfig) -> dict:
    data = load_dataset(cfg)
    T = cfg.data.horizons[0]
    train, test = data.procedures(T, cfg.data.split_ratio, cfg.seed)
    result = ablate(train, test, data.memory, data.num_tasks, arms=cfg.ablation.arms, seeds=cfg.ablation.seeds,
                    model_cfg=cfg.model, train_cfg=cfg.train, weights=cfg.loss)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    footer = f"\nT={T}; config_hash: `{cfg.config_hash()}`, seed: {cfg.seed}\n"
    (out / "ablation.md").write_text(result.to_markdown() + footer)
    rows = []
    for arm in result.arms:
        for s, r in zip(result.seeds, result.runs[arm]):
            rows.append({"arm": arm, "run_seed": s, **r})
        rows.append({"arm": arm, "run_seed": "mean", **result.mean(arm)})
    write_report(out, "ablation", rows, ["arm", "run_seed", "SR", "mAcc", "mIoU"], cfg.config_hash(), cfg.seed,
                 formats=("csv", "json"))
    return {"command": "ablate", "T": T, "means": {a: result.mean(a) for a in result.arms}, **_provenance(cfg)}


def cmd_stepcls(cfg: RunConfig) -> dict:
    data = load_dataset(cfg)
    rows = []
    for T in cfg.data.horizons:
        model, _ = load_model(horizon_dir(cfg, T) / "model.json")
        _, test_videos = data.split(cfg.data.split_ratio, cfg.seed)
        singles = extract_procedures(test_videos, 1)
        acc = stepcls_zero_shot(model, singles.s0, singles.sT, singles.steps[:, 0], data.memory)
        rows.append({"T": T, "accuracy": acc, "chance": 100.0 / data.memory.C, "n": len(singles)})
    write_report(cfg.out_dir, "stepcls", rows, ["T", "accuracy", "chance", "n"], cfg.config_hash(), cfg.seed,
                 title="Zero-shot step classification")
    return {"command": "stepcls", "rows": rows, **_provenance(cfg)}


HANDLERS = {
    "gen-world": cmd_gen_world, "describe": cmd_describe, "train": cmd_train, "eval": cmd_eval,
    "plan": cmd_plan, "ablate": cmd_ablate, "stepcls": cmd_stepcls,
}


# -- argument handling -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stateplan", description="Procedure planning toolkit.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--t", type=int, choices=range(3, 7), metavar="{3..6}", help="planning horizon")
    p.add_argument("--mode", choices=("argmax", "viterbi", "prob"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set a config value; repeatable; bare keys resolve to their section")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def flag_overrides(args: argparse.Namespace) -> list[str]:
    out = list(args.override)
    if args.seed is not None:
        out.append(f"seed={args.seed}")
    if args.t is not None:
        out.append(f"data.horizons=[{args.t}]")
    if args.mode is not None:
        out.append(f"inference.mode={args.mode}")
    if args.out is not None:
        out.append(f"out_dir={json.dumps(args.out)}")
    return out


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, flag_overrides(args))
        _emit(HANDLERS[args.command](cfg))
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except (FileNotFoundError, FileExistsError, IsADirectoryError, NotADirectoryError, PermissionError) as exc:
        return _fail("file", str(exc), EXIT_FILES)
    except Exception as exc:  # noqa: BLE001
        log.debug("command failed", exc_info=True)
        return _fail(type(exc).__name__, str(exc).replace("\n", " "), 1)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
