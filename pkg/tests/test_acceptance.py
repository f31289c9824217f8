"""Acceptance criteria 1-9, each printing one PASS/FAIL line.

The training runs here are the expensive part of the suite (several minutes
on one core); they share a session fixture where possible.
"""

import itertools
import math
import time

import numpy as np
import pytest

from gradcases import CASES
from stateplan.corpus import describe_steps, embed_corpus, load_corpus, save_corpus
from stateplan.dataworld import WorldSpec, extract_procedures, generate_world, split_train_test
from stateplan.engine import no_grad
from stateplan.evalmetrics import (
    context_mode_metrics, group_by_context, mode_metrics, sequence_metrics, stepcls_zero_shot,
)
from stateplan.evalmetrics.ablation import TABLE_ARMS, ablate
from stateplan.inference import (
    TransitionModel, build_transition, path_score, plan, predict_steps, viterbi_decode, write_plans,
)
from stateplan.planner import ModelConfig, PlannerModel
from stateplan.training import LossWeights, TrainConfig, fit, loss_state_alignment, run_grad_check

pytestmark = pytest.mark.slow

LEARN_EPOCHS = 100
ABLATION_EPOCHS = 150
BRANCH_EPOCHS = 60


def world_data(spec: WorldSpec, T: int = 3):
    w = generate_world(spec)
    mem = embed_corpus(w.corpus, w.text_features)
    train_v, test_v = split_train_test(w.videos)
    return w, mem, train_v, test_v, extract_procedures(train_v, T), extract_procedures(test_v, T)


@pytest.fixture(scope="module")
def learned():
    """The criterion-4 world trained once with the default architecture."""
    w, mem, train_v, test_v, train, test = world_data(WorldSpec(observation_noise_sigma=0.1))
    model = PlannerModel(ModelConfig(), 32, mem.feature_dim, w.C, w.spec.K, w.num_tasks)
    result = fit(model, train, mem, TrainConfig(epochs=LEARN_EPOCHS), eval_set=test)
    return w, mem, test_v, test, model, result


# -- 1 ----------------------------------------------------------------------------------------

def test_criterion_1_gradients(criterion):
    t0 = time.perf_counter()
    failed = [name for name, case in CASES.items() if not case().passed]
    w, mem, _, _, train, _ = world_data(WorldSpec(num_tasks=1, steps_per_task=4, feature_dim=8, videos_per_task=3))
    assert w.C == 4
    model = PlannerModel(ModelConfig(embed_dim=8, hidden=8, heads=2, dropout=0.0, max_horizon=3), 8,
                         mem.feature_dim, w.C, 3, 1)
    report = run_grad_check(model, train, mem, LossWeights(), n=4, max_entries=10)
    seconds = time.perf_counter() - t0
    ok = not failed and report.passed and seconds < 60
    criterion(1, ok, f"{len(CASES)} primitives, combined-loss max rel err {report.max_error:.2e}, {seconds:.1f}s")
    assert ok, (failed, str(report))


# -- 2 ----------------------------------------------------------------------------------------

def test_criterion_2_viterbi_oracle(criterion):
    r = np.random.default_rng(2024)
    hits = 0
    for _ in range(200):
        C, T = int(r.integers(1, 7)), int(r.integers(1, 5))
        tm = TransitionModel(r.integers(0, 6, size=(C, C)), smoothing=1e-6)
        B = r.dirichlet(np.ones(C), size=T)
        log_B = np.log(B)
        best, best_path = -np.inf, None
        for path in itertools.product(range(C), repeat=T):
            s = path_score(log_B, tm.log_A, path)
            if s > best:
                best, best_path = s, path
        got = viterbi_decode(B, tm)
        hits += abs(got.score - best) < 1e-9 and tuple(got.steps) == best_path
    criterion(2, hits == 200, f"{hits}/200 trials match enumeration")
    assert hits == 200


# -- 3 ----------------------------------------------------------------------------------------

def test_criterion_3_metric_oracles(criterion):
    fixtures = [
        (sequence_metrics([[1, 2, 3]], [[1, 2, 3]]), {"SR": 100.0, "mAcc": 100.0, "mIoU": 100.0}),
        (sequence_metrics([[1, 3, 2]], [[1, 2, 3]]), {"SR": 0.0, "mAcc": 100 / 3, "mIoU": 100.0}),
        (sequence_metrics([[1, 2, 3], [1, 3, 2]], [[1, 2, 3]] * 2), {"SR": 50.0}),
        (sequence_metrics([[4, 5, 6]], [[1, 2, 3]]), {"mAcc": 0.0}),
        (sequence_metrics([[1, 2]], [[1, 3]]), {"mIoU": 100 / 3}),
        (sequence_metrics([[1, 1, 1]], [[1, 2, 3]]), {"mIoU": 100 / 3}),
    ]
    exact = all(got[k] == pytest.approx(v, abs=1e-12) for got, want in fixtures for k, v in want.items())
    r = np.random.default_rng(3)
    violations = 0
    for _ in range(1000):
        n, T, C = int(r.integers(1, 20)), int(r.integers(1, 7)), int(r.integers(1, 6))
        gts = r.integers(0, C, size=(n, T))
        preds = np.where(r.random((n, T)) < 0.6, gts, r.integers(0, C, size=(n, T)))
        m = sequence_metrics(preds, gts)
        violations += not (m["SR"] <= m["mAcc"] and m["SR"] <= m["mIoU"])
    ok = exact and violations == 0
    criterion(3, ok, f"fixtures exact={exact}, invariant violations {violations}/1000")
    assert ok


# -- 4 ----------------------------------------------------------------------------------------

def test_criterion_4_learnability(criterion, learned):
    w, mem, _, test, model, result = learned
    m = sequence_metrics(predict_steps(model, test, mem, "viterbi", result.transition), test.steps)
    ok = m["SR"] >= 85 and m["mAcc"] >= 90 and result.seconds < 600
    criterion(4, ok, f"SR {m['SR']:.2f}, mAcc {m['mAcc']:.2f}, mIoU {m['mIoU']:.2f}, "
                     f"{LEARN_EPOCHS} epochs in {result.seconds:.0f}s, {len(test)} test samples")
    assert ok


# -- 5 ----------------------------------------------------------------------------------------

def test_criterion_5_ablation_direction(criterion):
    w, mem, _, _, train, test = world_data(WorldSpec(observation_noise_sigma=0.3))
    res = ablate(train, test, mem, w.num_tasks, arms=TABLE_ARMS, seeds=range(5),
                 train_cfg=TrainConfig(epochs=ABLATION_EPOCHS))
    sr = {a: res.mean(a)["SR"] for a in TABLE_ARMS}
    ok = sr["d"] >= sr["c"] >= sr["a"] and sr["d"] >= sr["b"] >= sr["a"] and sr["d"] - sr["a"] >= 2
    criterion(5, ok, ", ".join(f"({a}) {sr[a]:.2f}" for a in TABLE_ARMS) + f", {ABLATION_EPOCHS} epochs x 5 seeds")
    print(res.to_markdown())
    assert ok


# -- 6 ----------------------------------------------------------------------------------------

def controlled_validity(spec: WorldSpec, margin: float = 4.0):
    """Viterbi plan validity on emissions peaked at the ground truth plus Gaussian logit noise."""
    w, _, _, _, train, test = world_data(spec)
    tm = build_transition(train.steps, w.C)
    r = np.random.default_rng(spec.seed)
    hits = valid = 0
    for gt in test.steps:
        z = r.standard_normal((len(gt), w.C))
        z[np.arange(len(gt)), gt] += margin
        B = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        hits += int((B.argmax(axis=1) == gt).sum())
        valid += w.is_valid_plan(viterbi_decode(B, tm).steps)
    return 100 * hits / test.steps.size, valid, len(test)


def test_criterion_6_viterbi_benefit(criterion):
    rows = []
    for seed in range(5):
        spec = WorldSpec(branching=1.0, branch_kind="substitute", observation_noise_sigma=0.3, steps_per_task=5,
                         seed=seed)
        w, mem, _, _, train, test = world_data(spec)
        model = PlannerModel(ModelConfig(seed=seed), 32, mem.feature_dim, w.C, 3, w.num_tasks)
        result = fit(model, train, mem, TrainConfig(epochs=BRANCH_EPOCHS, seed=seed))
        arg = sequence_metrics(predict_steps(model, test, mem, "argmax"), test.steps)
        vit = predict_steps(model, test, mem, "viterbi", result.transition)
        valid = 100 * float(np.mean([w.is_valid_plan(p) for p in vit]))
        rows.append((arg["SR"], sequence_metrics(vit, test.steps)["SR"], arg["mAcc"], valid))
    sr_arg, sr_vit = np.mean([x[0] for x in rows]), np.mean([x[1] for x in rows])
    # trained models whose emissions reach 90% per-position accuracy must give only valid plans
    trained_valid = all(v == 100 for _, _, acc, v in rows if acc >= 90)

    controlled = [controlled_validity(WorldSpec(branching=1.0, branch_kind="substitute", steps_per_task=5, seed=s))
                  for s in range(10, 15)]
    controlled_ok = all(acc >= 90 and v == n for acc, v, n in controlled)
    # reported only: adjacent-step swaps make the step graph cyclic (see the decisions ledger)
    swap_acc, swap_valid, swap_n = controlled_validity(WorldSpec(branching=1.0, steps_per_task=5, seed=11))

    ok = sr_vit >= sr_arg and trained_valid and controlled_ok
    per_seed = [tuple(round(float(v), 1) for v in x) for x in rows]
    criterion(6, ok, f"mean SR argmax {sr_arg:.2f} vs viterbi {sr_vit:.2f} over 5 seeds; "
                     f"per seed (argmax SR, viterbi SR, argmax mAcc, valid%) {per_seed}; "
                     f"controlled emissions (acc%, valid, n) {[(round(a, 1), v, n) for a, v, n in controlled]}; "
                     f"swap world for reference: acc {swap_acc:.1f}% -> {swap_valid}/{swap_n} valid")
    assert ok


# -- 7 ----------------------------------------------------------------------------------------

def test_criterion_7_contrastive_sanity(criterion, learned):
    w0, mem0, _, _, train0, _ = world_data(WorldSpec())
    losses = []
    for seed in range(20):
        model = PlannerModel(ModelConfig(seed=seed), 32, mem0.feature_dim, 24, 3, w0.num_tasks).eval()
        with no_grad():
            losses.append(loss_state_alignment(
                model.encode_states(train0.s0), model.encode_states(train0.sT), train0.steps[:, 0],
                train0.steps[:, -1], model.encode_descriptions(mem0), 24, 3).item())
    init_ratio = np.mean(losses) / (2 * math.log(24))

    w, mem, test_v, _, model, _ = learned
    singles = extract_procedures(test_v, 1)
    acc = stepcls_zero_shot(model, singles.s0, singles.sT, singles.steps[:, 0], mem)
    ok = abs(init_ratio - 1) < 0.1 and acc >= 90
    criterion(7, ok, f"init L_align / 2ln24 = {init_ratio:.4f}; trained stepcls {acc:.1f}% "
                     f"on {len(singles)} held-out singles (chance {100 / 24:.1f}%)")
    assert ok


# -- 8 ----------------------------------------------------------------------------------------

def test_criterion_8_mode_metrics(criterion):
    w = generate_world(WorldSpec(branching=1.0, alternate_share=0.4, steps_per_task=5, videos_per_task=30))
    ps = extract_procedures(w, 3)
    gts = group_by_context(ps.contexts(), ps.steps)
    r = np.random.default_rng(8)
    sampled = {}
    for ctx, plans in gts.items():
        pick = r.integers(0, len(plans), size=1500)
        sampled[ctx] = [plans[i] for i in pick]
    report = mode_metrics(sampled, gts)
    multi = sum(len(set(p)) > 1 for p in gts.values())
    _, nll_single, _, _ = context_mode_metrics([(1, 2, 3)] * 50, [(1, 2, 3)] * 4)
    ok = report.kl_div < 0.05 and report.mode_rec >= 95 and nll_single == 0.0
    criterion(8, ok, f"KL {report.kl_div:.5f}, ModeRec {report.mode_rec:.1f}, ModePrec {report.mode_prec:.1f} "
                     f"over {report.num_contexts} contexts ({multi} multi-modal); single-mode NLL {nll_single}")
    assert ok


# -- 9 ----------------------------------------------------------------------------------------

def test_criterion_9_reproducibility(criterion, tmp_path):
    spec = WorldSpec(num_tasks=3, videos_per_task=6, seed=9)

    def run(tag):
        w, mem, _, _, train, test = world_data(spec)
        model = PlannerModel(ModelConfig(embed_dim=16, hidden=16, heads=4, seed=9), 32, mem.feature_dim, w.C, 3,
                             w.num_tasks)
        res = fit(model, train, mem, TrainConfig(epochs=5, batch_size=32, eval_every=2, seed=9), eval_set=test,
                  log_path=tmp_path / tag / "log.csv")
        plans = plan(model, test, mem, "viterbi", res.transition)
        write_plans(tmp_path / tag / "plans.jsonl", plans, [str(v) for v in test.video_ids])
        return [(tmp_path / tag / f).read_bytes() for f in ("log.csv", "plans.jsonl")]

    same_runs = run("a") == run("b")
    corpus = describe_steps([(c, f"task {c % 3}", f"fold cloth{c}") for c in range(12)], seed=9)
    p1 = save_corpus(corpus, tmp_path / "c1.json")
    p2 = save_corpus(load_corpus(p1), tmp_path / "c2.json")
    lossless = load_corpus(p1) == corpus and p1.read_bytes() == p2.read_bytes()
    ok = same_runs and lossless
    criterion(9, ok, f"logs+plans byte-identical={same_runs}, corpus round-trip lossless={lossless}")
    assert ok
