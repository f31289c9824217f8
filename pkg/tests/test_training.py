import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stateplan.corpus import DescriptionCorpus, embed_corpus
from stateplan.dataworld import WorldSpec, extract_procedures, generate_world
from stateplan.engine import ContractError, NumericalError, Tensor
from stateplan.evalmetrics import sequence_metrics
from stateplan.inference import predict_steps
from stateplan.planner import ModelConfig, PlannerModel
from stateplan.training import (
    LOG_COLUMNS, LossWeights, TrainConfig, combined_loss, fit, loss_midstate, loss_state_alignment, loss_step,
    midstate_targets, run_grad_check,
)


def logsumexp(x):
    m = max(x)
    return m + math.log(sum(math.exp(v - m) for v in x))


# -- alignment -------------------------------------------------------------------

def test_alignment_single_class_is_zero():
    mem = Tensor(np.ones((6, 2)))
    s = Tensor(np.array([[0.3, 0.4]]))
    assert loss_state_alignment(s, s, [0], [0], mem, 1, 3).item() == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("C", [2, 5, 24])
def test_alignment_with_equal_sims_is_2_ln_C(C):
    mem = Tensor(np.random.default_rng(0).standard_normal((2 * C * 3, 4)))
    zero = Tensor(np.zeros((3, 4)))
    got = loss_state_alignment(zero, zero, [0, 1, 0], [1, 1, 0], mem, C, 3).item()
    assert got == pytest.approx(2 * math.log(C), rel=1e-6)


def test_alignment_two_class_hand_case():
    # K=1: class 0 descriptions point along x, class 1 along y, so sims are [1, 0]
    mem = Tensor(np.array([[1.0, 0], [0, 1], [1, 0], [0, 1]]))
    s = Tensor(np.array([[1.0, 0]]))
    want = 2 * (logsumexp([1.0, 0.0]) - 1.0)
    assert want == pytest.approx(0.6265, abs=1e-4)
    assert loss_state_alignment(s, s, [0], [0], mem, 2, 1).item() == pytest.approx(want, abs=1e-6)


def test_alignment_rejects_bad_label():
    mem = Tensor(np.ones((4, 2)))
    with pytest.raises(ContractError):
        loss_state_alignment(Tensor(np.ones((1, 2))), Tensor(np.ones((1, 2))), [2], [0], mem, 2, 1)


# -- mid-state targets -------------------------------------------------------------

def test_targets_of_identical_embeddings():
    v = np.array([0.2, -1.0, 0.5])
    mem = Tensor(np.tile(v, (2 * 4 * 3, 1)))
    out = midstate_targets([0, 3, 1], mem, 4, 3).data
    np.testing.assert_allclose(out, np.tile(v, (2, 1)))


def test_targets_with_one_description_per_side():
    r = np.random.default_rng(0)
    mem = r.standard_normal((2 * 3, 2))
    out = midstate_targets([2, 0], Tensor(mem), 3, 1).data
    # after(2) is row C*K + 2, before(0) is row 0
    np.testing.assert_allclose(out[0], (mem[3 + 2] + mem[0]) / 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(1, 4), st.integers(2, 5), st.integers(0, 10_000))
def test_targets_match_brute_force(C, K, T, seed):
    r = np.random.default_rng(seed)
    mem = r.standard_normal((2 * C * K, 3))
    steps = r.integers(0, C, size=(2, T))
    got = midstate_targets(steps, Tensor(mem), C, K).data
    for b in range(2):
        for t in range(T - 1):
            after = [mem[C * K + steps[b, t] * K + j] for j in range(K)]
            before = [mem[steps[b, t + 1] * K + j] for j in range(K)]
            np.testing.assert_allclose(got[b, t], np.mean(after + before, axis=0), rtol=1e-6, atol=1e-12)


def test_targets_need_two_steps():
    with pytest.raises(ValueError):
        midstate_targets([1], Tensor(np.ones((4, 2))), 2, 1)


# -- mid-state and step losses --------------------------------------------------------

def test_midstate_loss_examples():
    assert loss_midstate(Tensor(np.array([[1.0, 1.0]])), Tensor(np.zeros((1, 2)))).item() == pytest.approx(1.0)
    x = np.random.default_rng(0).standard_normal((3, 2, 4))
    assert loss_midstate(Tensor(x), Tensor(x)).item() == 0.0


def test_midstate_loss_sums_over_states():
    pred = np.zeros((1, 3, 2))
    target = np.zeros((1, 3, 2))
    target[0, :, 0] = [1.0, 2.0, 3.0]
    # per-state mean-over-dims: 0.5, 2.0, 4.5
    assert loss_midstate(Tensor(pred), Tensor(target)).item() == pytest.approx(7.0)


def test_midstate_count_mismatch():
    with pytest.raises(ValueError, match="count mismatch"):
        loss_midstate(Tensor(np.zeros((1, 2, 4))), Tensor(np.zeros((1, 3, 4))))


def test_step_loss_examples():
    C = 4
    labels = [2, 0, 3]
    confident = np.full((3, C), -10.0)
    confident[np.arange(3), labels] = 10.0
    assert loss_step(Tensor(confident), labels).item() < 1e-7
    assert loss_step(Tensor(np.zeros((3, C))), labels).item() == pytest.approx(math.log(C))


def test_step_loss_hand_case():
    logits = [[1.0, 2.0], [0.5, -0.5], [3.0, -1.0]]
    labels = [0, 1, 0]
    want = np.mean([logsumexp(row) - row[y] for row, y in zip(logits, labels)])
    assert loss_step(Tensor(np.array(logits)), labels).item() == pytest.approx(want, abs=1e-6)


# -- combined ------------------------------------------------------------------------

def _forward(model, split, memory, n=6):
    b = split[0].subset(np.arange(n))
    return b, model(b.s0, b.sT, 3, memory, true_task=b.task)


def test_combined_loss_is_linear_in_weights(tiny_model, small_split, small_memory):
    b, out = _forward(tiny_model, small_split, small_memory)
    w = LossWeights(w_align=0.5, w_state=2.0, w_step=1.5, w_task=0.25)
    terms = combined_loss(tiny_model, out, b.steps, b.task, w)
    assert min(terms.align, terms.state, terms.step, terms.task) >= 0
    lin = 0.5 * terms.align + 2.0 * terms.state + 1.5 * terms.step + 0.25 * terms.task
    assert terms.total.item() == pytest.approx(lin, rel=1e-5)
    double = LossWeights(w_align=1.0, w_state=4.0, w_step=3.0, w_task=0.5)
    assert combined_loss(tiny_model, out, b.steps, b.task, double).total.item() == pytest.approx(2 * lin, rel=1e-5)


def test_combined_loss_gradients(tiny_model, small_split, small_memory):
    report = run_grad_check(tiny_model, small_split[0], small_memory, LossWeights(), n=3, max_entries=3)
    assert report.passed, str(report)


# -- fit ----------------------------------------------------------------------------------

def test_zero_epochs_leave_model_unchanged(tiny_model, small_split, small_memory):
    before = {k: v.copy() for k, v in tiny_model.state_dict().items()}
    result = fit(tiny_model, small_split[0], small_memory, TrainConfig(epochs=0))
    assert result.log == []
    for k, v in tiny_model.state_dict().items():
        np.testing.assert_array_equal(v, before[k])


def test_nan_aborts_with_context(tiny_model, small_split, small_memory):
    tiny_model.step_classifier.fc2.bias.data[0] = np.nan
    with pytest.raises(NumericalError, match="epoch 0 batch 0"):
        fit(tiny_model, small_split[0], small_memory, TrainConfig(epochs=1))


def test_uncovered_classes_are_rejected(small_world, tiny_model, small_split, small_memory):
    last = small_world.C - 1
    corpus = DescriptionCorpus({c: s for c, s in small_world.corpus if c != last}, K=3)
    with pytest.raises(ContractError, match=rf"step classes \[{last}\]"):
        fit(tiny_model, small_split[0], small_memory, TrainConfig(epochs=1), corpus=corpus)


def test_log_columns_and_reproducibility(small_world, small_memory, small_split, tmp_path):
    def run(path):
        cfg = ModelConfig(embed_dim=8, hidden=8, heads=2, dropout=0.2, max_horizon=4, seed=1)
        model = PlannerModel(cfg, 16, small_memory.feature_dim, small_world.C, 3, small_world.num_tasks)
        fit(model, small_split[0], small_memory, TrainConfig(epochs=4, batch_size=8, eval_every=2, seed=1),
            eval_set=small_split[1], log_path=path, checkpoint_path=tmp_path / "best.json")
        return path.read_bytes()

    a, b = run(tmp_path / "a.csv"), run(tmp_path / "b.csv")
    assert a == b
    lines = a.decode().splitlines()
    assert lines[0] == ",".join(LOG_COLUMNS)
    assert len(lines) == 5
    assert lines[1].endswith(",,,")       # no evaluation at epoch 0
    assert not lines[2].endswith(",,,")   # evaluated at epoch 1
    assert (tmp_path / "best.json").exists()


def test_single_task_world_is_learned():
    w = generate_world(WorldSpec(num_tasks=1, steps_per_task=4, feature_dim=16, videos_per_task=5,
                                 observation_noise_sigma=0.0, seed=0))
    mem = embed_corpus(w.corpus, w.text_features)
    train = extract_procedures(w, 3)
    cfg = ModelConfig(embed_dim=16, hidden=16, heads=2, dropout=0.0, max_horizon=4)
    model = PlannerModel(cfg, 16, mem.feature_dim, w.C, 3, 1)
    result = fit(model, train, mem, TrainConfig(epochs=200, batch_size=256))
    assert result.log[0]["L_task"] == 0.0
    assert sequence_metrics(predict_steps(model, train, mem), train.steps)["SR"] == 100.0
