import os

# single-threaded BLAS keeps float results bit-reproducible between runs
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from stateplan.corpus import embed_corpus  # noqa: E402
from stateplan.dataworld import WorldSpec, extract_procedures, generate_world, split_train_test  # noqa: E402
from stateplan.planner import ModelConfig, PlannerModel  # noqa: E402


@pytest.fixture(scope="session")
def small_world():
    return generate_world(WorldSpec(num_tasks=3, steps_per_task=4, feature_dim=16, videos_per_task=6, seed=3))


@pytest.fixture(scope="session")
def small_memory(small_world):
    return embed_corpus(small_world.corpus, small_world.text_features)


@pytest.fixture(scope="session")
def small_split(small_world):
    train_v, test_v = split_train_test(small_world.videos)
    return extract_procedures(train_v, 3), extract_procedures(test_v, 3)


@pytest.fixture
def tiny_model(small_world, small_memory):
    cfg = ModelConfig(embed_dim=8, hidden=8, heads=2, dropout=0.0, max_horizon=4, seed=0)
    return PlannerModel(cfg, small_world.spec.feature_dim, small_memory.feature_dim, small_world.C, 3,
                        small_world.num_tasks)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record an acceptance verdict; all verdicts print in the terminal summary."""
    def record(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        print(_CRITERIA[number])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
