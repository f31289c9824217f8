import os
import subprocess
import sys

import numpy as np
import pytest

from stateplan import kernels


@pytest.mark.skipif(kernels.viterbi_batch_compiled is None, reason="compiled extension not built")
def test_compiled_and_numpy_agree_bit_for_bit():
    r = np.random.default_rng(0)
    for N, T, C in [(1, 1, 1), (5, 3, 4), (64, 6, 30), (3, 12, 200)]:
        log_B = np.log(r.dirichlet(np.ones(C), size=(N, T)))
        log_A = np.log(r.dirichlet(np.ones(C), size=C))
        p1, s1 = kernels.viterbi_batch_numpy(log_B, log_A)
        p2, s2 = kernels.viterbi_batch_compiled(log_B, log_A)
        np.testing.assert_array_equal(p1, p2)
        assert s1.tobytes() == s2.tobytes()


def test_pure_python_switch():
    code = "from stateplan import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, STATEPLAN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_shape_check():
    with pytest.raises(ValueError, match="transition shape"):
        kernels.viterbi_batch_numpy(np.zeros((1, 2, 3)), np.zeros((2, 2)))


def test_empty_batch():
    paths, scores = kernels.viterbi_batch(np.zeros((0, 3, 2)), np.zeros((2, 2)))
    assert paths.shape == (0, 3) and scores.shape == (0,)
