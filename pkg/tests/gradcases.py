"""Finite-difference cases for every tensor primitive, shared by unit and acceptance tests."""

import numpy as np

from stateplan.engine import Parameter, default_dtype, finite_diff_check, ops


def _param(rng, *shape, away_from_zero=False):
    x = rng.standard_normal(shape)
    if away_from_zero:
        x = np.sign(x) * (np.abs(x) + 0.2)
    return Parameter(x.astype(np.float64))


def _probe(out, rng):
    # a fixed random linear readout turns any output into a scalar
    w = rng.standard_normal(out.shape)
    return ops.sum(ops.mul(out, w))


def _case(name, build):
    def run(seed=0):
        rng = np.random.default_rng(seed)
        with default_dtype(np.float64):
            params, forward = build(rng)
            readout_rng_seed = int(rng.integers(1 << 30))

            def fn():
                return _probe(forward(*params), np.random.default_rng(readout_rng_seed))

            return finite_diff_check(fn, params, tolerance=1e-3, step=1e-5)
    run.__name__ = name
    return run


CASES = {
    "add": _case("add", lambda r: ([_param(r, 3, 4), _param(r, 4)], ops.add)),
    "sub": _case("sub", lambda r: ([_param(r, 2, 3), _param(r, 2, 3)], ops.sub)),
    "mul": _case("mul", lambda r: ([_param(r, 2, 3), _param(r, 1, 3)], ops.mul)),
    "scale": _case("scale", lambda r: ([_param(r, 5)], lambda x: ops.scale(x, -2.5))),
    "square": _case("square", lambda r: ([_param(r, 2, 3)], ops.square)),
    "relu": _case("relu", lambda r: ([_param(r, 4, 3, away_from_zero=True)], ops.relu)),
    "gelu": _case("gelu", lambda r: ([_param(r, 4, 3)], ops.gelu)),
    "matmul_2d": _case("matmul_2d", lambda r: ([_param(r, 3, 4), _param(r, 4, 2)], ops.matmul)),
    "matmul_batched": _case("matmul_batched", lambda r: ([_param(r, 2, 3, 4), _param(r, 4, 5)], ops.matmul)),
    "matmul_3d": _case("matmul_3d", lambda r: ([_param(r, 2, 3, 4), _param(r, 2, 4, 2)], ops.matmul)),
    "sum": _case("sum", lambda r: ([_param(r, 2, 3, 4)], lambda x: ops.sum(x, axis=1))),
    "mean": _case("mean", lambda r: ([_param(r, 2, 3, 4)], lambda x: ops.mean(x, axis=-1, keepdims=True))),
    "reshape": _case("reshape", lambda r: ([_param(r, 2, 6)], lambda x: ops.reshape(x, (3, 4)))),
    "transpose": _case("transpose", lambda r: ([_param(r, 2, 3, 4)], lambda x: ops.transpose(x, (2, 0, 1)))),
    "getitem": _case("getitem", lambda r: ([_param(r, 5, 3)], lambda x: ops.getitem(x, np.array([0, 2, 2, 4])))),
    "concat": _case("concat", lambda r: ([_param(r, 2, 3), _param(r, 2, 1)], lambda a, b: ops.concat([a, b], 1))),
    "stack": _case("stack", lambda r: ([_param(r, 2, 3), _param(r, 2, 3)], lambda a, b: ops.stack([a, b], 0))),
    "layer_norm": _case("layer_norm", lambda r: ([_param(r, 3, 6), _param(r, 6), _param(r, 6)], ops.layer_norm)),
    "softmax": _case("softmax", lambda r: ([_param(r, 3, 5)], ops.softmax)),
    "log_softmax": _case("log_softmax", lambda r: ([_param(r, 3, 5)], ops.log_softmax)),
    "l2_normalize": _case("l2_normalize", lambda r: ([_param(r, 3, 5)], ops.l2_normalize)),
    "dropout": _case("dropout", lambda r: (
        [_param(r, 4, 6)], lambda x: ops.dropout(x, 0.3, np.random.default_rng(5), training=True))),
    "attention_self": _case("attention_self", lambda r: (
        [_param(r, 2, 3, 8), _param(r, 2, 3, 8), _param(r, 2, 3, 8)], lambda q, k, v: ops.attention(q, k, v, 2))),
    "attention_shared_memory": _case("attention_shared_memory", lambda r: (
        [_param(r, 2, 3, 8), _param(r, 5, 8), _param(r, 5, 8)], lambda q, k, v: ops.attention(q, k, v, 2))),
    "embedding": _case("embedding", lambda r: (
        [_param(r, 4, 3)], lambda t: ops.embedding(t, np.array([[0, 3], [3, 1]])))),
    "cross_entropy": _case("cross_entropy", lambda r: (
        [_param(r, 2, 3, 4)], lambda z: ops.cross_entropy(z, np.array([[0, 3, 1], [2, 2, 0]])))),
    "mse": _case("mse", lambda r: ([_param(r, 3, 4), _param(r, 3, 4)], ops.mse)),
}
