"""Compare the compiled Viterbi kernel with the numpy fallback.

    python3 benchmarks/bench_viterbi.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from stateplan import kernels

SHAPES = [(1500, 3, 24), (1500, 6, 24), (512, 4, 133), (64, 6, 778)]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.viterbi_batch_compiled is None:
        raise SystemExit("compiled extension not built; reinstall with cython available")
    r = np.random.default_rng(0)
    print(f"{'N':>6} {'T':>3} {'C':>5} {'numpy ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for N, T, C in SHAPES:
        log_B = np.log(r.dirichlet(np.ones(C), size=(N, T)))
        log_A = np.log(r.dirichlet(np.ones(C), size=C))
        p1, s1 = kernels.viterbi_batch_numpy(log_B, log_A)
        p2, s2 = kernels.viterbi_batch_compiled(log_B, log_A)
        assert np.array_equal(p1, p2) and np.array_equal(s1, s2)
        t_np = min(timeit.repeat(lambda: kernels.viterbi_batch_numpy(log_B, log_A), number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(lambda: kernels.viterbi_batch_compiled(log_B, log_A), number=1, repeat=args.repeat))
        print(f"{N:>6} {T:>3} {C:>5} {1e3 * t_np:>10.2f} {1e3 * t_c:>12.2f} {t_np / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
