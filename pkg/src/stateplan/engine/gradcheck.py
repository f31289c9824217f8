"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    errors: list[float]
    tolerance: float
    names: list[str]

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.errors)

    def __str__(self) -> str:
        lines = [f"{n}: {e:.3e}" for n, e in zip(self.names, self.errors)]
        status = "PASS" if self.passed else "FAIL"
        return f"gradcheck {status} (tol {self.tolerance:g})\n" + "\n".join(lines)


def finite_diff_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    tolerance: float = 1e-3,
    step: float = 1e-3,
    names: Sequence[str] | None = None,
    max_entries: int | None = None,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients of ``fn`` with central differences.

    The error reported per parameter is ``max|analytic - numeric|`` divided by
    the larger of the two gradients' max-abs values (at least ``floor``), so
    entries whose true gradient is tiny are judged against the parameter's
    overall scale, and parameters with an exactly zero gradient are not
    judged on roundoff alone. ``max_entries`` subsamples large parameters.
    Run inside ``default_dtype(np.float64)`` with float64 parameters.
    """
    for p in params:
        p.grad = None
    loss = fn()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    rng = np.random.default_rng(seed)
    errors = []
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
            numeric = np.empty(idx.size)
            for n, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + step
                up = fn().item()
                flat[i] = orig - step
                down = fn().item()
                flat[i] = orig
                numeric[n] = (up - down) / (2 * step)
            a_sel = a.reshape(-1)[idx]
            scale = max(np.abs(a_sel).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
            errors.append(float(np.abs(a_sel - numeric).max(initial=0.0) / scale))
    for p in params:
        p.grad = None
    labels = list(names) if names is not None else [f"param{i}{tuple(p.shape)}" for i, p in enumerate(params)]
    return GradCheckReport(errors=errors, tolerance=tolerance, names=labels)
