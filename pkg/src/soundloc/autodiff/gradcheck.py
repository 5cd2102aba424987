"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    discrepancy: dict = field(default_factory=dict)
    tol: float = 1e-4
    checked_entries: int = 0

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancy.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_discrepancy <= self.tol

    def __str__(self):
        worst = max(self.discrepancy, key=self.discrepancy.get, default="-")
        status = "PASS" if self.passed else "FAIL"
        return f"grad_check {status}: max rel. discrepancy {self.max_discrepancy:.3e} ({worst}), tol {self.tol:g}"


def grad_check(f, params, step: float = 1e-5, tol: float = 1e-4, max_entries: int | None = None,
               seed: int = 0) -> GradCheckReport:
    """Compare the tape gradient of scalar ``f()`` with central differences.

    Parameters
    ----------
    f : callable
        Zero-argument function rebuilding the scalar loss from ``params``.
    params : dict of name -> Tensor, or list of Tensor
    step : float
        Relative step; entry ``x`` is perturbed by ``step * max(1, |x|)``.
    tol : float
        Pass threshold on the per-parameter maximum relative discrepancy.
    max_entries : int, optional
        Check at most this many randomly chosen entries per parameter.

    Notes
    -----
    The relative discrepancy of an entry is ``|a - n| / max(|a|, |n|, floor)``
    where the floor is ``1e-6`` times the largest analytic gradient magnitude,
    so entries whose true gradient is zero are judged on an absolute scale.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if not isinstance(params, dict):
        params = {f"param{i}": p for i, p in enumerate(params)}
    for p in params.values():
        p.grad = None
    loss = f()
    backward(loss)
    analytic = {k: (np.zeros(p.shape) if p.grad is None else p.grad.copy()) for k, p in params.items()}
    scale = max((float(np.max(np.abs(a))) for a in analytic.values() if a.size), default=0.0)
    floor = max(1e-6 * scale, 1e-12)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        for i in idx:
            orig = flat[i]
            h = step * max(1.0, abs(orig))
            with no_grad():
                flat[i] = orig + h
                up = float(f().data)
                flat[i] = orig - h
                down = float(f().data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic[name].reshape(-1)[i]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
        report.discrepancy[name] = worst
        report.checked_entries += idx.size
    return report


def check_function(fn, inputs, step: float = 1e-5, tol: float = 1e-4, seed: int = 0) -> GradCheckReport:
    """Grad-check ``sum(fn(*inputs) * R)`` for a fixed random projection ``R``."""
    tensors = [x if isinstance(x, Tensor) else Tensor(x, requires_grad=True) for x in inputs]
    for t in tensors:
        t.requires_grad = True
    with no_grad():
        out_shape = fn(*tensors).shape
    proj = Tensor(np.random.default_rng(seed).standard_normal(out_shape))

    def f():
        return (fn(*tensors) * proj).sum()

    return grad_check(f, tensors, step=step, tol=tol, seed=seed)
