"""Central finite-difference checks for the loss kernels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import loss_kernels as lk

STEP = 1e-4
REL_TOL = 1e-5
# denominator floor so entries with ~zero gradient are judged on absolute error
REL_FLOOR = 1e-8


def numeric_grad(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = STEP) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a, n = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)
    return float(np.max(np.abs(a - n) / denom))


@dataclass(frozen=True)
class CheckResult:
    kernel: str
    trials: int
    worst_rel_error: float
    passed: bool


def _random_case(kernel: str, rng: np.random.Generator, size: tuple[int, int, int]):
    h, w, c = size
    if kernel == "softmax_ce":
        x = rng.normal(size=(h, w, c))
        t = rng.integers(0, c, size=(h, w))
        return x, lambda s: lk.softmax_ce(s, t)
    if kernel == "sigmoid_ce":
        x = rng.normal(size=(h, w, c))
        t = rng.integers(0, 2, size=(h, w, c))
        return x, lambda s: lk.sigmoid_ce(s, t)
    if kernel == "smooth_l1":
        n = h * w
        q = rng.normal(size=n)
        while True:
            x = q + rng.normal(scale=1.5, size=n)
            # keep clear of the |d| = 1 kink
            if np.all(np.abs(np.abs(x - q) - 1.0) > 10 * STEP):
                break
        return x, lambda s: lk.smooth_l1(s, q)
    if kernel == "classification_ce":
        n = h * w
        x = rng.normal(size=(n, c))
        t = rng.integers(0, c, size=n)
        return x, lambda s: lk.classification_ce(s, t)
    raise KeyError(kernel)


KERNELS = ("softmax_ce", "sigmoid_ce", "smooth_l1", "classification_ce")


def check_kernel(
    kernel: str,
    trials: int = 100,
    seed: int = 0,
    size: tuple[int, int, int] = (4, 4, 3),
    tol: float = REL_TOL,
    flip_sign: bool = False,
) -> CheckResult:
    """Compare analytic and numeric gradients on ``trials`` random inputs.

    ``flip_sign`` negates the analytic gradient (negative control).
    """
    rng = np.random.default_rng([seed, KERNELS.index(kernel)])
    worst = 0.0
    for _ in range(trials):
        x, fn = _random_case(kernel, rng, size)
        _, g = fn(x)
        if flip_sign:
            g = -g
        num = numeric_grad(lambda s: fn(s)[0], x)
        worst = max(worst, max_rel_error(g, num))
    return CheckResult(kernel, trials, worst, worst < tol)
