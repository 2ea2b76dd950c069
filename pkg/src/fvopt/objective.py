"""Bounded-domain objective abstraction consumed by the optimizer.

Two backends share one contract: evaluate a point, estimate a gradient
(possibly noisy), and account for every evaluation.  The synthetic backend
wraps a fitted landscape with exact analytic gradients; the QAOA backend runs
shot-sampled circuit estimates, so both its values and its central-difference
gradients are noisy.  Counting convention: the synthetic backend ticks once
per evaluate and not at all for its analytic gradient; the QAOA backend ticks
once per circuit estimate, i.e. 1 per evaluate and 2 * dim per gradient.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParamsError, OutOfDomainError


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned closed box lo <= x <= hi."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size < 1:
            raise InvalidParamsError("box corners must be matching d-vectors, d >= 1")
        if not np.all(lo < hi):
            raise InvalidParamsError("lo must be strictly below hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return x.shape == self.lo.shape and bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.lo + rng.random(self.dim) * (self.hi - self.lo)


def clip(x, box: DomainBox) -> np.ndarray:
    """Componentwise clamp of x into the box; idempotent."""
    return np.minimum(np.maximum(np.asarray(x, dtype=float), box.lo), box.hi)


class Objective:
    """Base class: domain checks and a lock-guarded evaluation counter."""

    def __init__(self, domain: DomainBox):
        self.domain = domain
        self._count = 0
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def eval_count(self) -> int:
        return self._count

    def _tick(self, amount: int = 1) -> None:
        with self._lock:
            self._count += amount

    def _require_in_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.domain.contains(x):
            raise OutOfDomainError(f"point {x} outside domain box")
        return x

    def evaluate(self, x, rng: np.random.Generator | None = None) -> float:
        raise NotImplementedError

    def estimate_gradient(self, x, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError


class SyntheticObjective(Objective):
    """Deterministic landscape objective with exact (uncounted) gradients."""

    def __init__(self, landscape):
        super().__init__(
            DomainBox(
                np.asarray(landscape.grid.domain_lo, dtype=float),
                np.asarray(landscape.grid.domain_hi, dtype=float),
            )
        )
        self.landscape = landscape

    def evaluate(self, x, rng=None) -> float:
        x = self._require_in_domain(x)
        self._tick()
        return self.landscape.value(x)

    def estimate_gradient(self, x, rng=None) -> np.ndarray:
        x = self._require_in_domain(x)
        return self.landscape.gradient(x)


class QaoaObjective(Objective):
    """Negated Max-Cut expectation estimate, so lower is better for the optimizer.

    shots == 0 is the exact-expectation mode, intended for oracle tests only.
    Gradients are central finite differences with per-dimension step
    fd_step_fraction * (hi - lo); every stencil point is measured with fresh
    shots.  Stencil points that would leave the box are clamped to it and the
    actual displacement is used in the denominator.
    """

    def __init__(self, problem, shots: int, fd_step_fraction: float = 0.01,
                 gradient_method: str = "central-difference"):
        if shots < 0:
            raise InvalidParamsError("shots must be >= 0 (0 means exact mode)")
        if gradient_method != "central-difference":
            raise InvalidParamsError(f"unsupported gradient method: {gradient_method!r}")
        if fd_step_fraction <= 0:
            raise InvalidParamsError("fd_step_fraction must be positive")
        super().__init__(problem.domain())
        self.problem = problem
        self.shots = int(shots)
        self.gradient_method = gradient_method
        self._h = fd_step_fraction * (self.domain.hi - self.domain.lo)

    def evaluate(self, x, rng=None) -> float:
        from . import qaoa

        x = self._require_in_domain(x)
        beta, gamma = self.problem.split(x)
        self._tick()
        if self.shots == 0:
            return -qaoa.expectation_exact(self.problem, beta, gamma)
        if rng is None:
            raise InvalidParamsError("shot-sampled evaluation needs an rng stream")
        return -qaoa.expectation_shots(self.problem, beta, gamma, self.shots, rng)

    def estimate_gradient(self, x, rng=None) -> np.ndarray:
        x = self._require_in_domain(x)
        grad = np.empty(self.dim)
        for i in range(self.dim):
            xp = x.copy()
            xm = x.copy()
            xp[i] = min(x[i] + self._h[i], self.domain.hi[i])
            xm[i] = max(x[i] - self._h[i], self.domain.lo[i])
            fp = self.evaluate(xp, rng)
            fm = self.evaluate(xm, rng)
            grad[i] = (fp - fm) / (xp[i] - xm[i])
        return grad
