"""Simulated-annealing particle dynamics on a bounded domain.

One optimization step combines a noisy-gradient descent move with
sqrt(learning-rate)-scaled Gaussian exploration noise at a fixed temperature:

    x_next = clip(x - eta_k * g + sqrt(eta_k) * temperature * noise)

where eta_k = eta0 / (1 + k)^p decays along the particle's local step clock.
The initial rate eta0 is calibrated so that a typical first gradient move
covers a configurable fraction of the domain diagonal.  Each particle owns a
private RNG stream, so trajectories are reproducible and particles can step
concurrently.  Per-step draw order is fixed: gradient estimate first, then
the Gaussian noise vector, then the evaluation at the new position.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParamsError
from .objective import Objective, clip

# eta0 calibration probes: count and cloud size (fraction of the domain diagonal).
PROBE_COUNT = 5
PROBE_SCALE = 0.01


@dataclass(frozen=True)
class SaParams:
    """Dynamics constants.

    temperature -- noise level (the multiplier of sqrt(eta_k) * N(0, I)).
    lr_decay_power -- exponent p of the 1/(1+k)^p schedule; must exceed 0.5 so
        the squared rates stay summable while the rates themselves are not.
    lr_target_step_fraction -- fraction of the domain diagonal a calibrated
        first gradient step should cover.
    grad_floor -- additive guard in calibration denominators.
    grad_norm_order -- norm used for recorded gradient magnitudes.
    """

    temperature: float = 0.1
    lr_decay_power: float = 1.0
    lr_target_step_fraction: float = 0.05
    grad_floor: float = 1e-8
    grad_norm_order: int = 2

    def __post_init__(self):
        if self.temperature < 0:
            raise InvalidParamsError("temperature must be nonnegative")
        if self.lr_decay_power <= 0.5:
            raise InvalidParamsError("lr_decay_power must exceed 0.5")
        if self.lr_target_step_fraction <= 0:
            raise InvalidParamsError("lr_target_step_fraction must be positive")
        if self.grad_floor <= 0:
            raise InvalidParamsError("grad_floor must be positive")


@dataclass
class Particle:
    """One optimizer instance: position, schedule state, gradient memory, RNG."""

    position: np.ndarray
    rng: np.random.Generator
    eta0: float = 0.0
    step_index: int = 0
    grad_norm_history: deque = field(default_factory=lambda: deque(maxlen=1))
    best_value: float = math.inf
    best_position: np.ndarray | None = None
    alive: bool = True
    # Set on reinitialization: the next observed gradient recalibrates eta0,
    # so regeneration never consumes budgeted objective calls.
    eta0_pending: bool = False

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)


def make_particle(position, rng: np.random.Generator, window: int, eta0: float) -> Particle:
    if window < 1:
        raise InvalidParamsError("window must be >= 1")
    return Particle(
        position=np.asarray(position, dtype=float).copy(),
        rng=rng,
        eta0=eta0,
        grad_norm_history=deque(maxlen=window),
    )


def _target_step(obj: Objective, params: SaParams) -> float:
    return params.lr_target_step_fraction * obj.domain.diagonal()


def calibrate_eta0(
    obj: Objective, x0, params: SaParams, rng: np.random.Generator
) -> float:
    """Initial learning rate from gradient magnitudes probed near the start point.

    Probes are a Gaussian cloud of scale PROBE_SCALE * diagonal around x0
    (clipped into the box); eta0 is the rate whose gradient move matches the
    target step length against the median probed norm.  A flat neighbourhood
    degrades gracefully to target_step / grad_floor.
    """
    x0 = np.asarray(x0, dtype=float)
    radius = PROBE_SCALE * obj.domain.diagonal()
    norms = []
    for _ in range(PROBE_COUNT):
        probe = clip(x0 + radius * rng.standard_normal(obj.dim), obj.domain)
        g = obj.estimate_gradient(probe, rng)
        norms.append(float(np.linalg.norm(g, ord=params.grad_norm_order)))
    return _target_step(obj, params) / (float(np.median(norms)) + params.grad_floor)


def learning_rate(p: Particle, params: SaParams) -> float:
    """Current schedule value eta_k = eta0 / (1 + k)^p."""
    return p.eta0 / (1.0 + p.step_index) ** params.lr_decay_power


def sa_step(p: Particle, obj: Objective, params: SaParams) -> float:
    """Advance one annealing step in place; returns the observed gradient norm."""
    g = obj.estimate_gradient(p.position, p.rng)
    gnorm = float(np.linalg.norm(g, ord=params.grad_norm_order))
    if p.eta0_pending:
        p.eta0 = _target_step(obj, params) / (gnorm + params.grad_floor)
        p.eta0_pending = False
    eta = learning_rate(p, params)
    noise = p.rng.standard_normal(p.position.size)
    p.position = clip(
        p.position - eta * g + math.sqrt(eta) * params.temperature * noise, obj.domain
    )
    p.step_index += 1
    p.grad_norm_history.append(gnorm)
    value = obj.evaluate(p.position, p.rng)
    if value < p.best_value:
        p.best_value = value
        p.best_position = p.position.copy()
    return gnorm


def windowed_grad_norm(p: Particle) -> float:
    """Mean recorded gradient norm over the window; +inf while the window is empty.

    The +inf sentinel makes a particle with no history unabsorbable.
    """
    if not p.grad_norm_history:
        return math.inf
    return float(np.mean(p.grad_norm_history))
