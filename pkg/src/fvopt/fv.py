"""Kill-and-regenerate controller coordinating parallel annealing particles.

A burn-in phase (no killing) averages the gradient norms every particle
observes and freezes the absorption reference at alpha times that average.
Afterwards the run is iteration-synchronous: all particles take one step, then
an absorption sweep kills every particle whose windowed mean gradient norm
fell below the reference and immediately regenerates it, either at a uniform
random point of the domain (exploration, probability epsilon) or on top of a
surviving particle chosen uniformly at random (exploitation).  Regeneration
consumes no optimizer steps and no objective evaluations, so a run always
spends exactly N * (burn_in + iterations) steps regardless of how many
particles are killed.

Randomness is split into per-particle streams (gradient shots and step noise)
plus one controller stream (absorption coin flips, regeneration positions,
source choices), all derived from the run seed.  With alpha = 0 the controller
stream is never drawn from, so the run is bitwise identical to independent
annealing chains with the same seeds.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .annealer import (
    Particle,
    SaParams,
    calibrate_eta0,
    learning_rate,
    make_particle,
    sa_step,
    windowed_grad_norm,
)
from .errors import InvalidParamsError, NoAliveSourceError
from .objective import DomainBox, Objective

EVENT_ABSORBED = "absorbed"
EVENT_REINITIALIZED = "reinitialized"
EVENT_REACTIVATED = "reactivated"
# Exploitation was drawn but every particle was absorbed in the same sweep;
# the particle falls back to exploration so the run can continue.
EVENT_REINITIALIZED_NO_SOURCE = "reinitialized_no_source"

REACTIVATION_LR_MODES = ("source_initial", "source_current")


@dataclass(frozen=True)
class FvConfig:
    """Controller hyperparameters.

    iterations -- optimization sweeps per particle after burn-in.
    particles -- population size (at least 2).
    burn_in -- sweeps used only to calibrate the absorption reference.
    window -- number of recent gradient norms averaged in the absorption test.
    alpha -- relative threshold: reference = alpha * burn-in average norm.
    epsilon -- exploration rate: probability a killed particle is reinitialized
        uniformly rather than copied onto a survivor.
    seed -- run seed; spawns particle streams and the controller stream.
    reactivation_lr -- whether a reactivated particle adopts the source's
        initial learning rate (literal rule) or its current decayed rate.
    """

    iterations: int = 50
    particles: int = 10
    burn_in: int = 5
    window: int = 5
    alpha: float = 1.0
    epsilon: float = 1.0
    seed: int = 0
    reactivation_lr: str = "source_initial"

    def __post_init__(self):
        if self.particles < 2:
            raise InvalidParamsError("need at least 2 particles")
        if self.burn_in < 1:
            raise InvalidParamsError("burn_in must be >= 1")
        if self.window < 1:
            raise InvalidParamsError("window must be >= 1")
        if self.alpha < 0:
            raise InvalidParamsError("alpha must be nonnegative")
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidParamsError("epsilon must lie in [0, 1]")
        if self.iterations < 0:
            raise InvalidParamsError("iterations must be nonnegative")
        if self.reactivation_lr not in REACTIVATION_LR_MODES:
            raise InvalidParamsError(f"reactivation_lr must be one of {REACTIVATION_LR_MODES}")


@dataclass(frozen=True)
class FvEvent:
    """One controller decision, keyed by main-loop iteration (1-based)."""

    iteration: int
    particle: int
    event: str
    source: int | None
    ref_gradient: float
    window_mean: float


@dataclass
class FvState:
    """Controller state between sweeps; exposed for stepwise drivers and tests."""

    particles: list[Particle]
    ref_gradient: float | None = None
    iteration: int = 0
    events: list[FvEvent] = field(default_factory=list)


@dataclass
class FvRunResult:
    """Everything a harness needs from one run.

    best_value is min over particles of their best seen objective value;
    grad_norm_trace has one row per sweep (burn-in rows first) and one column
    per particle; best_trace is the running global best after each sweep.
    """

    best_value: float
    best_position: np.ndarray
    per_particle_best: list[float]
    events: list[FvEvent]
    ref_gradient: float
    eval_count: int
    burn_in_sweeps: int
    main_iterations: int
    total_steps: int
    absorptions: int
    reinitializations: int
    reactivations: int
    grad_norm_trace: np.ndarray
    best_trace: np.ndarray
    seed: int

    def event_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self.events:
            counts[e.event] = counts.get(e.event, 0) + 1
        return counts


def reinitialize(p: Particle, box: DomainBox, rng: np.random.Generator) -> None:
    """Move an absorbed particle to a uniform random point and wipe its memory.

    The gradient history and step clock reset; eta0 is recalibrated from the
    first gradient observed at the new position (deferred so regeneration
    costs no objective evaluations).
    """
    p.position = box.sample(rng)
    p.grad_norm_history.clear()
    p.step_index = 0
    p.eta0_pending = True
    p.alive = True


def reactivate(
    p: Particle,
    alive: list[tuple[int, Particle]],
    rng: np.random.Generator,
    sa: SaParams,
    lr_mode: str = "source_initial",
) -> int:
    """Copy an absorbed particle onto a surviving one; returns the source index.

    Position and the last-window gradient norms are copied; the learning-rate
    clock restarts from the source's initial rate so the pair diverges quickly
    under their independent noise streams.
    """
    if not alive:
        raise NoAliveSourceError("no surviving particle to reactivate from")
    src_idx, src = alive[int(rng.integers(len(alive)))]
    p.position = src.position.copy()
    p.grad_norm_history = deque(src.grad_norm_history, maxlen=src.grad_norm_history.maxlen)
    p.eta0 = src.eta0 if lr_mode == "source_initial" else learning_rate(src, sa)
    p.step_index = 0
    p.eta0_pending = False
    p.alive = True
    return src_idx


def burn_in(
    state: FvState, obj: Objective, sa: SaParams, cfg: FvConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Run the burn-in sweeps and freeze the absorption reference.

    Returns the (burn_in, N) gradient-norm trace and the per-sweep running
    best values.  No particle is absorbed here.
    """
    trace = np.empty((cfg.burn_in, len(state.particles)))
    best = np.empty(cfg.burn_in)
    for sweep in range(cfg.burn_in):
        for j, p in enumerate(state.particles):
            trace[sweep, j] = sa_step(p, obj, sa)
        best[sweep] = min(p.best_value for p in state.particles)
    state.ref_gradient = cfg.alpha * float(trace.mean())
    return trace, best


def _absorption_sweep(
    state: FvState,
    obj: Objective,
    sa: SaParams,
    cfg: FvConfig,
    controller: np.random.Generator,
    iteration: int,
) -> None:
    """Kill and regenerate every particle below the reference, in index order.

    Absorption is decided for all particles against the pre-sweep snapshot, so
    a particle regenerated earlier in the same sweep can never serve as a
    reactivation source.
    """
    ref = state.ref_gradient
    means = [windowed_grad_norm(p) for p in state.particles]
    absorbed = [j for j, mean in enumerate(means) if mean < ref]
    if not absorbed:
        return
    alive = [(j, state.particles[j]) for j in range(len(state.particles)) if j not in absorbed]
    for j in absorbed:
        p = state.particles[j]
        p.alive = False
        state.events.append(FvEvent(iteration, j, EVENT_ABSORBED, None, ref, means[j]))
        if controller.random() < cfg.epsilon:
            reinitialize(p, obj.domain, controller)
            state.events.append(
                FvEvent(iteration, j, EVENT_REINITIALIZED, None, ref, means[j])
            )
        elif alive:
            src = reactivate(p, alive, controller, sa, cfg.reactivation_lr)
            state.events.append(
                FvEvent(iteration, j, EVENT_REACTIVATED, src, ref, means[j])
            )
        else:
            reinitialize(p, obj.domain, controller)
            state.events.append(
                FvEvent(iteration, j, EVENT_REINITIALIZED_NO_SOURCE, None, ref, means[j])
            )


def fv_run(
    cfg: FvConfig,
    obj: Objective,
    ansatze,
    sa: SaParams,
    stop_when_best_below: float | None = None,
) -> FvRunResult:
    """Full controller run from the given start points.

    ansatze must be `particles` in-domain d-vectors.  When
    stop_when_best_below is set, the main loop ends early once the global best
    value reaches it (used by hitting-time studies); the budget-parity
    guarantee applies to full runs.
    """
    ansatze = np.asarray(ansatze, dtype=float)
    if ansatze.shape != (cfg.particles, obj.dim):
        raise InvalidParamsError(
            f"need {cfg.particles} ansatze of dimension {obj.dim}, got {ansatze.shape}"
        )
    for a in ansatze:
        if not obj.domain.contains(a):
            raise InvalidParamsError(f"ansatz {a} outside the domain box")

    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.particles + 1)
    controller = np.random.Generator(np.random.Philox(streams[cfg.particles]))

    count_start = obj.eval_count
    particles = []
    for j in range(cfg.particles):
        rng = np.random.Generator(np.random.Philox(streams[j]))
        eta0 = calibrate_eta0(obj, ansatze[j], sa, rng)
        p = make_particle(ansatze[j], rng, cfg.window, eta0)
        p.best_value = obj.evaluate(p.position, p.rng)
        p.best_position = p.position.copy()
        particles.append(p)

    state = FvState(particles=particles)
    burn_trace, burn_best = burn_in(state, obj, sa, cfg)

    main_trace = np.empty((cfg.iterations, cfg.particles))
    main_best = np.empty(cfg.iterations)
    ran = 0
    for t in range(1, cfg.iterations + 1):
        state.iteration = t
        for j, p in enumerate(particles):
            main_trace[t - 1, j] = sa_step(p, obj, sa)
        _absorption_sweep(state, obj, sa, cfg, controller, t)
        best_now = min(p.best_value for p in particles)
        main_best[t - 1] = best_now
        ran = t
        if stop_when_best_below is not None and best_now <= stop_when_best_below:
            break

    counts = {EVENT_ABSORBED: 0, EVENT_REINITIALIZED: 0, EVENT_REACTIVATED: 0,
              EVENT_REINITIALIZED_NO_SOURCE: 0}
    for e in state.events:
        counts[e.event] += 1

    best_j = int(np.argmin([p.best_value for p in particles]))
    return FvRunResult(
        best_value=particles[best_j].best_value,
        best_position=particles[best_j].best_position.copy(),
        per_particle_best=[p.best_value for p in particles],
        events=state.events,
        ref_gradient=state.ref_gradient,
        eval_count=obj.eval_count - count_start,
        burn_in_sweeps=cfg.burn_in,
        main_iterations=ran,
        total_steps=cfg.particles * (cfg.burn_in + ran),
        absorptions=counts[EVENT_ABSORBED],
        reinitializations=counts[EVENT_REINITIALIZED] + counts[EVENT_REINITIALIZED_NO_SOURCE],
        reactivations=counts[EVENT_REACTIVATED],
        grad_norm_trace=np.vstack([burn_trace, main_trace[:ran]]),
        best_trace=np.concatenate([burn_best, main_best[:ran]]),
        seed=cfg.seed,
    )


def event_log_lines(events) -> list[str]:
    """Line-delimited export: iter,particle,event,source,ref_gradient,window_mean."""
    lines = ["iter,particle,event,source,ref_gradient,window_mean"]
    for e in events:
        source = "" if e.source is None else str(e.source)
        lines.append(
            f"{e.iteration},{e.particle},{e.event},{source},{e.ref_gradient!r},{e.window_mean!r}"
        )
    return lines


def write_event_log(events, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(event_log_lines(events)) + "\n")
