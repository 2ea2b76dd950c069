"""Weighted Max-Cut instances and a small statevector QAOA simulator.

The circuit alternates a diagonal problem phase exp(-i*gamma*C) with a
product-of-X mixer exp(-i*beta*X_q) on every qubit, applied to the uniform
superposition.  Basis-state convention: qubit q is bit q of the amplitude
index (little-endian).  The cut-value diagonal is precomputed once per graph
and shared by every expectation query; per-call amplitude buffers keep
concurrent evaluations safe.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParamsError, OutOfDomainError, TooLargeError
from .objective import DomainBox

GRAPH_FORMAT = "fvgraph/1"

# 2**24 amplitudes is the largest brute-force enumeration we support.
MAX_ORACLE_NODES = 24

NORM_TOLERANCE = 1e-10


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected nonnegative-weight graph given by its symmetric weight matrix."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 2:
            raise InvalidParamsError("weights must be a square matrix of size >= 2")
        if not np.allclose(w, w.T):
            raise InvalidParamsError("weight matrix must be symmetric")
        if np.any(np.diag(w) != 0):
            raise InvalidParamsError("weight matrix must have a zero diagonal")
        if np.any(w < 0):
            raise InvalidParamsError("weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def total_weight(self) -> float:
        return float(self.weights.sum() / 2.0)

    def to_dict(self) -> dict:
        iu = np.triu_indices(self.n, 1)
        return {
            "version": GRAPH_FORMAT,
            "n": self.n,
            "weights_upper": [float(v) for v in self.weights[iu]],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "WeightedGraph":
        if d.get("version") != GRAPH_FORMAT:
            raise InvalidParamsError(f"unsupported graph file version: {d.get('version')!r}")
        n = int(d["n"])
        upper = np.asarray(d["weights_upper"], dtype=float)
        if upper.size != n * (n - 1) // 2:
            raise InvalidParamsError("weights_upper length does not match n")
        w = np.zeros((n, n))
        w[np.triu_indices(n, 1)] = upper
        return cls(w + w.T)

    @classmethod
    def load(cls, path) -> "WeightedGraph":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def random_graph(n: int, rng: np.random.Generator) -> WeightedGraph:
    """Fully connected graph on n nodes with i.i.d. Uniform[0, 1] edge weights."""
    if n < 2:
        raise InvalidParamsError("need at least 2 nodes")
    w = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    w[iu] = rng.random(len(iu[0]))
    return WeightedGraph(w + w.T)


def _bits_to_array(bits, n: int) -> np.ndarray:
    if isinstance(bits, str):
        if len(bits) != n or set(bits) - {"0", "1"}:
            raise InvalidParamsError(f"bitstring must be {n} characters of 0/1")
        return np.fromiter((int(c) for c in bits), dtype=int, count=n)
    arr = np.asarray(bits, dtype=int)
    if arr.shape != (n,):
        raise InvalidParamsError(f"bit vector must have length {n}")
    return arr


def cut_value(graph: WeightedGraph, bits) -> float:
    """Total weight of edges crossing the 0/1 partition.

    Accepts a bitstring ("0110", character i = node i) or an int vector.
    """
    b = _bits_to_array(bits, graph.n)
    crossing = b[:, None] != b[None, :]
    return float((graph.weights * crossing).sum() / 2.0)


def cut_values(graph: WeightedGraph) -> np.ndarray:
    """Cut value of every basis state, indexed by little-endian bitstring integer."""
    n = graph.n
    if n > MAX_ORACLE_NODES:
        raise TooLargeError(f"enumeration supports at most {MAX_ORACLE_NODES} nodes")
    z = np.arange(1 << n, dtype=np.int64)
    bits = (z[:, None] >> np.arange(n)) & 1
    totals = np.zeros(1 << n)
    for i in range(n):
        for j in range(i + 1, n):
            w = graph.weights[i, j]
            if w != 0.0:
                totals += w * (bits[:, i] ^ bits[:, j])
    return totals


def max_cut_oracle(graph: WeightedGraph) -> tuple[float, str]:
    """Exhaustive Max-Cut: best value and one maximizing bitstring.

    Ties are broken by the lowest bitstring read as a binary numeral with
    node 0 as the most significant character.
    """
    n = graph.n
    if n > MAX_ORACLE_NODES:
        raise TooLargeError(f"enumeration supports at most {MAX_ORACLE_NODES} nodes")
    cuts = cut_values(graph)
    best = float(cuts.max())
    candidates = np.flatnonzero(cuts == best)
    z = np.arange(1 << n, dtype=np.int64)
    bits = (z[candidates, None] >> np.arange(n)) & 1
    numerals = bits @ (1 << np.arange(n - 1, -1, -1, dtype=np.int64))
    winner = candidates[int(np.argmin(numerals))]
    bitstring = "".join(str((winner >> q) & 1) for q in range(n))
    return best, bitstring


@dataclass
class QaoaProblem:
    """L-layer Max-Cut QAOA instance with the standard parameter box.

    The optimization vector is laid out as [beta_1..beta_L, gamma_1..gamma_L]
    with beta in [0, pi] and gamma in [0, 2*pi].
    """

    graph: WeightedGraph
    layers: int = 1
    _diagonal: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.layers < 1:
            raise InvalidParamsError("layers must be >= 1")

    @property
    def dim(self) -> int:
        return 2 * self.layers

    def domain(self) -> DomainBox:
        lo = np.zeros(self.dim)
        hi = np.concatenate(
            [np.full(self.layers, math.pi), np.full(self.layers, 2 * math.pi)]
        )
        return DomainBox(lo, hi)

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidParamsError(f"parameter vector must have length {self.dim}")
        return x[: self.layers], x[self.layers :]

    def cut_diagonal(self) -> np.ndarray:
        if self._diagonal is None:
            self._diagonal = cut_values(self.graph)
        return self._diagonal


def _check_angles(problem: QaoaProblem, beta, gamma) -> tuple[np.ndarray, np.ndarray]:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    L = problem.layers
    if beta.shape != (L,) or gamma.shape != (L,):
        raise InvalidParamsError(f"need {L} beta and {L} gamma angles")
    if np.any(beta < 0) or np.any(beta > math.pi) or np.any(gamma < 0) or np.any(gamma > 2 * math.pi):
        raise OutOfDomainError("angles outside the parameter box")
    return beta, gamma


def _apply_mixer(psi: np.ndarray, n: int, beta: float) -> np.ndarray:
    """Apply exp(-i*beta*X_q) on every qubit q via 2x2 butterflies."""
    c = math.cos(beta)
    s = math.sin(beta)
    for q in range(n):
        psi = psi.reshape(-1, 2, 1 << q)
        a0 = psi[:, 0, :].copy()
        a1 = psi[:, 1, :]
        psi[:, 0, :] = c * a0 - 1j * s * a1
        psi[:, 1, :] = c * a1 - 1j * s * a0
        psi = psi.reshape(-1)
    return psi


def qaoa_state(problem: QaoaProblem, beta, gamma) -> np.ndarray:
    """Statevector after L alternating phase/mixer layers on the uniform state."""
    beta, gamma = _check_angles(problem, beta, gamma)
    n = problem.graph.n
    diag = problem.cut_diagonal()
    psi = np.full(1 << n, 2.0 ** (-n / 2.0), dtype=complex)
    for layer in range(problem.layers):
        psi = psi * np.exp(-1j * gamma[layer] * diag)
        psi = _apply_mixer(psi, n, beta[layer])
    norm = float(np.sum(np.abs(psi) ** 2))
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise RuntimeError(f"statevector norm drifted to {norm}")
    return psi


def expectation_exact(problem: QaoaProblem, beta, gamma) -> float:
    """Exact expectation of the cut value in the QAOA output state."""
    psi = qaoa_state(problem, beta, gamma)
    probs = np.abs(psi) ** 2
    return float(probs @ problem.cut_diagonal())


def expectation_shots(
    problem: QaoaProblem, beta, gamma, shots: int, rng: np.random.Generator
) -> float:
    """Mean cut value over `shots` sampled bitstrings; unbiased for expectation_exact.

    Sampling inverts the cumulative distribution of the 2**n outcome
    probabilities against uniform draws.
    """
    if shots < 1:
        raise InvalidParamsError("shots must be >= 1")
    psi = qaoa_state(problem, beta, gamma)
    cdf = np.cumsum(np.abs(psi) ** 2)
    draws = rng.random(shots)
    idx = np.minimum(np.searchsorted(cdf, draws, side="right"), cdf.size - 1)
    return float(problem.cut_diagonal()[idx].mean())
