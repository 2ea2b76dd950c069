"""Synthetic 2D test functions with a controlled fraction of flat (barren) areas.

A landscape is assembled by assigning values at grid points -- a high constant
on a border margin, constant patches on randomly placed interior squares, and
one deep negative value at a random interior point -- and then fitting a
penalized tensor-product cubic B-spline through the assigned points.  The
fitted surface is the test function; value and gradient queries are exact
spline evaluations and are safe for concurrent read-only use.

Conventions:
    * grid_values[i, j] is the fitted surface at (x_i, y_j), with x indexing
      axis 0 and y indexing axis 1.
    * spline coefficients form an (m, m) array, m = points_per_dim + 2, stored
      row-major over (x-basis, y-basis) in the serialized file.
    * placed squares are tracked as inclusive cell-index rectangles; squares
      that share cells are merged into one barren area but each cell keeps the
      value it was first assigned.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.interpolate import BSpline
from scipy.sparse.linalg import MatrixRankWarning, lsqr, spsolve

from .errors import (
    InvalidParamsError,
    NonConvergentError,
    OutOfDomainError,
    SingularSystemError,
)

LANDSCAPE_FORMAT = "fvland/1"

_DEGREE = 3
# Whole-process reruns allowed when the fitted minimum lands on the border;
# retry k reseeds the synthesis stream with rng_seed + k.
_MAX_RETRIES = 64
# Dense least-squares is cheaper than iterative below this coefficient count.
_DENSE_LSTSQ_LIMIT = 4096


@dataclass(frozen=True)
class GridSpec:
    """Rectangular domain sampled by `points_per_dim` equispaced points per axis."""

    domain_lo: tuple[float, float] = (0.0, 0.0)
    domain_hi: tuple[float, float] = (1.0, 1.0)
    points_per_dim: int = 100

    def __post_init__(self):
        lo = np.asarray(self.domain_lo, dtype=float)
        hi = np.asarray(self.domain_hi, dtype=float)
        if lo.shape != (2,) or hi.shape != (2,):
            raise InvalidParamsError("domain corners must be 2-vectors")
        if not np.all(lo < hi):
            raise InvalidParamsError("domain_lo must be strictly below domain_hi componentwise")
        if int(self.points_per_dim) < 4:
            raise InvalidParamsError("cubic splines need at least 4 grid points per axis")

    def axis_points(self, axis: int) -> np.ndarray:
        return np.linspace(self.domain_lo[axis], self.domain_hi[axis], self.points_per_dim)

    def to_dict(self) -> dict:
        return {
            "lo": [float(v) for v in self.domain_lo],
            "hi": [float(v) for v in self.domain_hi],
            "points_per_dim": int(self.points_per_dim),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(tuple(d["lo"]), tuple(d["hi"]), int(d["points_per_dim"]))


@dataclass(frozen=True)
class SynthesisParams:
    """Knobs of the synthesis procedure.

    nominal_barren_fraction -- placement stops once this fraction of all grid
        points is covered by constant patches.
    plateau_width -- side of each placed square, in grid cells.
    border_margin -- grid cells next to the boundary that receive border_value
        and that patches must not touch.
    smoothing -- penalty weight of the spline fit (0 = interpolating).
    border_value -- value assigned on the margin, discouraging border minima.
    minimum_scale -- lognormal scale of the depth draw; the assigned minimum
        is minus that draw.
    rng_seed -- seed of the synthesis stream.
    """

    nominal_barren_fraction: float = 0.7
    plateau_width: int = 10
    border_margin: int = 2
    smoothing: float = 1.0
    border_value: float = 2.0
    minimum_scale: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.nominal_barren_fraction <= 1.0:
            raise InvalidParamsError("nominal_barren_fraction must lie in [0, 1]")
        if self.plateau_width < 1:
            raise InvalidParamsError("plateau_width must be >= 1")
        if self.border_margin < 1:
            raise InvalidParamsError("border_margin must be >= 1")
        if self.smoothing < 0:
            raise InvalidParamsError("smoothing must be nonnegative")
        if self.minimum_scale <= 0:
            raise InvalidParamsError("minimum_scale must be positive")

    def to_dict(self) -> dict:
        return {
            "nominal_barren_fraction": float(self.nominal_barren_fraction),
            "plateau_width": int(self.plateau_width),
            "border_margin": int(self.border_margin),
            "smoothing": float(self.smoothing),
            "border_value": float(self.border_value),
            "minimum_scale": float(self.minimum_scale),
            "rng_seed": int(self.rng_seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisParams":
        return cls(
            nominal_barren_fraction=float(d["nominal_barren_fraction"]),
            plateau_width=int(d["plateau_width"]),
            border_margin=int(d["border_margin"]),
            smoothing=float(d["smoothing"]),
            border_value=float(d["border_value"]),
            minimum_scale=float(d["minimum_scale"]),
            rng_seed=int(d["rng_seed"]),
        )


@dataclass(frozen=True)
class Plateau:
    """One placed square: inclusive cell-index rectangle plus its assigned value."""

    row0: int
    row1: int
    col0: int
    col1: int
    value: float

    def cells(self) -> set[tuple[int, int]]:
        return {
            (i, j)
            for i in range(self.row0, self.row1 + 1)
            for j in range(self.col0, self.col1 + 1)
        }


class _AxisBasis:
    """Clamped cubic B-spline basis with knots on one axis' grid lines."""

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=float)
        self.knots = np.concatenate(
            [np.repeat(points[0], _DEGREE), points, np.repeat(points[-1], _DEGREE)]
        )
        self.size = len(points) + _DEGREE - 1
        self._basis = BSpline(self.knots, np.eye(self.size), _DEGREE)
        self._dbasis = self._basis.derivative()

    def rows(self, x, deriv: int = 0) -> np.ndarray:
        """Dense rows of basis (or first-derivative) values at the points in x."""
        b = self._dbasis if deriv else self._basis
        return b(np.asarray(x, dtype=float))

    def design_rows(self, x) -> sparse.csr_matrix:
        """Sparse design matrix at sample locations (4 nonzeros per row)."""
        return BSpline.design_matrix(np.asarray(x, dtype=float), self.knots, _DEGREE)


def _tensor_design(bx: _AxisBasis, by: _AxisBasis, xs, ys) -> sparse.csr_matrix:
    """Row-wise Kronecker product of the per-axis design rows."""
    ax = bx.design_rows(xs)
    ay = by.design_rows(ys)
    n_samples = ax.shape[0]
    k1 = _DEGREE + 1
    dx = ax.data.reshape(n_samples, k1)
    dy = ay.data.reshape(n_samples, k1)
    cx = ax.indices.reshape(n_samples, k1)
    cy = ay.indices.reshape(n_samples, k1)
    data = (dx[:, :, None] * dy[:, None, :]).reshape(n_samples, k1 * k1)
    cols = (cx[:, :, None] * by.size + cy[:, None, :]).reshape(n_samples, k1 * k1)
    indptr = np.arange(0, k1 * k1 * (n_samples + 1), k1 * k1)
    return sparse.csr_matrix(
        (data.ravel(), cols.ravel(), indptr), shape=(n_samples, bx.size * by.size)
    )


def _second_difference_penalty(m: int) -> sparse.csr_matrix:
    """Second-difference coefficient penalty along both axes of an (m, m) grid."""
    d2 = sparse.csr_matrix(np.diff(np.eye(m), n=2, axis=0))
    p = (d2.T @ d2).tocsr()
    eye = sparse.identity(m, format="csr")
    return (sparse.kron(p, eye) + sparse.kron(eye, p)).tocsr()


def fit_smoothing_spline(samples, smoothing: float, grid: GridSpec) -> np.ndarray:
    """Penalized least-squares fit of a tensor-product cubic B-spline.

    Minimizes sum((z - S(x, y))^2) + smoothing * R(c), where R is the summed
    squared second difference of the coefficient grid along each axis (a
    discrete stand-in for the integrated squared second derivatives).  With
    smoothing == 0 the minimum-norm least-squares solution is returned, which
    interpolates the samples whenever they are consistent.

    Returns the (m, m) coefficient array, m = points_per_dim + 2.
    Raises SingularSystemError when the sample layout leaves the penalized
    system rank-deficient.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidParamsError("samples must be an iterable of (x, y, z) triples")
    if len(pts) < 16:
        raise InvalidParamsError("need at least 16 samples for a stable surface fit")
    if smoothing < 0:
        raise InvalidParamsError("smoothing must be nonnegative")
    lo = np.asarray(grid.domain_lo, dtype=float)
    hi = np.asarray(grid.domain_hi, dtype=float)
    if np.any(pts[:, 0] < lo[0]) or np.any(pts[:, 0] > hi[0]) or np.any(
        pts[:, 1] < lo[1]
    ) or np.any(pts[:, 1] > hi[1]):
        raise OutOfDomainError("all samples must lie inside the domain box")

    bx = _AxisBasis(grid.axis_points(0))
    by = _AxisBasis(grid.axis_points(1))
    m = bx.size
    design = _tensor_design(bx, by, pts[:, 0], pts[:, 1])
    z = pts[:, 2]

    if smoothing == 0:
        if m * m <= _DENSE_LSTSQ_LIMIT:
            coeffs, _, rank, _ = np.linalg.lstsq(design.toarray(), z, rcond=None)
        else:
            coeffs = lsqr(design, z, atol=1e-14, btol=1e-14, iter_lim=8 * m * m)[0]
        if not np.all(np.isfinite(coeffs)):
            raise SingularSystemError("least-squares solve produced non-finite coefficients")
        return coeffs.reshape(m, m)

    normal = (design.T @ design + smoothing * _second_difference_penalty(m)).tocsc()
    rhs = design.T @ z
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            coeffs = spsolve(normal, rhs)
        except (MatrixRankWarning, RuntimeError) as exc:
            raise SingularSystemError("penalized normal equations are rank-deficient") from exc
    if not np.all(np.isfinite(coeffs)):
        raise SingularSystemError("penalized normal equations are rank-deficient")
    return coeffs.reshape(m, m)


@dataclass
class Landscape:
    """A fitted surface together with the synthesis metadata needed to replay it."""

    grid: GridSpec
    params: SynthesisParams
    spline_coeffs: np.ndarray
    nominal_plateaus: list[Plateau]
    global_min_pos: np.ndarray
    global_min_val: float
    grid_values: np.ndarray
    _bx: _AxisBasis = field(init=False, repr=False)
    _by: _AxisBasis = field(init=False, repr=False)

    def __post_init__(self):
        self.spline_coeffs = np.asarray(self.spline_coeffs, dtype=float)
        self.global_min_pos = np.asarray(self.global_min_pos, dtype=float)
        self._bx = _AxisBasis(self.grid.axis_points(0))
        self._by = _AxisBasis(self.grid.axis_points(1))

    def _check_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.grid.domain_lo, dtype=float)
        hi = np.asarray(self.grid.domain_hi, dtype=float)
        if x.shape != (2,) or np.any(x < lo) or np.any(x > hi):
            raise OutOfDomainError(f"point {x} outside domain box")
        return x

    def value(self, x) -> float:
        """Surface value at a 2-vector inside the closed domain box."""
        x = self._check_domain(x)
        return float(self._bx.rows(x[0]) @ self.spline_coeffs @ self._by.rows(x[1]))

    def gradient(self, x) -> np.ndarray:
        """Exact partial derivatives of the fitted surface at x."""
        x = self._check_domain(x)
        bx = self._bx.rows(x[0])
        by = self._by.rows(x[1])
        dx = self._bx.rows(x[0], deriv=1)
        dy = self._by.rows(x[1], deriv=1)
        return np.array([dx @ self.spline_coeffs @ by, bx @ self.spline_coeffs @ dy])

    def barren_mask(self) -> np.ndarray:
        """Boolean (n, n) mask of grid cells covered by any nominal plateau."""
        n = self.grid.points_per_dim
        mask = np.zeros((n, n), dtype=bool)
        for p in self.nominal_plateaus:
            mask[p.row0 : p.row1 + 1, p.col0 : p.col1 + 1] = True
        return mask

    def grid_points(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.axis_points(0), self.grid.axis_points(1)

    def to_dict(self) -> dict:
        return {
            "version": LANDSCAPE_FORMAT,
            "grid": self.grid.to_dict(),
            "params": self.params.to_dict(),
            "coeffs": [[float(v) for v in row] for row in self.spline_coeffs],
            "plateaus": [
                [p.row0, p.row1, p.col0, p.col1, float(p.value)]
                for p in self.nominal_plateaus
            ],
            "global_min": {
                "pos": [float(v) for v in self.global_min_pos],
                "val": float(self.global_min_val),
            },
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "Landscape":
        if d.get("version") != LANDSCAPE_FORMAT:
            raise InvalidParamsError(f"unsupported landscape file version: {d.get('version')!r}")
        grid = GridSpec.from_dict(d["grid"])
        coeffs = np.asarray(d["coeffs"], dtype=float)
        plateaus = [Plateau(int(a), int(b), int(c), int(e), float(v)) for a, b, c, e, v in d["plateaus"]]
        grid_values = _surface_on_grid(grid, coeffs)
        return cls(
            grid=grid,
            params=SynthesisParams.from_dict(d["params"]),
            spline_coeffs=coeffs,
            nominal_plateaus=plateaus,
            global_min_pos=np.asarray(d["global_min"]["pos"], dtype=float),
            global_min_val=float(d["global_min"]["val"]),
            grid_values=grid_values,
        )

    @classmethod
    def load(cls, path) -> "Landscape":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _surface_on_grid(grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    bx = _AxisBasis(grid.axis_points(0))
    by = _AxisBasis(grid.axis_points(1))
    return bx.rows(grid.axis_points(0)) @ coeffs @ by.rows(grid.axis_points(1)).T


@dataclass
class SynthesisState:
    """Mutable scratch state while a landscape is being assembled.

    cell_values holds the proposed value at each grid point (NaN where nothing
    has been assigned yet); areas groups cells of overlapping placements.
    """

    grid: GridSpec
    params: SynthesisParams
    cell_values: np.ndarray
    placements: list[Plateau] = field(default_factory=list)
    areas: list[set[tuple[int, int]]] = field(default_factory=list)

    @property
    def barren_fraction(self) -> float:
        n = self.grid.points_per_dim
        return float(np.isfinite(self.cell_values).sum()) / float(n * n)

    @property
    def barren_area_count(self) -> int:
        return len(self.areas)


def new_synthesis_state(grid: GridSpec, params: SynthesisParams) -> SynthesisState:
    n = grid.points_per_dim
    return SynthesisState(grid, params, np.full((n, n), np.nan))


def place_plateau(state: SynthesisState, rng: np.random.Generator) -> None:
    """Add one constant-valued square patch to the synthesis state.

    The square's center is sampled uniformly over the cell range that keeps the
    whole square clear of the border margin (the sampling region is shrunk
    rather than the square clamped).  The patch value is Uniform[0, 1].  When
    the square overlaps previously placed patches, the areas merge but cells
    keep the value they were first assigned.
    """
    n = state.grid.points_per_dim
    w = state.params.plateau_width
    mb = state.params.border_margin
    half_lo = (w - 1) // 2
    half_hi = w // 2
    c_min = mb + half_lo
    c_max = n - 1 - mb - half_hi
    if c_max < c_min:
        raise InvalidParamsError("no feasible plateau center: widen the grid or shrink the plateau")
    ci, cj = (int(v) for v in rng.integers(c_min, c_max + 1, size=2))
    value = float(rng.random())
    patch = Plateau(ci - half_lo, ci + half_hi, cj - half_lo, cj + half_hi, value)

    block = state.cell_values[patch.row0 : patch.row1 + 1, patch.col0 : patch.col1 + 1]
    block[np.isnan(block)] = value

    cells = patch.cells()
    overlapping = [a for a in state.areas if a & cells]
    merged = set(cells)
    for a in overlapping:
        merged |= a
    state.areas = [a for a in state.areas if not (a & cells)] + [merged]
    state.placements.append(patch)


def _coverage_placement(state: SynthesisState, rng: np.random.Generator) -> None:
    """Keep placing patches until the nominal barren fraction is reached."""
    target = state.params.nominal_barren_fraction
    while state.barren_fraction < target:
        place_plateau(state, rng)


def _validate(grid: GridSpec, params: SynthesisParams) -> None:
    n = grid.points_per_dim
    if params.plateau_width + 2 * params.border_margin >= n:
        raise InvalidParamsError("plateau must fit between the border margins")
    feasible = (n - 2 * params.border_margin) ** 2 / (n * n)
    if params.nominal_barren_fraction > feasible:
        raise InvalidParamsError(
            f"nominal fraction {params.nominal_barren_fraction} exceeds the "
            f"coverable interior fraction {feasible:.3f}"
        )


def _margin_mask(n: int, mb: int) -> np.ndarray:
    mask = np.zeros((n, n), dtype=bool)
    mask[:mb, :] = True
    mask[-mb:, :] = True
    mask[:, :mb] = True
    mask[:, -mb:] = True
    return mask


def _synthesize_once(grid, params, rng, placement_fn):
    """One full assembly pass; returns None if the fitted minimum sits on the border."""
    n = grid.points_per_dim
    state = new_synthesis_state(grid, params)
    placement_fn(state, rng)

    mb = params.border_margin
    min_idx = tuple(int(v) for v in rng.integers(mb, n - mb, size=2))
    min_value = -float(rng.lognormal(0.0, params.minimum_scale))

    xs = grid.axis_points(0)
    ys = grid.axis_points(1)
    margin = _margin_mask(n, mb)
    barren = np.isfinite(state.cell_values)

    rows = []
    mi, mj = np.nonzero(margin)
    rows.append(np.column_stack([xs[mi], ys[mj], np.full(len(mi), params.border_value)]))
    bi, bj = np.nonzero(barren)
    if len(bi):
        rows.append(np.column_stack([xs[bi], ys[bj], state.cell_values[bi, bj]]))
    samples = np.concatenate(rows)
    # The minimum sample overrides any patch value proposed at the same point.
    at_min = (samples[:, 0] == xs[min_idx[0]]) & (samples[:, 1] == ys[min_idx[1]])
    samples = samples[~at_min]
    samples = np.concatenate(
        [samples, [[xs[min_idx[0]], ys[min_idx[1]], min_value]]]
    )

    coeffs = fit_smoothing_spline(samples, params.smoothing, grid)
    grid_values = _surface_on_grid(grid, coeffs)
    amin = np.unravel_index(int(np.argmin(grid_values)), grid_values.shape)
    if amin[0] in (0, n - 1) or amin[1] in (0, n - 1):
        return None
    return Landscape(
        grid=grid,
        params=params,
        spline_coeffs=coeffs,
        nominal_plateaus=list(state.placements),
        global_min_pos=np.array([xs[amin[0]], ys[amin[1]]]),
        global_min_val=float(grid_values[amin]),
        grid_values=grid_values,
    )


def _retry_loop(grid, params, placement_factory) -> Landscape:
    for attempt in range(_MAX_RETRIES + 1):
        ss = np.random.SeedSequence(params.rng_seed + attempt)
        rng = np.random.Generator(np.random.Philox(ss))
        land = _synthesize_once(grid, params, rng, placement_factory)
        if land is not None:
            return land
    raise NonConvergentError(
        f"fitted minimum stayed on the domain border after {_MAX_RETRIES} retries"
    )


def synthesize(grid: GridSpec, params: SynthesisParams) -> Landscape:
    """Build a landscape whose nominal barren cells cover at least the requested fraction.

    Patches are placed until coverage reaches the nominal fraction, border and
    minimum samples are added, and the spline is fitted.  If the fitted
    minimum lands on the domain border the whole pass is discarded and rerun
    with the next derived seed; NonConvergentError is raised after 64 retries.
    """
    _validate(grid, params)
    return _retry_loop(grid, params, _coverage_placement)


def synthesize_separated(
    grid: GridSpec, params: SynthesisParams, plateau_count: int
) -> Landscape:
    """Landscape with exactly `plateau_count` non-overlapping equal squares.

    The squares jointly cover (approximately) params.nominal_barren_fraction of
    the grid; their side is derived from the fraction and count, overriding
    params.plateau_width.  Used by scaling studies that need the number of
    separated barren areas under direct control.  plateau_count == 0 disables
    placement regardless of the nominal fraction.
    """
    if plateau_count < 0:
        raise InvalidParamsError("plateau_count must be nonnegative")
    n = grid.points_per_dim
    mb = params.border_margin

    if plateau_count == 0 or params.nominal_barren_fraction == 0:
        return _retry_loop(grid, params, lambda state, rng: None)

    width = max(1, round(n * math.sqrt(params.nominal_barren_fraction / plateau_count)))
    grid_side = math.ceil(math.sqrt(plateau_count))
    block = (n - 2 * mb) // grid_side
    if width > block:
        raise InvalidParamsError(
            f"{plateau_count} separated squares of side {width} cells do not fit "
            f"in {grid_side}x{grid_side} blocks of side {block}"
        )
    half_lo = (width - 1) // 2
    half_hi = width // 2

    def placement(state: SynthesisState, rng: np.random.Generator) -> None:
        placed = 0
        for bi in range(grid_side):
            for bj in range(grid_side):
                if placed == plateau_count:
                    return
                lo_i = mb + bi * block + half_lo
                hi_i = mb + (bi + 1) * block - 1 - half_hi
                lo_j = mb + bj * block + half_lo
                hi_j = mb + (bj + 1) * block - 1 - half_hi
                ci = int(rng.integers(lo_i, hi_i + 1))
                cj = int(rng.integers(lo_j, hi_j + 1))
                value = float(rng.random())
                patch = Plateau(ci - half_lo, ci + half_hi, cj - half_lo, cj + half_hi, value)
                blockv = state.cell_values[
                    patch.row0 : patch.row1 + 1, patch.col0 : patch.col1 + 1
                ]
                blockv[np.isnan(blockv)] = value
                state.areas.append(patch.cells())
                state.placements.append(patch)
                placed += 1

    return _retry_loop(grid, params, placement)
