"""Mean-square localization error of a vehicle group and related formulas.

The selection objective is ``E[|e|^2] = |e0|^2 + sum_i sigma_i^2 |C_i|^2 / S0^2``
where ``e0`` is the centroid of the unperturbed feasible polygon, ``S0`` its
area and ``C_i`` the sensitivity column of constraint ``i``.

The asymptotic helpers (:func:`asymptotic_e0_sq`, :func:`gap_density`,
:func:`expected_e0_sq_asymptotic`) describe the large-N behaviour for random
road angles.  They are diagnostics; selection always uses the exact polygon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GapAtLeastPiError, UnboundedError
from .geometry import (
    BOUNDED_GAP_LIMIT,
    TWO_PI,
    HalfPlaneSystem,
    RoadConstraint,
    check_bounded,
    intersect_halfplanes,
    polygon_batch_unsorted,
    sensitivity_matrix,
    wrap_angle,
)

DEFAULT_HALF_WIDTH = 1.8  # m, half of a 3.6 m lane
DEFAULT_VALIDITY_RATIO = 0.05
GRID_POINTS = 4096


@dataclass(frozen=True)
class ObjectiveValue:
    e0_sq: float
    noise_term: float

    @property
    def total(self) -> float:
        return self.e0_sq + self.noise_term


def objective(selection_constraints: Sequence[RoadConstraint], half_width: float = DEFAULT_HALF_WIDTH) -> ObjectiveValue:
    """Expected squared localization error of one selection (exact geometry).

    Raises :class:`UnboundedError` if the selection leaves a recession
    direction; solvers use :class:`SelectionEvaluator` instead, which maps that
    case to ``inf``.
    """
    system = HalfPlaneSystem(tuple(selection_constraints), half_width)
    if len(system) < 3 or not check_bounded(system):
        raise UnboundedError("selection is unbounded")
    poly = intersect_halfplanes(system)
    C = sensitivity_matrix(poly)
    sig = np.array([c.sigma_sq for c in system.constraints])
    noise = float(np.sum(sig * (C * C).sum(axis=0)) / poly.area**2)
    return ObjectiveValue(float(poly.centroid @ poly.centroid), noise)


def objective_batch(angles, sigma_sq, half_width: float = DEFAULT_HALF_WIDTH):
    """Vectorised objective for rows of selections.

    Returns ``(total, e0_sq, noise_term)`` arrays of shape (B,); unbounded
    rows are ``inf`` in all three.  Rows the closed form cannot handle
    (duplicate angles) go through :func:`objective`.
    """
    th = np.atleast_2d(wrap_angle(np.asarray(angles, dtype=float)))
    sig = np.broadcast_to(np.asarray(sigma_sq, dtype=float), th.shape)
    pb, perm = polygon_batch_unsorted(th, half_width)
    sig_sorted = np.take_along_axis(sig, perm, axis=1)
    e0 = pb.centroid[:, 0] ** 2 + pb.centroid[:, 1] ** 2
    dx = pb.centroid[:, None, 0] - pb.midpoints[..., 0]
    dy = pb.centroid[:, None, 1] - pb.midpoints[..., 1]
    col_sq = pb.lengths**2 * (dx * dx + dy * dy)
    acc = sig_sorted[:, 0] * col_sq[:, 0]
    for j in range(1, th.shape[1]):
        acc = acc + sig_sorted[:, j] * col_sq[:, j]
    with np.errstate(invalid="ignore", divide="ignore"):
        noise = acc / pb.area**2
    e0 = np.where(pb.valid, e0, np.inf)
    noise = np.where(pb.valid, noise, np.inf)
    for r in np.flatnonzero(~pb.valid):
        gaps_ok = _max_gap_row(th[r]) < BOUNDED_GAP_LIMIT
        if not gaps_ok or th.shape[1] < 3:
            continue
        cons = [RoadConstraint(float(a), float(s)) for a, s in zip(th[r], sig[r])]
        val = objective(cons, half_width)
        e0[r], noise[r] = val.e0_sq, val.noise_term
    return e0 + noise, e0, noise


def _max_gap_row(row: np.ndarray) -> float:
    a = np.sort(row)
    return float(np.diff(np.append(a, a[0] + TWO_PI)).max())


class SelectionEvaluator:
    """Objective of index subsets into a fixed candidate pool.

    Counts every subset it evaluates in :attr:`evaluations`.
    """

    def __init__(self, angles, sigma_sq, half_width: float = DEFAULT_HALF_WIDTH):
        self.angles = np.asarray(angles, dtype=float)
        self.sigma_sq = np.asarray(sigma_sq, dtype=float)
        self.half_width = float(half_width)
        self.evaluations = 0

    def __call__(self, index_rows) -> np.ndarray:
        idx = np.atleast_2d(np.asarray(index_rows, dtype=np.intp))
        if idx.shape[0] == 0:
            return np.empty(0)
        # canonical column order so the same subset always gives the same bits
        idx = np.sort(idx, axis=1)
        self.evaluations += idx.shape[0]
        total, _, _ = objective_batch(self.angles[idx], self.sigma_sq[idx], self.half_width)
        return total

    def detail(self, indices) -> ObjectiveValue:
        idx = np.sort(np.asarray(indices, dtype=np.intp))[None, :]
        total, e0, noise = objective_batch(self.angles[idx], self.sigma_sq[idx], self.half_width)
        if not np.isfinite(total[0]):
            raise UnboundedError("selection is unbounded")
        return ObjectiveValue(float(e0[0]), float(noise[0]))


def linearization_valid(noise_inf_norm: float, half_width: float, n: int, ratio: float = DEFAULT_VALIDITY_RATIO) -> bool:
    """Whether the projected noise is small enough for the linear error model."""
    if not (0.0 < ratio <= 1.0):
        raise ValueError("ratio must lie in (0, 1]")
    return bool(noise_inf_norm <= ratio * TWO_PI * half_width / n)


@dataclass(frozen=True, eq=False)
class ContinuousOptimum:
    angles: np.ndarray
    objective_at_optimum: float
    hessian: np.ndarray


def regular_angles(m: int) -> np.ndarray:
    return TWO_PI * np.arange(m) / m


def continuous_optimum(m: int, half_width: float = DEFAULT_HALF_WIDTH, sigma_sq: float = 1.0, step: float = 1e-4) -> ContinuousOptimum:
    """Equally spaced optimum, its objective and a finite-difference Hessian.

    The Hessian is taken w.r.t. the M slot angles by central second
    differences and symmetrized.
    """
    if m < 3:
        raise ValueError("m must be at least 3")
    theta = regular_angles(m)
    h = step
    eye = np.eye(m) * h
    # rows: base, +/-e_i, and the four corners for each i<j
    rows = [theta]
    for i in range(m):
        rows += [theta + eye[i], theta - eye[i]]
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    for i, j in pairs:
        rows += [theta + eye[i] + eye[j], theta + eye[i] - eye[j], theta - eye[i] + eye[j], theta - eye[i] - eye[j]]
    J, _, _ = objective_batch(np.array(rows), sigma_sq, half_width)
    j0 = J[0]
    H = np.empty((m, m))
    for i in range(m):
        H[i, i] = (J[1 + 2 * i] - 2.0 * j0 + J[2 + 2 * i]) / (h * h)
    base = 1 + 2 * m
    for k, (i, j) in enumerate(pairs):
        pp, pm, mp, mm = J[base + 4 * k : base + 4 * k + 4]
        H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4.0 * h * h)
    H = 0.5 * (H + H.T)
    return ContinuousOptimum(theta, float(j0), H)


def circular_gaps(sorted_angles) -> np.ndarray:
    a = np.asarray(sorted_angles, dtype=float)
    return np.diff(np.append(a, a[0] + TWO_PI))


def asymptotic_e0_sq(sorted_angles, half_width: float = DEFAULT_HALF_WIDTH) -> float:
    """Leading-order geometric error from the circular gaps of sorted angles."""
    a = np.asarray(sorted_angles, dtype=float)
    if np.any(np.diff(a) < 0):
        raise ValueError("angles must be sorted ascending")
    g = circular_gaps(a)
    if np.any(g >= np.pi):
        raise GapAtLeastPiError(f"largest gap {g.max():.6g} rad is >= pi")
    return float(4.0 * half_width**2 / 9.0 * np.sum(np.tan(g / 2.0) ** 2) / np.pi**2)


def gap_density(gap, n: int, local_density: float):
    """Density of the gap to the next angle given local angle density ``p``.

    Follows ``f = 2 N p exp(-2 N p gap)``; note the implied mean gap is
    ``1/(2Np)``, half of the combinatorial ``1/(Np)``.
    """
    rate = 2.0 * n * local_density
    return rate * np.exp(-rate * np.asarray(gap, dtype=float))


@dataclass(frozen=True, eq=False)
class GapModel:
    """Road-angle density tabulated on a periodic grid over [0, 2*pi)."""

    n_vehicles: int
    grid: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        if self.n_vehicles < 1:
            raise ValueError("n_vehicles must be positive")
        if np.any(self.density <= 0):
            raise ValueError("density must be strictly positive")
        total = float(self.density.sum() * (TWO_PI / self.grid.size))
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"density integrates to {total}, not 1")

    @classmethod
    def from_function(cls, n: int, pdf: Callable[[np.ndarray], np.ndarray], points: int = GRID_POINTS):
        grid = TWO_PI * np.arange(points) / points
        vals = np.asarray(pdf(grid), dtype=float)
        end = float(np.asarray(pdf(np.array([TWO_PI])), dtype=float)[0])
        if not np.isclose(vals[0], end, rtol=1e-9, atol=1e-12):
            raise ValueError("density is not periodic")
        vals = vals / (vals.sum() * TWO_PI / points)
        return cls(n, grid, vals)

    @classmethod
    def uniform(cls, n: int, points: int = GRID_POINTS):
        return cls.from_function(n, lambda t: np.full_like(t, 1.0 / TWO_PI), points)

    @classmethod
    def von_mises(cls, n: int, kappa: float, mu: float = 0.0, points: int = GRID_POINTS):
        return cls.from_function(n, lambda t: np.exp(kappa * np.cos(t - mu)) / (TWO_PI * np.i0(kappa)), points)

    def integrate(self, values) -> float:
        # trapezoidal rule on a periodic grid
        return float(np.sum(values) * TWO_PI / self.grid.size)


def expected_e0_sq_asymptotic(model: GapModel, half_width: float = DEFAULT_HALF_WIDTH) -> float:
    """Expected geometric error for N angles drawn from ``model``.

    Sums the per-gap second moment ``1/(2 N^2 p^2)`` over the N gaps, the
    gap positions being distributed like the angles.  For the uniform density
    this is ``2 w^2 / (9 N)``.
    """
    n = model.n_vehicles
    p = model.density
    second_moment = 1.0 / (2.0 * n * n * p * p)
    return half_width**2 / (9.0 * np.pi**2) * n * model.integrate(p * second_moment)
