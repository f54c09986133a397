"""Convex geometry of road-constraint half-planes.

Every vehicle contributes one half-plane ``x . n_i <= b_i`` in the road frame,
where ``n_i = (cos theta_i, sin theta_i)`` and ``b_i`` is the half lane width
``w`` (possibly perturbed to ``w - X_i``).  The intersection is a convex
polygon; its centroid is the estimation error of the centroid estimator.

Two evaluation paths exist:

* :func:`intersect_halfplanes` – a general, exact half-plane intersection that
  handles redundant and duplicated constraints.
* :func:`polygon_batch` – a vectorised closed form for many systems at once,
  valid when every sorted constraint contributes an edge.  Rows where that
  assumption fails are flagged so callers can fall back to the general path.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateAreaError, EmptyRegionError, UnboundedError

TWO_PI = 2.0 * np.pi
ANGLE_TIE = 1e-9  # rad; angles closer than this are treated as duplicates
BOUNDED_GAP_LIMIT = np.pi - ANGLE_TIE  # gaps within ANGLE_TIE of pi count as unbounded
FEASIBILITY_EPS = 1e-9  # m; absolute slack when validating vertices
DEGENERATE_AREA = 1e-12  # m^2

_BOX_SCALE = 1e8
_PARALLEL_EPS = 1e-12


def wrap_angle(angle):
    """Map angles into [0, 2*pi)."""
    a = np.mod(angle, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    a = np.where(a >= TWO_PI, 0.0, a)
    if np.ndim(a) == 0:
        return float(a)
    return a


def wrap_signed(angle):
    """Map angles into (-pi, pi]."""
    a = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), TWO_PI)
    if np.ndim(a) == 0:
        return float(a)
    return a


@dataclass(frozen=True)
class RoadConstraint:
    """One vehicle's straight-road constraint.

    ``angle`` is the direction of the outward unit normal ``n_i`` in radians and
    ``sigma_sq`` the variance (m^2) of the vehicle's composite non-common error
    projected on that normal.
    """

    angle: float
    sigma_sq: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.angle < TWO_PI):
            raise ValueError(f"angle must lie in [0, 2pi), got {self.angle!r}")
        if not (self.sigma_sq > 0.0 and np.isfinite(self.sigma_sq)):
            raise ValueError(f"sigma_sq must be positive, got {self.sigma_sq!r}")

    @property
    def normal(self) -> np.ndarray:
        return np.array([np.cos(self.angle), np.sin(self.angle)])


@dataclass(frozen=True)
class HalfPlaneSystem:
    """An ordered set of road half-planes with per-constraint offsets.

    If ``offsets`` is omitted every offset equals ``half_width``.
    """

    constraints: tuple[RoadConstraint, ...]
    half_width: float
    offsets: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.offsets is None:
            offsets = (float(self.half_width),) * len(self.constraints)
        else:
            offsets = tuple(float(b) for b in self.offsets)
        if len(offsets) != len(self.constraints):
            raise ValueError("offsets length must equal constraints length")
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def from_angles(cls, angles, half_width=1.0, offsets=None, sigma_sq=1.0):
        sig = np.broadcast_to(np.asarray(sigma_sq, dtype=float), np.shape(angles))
        cons = tuple(RoadConstraint(wrap_angle(float(a)), float(s)) for a, s in zip(angles, sig))
        return cls(cons, float(half_width), None if offsets is None else tuple(offsets))

    def __len__(self):
        return len(self.constraints)

    @property
    def angles(self) -> np.ndarray:
        return np.array([c.angle for c in self.constraints], dtype=float)

    @property
    def offset_array(self) -> np.ndarray:
        return np.array(self.offsets, dtype=float)

    def with_offsets(self, offsets) -> "HalfPlaneSystem":
        return HalfPlaneSystem(self.constraints, self.half_width, tuple(offsets))


class Edge(NamedTuple):
    length: float
    midpoint: np.ndarray


@dataclass(frozen=True, eq=False)
class ConvexPolygonSummary:
    """Vertices, area, centroid and per-constraint edge geometry of a polygon.

    ``edge_lengths`` and ``edge_midpoints`` are indexed by input constraint.
    Constraints that contribute no edge have length 0 and a NaN midpoint.
    ``tied`` lists constraints dropped because another constraint shares
    their angle (within ``ANGLE_TIE``) and is at least as tight.
    """

    vertices: np.ndarray
    area: float
    centroid: np.ndarray
    edge_lengths: np.ndarray
    edge_midpoints: np.ndarray
    tied: tuple[int, ...] = field(default=())

    @property
    def edges(self) -> list[Edge]:
        return [Edge(float(l), m) for l, m in zip(self.edge_lengths, self.edge_midpoints)]

    @property
    def perimeter(self) -> float:
        d = np.diff(np.vstack([self.vertices, self.vertices[:1]]), axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())


def max_circular_gap(angles) -> float:
    """Largest gap between circularly consecutive angles (2*pi for one angle)."""
    a = np.sort(wrap_angle(np.asarray(angles, dtype=float)).reshape(-1))
    if a.size == 0:
        return TWO_PI
    gaps = np.diff(np.append(a, a[0] + TWO_PI))
    return float(gaps.max())


def check_bounded(system: HalfPlaneSystem) -> bool:
    """True iff the half-plane intersection cannot extend to infinity.

    Offsets do not matter: a recession direction exists exactly when the
    normals leave an open half-circle uncovered.  Gaps within ``ANGLE_TIE``
    of pi are treated as open so every code path agrees on near-parallel pairs.
    """
    if len(system) == 0:
        return False
    return max_circular_gap(system.angles) < BOUNDED_GAP_LIMIT


def _dedupe(angles: np.ndarray, offsets: np.ndarray):
    """Group angle duplicates, keeping the tightest (then lowest-index) member."""
    n = angles.size
    order = np.argsort(angles, kind="stable")
    groups: list[list[int]] = []
    for idx in order:
        if groups and angles[idx] - angles[groups[-1][-1]] < ANGLE_TIE:
            groups[-1].append(int(idx))
        else:
            groups.append([int(idx)])
    if len(groups) > 1 and angles[groups[0][0]] + TWO_PI - angles[groups[-1][-1]] < ANGLE_TIE:
        groups[0] = groups.pop() + groups[0]
    keep, tied = [], []
    for g in groups:
        b = offsets[g]
        tight = b.min() + 1e-12 * max(1.0, abs(b.min()))
        rep = min(i for i in g if offsets[i] <= tight)
        keep.append(rep)
        tied.extend(i for i in g if i != rep)
    keep.sort(key=lambda i: angles[i])
    assert len(keep) + len(tied) == n
    return keep, sorted(tied)


def _deque_intersection(nx, ny, b, order):
    """Sorted-angle half-plane intersection; returns the active lines in CCW order."""

    def inter(i, j):
        det = nx[i] * ny[j] - ny[i] * nx[j]
        return ((b[i] * ny[j] - b[j] * ny[i]) / det, (nx[i] * b[j] - nx[j] * b[i]) / det)

    def out(i, p):
        return nx[i] * p[0] + ny[i] * p[1] - b[i] > _PARALLEL_EPS * (1.0 + abs(b[i]))

    dq: deque[int] = deque()
    for i in order:
        while len(dq) > 1 and out(i, inter(dq[-1], dq[-2])):
            dq.pop()
        while len(dq) > 1 and out(i, inter(dq[0], dq[1])):
            dq.popleft()
        if dq:
            j = dq[-1]
            cross = nx[i] * ny[j] - ny[i] * nx[j]
            if abs(cross) < _PARALLEL_EPS:
                if nx[i] * nx[j] + ny[i] * ny[j] < 0:
                    return []
                if b[i] < b[j]:
                    dq.pop()
                else:
                    continue
        dq.append(i)
    while len(dq) > 2 and out(dq[0], inter(dq[-1], dq[-2])):
        dq.pop()
    while len(dq) > 2 and out(dq[-1], inter(dq[0], dq[1])):
        dq.popleft()
    if len(dq) < 3:
        return []
    return list(dq)


def _shoelace(vx: np.ndarray, vy: np.ndarray):
    """Area and centroid of a CCW polygon, computed about the vertex mean."""
    ox, oy = vx.mean(), vy.mean()
    x, y = vx - ox, vy - oy
    x1, y1 = np.roll(x, 1), np.roll(y, 1)
    cr = x1 * y - x * y1
    area = 0.5 * cr.sum()
    if area <= 0:
        return float(area), np.array([ox, oy])
    cx = ((x1 + x) * cr).sum() / (6.0 * area)
    cy = ((y1 + y) * cr).sum() / (6.0 * area)
    return float(area), np.array([ox + cx, oy + cy])


def intersect_halfplanes(system: HalfPlaneSystem) -> ConvexPolygonSummary:
    """Exact intersection polygon ``{x | x . n_i <= offset_i for all i}``.

    Raises :class:`UnboundedError` when the region is unbounded and
    :class:`EmptyRegionError` when it is empty (or collapses to a point or
    segment).
    """
    n = len(system)
    if n < 3 or not check_bounded(system):
        raise UnboundedError("half-plane system is unbounded")
    angles = system.angles
    offsets = system.offset_array
    keep, tied = _dedupe(angles, offsets)

    # real lines first, then a large bounding box appended as extra lines
    big = _BOX_SCALE * (1.0 + np.abs(offsets).max())
    box_angles = np.array([0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi])
    all_angles = np.concatenate([angles, box_angles])
    nx = np.cos(all_angles)
    ny = np.sin(all_angles)
    nx[n:] = [1.0, 0.0, -1.0, 0.0]
    ny[n:] = [0.0, 1.0, 0.0, -1.0]
    b = np.concatenate([offsets, np.full(4, big)])
    cand = list(keep) + list(range(n, n + 4))
    cand.sort(key=lambda i: (all_angles[i], i >= n))
    lines = _deque_intersection(nx, ny, b, cand)
    if not lines:
        raise EmptyRegionError("half-plane system has an empty intersection")
    if any(i >= n for i in lines):
        raise UnboundedError("feasible region exceeds the numerical bounding box")

    L = len(lines)
    vx = np.empty(L)
    vy = np.empty(L)
    for k in range(L):
        i, j = lines[k], lines[(k + 1) % L]
        det = nx[i] * ny[j] - ny[i] * nx[j]
        vx[k] = (b[i] * ny[j] - b[j] * ny[i]) / det
        vy[k] = (nx[i] * b[j] - nx[j] * b[i]) / det

    area, centroid = _shoelace(vx, vy)
    if not area > 0:
        raise EmptyRegionError("half-plane intersection has no interior")
    slack = np.outer(vx, nx[:n]) + np.outer(vy, ny[:n]) - offsets
    if slack.max() > FEASIBILITY_EPS * max(1.0, np.abs(offsets).max()):
        raise EmptyRegionError("no consistent polygon for these offsets")

    lengths = np.zeros(n)
    mids = np.full((n, 2), np.nan)
    for k, i in enumerate(lines):
        p, q = (k - 1) % L, k
        lengths[i] = float(np.hypot(vx[q] - vx[p], vy[q] - vy[p]))
        mids[i] = 0.5 * (vx[p] + vx[q]), 0.5 * (vy[p] + vy[q])
    return ConvexPolygonSummary(
        vertices=np.column_stack([vx, vy]),
        area=area,
        centroid=centroid,
        edge_lengths=lengths,
        edge_midpoints=mids,
        tied=tuple(tied),
    )


def sensitivity_matrix(summary: ConvexPolygonSummary) -> np.ndarray:
    """The 2 x N matrix ``S0 * d(centroid)/dX``.

    Raising ``X_i`` moves edge ``i`` inward, removing a strip of area
    ``l_i * dX`` centred on the edge midpoint, so column ``i`` is
    ``l_i * (centroid - midpoint_i)``.
    """
    if summary.area < DEGENERATE_AREA:
        raise DegenerateAreaError(f"polygon area {summary.area:.3g} is degenerate")
    lengths = summary.edge_lengths
    active = lengths > 0
    C = np.zeros((2, lengths.size))
    C[:, active] = lengths[active] * (summary.centroid[:, None] - summary.edge_midpoints[active].T)
    return C


def sensitivity_fd(system: HalfPlaneSystem, step: float) -> np.ndarray:
    """Central finite-difference estimate of :func:`sensitivity_matrix`."""
    if not (0.0 < step < 1e-3 * system.half_width):
        raise ValueError("step must satisfy 0 < step < 1e-3 * half_width")
    base = intersect_halfplanes(system)
    b = system.offset_array
    C = np.zeros((2, len(system)))
    for i in range(len(system)):
        lo, hi = b.copy(), b.copy()
        lo[i] -= step
        hi[i] += step
        c_lo = intersect_halfplanes(system.with_offsets(lo)).centroid
        c_hi = intersect_halfplanes(system.with_offsets(hi)).centroid
        C[:, i] = base.area * (c_lo - c_hi) / (2.0 * step)
    return C


class PolygonBatch(NamedTuple):
    """Per-row polygon data for B systems of M sorted constraints."""

    valid: np.ndarray  # (B,) bool
    area: np.ndarray  # (B,)
    centroid: np.ndarray  # (B, 2)
    lengths: np.ndarray  # (B, M)
    midpoints: np.ndarray  # (B, M, 2)


def _rowsum(x: np.ndarray) -> np.ndarray:
    # fixed left-to-right order keeps per-row results independent of batch layout
    s = x[:, 0].copy()
    for j in range(1, x.shape[1]):
        s += x[:, j]
    return s


def polygon_batch(angles: np.ndarray, offsets: np.ndarray) -> PolygonBatch:
    """Closed-form polygons for rows of angle-sorted constraints.

    ``angles`` must be sorted ascending within each row and lie in
    [0, 2*pi).  The polygon is assembled from intersections of circularly
    consecutive lines; a row is ``valid`` only when every gap lies in
    ``(ANGLE_TIE, pi)`` and every edge has positive length, in which case the
    result coincides with :func:`intersect_halfplanes`.
    """
    th = np.atleast_2d(np.asarray(angles, dtype=float))
    b = np.broadcast_to(np.asarray(offsets, dtype=float), th.shape)
    B, M = th.shape
    th_next = np.roll(th, -1, axis=1)
    gaps = th_next - th
    gaps[:, -1] += TWO_PI
    c, s = np.cos(th), np.sin(th)
    c1, s1 = np.roll(c, -1, axis=1), np.roll(s, -1, axis=1)
    b1 = np.roll(b, -1, axis=1)
    ok_gap = (gaps > ANGLE_TIE) & (gaps < BOUNDED_GAP_LIMIT)
    valid = ok_gap.all(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        det = c * s1 - s * c1
        det = np.where(ok_gap, det, np.nan)
        # vertex k joins line k and line k+1
        vx = (b * s1 - b1 * s) / det
        vy = (c * b1 - c1 * b) / det
        px, py = np.roll(vx, 1, axis=1), np.roll(vy, 1, axis=1)
        signed_len = (vx - px) * (-s) + (vy - py) * c
        valid &= ~(signed_len <= 0).any(axis=1)
        ox = _rowsum(vx) / M
        oy = _rowsum(vy) / M
        x, y = vx - ox[:, None], vy - oy[:, None]
        x1, y1 = px - ox[:, None], py - oy[:, None]
        cr = x1 * y - x * y1
        area = 0.5 * _rowsum(cr)
        cx = _rowsum((x1 + x) * cr) / (6.0 * area)
        cy = _rowsum((y1 + y) * cr) / (6.0 * area)
    valid &= area > 0
    valid &= np.isfinite(cx) & np.isfinite(cy)
    centroid = np.column_stack([ox + cx, oy + cy])
    mids = np.stack([0.5 * (px + vx), 0.5 * (py + vy)], axis=-1)
    return PolygonBatch(valid, area, centroid, np.abs(signed_len), mids)


def polygon_batch_unsorted(angles: np.ndarray, offsets) -> tuple[PolygonBatch, np.ndarray]:
    """Sort each row by angle (ties by column) and call :func:`polygon_batch`.

    Returns the batch and the sorting permutation so per-constraint results
    can be mapped back to the caller's column order.
    """
    th = np.atleast_2d(wrap_angle(np.asarray(angles, dtype=float)))
    b = np.broadcast_to(np.asarray(offsets, dtype=float), th.shape)
    perm = np.argsort(th, axis=1, kind="stable")
    ths = np.take_along_axis(th, perm, axis=1)
    bs = np.take_along_axis(b, perm, axis=1)
    return polygon_batch(ths, bs), perm


def circumscribed_polygon_area(m: int, w: float) -> float:
    """Area of the regular M-gon circumscribed about a circle of radius w."""
    return m * w * w * np.tan(np.pi / m)

