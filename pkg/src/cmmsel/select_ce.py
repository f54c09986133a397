"""Selection with heterogeneous variances: pre-selection, cross-entropy, random search.

Pre-selection drops vehicles that keep losing head-to-head swaps against a
lower-variance vehicle.  The cross-entropy search then samples M road angles
from a Gaussian, rounds each sample to distinct available roads, and refits
the Gaussian to the best fraction of rounded samples.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import AllSamplesInfeasibleError, NoFeasibleSubsetError
from .geometry import ANGLE_TIE, BOUNDED_GAP_LIMIT, TWO_PI, wrap_signed
from .report import Selection, SolverReport

COV_JITTER = 1e-8
GROUP_REDRAWS = 32
GROUP_ENUM_CAP = 20_000  # enumerate bounded groups exactly when redraws miss on pools this small


@dataclass(frozen=True)
class PreselectParams:
    trial_groups: int = 10

    def __post_init__(self):
        if self.trial_groups < 1:
            raise ValueError("trial_groups must be >= 1")


@dataclass(frozen=True, eq=False)
class CEParams:
    """Cross-entropy settings; mean and covariance default to the regular layout."""

    sample_count: int = 1000
    elite_fraction: float = 0.05
    initial_mean: np.ndarray | None = None
    initial_cov: np.ndarray | None = None
    max_iterations: int = 100
    convergence_tol: float = 1e-3

    def __post_init__(self):
        if not (0.0 < self.elite_fraction < 1.0):
            raise ValueError("elite_fraction must lie in (0, 1)")
        if self.elite_count < 2:
            raise ValueError("sample_count * elite_fraction must be >= 2")
        if self.initial_cov is not None:
            cov = np.asarray(self.initial_cov, dtype=float)
            if not np.allclose(cov, cov.T):
                raise ValueError("initial_cov must be symmetric")
            np.linalg.cholesky(cov)  # raises LinAlgError unless positive definite

    @property
    def elite_count(self) -> int:
        return int(round(self.sample_count * self.elite_fraction))

    def mean_for(self, m: int) -> np.ndarray:
        if self.initial_mean is None:
            return TWO_PI * np.arange(m) / m
        return np.asarray(self.initial_mean, dtype=float)

    def cov_for(self, m: int) -> np.ndarray:
        if self.initial_cov is None:
            return np.eye(m) * 100.0 * (np.pi / m) ** 2
        return np.asarray(self.initial_cov, dtype=float)


def circular_distance(a, b):
    return np.abs(wrap_signed(np.asarray(a) - np.asarray(b)))


def round_batch(samples: np.ndarray, available_angles: np.ndarray, occupied=()):
    """Round each row of sampled angles to distinct available roads.

    Returns ``(indices, rounded)`` where ``rounded`` holds the chosen road
    angles unwrapped to lie within pi of the corresponding sample.  Greedy
    rule: repeatedly, the unassigned coordinate closest to a free road claims
    that road.
    """
    S = np.atleast_2d(np.asarray(samples, dtype=float))
    avail = np.asarray(available_angles, dtype=float)
    k, m = S.shape
    n = avail.size
    if n - len(set(occupied)) < m:
        raise ValueError("fewer free roads than sampled angles")
    diff = wrap_signed(avail[None, None, :] - S[:, :, None])  # (k, m, n)
    dist = np.abs(diff)
    if len(occupied):
        dist[:, :, list(occupied)] = np.inf
    idx = np.empty((k, m), dtype=np.intp)
    rows = np.arange(k)
    for _ in range(m):
        flat = dist.reshape(k, -1).argmin(axis=1)
        coord, road = np.divmod(flat, n)
        idx[rows, coord] = road
        dist[rows, coord, :] = np.inf
        dist[rows, :, road] = np.inf
    rounded = S + np.take_along_axis(diff, idx[:, :, None], axis=2)[:, :, 0]
    return idx, rounded


def round_to_roads(sample, available_angles, occupied=()) -> list[int]:
    """Distinct nearest-road indices for one sample of M angles."""
    idx, _ = round_batch(np.asarray(sample, dtype=float)[None, :], available_angles, occupied)
    return [int(i) for i in idx[0]]


def has_bounded_subset(angles, m: int) -> bool:
    """Whether some m-subset of ``angles`` gives a bounded polygon."""
    a = np.sort(np.asarray(angles, dtype=float))
    if a.size < m or m < 3:
        return False
    full_gap = np.diff(np.append(a, a[0] + TWO_PI)).max()
    if m >= 4 or full_gap >= np.pi:
        # a bounded set always contains a bounded subset of at most 4 normals
        return bool(full_gap < BOUNDED_GAP_LIMIT)
    tri = np.array(list(itertools.combinations(range(a.size), 3)))
    t = a[tri]
    gaps = np.column_stack([t[:, 1] - t[:, 0], t[:, 2] - t[:, 1], t[:, 0] + TWO_PI - t[:, 2]])
    return bool((gaps.max(axis=1) < BOUNDED_GAP_LIMIT).any())


def _bounded_rows(group_angles: np.ndarray, extra: float) -> np.ndarray:
    """Boundedness of each group (last axis) completed with one more angle."""
    a = np.concatenate([group_angles, np.full(group_angles.shape[:-1] + (1,), extra)], axis=-1)
    a = np.sort(a, axis=-1)
    gaps = np.diff(np.concatenate([a, a[..., :1] + TWO_PI], axis=-1), axis=-1)
    return gaps.max(axis=-1) < BOUNDED_GAP_LIMIT


def _pair_rng(seed, i, j, *extra):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(i), int(j), *extra]))


def preselect(scenario, m: int, params: PreselectParams = PreselectParams(), seed: int = 0) -> list[int]:
    """Indices of vehicles that survive dominance pre-selection.

    For each pair ``sigma_i^2 < sigma_j^2`` the same K random (M-1)-groups of
    other vehicles are completed once with ``i`` and once with ``j``; ``j`` is
    eliminated when ``i`` wins all K comparisons.  Each group is redrawn (up
    to ``GROUP_REDRAWS`` times, then drawn from the exact list on small pools)
    until it is bounded with ``i`` or ``j``.  All pairs are judged
    against the original pool and eliminations are applied together.  If
    that leaves no bounded M-subset, eliminated directions are restored,
    latest first, until one exists.
    """
    n = scenario.n
    if n <= m:
        raise ValueError("pre-selection needs more candidates than m")
    K = params.trial_groups
    sig = scenario.sigma_sq
    pairs = [(i, j) for i in range(n) for j in range(n) if sig[i] < sig[j]]
    if not pairs:
        return list(range(n))
    angles = scenario.angles
    rows_i, rows_j = [], []
    for i, j in pairs:
        others = np.array([v for v in range(n) if v != i and v != j])
        keys = _pair_rng(seed, i, j).random((K * GROUP_REDRAWS, others.size))
        cand = others[np.argsort(keys, axis=1)[:, : m - 1]].reshape(K, GROUP_REDRAWS, m - 1)
        # an unbounded group scores +inf on both sides and says nothing, so
        # each group is the first draw that is bounded with i or with j
        ok = _bounded_rows(angles[cand], angles[i]) | _bounded_rows(angles[cand], angles[j])
        groups = cand[np.arange(K), ok.argmax(axis=1)]
        miss = ~ok.any(axis=1)
        if miss.any() and math.comb(others.size, m - 1) <= GROUP_ENUM_CAP:
            pool = np.array(list(itertools.combinations(others, m - 1)), dtype=np.intp)
            pool = pool[_bounded_rows(angles[pool], angles[i]) | _bounded_rows(angles[pool], angles[j])]
            if pool.size:
                pick = _pair_rng(seed, i, j, 1).integers(pool.shape[0], size=int(miss.sum()))
                groups[miss] = pool[pick]
        rows_i.append(np.column_stack([groups, np.full(K, i)]))
        rows_j.append(np.column_stack([groups, np.full(K, j)]))
    ev = scenario.evaluator()
    Ji = ev(np.vstack(rows_i)).reshape(len(pairs), K)
    Jj = ev(np.vstack(rows_j)).reshape(len(pairs), K)
    wins = (Ji < Jj).all(axis=1)
    eliminated: list[int] = []
    for (i, j), win in zip(pairs, wins):
        if win and j not in eliminated:
            eliminated.append(j)

    dropped = set(eliminated)
    if has_bounded_subset(angles, m):
        undo = list(eliminated)
        while undo and not has_bounded_subset(angles[[v for v in range(n) if v not in dropped]], m):
            _restore_angle(undo.pop(), dropped, angles, sig)
    # survivor floor: the latest eliminations are undone until m remain
    for j in reversed(eliminated):
        if n - len(dropped) >= m:
            break
        dropped.discard(j)
    return [v for v in range(n) if v not in dropped]


def _restore_angle(j, dropped: set, angles, sig) -> None:
    """Bring back the direction of ``j`` for the boundedness restore.

    A direction some survivor already covers cannot help, so nothing is
    restored; otherwise the lowest-variance dropped vehicle on it returns.
    """
    same = np.flatnonzero(np.abs(wrap_signed(angles - angles[j])) <= ANGLE_TIE)
    if any(v not in dropped for v in same):
        return
    dropped.discard(int(min(same, key=lambda v: (sig[v], v))))


def _better(J, idx, best_J, best_idx) -> bool:
    return J < best_J or (J == best_J and (best_idx is None or idx < best_idx))


def _sampling_factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(cov + COV_JITTER * np.eye(cov.shape[0]))


def cross_entropy(
    scenario,
    m: int,
    params: CEParams = CEParams(),
    seed: int = 0,
    candidates=None,
    trace: list | None = None,
) -> SolverReport:
    """Cross-entropy search over road angles, restricted to ``candidates``.

    Elites are the lowest-objective fraction of the rounded samples.  The
    returned selection is the best rounded sample seen in any iteration.  If
    ``trace`` is a list, one dict per iteration is appended to it.
    """
    if m < 3:
        raise ValueError("m must be at least 3")
    t0 = time.perf_counter()
    pool = np.arange(scenario.n) if candidates is None else np.asarray(sorted(candidates), dtype=np.intp)
    if pool.size < m:
        raise ValueError("fewer candidates than m")
    avail = scenario.angles[pool]
    ev = scenario.evaluator()
    mu = params.mean_for(m).copy()
    cov = params.cov_for(m).copy()
    k, ke = params.sample_count, params.elite_count
    best_J, best_idx = np.inf, None
    converged = False
    it = 0
    for it in range(1, params.max_iterations + 1):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), it]))
        L = _sampling_factor(cov)
        S = mu + rng.standard_normal((k, m)) @ L.T
        local, rounded = round_batch(S, avail)
        subsets = np.sort(pool[local], axis=1)
        J = ev(subsets)
        if not np.isfinite(J).any():
            raise AllSamplesInfeasibleError(it)
        order = np.lexsort((*subsets.T[::-1], J))
        top = order[0]
        if _better(J[top], tuple(subsets[top]), best_J, best_idx):
            best_J, best_idx = float(J[top]), tuple(int(v) for v in subsets[top])
        elite = rounded[order[:ke]]
        mu = elite.mean(axis=0)
        dev = elite - mu
        cov = dev.T @ dev / (ke - 1)
        if trace is not None:
            trace.append(
                {
                    "iteration": it,
                    "best_J": best_J,
                    "mean_J_elite": float(np.mean(J[order[:ke]])),
                    "cov_trace": float(np.trace(cov)),
                }
            )
        if np.all(np.sqrt(np.diag(cov)) < params.convergence_tol):
            converged = True
            break
    return SolverReport(
        method="ce",
        best=Selection(best_idx),
        objective=ev.detail(best_idx),
        objective_evaluations=ev.evaluations,
        wall_time=time.perf_counter() - t0,
        optimal=False,
        iterations=it,
        converged=converged,
    )


def random_search(scenario, m: int, n_r: int, seed: int = 0) -> SolverReport:
    """Best of ``n_r`` uniformly drawn M-subsets (duplicates evaluated once)."""
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    keys = rng.random((n_r, scenario.n))
    subsets = np.sort(np.argpartition(keys, m - 1, axis=1)[:, :m], axis=1)
    uniq = np.unique(subsets, axis=0)
    ev = scenario.evaluator()
    J = ev(uniq)
    if not np.isfinite(J).any():
        raise NoFeasibleSubsetError("no sampled subset is bounded")
    # np.unique rows are lexicographically sorted, so argmin breaks ties correctly
    best = int(np.argmin(J))
    best_idx = tuple(int(v) for v in uniq[best])
    return SolverReport(
        method="random",
        best=Selection(best_idx),
        objective=ev.detail(best_idx),
        objective_evaluations=uniq.shape[0],
        wall_time=time.perf_counter() - t0,
        optimal=False,
    )
