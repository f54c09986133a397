"""Exact M-of-N selection for equal variances: brute force and branch-and-bound.

With equal variances the objective depends on road angles only and its
continuous minimum is the regular layout ``theta_opt``.  The bound function
minimises the quadratic model ``J0 + 0.5 * d^T H d`` around ``theta_opt``
over every unassigned slot and over a global rotation of the layout.

The enumeration tree assigns slots in order of increasing road angle: level
``s`` picks the candidate that plays slot ``s`` of ``theta_opt``, so every
subset is reached exactly once.
"""

from __future__ import annotations

import itertools
import math
import time
from functools import lru_cache

import numpy as np

from .error_model import ContinuousOptimum, continuous_optimum
from .errors import NoFeasibleSubsetError, TooLargeError, UnequalVariancesError
from .geometry import TWO_PI, wrap_signed
from .report import Selection, SolverReport
from .select_ce import round_batch

BRUTE_FORCE_CAP = 10_000_000
SAFE_SLOPE = 2.0
GAUGE_SCAN_POINTS = 64
_CHUNK = 250_000

__all__ = [
    "Selection",
    "SolverReport",
    "brute_force",
    "exhaustive_objectives",
    "combination_rank",
    "bound_function",
    "branch_and_bound",
    "bnb_speedup_experiment",
]


@lru_cache(maxsize=4)
def _combinations(n: int, m: int) -> np.ndarray:
    count = math.comb(n, m)
    flat = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(n), m)), dtype=np.int32, count=count * m)
    arr = flat.reshape(count, m)
    arr.flags.writeable = False
    return arr


def exhaustive_objectives(scenario, m: int, cap: int = BRUTE_FORCE_CAP):
    """Objective of every M-subset, in lexicographic subset order.

    Returns ``(subsets, values)``; unbounded subsets have value ``inf``.
    """
    n = scenario.n
    if m < 3 or m > n:
        raise ValueError("need 3 <= m <= n")
    if math.comb(n, m) > cap:
        raise TooLargeError(f"C({n}, {m}) = {math.comb(n, m)} exceeds cap {cap}")
    subsets = _combinations(n, m)
    ev = scenario.evaluator()
    values = np.empty(subsets.shape[0])
    for start in range(0, subsets.shape[0], _CHUNK):
        values[start : start + _CHUNK] = ev(subsets[start : start + _CHUNK])
    return subsets, values


def combination_rank(indices, n: int) -> int:
    """Position of a sorted index tuple in lexicographic order of C(n, m)."""
    idx = sorted(int(i) for i in indices)
    m = len(idx)
    rank, prev = 0, -1
    for s, v in enumerate(idx):
        for u in range(prev + 1, v):
            rank += math.comb(n - u - 1, m - s - 1)
        prev = v
    return rank


def brute_force(scenario, m: int, cap: int = BRUTE_FORCE_CAP) -> SolverReport:
    """Global minimiser by enumeration; ties go to the lexicographically first subset."""
    t0 = time.perf_counter()
    subsets, values = exhaustive_objectives(scenario, m, cap)
    if not np.isfinite(values).any():
        raise NoFeasibleSubsetError("every subset is unbounded")
    best = int(np.argmin(values))
    idx = tuple(int(v) for v in subsets[best])
    ev = scenario.evaluator()
    return SolverReport(
        method="brute_force",
        best=Selection(idx),
        objective=ev.detail(idx),
        objective_evaluations=int(values.size),
        wall_time=time.perf_counter() - t0,
        optimal=True,
    )


def gauge_projected(hessian: np.ndarray) -> np.ndarray:
    """Remove the numerical residue along the all-ones (rotation) direction."""
    m = hessian.shape[0]
    P = np.eye(m) - np.full((m, m), 1.0 / m)
    H = P @ hessian @ P
    return 0.5 * (H + H.T)


def _schur(H: np.ndarray, assigned) -> np.ndarray:
    """Quadratic form left on the assigned slots after minimising over the rest."""
    m = H.shape[0]
    A = np.asarray(sorted(assigned), dtype=np.intp)
    F = np.setdiff1d(np.arange(m), A)
    if F.size == 0:
        return H[np.ix_(A, A)]
    HAF = H[np.ix_(A, F)]
    return H[np.ix_(A, A)] - HAF @ np.linalg.solve(H[np.ix_(F, F)], HAF.T)


def _gauge_min(dev: np.ndarray, S: np.ndarray, return_gauge: bool = False):
    """``min_c dev(c)^T S dev(c)`` with ``dev(c) = wrap(dev - c)``, row-wise.

    ``S`` annihilates the all-ones vector, so the form only changes where
    some entry wraps; scanning one ``c`` per interval between wrap points
    gives the exact minimum.  With ``return_gauge`` the minimising ``c`` of
    each row is returned as well.
    """
    D = np.atleast_2d(dev)
    B, k = D.shape
    if k == 1:
        q, cs = np.zeros(B), D[:, 0].copy()
        return (q, cs) if return_gauge else q
    breaks = np.sort(np.mod(D - np.pi, TWO_PI), axis=1)
    nxt = np.concatenate([breaks[:, 1:], breaks[:, :1] + TWO_PI], axis=1)
    cs = 0.5 * (breaks + nxt)  # (B, k) one c per interval
    W = wrap_signed(D[:, None, :] - cs[:, :, None])  # (B, k, k)
    q = np.einsum("bci,ij,bcj->bc", W, S, W)
    j = q.argmin(axis=1)
    rows = np.arange(B)
    return (q[rows, j], cs[rows, j]) if return_gauge else q[rows, j]


def _unwrappings(dev: np.ndarray) -> np.ndarray:
    """``(W, c)``: one gauge ``c`` per wrap interval and ``W = wrap(dev - c)``."""
    d = np.asarray(dev, dtype=float)
    if d.size == 1:
        return np.zeros((1, 1)), d.copy()
    breaks = np.sort(np.mod(d - np.pi, TWO_PI))
    cs = 0.5 * (breaks + np.append(breaks[1:], breaks[0] + TWO_PI))
    return wrap_signed(d[None, :] - cs[:, None]), cs


def bound_function(scenario, fixed: dict, m: int, opt: ContinuousOptimum) -> float:
    """Lower estimate of the objective over completions of a partial assignment.

    ``fixed`` maps slot numbers (0..M-1) to candidate indices.  Free slots are
    relaxed to continuous angles and the layout may rotate freely.
    """
    if len(fixed) > m or len(set(fixed.values())) != len(fixed):
        raise ValueError("fixed must assign at most m slots to distinct candidates")
    if not fixed:
        return float(opt.objective_at_optimum)
    H = gauge_projected(opt.hessian)
    slots = sorted(fixed)
    S = _schur(H, slots)
    d = np.array([scenario.angles[fixed[s]] - opt.angles[s] for s in slots])
    return float(opt.objective_at_optimum + 0.5 * _gauge_min(d, S)[0])


def _greedy_incumbent(phi, theta, m, ev, order):
    """Nearest-road rounding of the regular layout at the best-fitting rotation.

    The rotation is chosen by total squared rounding distance over a scan of
    ``GAUGE_SCAN_POINTS`` offsets; only the winning subset is evaluated.
    """
    cs = np.arange(GAUGE_SCAN_POINTS) * (TWO_PI / m) / GAUGE_SCAN_POINTS
    targets = theta[None, :] + cs[:, None]
    pos, rounded = round_batch(targets, phi)
    fit = ((rounded - targets) ** 2).sum(axis=1)
    best = np.sort(order[pos[int(np.argmin(fit))]])
    J = ev(best[None, :])[0]
    return float(J), tuple(int(v) for v in best)


def branch_and_bound(
    scenario,
    m: int,
    safe: bool = True,
    opt: ContinuousOptimum | None = None,
    slope: float = SAFE_SLOPE,
    margin_fraction: float = 0.0,
) -> SolverReport:
    """Exact selection for equal variances.

    The quadratic model ``J0 + q/2`` is not a certified lower bound: far from
    the regular layout it overshoots the true objective.  In safe mode the
    model excess is damped by ``1 + slope * sqrt(q / J0)``, which tracks the
    relative size of the neglected higher-order terms, and an optional
    additive ``margin_fraction * J0`` is subtracted.  ``safe=False`` prunes
    on the raw model.
    """
    t0 = time.perf_counter()
    if not scenario.equal_variances():
        raise UnequalVariancesError("branch_and_bound requires equal variances")
    n = scenario.n
    if m < 3 or m > n:
        raise ValueError("need 3 <= m <= n")
    ev = scenario.evaluator()
    flags = ("paper_mode",) if not safe else ()
    if m == n:
        idx = tuple(range(n))
        if not np.isfinite(ev([idx])[0]):
            raise NoFeasibleSubsetError("the only subset is unbounded")
        return SolverReport("bnb", Selection(idx), ev.detail(idx), ev.evaluations, 0, 0, time.perf_counter() - t0, True, flags=flags)

    if opt is None:
        opt = continuous_optimum(m, scenario.half_width, float(scenario.sigma_sq[0]))
    order = np.argsort(scenario.angles, kind="stable")
    phi = scenario.angles[order]
    theta = opt.angles
    J0 = opt.objective_at_optimum
    H = gauge_projected(opt.hessian)
    prefix_S = [None] + [_schur(H, range(k)) for k in range(1, m + 1)]
    margin = margin_fraction * J0 if safe else 0.0
    beta = slope if safe else 0.0

    def q_limit() -> float:
        # largest q with (q/2) / (1 + beta sqrt(q/J0)) <= best + margin - J0
        E = best_J + margin - J0
        if E <= 0.0:
            return 0.0
        a = 2.0 * E * beta / np.sqrt(J0)
        return (0.5 * (a + np.sqrt(a * a + 8.0 * E))) ** 2

    best_J, best_idx = _greedy_incumbent(phi, theta, m, ev, order)
    stats = {"bounds": 0, "pruned": 0}

    def expand(positions: list[int], d: np.ndarray):
        nonlocal best_J, best_idx
        k = len(positions)
        # one bound evaluation per node, minimised over rotations
        W, cs = _unwrappings(d)
        S = prefix_S[k + 1]
        q = np.einsum("ci,ij,cj->c", W, prefix_S[k], W)
        stats["bounds"] += 1
        T = q_limit()
        if q.min() > T:
            stats["pruned"] += 1
            return
        child = np.arange(positions[-1] + 1, n - (m - k - 1))
        # For each prefix unwrapping, the children whose extension stays under
        # the incumbent form an interval in the new slot angle.  The union
        # over unwrappings contains every child whose exact bound passes.
        a = S[k, k]
        b = W @ S[k, :k]
        disc = np.maximum(b * b - a * (q - T), 0.0)
        centre = -b / a
        half = np.minimum(np.sqrt(disc) / a, TWO_PI)  # capped: an infinite incumbent admits every child
        raw = phi[child] - theta[k]
        dist = np.abs(wrap_signed(raw[None, :] - cs[:, None] - centre[:, None])) - half[:, None]
        slack = dist.min(axis=0)
        inside = np.flatnonzero(slack <= 0.0)
        stats["pruned"] += child.size - inside.size
        if inside.size == 0:
            return
        if k == m - 1:
            # leaves best model first, re-tightening after every improvement
            x = wrap_signed(raw[None, inside] - cs[:, None])
            model = (q[:, None] + 2.0 * b[:, None] * x + a * x * x).min(axis=0)
            for li in np.argsort(model, kind="stable"):
                if model[li] > T:
                    stats["pruned"] += 1
                    continue
                cand = tuple(sorted(int(v) for v in order[positions + [int(child[inside[li]])]]))
                J = ev([cand])[0]
                if J < best_J or (J == best_J and cand < best_idx):
                    best_J, best_idx = float(J), cand
                    T = q_limit()
            return
        closeness = (dist + half[:, None]).min(axis=0)
        for ci in inside[np.argsort(closeness[inside], kind="stable")]:
            expand(positions + [int(child[ci])], np.append(d, raw[ci]))

    for p0 in np.argsort(np.abs(wrap_signed(phi[: n - m + 1] - theta[0])), kind="stable"):
        expand([int(p0)], np.array([phi[p0] - theta[0]]))

    if not np.isfinite(best_J):
        raise NoFeasibleSubsetError("every subset is unbounded")
    return SolverReport(
        method="bnb",
        best=Selection(best_idx),
        objective=ev.detail(best_idx),
        objective_evaluations=ev.evaluations,
        bound_evaluations=stats["bounds"],
        nodes_pruned=stats["pruned"],
        wall_time=time.perf_counter() - t0,
        optimal=True,
        flags=flags,
    )


def bnb_speedup_experiment(n_list, m_list, trials: int, seed: int = 0, sigma_sq: float = 0.5, half_width: float = 1.8, safe: bool = True) -> list[dict]:
    """Evaluation-count ratio of branch-and-bound to exhaustive search.

    For each (N, M) the ratio ``(objective + bound evaluations) / C(N, M)``
    is averaged over ``trials`` uniform-angle scenarios.
    """
    from .simulate import EqualVariance, generate_scenario

    rows = []
    for n in n_list:
        for m in m_list:
            if m > n or m < 3:
                continue
            ratios, times, evals = [], [], []
            for t in range(trials):
                sc = generate_scenario(n, variance_model=EqualVariance(sigma_sq), half_width=half_width, seed=hash_seed(seed, n, m, t))
                try:
                    rep = branch_and_bound(sc, m, safe=safe)
                except NoFeasibleSubsetError:
                    continue
                evals.append(rep.total_evaluations)
                ratios.append(rep.total_evaluations / math.comb(n, m))
                times.append(rep.wall_time)
            rows.append(
                {
                    "n": n,
                    "m": m,
                    "trials": len(ratios),
                    "combinations": math.comb(n, m),
                    "mean_evaluations": float(np.mean(evals)) if evals else float("nan"),
                    "ratio": float(np.mean(ratios)) if ratios else float("nan"),
                    "mean_wall_time_s": float(np.mean(times)) if times else float("nan"),
                }
            )
    return rows


def hash_seed(*parts: int) -> int:
    """Derive a 63-bit seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(2, np.uint32).astype(np.uint64) @ np.array([1 << 32, 1], dtype=np.uint64)) & ((1 << 63) - 1)
