"""Trial harnesses behind the CLI experiments and the acceptance suite.

Each trial is a pure function of its arguments, so running trials in a
process pool gives the same rows as running them serially.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .select_bnb import exhaustive_objectives, hash_seed
from .select_ce import CEParams, PreselectParams, cross_entropy, has_bounded_subset, preselect, random_search
from .simulate import PaperVariance, generate_scenario

WORKERS_ENV = "CMMSEL_WORKERS"
RANK_BINS = (0, 1, 5, 10, 20, 50, 100, 500, 1000)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return value


def run_trials(fn, arg_list, workers: int = 1) -> list:
    """``[fn(*args) for args in arg_list]``, optionally in a process pool."""
    arg_list = list(arg_list)
    if workers <= 1 or len(arg_list) <= 1:
        return [fn(*args) for args in arg_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*arg_list)))


def trial_seed(seed: int, trial: int) -> int:
    return hash_seed(seed, trial)


@dataclass(frozen=True)
class RankingConfig:
    n: int = 50
    m: int = 5
    sample_count: int = 1000
    elite_fraction: float = 0.05
    trial_groups: int = 10
    max_iterations: int = 100
    random_draws: int = 5000
    variance_base: float = 0.5
    half_width: float = 1.8


def rank_of(value: float, values: np.ndarray) -> int:
    """0-based exhaustive rank: how many subsets are strictly better."""
    return int(np.count_nonzero(values < value))


def ranking_trial(cfg: RankingConfig, seed: int, with_ce: bool = True, with_random: bool = True) -> dict:
    """One heterogeneous scenario ranked exhaustively against CE and random search.

    A scenario without any bounded M-subset is redrawn from a derived seed;
    ``scenario_seed`` records the one actually used.
    """
    scenario_seed = seed
    for attempt in itertools.count(1):
        sc = generate_scenario(cfg.n, variance_model=PaperVariance(cfg.variance_base), half_width=cfg.half_width, seed=scenario_seed)
        if has_bounded_subset(sc.angles, cfg.m):
            break
        scenario_seed = hash_seed(seed, attempt)
    _, values = exhaustive_objectives(sc, cfg.m)
    row = {"seed": seed, "scenario_seed": scenario_seed, "best_objective": float(values.min())}
    if with_ce:
        cand = preselect(sc, cfg.m, PreselectParams(cfg.trial_groups), seed=seed)
        params = CEParams(cfg.sample_count, cfg.elite_fraction, max_iterations=cfg.max_iterations)
        ce = cross_entropy(sc, cfg.m, params, seed=seed, candidates=cand)
        row.update(
            preselected=len(cand),
            ce_objective=ce.objective.total,
            ce_rank=rank_of(ce.objective.total, values),
            ce_evaluations=ce.objective_evaluations,
            ce_iterations=ce.iterations,
        )
    if with_random:
        rs = random_search(sc, cfg.m, cfg.random_draws, seed=seed)
        row.update(
            random_objective=rs.objective.total,
            random_rank=rank_of(rs.objective.total, values),
            random_evaluations=rs.objective_evaluations,
        )
    return row


def rank_histogram(ranks, bins=RANK_BINS) -> list[tuple[str, int]]:
    """Counts of ranks in ``[bins[i], bins[i+1])`` plus an open last bin."""
    r = np.asarray(ranks)
    edges = list(bins) + [np.inf]
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        label = f"{lo}+" if hi == np.inf else (f"{lo}" if hi == lo + 1 else f"{lo}-{int(hi) - 1}")
        out.append((label, int(np.count_nonzero((r >= lo) & (r < hi)))))
    return out
