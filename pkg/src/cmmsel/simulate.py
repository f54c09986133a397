"""Scenario generation and Monte Carlo validation of the error model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .error_model import (
    DEFAULT_HALF_WIDTH,
    DEFAULT_VALIDITY_RATIO,
    GapModel,
    SelectionEvaluator,
    expected_e0_sq_asymptotic,
    objective,
)
from .errors import EmptyRegionError, UnboundedError
from .geometry import (
    TWO_PI,
    HalfPlaneSystem,
    RoadConstraint,
    check_bounded,
    intersect_halfplanes,
    polygon_batch,
    wrap_angle,
)

MC_BLOCK = 4096


@dataclass(frozen=True)
class Uniform:
    name = "uniform"

    def sample(self, rng: np.random.Generator, size):
        return rng.uniform(0.0, TWO_PI, size)

    def gap_model(self, n: int) -> GapModel:
        return GapModel.uniform(n)


@dataclass(frozen=True)
class VonMises:
    kappa: float
    mu: float = 0.0

    @property
    def name(self) -> str:
        return f"von_mises({self.kappa:g})"

    def sample(self, rng: np.random.Generator, size):
        return wrap_angle(rng.vonmises(self.mu, self.kappa, size))

    def gap_model(self, n: int) -> GapModel:
        return GapModel.von_mises(n, self.kappa, self.mu)


@dataclass(frozen=True)
class EqualVariance:
    sigma_sq: float = 0.5

    name = "equal"


@dataclass(frozen=True)
class PaperVariance:
    """``sigma_i^2 = base + |v_i|`` with ``v_i`` standard normal."""

    base: float = 0.5

    name = "paper"


AngleDistribution = Union[Uniform, VonMises, Sequence[float]]
VarianceModel = Union[EqualVariance, PaperVariance, Sequence[float]]


def parse_distribution(text: str):
    """``"uniform"`` or ``"von_mises:<kappa>"``."""
    text = text.strip().lower()
    if text == "uniform":
        return Uniform()
    if text.startswith("von_mises"):
        _, _, kappa = text.partition(":")
        return VonMises(float(kappa or 1.0))
    raise ValueError(f"unknown angle distribution {text!r}")


@dataclass(frozen=True)
class Scenario:
    """A pool of N candidate vehicles sharing one half lane width."""

    constraints: tuple[RoadConstraint, ...]
    half_width: float = DEFAULT_HALF_WIDTH
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if len(self.constraints) < 3:
            raise ValueError("a scenario needs at least 3 vehicles")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @classmethod
    def from_arrays(cls, angles, sigma_sq, half_width=DEFAULT_HALF_WIDTH, seed=0, label=""):
        sig = np.broadcast_to(np.asarray(sigma_sq, dtype=float), np.shape(angles))
        cons = tuple(RoadConstraint(wrap_angle(float(a)), float(s)) for a, s in zip(angles, sig))
        return cls(cons, float(half_width), int(seed), label)

    @property
    def n(self) -> int:
        return len(self.constraints)

    @cached_property
    def angles(self) -> np.ndarray:
        return np.array([c.angle for c in self.constraints])

    @cached_property
    def sigma_sq(self) -> np.ndarray:
        return np.array([c.sigma_sq for c in self.constraints])

    def subset(self, indices) -> list[RoadConstraint]:
        return [self.constraints[i] for i in indices]

    def evaluator(self) -> SelectionEvaluator:
        return SelectionEvaluator(self.angles, self.sigma_sq, self.half_width)

    def equal_variances(self, rtol: float = 1e-12) -> bool:
        s = self.sigma_sq
        return bool(np.all(np.abs(s - s[0]) <= rtol * abs(s[0])))

    def permuted(self, perm) -> "Scenario":
        return Scenario(tuple(self.constraints[i] for i in perm), self.half_width, self.seed, self.label)


def generate_scenario(
    n: int,
    angle_distribution: AngleDistribution = Uniform(),
    variance_model: VarianceModel = PaperVariance(),
    half_width: float = DEFAULT_HALF_WIDTH,
    seed: int = 0,
    label: str = "",
) -> Scenario:
    """Deterministic scenario for a given seed.

    Angles and variances come from independent child streams of ``seed`` so
    changing one model does not reshuffle the other.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    angle_rng, var_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    if isinstance(angle_distribution, (Uniform, VonMises)):
        angles = angle_distribution.sample(angle_rng, n)
    else:
        angles = np.asarray(angle_distribution, dtype=float)
        if angles.shape != (n,):
            raise ValueError("explicit angle list must have n entries")
    if isinstance(variance_model, EqualVariance):
        sig = np.full(n, variance_model.sigma_sq)
    elif isinstance(variance_model, PaperVariance):
        sig = variance_model.base + np.abs(var_rng.standard_normal(n))
    else:
        sig = np.asarray(variance_model, dtype=float)
        if sig.shape != (n,):
            raise ValueError("explicit variance list must have n entries")
    return Scenario.from_arrays(angles, sig, half_width, seed, label)


@dataclass(frozen=True)
class MonteCarloReport:
    samples: int
    discarded_empty: int
    mse_exact: float
    mse_exact_se: float
    mse_linearized: float
    mean_error_exact: tuple[float, float]
    validity_fraction: float

    @property
    def evaluated(self) -> int:
        return self.samples - self.discarded_empty

    @property
    def relative_gap(self) -> float:
        return abs(self.mse_exact - self.mse_linearized) / self.mse_linearized


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(block)]))


def monte_carlo_error(
    scenario_subset: Sequence[RoadConstraint],
    half_width: float = DEFAULT_HALF_WIDTH,
    samples: int = 10_000,
    seed: int = 0,
    ratio: float = DEFAULT_VALIDITY_RATIO,
    noise_scale: float = 1.0,
) -> MonteCarloReport:
    """Exact perturbed-polygon error statistics versus the linearised model.

    Each sample draws ``X_i ~ N(0, sigma_i^2)`` (times ``noise_scale``), shifts
    every offset to ``w - X_i`` and takes the centroid of the resulting
    polygon as the realised error.  Empty polygons are discarded and counted.
    Noise is drawn in fixed blocks keyed by ``(seed, block)``, so statistics
    do not depend on how the blocks are scheduled.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    cons = tuple(scenario_subset)
    system = HalfPlaneSystem(cons, half_width)
    if len(cons) < 3 or not check_bounded(system):
        raise UnboundedError("subset is unbounded")
    m = len(cons)
    angles = system.angles
    sigma = np.sqrt(np.array([c.sigma_sq for c in cons])) * noise_scale
    scaled = [RoadConstraint(c.angle, c.sigma_sq * noise_scale**2) for c in cons]
    linear = objective(scaled, half_width).total
    threshold = ratio * TWO_PI * half_width / m

    perm = np.argsort(angles, kind="stable")
    th_sorted = angles[perm]
    sq_parts: list[np.ndarray] = []
    ex_parts: list[np.ndarray] = []
    ey_parts: list[np.ndarray] = []
    valid_count = 0
    discarded = 0
    for block, start in enumerate(range(0, samples, MC_BLOCK)):
        nb = min(MC_BLOCK, samples - start)
        X = _block_rng(seed, block).standard_normal((nb, m)) * sigma
        valid_count += int(np.count_nonzero(np.abs(X).max(axis=1) <= threshold))
        b = half_width - X
        pb = polygon_batch(np.broadcast_to(th_sorted, (nb, m)), b[:, perm])
        cx = pb.centroid[:, 0].copy()
        cy = pb.centroid[:, 1].copy()
        keep = pb.valid.copy()
        for r in np.flatnonzero(~pb.valid):
            try:
                poly = intersect_halfplanes(system.with_offsets(b[r]))
            except EmptyRegionError:
                discarded += 1
                continue
            cx[r], cy[r] = poly.centroid
            keep[r] = True
        cx, cy = cx[keep], cy[keep]
        sq_parts.append(cx * cx + cy * cy)
        ex_parts.append(cx)
        ey_parts.append(cy)
    sq = np.concatenate(sq_parts)
    evaluated = sq.size
    if evaluated == 0:
        raise EmptyRegionError("every perturbed sample was empty")
    mse = math.fsum(sq) / evaluated
    var = math.fsum((sq - mse) ** 2) / max(evaluated - 1, 1)
    mean_e = (math.fsum(np.concatenate(ex_parts)) / evaluated, math.fsum(np.concatenate(ey_parts)) / evaluated)
    return MonteCarloReport(
        samples=samples,
        discarded_empty=discarded,
        mse_exact=mse,
        mse_exact_se=math.sqrt(var / evaluated),
        mse_linearized=linear,
        mean_error_exact=mean_e,
        validity_fraction=valid_count / samples,
    )


def full_set_e0_sq(angle_rows: np.ndarray, half_width: float) -> np.ndarray:
    """Exact squared centroid norm of each row's full polygon; NaN if unbounded."""
    th = np.sort(wrap_angle(np.atleast_2d(angle_rows)), axis=1)
    pb = polygon_batch(th, half_width)
    e0 = np.where(pb.valid, pb.centroid[:, 0] ** 2 + pb.centroid[:, 1] ** 2, np.nan)
    for r in np.flatnonzero(~pb.valid):
        system = HalfPlaneSystem.from_angles(th[r], half_width)
        if check_bounded(system):
            c = intersect_halfplanes(system).centroid
            e0[r] = c @ c
    return e0


def compare_angle_distributions(
    n: int,
    distributions: Sequence,
    trials: int,
    half_width: float = DEFAULT_HALF_WIDTH,
    seed: int = 0,
) -> list[dict]:
    """Mean exact geometric error of the full N-set under each angle distribution.

    One row per distribution with the Monte Carlo mean, its standard error,
    the number of unbounded draws skipped, and the asymptotic prediction.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    rows = []
    for k, dist in enumerate(distributions):
        if isinstance(dist, str):
            dist = parse_distribution(dist)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), k]))
        e0 = full_set_e0_sq(dist.sample(rng, (trials, n)), half_width)
        ok = e0[np.isfinite(e0)]
        mean = math.fsum(ok) / ok.size
        se = float(np.std(ok, ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else float("nan")
        rows.append(
            {
                "distribution": dist.name,
                "n": n,
                "trials": trials,
                "unbounded": int(trials - ok.size),
                "mean_e0_sq": mean,
                "se_e0_sq": se,
                "asymptotic_e0_sq": expected_e0_sq_asymptotic(dist.gap_model(n), half_width),
            }
        )
    return rows
