import math

import numpy as np
import pytest

from cmmsel.error_model import continuous_optimum
from cmmsel.errors import NoFeasibleSubsetError, TooLargeError, UnequalVariancesError
from cmmsel.geometry import wrap_signed
from cmmsel.select_bnb import (
    _gauge_min,
    _schur,
    bnb_speedup_experiment,
    bound_function,
    branch_and_bound,
    brute_force,
    combination_rank,
    exhaustive_objectives,
    gauge_projected,
)
from cmmsel.simulate import EqualVariance, Scenario, generate_scenario

SIX = np.deg2rad([0, 50, 120, 200, 250, 300])


@pytest.fixture
def six():
    return Scenario.from_arrays(SIX, 0.5)


class TestBruteForce:
    def test_six_fixture(self, six):
        rep = brute_force(six, 4)
        # frozen from exhaustive enumeration of all 15 subsets
        assert rep.best.indices == (1, 2, 3, 5)
        assert rep.objective.total == pytest.approx(0.5484078966944266, rel=1e-12)
        assert rep.objective_evaluations == 15
        assert rep.optimal

    def test_n_equals_m(self, six):
        assert brute_force(six, 6).best.indices == tuple(range(6))

    def test_half_circle(self):
        sc = Scenario.from_arrays(np.linspace(0.1, 3.0, 8), 0.5)
        with pytest.raises(NoFeasibleSubsetError):
            brute_force(sc, 4)
        with pytest.raises(NoFeasibleSubsetError):
            branch_and_bound(sc, 4)

    def test_cap(self, six):
        with pytest.raises(TooLargeError):
            brute_force(six, 3, cap=10)

    def test_tie_break_lexicographic(self):
        # the two squares {0,2,4,6} and {1,3,5,7} are congruent
        sc = Scenario.from_arrays(np.arange(8) * np.pi / 4, 0.5)
        assert brute_force(sc, 4).best.indices == (0, 2, 4, 6)
        assert branch_and_bound(sc, 4).best.indices == (0, 2, 4, 6)

    def test_combination_rank(self):
        subsets, _ = exhaustive_objectives(generate_scenario(9, seed=0), 4)
        for r in (0, 1, 17, 100, subsets.shape[0] - 1):
            assert combination_rank(subsets[r], 9) == r


class TestBound:
    def test_examples(self, six):
        opt = continuous_optimum(4, six.half_width, 0.5)
        assert bound_function(six, {}, 4, opt) == opt.objective_at_optimum
        sc = Scenario.from_arrays([opt.angles[0], 1.0, 2.0, 4.0, 5.0], 0.5)
        assert bound_function(sc, {0: 0}, 4, opt) == pytest.approx(opt.objective_at_optimum, abs=1e-15)
        # all slots fixed: the model at the deviations, minimised over rotation
        full = {s: i for s, i in enumerate([0, 1, 3, 5])}
        d = SIX[[0, 1, 3, 5]] - opt.angles
        H = gauge_projected(opt.hessian)
        cs = np.linspace(-np.pi, np.pi, 20001)
        scan = min(0.5 * wrap_signed(d - c) @ H @ wrap_signed(d - c) for c in cs)
        assert bound_function(six, full, 4, opt) == pytest.approx(opt.objective_at_optimum + scan, rel=1e-6)

    def test_precondition(self, six):
        opt = continuous_optimum(4, six.half_width, 0.5)
        with pytest.raises(ValueError):
            bound_function(six, {0: 1, 1: 1}, 4, opt)

    def test_bound_below_completions(self):
        rng = np.random.default_rng(0)
        m = 5
        opt = continuous_optimum(m, 1.8, 0.5)
        H = gauge_projected(opt.hessian)
        sc = generate_scenario(12, variance_model=EqualVariance(0.5), seed=4)
        for k in (1, 2, 3):
            fixed = {s: int(i) for s, i in enumerate(rng.choice(12, k, replace=False))}
            b = bound_function(sc, fixed, m, opt)
            d_fixed = np.array([sc.angles[fixed[s]] - opt.angles[s] for s in range(k)])
            for _ in range(1000):
                d = np.concatenate([d_fixed, rng.uniform(-np.pi, np.pi, m - k)])
                c = rng.uniform(-np.pi, np.pi)
                x = wrap_signed(d - c)
                assert b <= opt.objective_at_optimum + 0.5 * x @ H @ x + 1e-12

    def test_gauge_min_exact(self):
        rng = np.random.default_rng(1)
        opt = continuous_optimum(6, 1.8, 0.5)
        S = _schur(gauge_projected(opt.hessian), range(3))
        cs = np.linspace(-np.pi, np.pi, 40001)
        for _ in range(20):
            d = rng.uniform(-np.pi, np.pi, 3)
            X = wrap_signed(d[None, :] - cs[:, None])
            scan = np.einsum("ci,ij,cj->c", X, S, X).min()
            assert _gauge_min(d, S)[0] <= scan + 1e-12
            assert _gauge_min(d, S)[0] >= scan - 1e-6 * max(scan, 1e-3)


class TestBranchAndBound:
    def test_six_fixture(self, six):
        a, b = brute_force(six, 4), branch_and_bound(six, 4)
        assert a.best == b.best and a.objective.total == b.objective.total
        assert b.optimal and b.flags == ()

    def test_n_equals_m(self, six):
        rep = branch_and_bound(six, 6)
        assert rep.best.indices == tuple(range(6))
        assert rep.nodes_pruned == 0 and rep.bound_evaluations == 0

    def test_unequal_variances(self):
        with pytest.raises(UnequalVariancesError):
            branch_and_bound(generate_scenario(10, seed=0), 4)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for t in range(30):
            n, m = int(rng.integers(8, 13)), int(rng.integers(3, 6))
            sc = generate_scenario(n, variance_model=EqualVariance(0.5), seed=1000 + t)
            try:
                ref = brute_force(sc, m)
            except NoFeasibleSubsetError:
                continue
            rep = branch_and_bound(sc, m)
            assert rep.objective.total == ref.objective.total
            assert rep.best == ref.best

    def test_paper_mode_flag(self, six):
        assert branch_and_bound(six, 4, safe=False).flags == ("paper_mode",)

    def test_deterministic(self):
        sc = generate_scenario(30, variance_model=EqualVariance(0.5), seed=8)
        a, b = branch_and_bound(sc, 6), branch_and_bound(sc, 6)
        assert a.deterministic_fields() == b.deterministic_fields()

    def test_permutation_invariance(self):
        sc = generate_scenario(14, variance_model=EqualVariance(0.5), seed=21)
        perm = np.random.default_rng(0).permutation(14)
        a, b = branch_and_bound(sc, 5), branch_and_bound(sc.permuted(perm), 5)
        assert b.objective.total == pytest.approx(a.objective.total, rel=1e-12)
        assert np.allclose(np.sort(sc.angles[list(a.best.indices)]), np.sort(sc.angles[perm][list(b.best.indices)]))

    def test_large_instance_is_cheap(self):
        sc = generate_scenario(100, variance_model=EqualVariance(0.5), seed=hash(("large", 0)) & 0xFFFF)
        rep = branch_and_bound(sc, 10)
        assert rep.total_evaluations <= 100_000
        assert rep.total_evaluations / math.comb(100, 10) <= 1e-8


class TestSpeedupExperiment:
    def test_rows_and_trend(self):
        rows = bnb_speedup_experiment([8, 14], [4], trials=3, seed=1)
        assert [(r["n"], r["m"]) for r in rows] == [(8, 4), (14, 4)]
        assert rows[1]["ratio"] < rows[0]["ratio"]

    def test_n_equals_m_ratio(self):
        (row,) = bnb_speedup_experiment([5], [5], trials=2, seed=0)
        assert row["ratio"] >= 1.0
