import numpy as np
import pytest

from cmmsel.error_model import objective, regular_angles
from cmmsel.errors import UnboundedError
from cmmsel.geometry import RoadConstraint
from cmmsel.simulate import (
    EqualVariance,
    PaperVariance,
    Uniform,
    VonMises,
    compare_angle_distributions,
    generate_scenario,
    monte_carlo_error,
    parse_distribution,
)

W = 1.8
ASYM = [0.0, np.pi / 2, np.pi, 5 * np.pi / 4]


def cons(angles, sig):
    sig = np.broadcast_to(sig, np.shape(angles))
    return [RoadConstraint(float(a), float(s)) for a, s in zip(angles, sig)]


class TestGenerate:
    def test_paper_variances(self):
        sc = generate_scenario(500, variance_model=PaperVariance(), seed=7)
        assert sc.sigma_sq.min() >= 0.5
        assert np.all((0 <= sc.angles) & (sc.angles < 2 * np.pi))

    def test_equal_and_explicit(self):
        assert generate_scenario(20, variance_model=EqualVariance(0.3)).equal_variances()
        a = [0.3, 2.0, 1.0, 5.0]
        s = [1.0, 2.0, 3.0, 4.0]
        sc = generate_scenario(4, angle_distribution=a, variance_model=s)
        assert np.array_equal(sc.angles, a)
        assert np.array_equal(sc.sigma_sq, s)

    def test_deterministic(self):
        a, b = generate_scenario(50, seed=3), generate_scenario(50, seed=3)
        assert a == b
        assert not np.array_equal(a.angles, generate_scenario(50, seed=4).angles)

    def test_variance_model_does_not_move_angles(self):
        a = generate_scenario(30, variance_model=PaperVariance(), seed=1)
        b = generate_scenario(30, variance_model=EqualVariance(), seed=1)
        assert np.array_equal(a.angles, b.angles)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            generate_scenario(2)
        with pytest.raises(ValueError):
            generate_scenario(4, angle_distribution=[0.0, 1.0])

    def test_parse_distribution(self):
        assert parse_distribution("uniform") == Uniform()
        assert parse_distribution("von_mises:2") == VonMises(2.0)
        with pytest.raises(ValueError):
            parse_distribution("cauchy")


class TestMonteCarlo:
    def test_zero_noise_limit(self):
        e0 = objective(cons(ASYM, 1.0), W).e0_sq
        for sig_sq in ((1e-6 * W) ** 2, 1e-12):
            rep = monte_carlo_error(cons(ASYM, sig_sq), W, samples=2000, seed=1)
            assert rep.mse_exact == pytest.approx(e0, rel=1e-6)
            assert rep.discarded_empty == 0

    def test_regular_polygon_closed_form(self):
        m, sigma = 6, W / 100
        rep = monte_carlo_error(cons(regular_angles(m), sigma**2), W, samples=100_000, seed=2)
        assert abs(rep.mse_exact - 4 * sigma**2 / m) < 3 * rep.mse_exact_se
        assert rep.mse_linearized == pytest.approx(4 * sigma**2 / m, rel=1e-9)

    def test_heterogeneous_fixture(self):
        subset = cons([0.2, 1.4, 2.3, 3.5, 4.4, 5.6], [0.5, 0.9, 0.6, 1.2, 0.7, 1.0])
        rep = monte_carlo_error(subset, W, samples=50_000, seed=3, noise_scale=0.02)
        assert rep.validity_fraction > 0.99
        assert rep.relative_gap < 0.05

    def test_linearization_convergence(self):
        subset = cons(ASYM, [0.5, 1.0, 0.7, 0.6])
        gaps = [
            monte_carlo_error(subset, W, samples=50_000, seed=5, noise_scale=s).relative_gap
            for s in (1.0, 0.5, 0.25, 0.125)
        ]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[3] < gaps[1]

    def test_discard_accounting(self):
        rep = monte_carlo_error(cons(regular_angles(3), 4.0), 1.0, samples=5000, seed=0)
        assert rep.discarded_empty > 0
        assert rep.samples == rep.evaluated + rep.discarded_empty

    def test_reproducible(self):
        subset = cons(ASYM, 0.5)
        a = monte_carlo_error(subset, W, samples=9000, seed=11)
        b = monte_carlo_error(subset, W, samples=9000, seed=11)
        assert a == b
        assert a != monte_carlo_error(subset, W, samples=9000, seed=12)

    def test_preconditions(self):
        with pytest.raises(UnboundedError):
            monte_carlo_error(cons([0.0, 1.0, 2.0], 0.5), W)
        with pytest.raises(ValueError):
            monte_carlo_error(cons(ASYM, 0.5), W, samples=0)


class TestDistributions:
    def test_kappa_zero_is_uniform(self):
        u, v = compare_angle_distributions(50, ["uniform", VonMises(0.0)], trials=400, seed=1)
        se = np.hypot(u["se_e0_sq"], v["se_e0_sq"])
        assert abs(u["mean_e0_sq"] - v["mean_e0_sq"]) < 4 * se
        assert u["asymptotic_e0_sq"] == pytest.approx(v["asymptotic_e0_sq"], rel=1e-12)

    def test_rows(self):
        rows = compare_angle_distributions(60, ["uniform", "von_mises:1"], trials=50, seed=0)
        assert [r["distribution"] for r in rows] == ["uniform", "von_mises(1)"]
        for r in rows:
            assert r["trials"] == 50 and r["mean_e0_sq"] > 0
