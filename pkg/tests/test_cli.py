import csv
import json
import math

import pytest

from cmmsel import __version__
from cmmsel.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, load_scenario, main


def read_csv(path):
    lines = path.read_text().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    return header, list(csv.DictReader(body))


@pytest.fixture
def paper50(tmp_path):
    out = tmp_path / "s.json"
    assert main(["gen", "--n", "50", "--angles", "uniform", "--variances", "paper", "--seed", "7", "--out", str(out)]) == EXIT_OK
    return out


class TestGen:
    def test_paper_setup(self, paper50):
        doc = json.loads(paper50.read_text())
        assert set(doc) == {"half_width_m", "seed", "vehicles"}
        assert len(doc["vehicles"]) == 50
        assert all(v["sigma_sq_m2"] >= 0.5 for v in doc["vehicles"])
        assert all(0 <= v["angle_rad"] < 2 * math.pi for v in doc["vehicles"])
        assert [v["id"] for v in doc["vehicles"]] == list(range(50))

    def test_byte_identical(self, tmp_path, paper50):
        again = tmp_path / "t.json"
        main(["gen", "--n", "50", "--angles", "uniform", "--variances", "paper", "--seed", "7", "--out", str(again)])
        assert again.read_bytes() == paper50.read_bytes()

    def test_round_trip(self, paper50):
        sc = load_scenario(paper50)
        assert sc.n == 50 and sc.seed == 7 and sc.half_width == 1.8

    def test_degrees(self, tmp_path):
        out = tmp_path / "d.json"
        assert main(["gen", "--n", "4", "--angles", "0,90,180,270", "--degrees", "--variances", "equal:0.25", "--out", str(out)]) == EXIT_OK
        sc = load_scenario(out)
        assert sc.angles[1] == pytest.approx(math.pi / 2)
        assert sc.equal_variances() and sc.sigma_sq[0] == 0.25

    @pytest.mark.parametrize(
        "argv",
        [
            ["gen", "--n", "2"],
            ["gen", "--n", "5", "--half-width", "0"],
            ["gen", "--n", "5", "--degrees"],
            ["gen", "--n", "3", "--angles", "0,1"],
            ["gen", "--n", "5", "--variances", "weird"],
            ["frobnicate"],
        ],
    )
    def test_usage_errors(self, argv, tmp_path, capsys):
        assert main(argv + (["--out", str(tmp_path / "x.json")] if argv[0] == "gen" else [])) == EXIT_USAGE
        assert capsys.readouterr().err


class TestSolve:
    def test_all_methods(self, tmp_path):
        sc = tmp_path / "eq.json"
        main(["gen", "--n", "12", "--variances", "equal:0.5", "--seed", "3", "--out", str(sc)])
        out = tmp_path / "r.csv"
        assert main(["solve", str(sc), "--m", "4", "--method", "all", "--k", "200", "--out", str(out)]) == EXIT_OK
        header, rows = read_csv(out)
        assert header[0] == f"# cmmsel {__version__}"
        assert any(h.startswith("# config: ") for h in header) and any(h.startswith("# seed: ") for h in header)
        by = {r["method"]: r for r in rows}
        assert set(by) == {"bnb", "ce", "random", "brute_force"}
        assert float(by["bnb"]["objective"]) == float(by["brute_force"]["objective"])
        for col in ("n", "m", "seed", "objective", "evals_objective", "evals_bound", "nodes_pruned", "wall_time_s"):
            assert col in rows[0]

    def test_bnb_on_heterogeneous_names_precondition(self, paper50, capsys):
        assert main(["solve", str(paper50), "--method", "bnb", "--m", "5"]) == EXIT_USAGE
        assert "UnequalVariances" in capsys.readouterr().err

    def test_infeasible(self, tmp_path, capsys):
        sc = tmp_path / "half.json"
        main(["gen", "--n", "6", "--angles", "10,30,50,70,90,110", "--degrees", "--variances", "equal:0.5", "--out", str(sc)])
        assert main(["solve", str(sc), "--m", "3", "--method", "brute"]) == EXIT_INFEASIBLE
        assert "NoFeasibleSubset" in capsys.readouterr().err

    def test_bad_m(self, paper50):
        assert main(["solve", str(paper50), "--m", "2"]) == EXIT_USAGE

    def test_missing_file(self, tmp_path):
        assert main(["solve", str(tmp_path / "nope.json"), "--m", "3"]) == EXIT_USAGE

    def test_ce_trace_and_determinism(self, paper50, tmp_path):
        argv = ["solve", str(paper50), "--method", "ce", "--m", "5", "--k", "300", "--rho", "0.05", "--preselect-k", "10"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        ta = tmp_path / "ta.csv"
        assert main(argv + ["--out", str(a), "--trace", str(ta)]) == EXIT_OK
        assert main(argv + ["--out", str(b)]) == EXIT_OK
        _, ra = read_csv(a)
        _, rb = read_csv(b)
        for r in ra + rb:
            r.pop("wall_time_s")
        assert ra == rb
        _, tr = read_csv(ta)
        assert [int(r["iteration"]) for r in tr] == list(range(1, len(tr) + 1))

    def test_bnb_large_equal_variance(self, tmp_path):
        sc = tmp_path / "big.json"
        main(["gen", "--n", "100", "--variances", "equal:0.5", "--seed", "1", "--out", str(sc)])
        out = tmp_path / "b.csv"
        assert main(["solve", str(sc), "--method", "bnb", "--m", "10", "--out", str(out)]) == EXIT_OK
        _, rows = read_csv(out)
        assert int(rows[0]["evals_objective"]) + int(rows[0]["evals_bound"]) <= 100_000


class TestEvaluate:
    def test_objective_and_mc(self, tmp_path, capsys):
        sc = tmp_path / "sq.json"
        main(["gen", "--n", "4", "--angles", "0,90,180,270", "--degrees", "--variances", "equal:0.25", "--out", str(sc)])
        capsys.readouterr()
        out = tmp_path / "e.csv"
        assert main(["evaluate", str(sc), "--select", "0,1,2,3", "--mc-samples", "2000", "--out", str(out)]) == EXIT_OK
        _, rows = read_csv(out)
        assert float(rows[0]["objective"]) == pytest.approx(0.25)
        assert int(rows[0]["mc_samples"]) == 2000

    def test_bad_selection(self, paper50):
        assert main(["evaluate", str(paper50), "--select", "0,0,1"]) == EXIT_USAGE
        assert main(["evaluate", str(paper50), "--select", "0,1,99"]) == EXIT_USAGE

    def test_unbounded_selection(self, paper50, capsys):
        sc = load_scenario(paper50)
        order = sc.angles.argsort()
        assert main(["evaluate", str(paper50), "--select", ",".join(str(i) for i in order[:3])]) == EXIT_INFEASIBLE


class TestExperiment:
    def test_ranking_independent_of_workers(self, tmp_path):
        base = ["experiment", "ce-quality", "--n", "10", "--m", "3", "--trials", "3", "--k", "100", "--nr", "50", "--seed", "2"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(base + ["--workers", "1", "--out", str(a)]) == EXIT_OK
        assert main(base + ["--workers", "2", "--out", str(b)]) == EXIT_OK

        def body(path):  # the config line echoes the output path itself
            return [ln for ln in path.read_text().splitlines() if not ln.startswith("# config:")]

        assert body(a) == body(b)
        assert body(tmp_path / "a.long.csv") == body(tmp_path / "b.long.csv")
        _, rows = read_csv(a)
        assert len(rows) == 3 and "ce_rank" in rows[0]

    def test_long_format(self, tmp_path):
        out = tmp_path / "u.csv"
        assert main(["experiment", "uniform-optimality", "--n", "50", "--trials", "20", "--out", str(out)]) == EXIT_OK
        header, rows = read_csv(tmp_path / "u.long.csv")
        assert header[0].startswith("# cmmsel")
        assert set(rows[0]) == {"group", "key", "variable", "value"}

    def test_bnb_speedup(self, tmp_path):
        out = tmp_path / "b.csv"
        assert main(["experiment", "bnb-speedup", "--n-list", "8,10", "--m-list", "3", "--trials", "2", "--out", str(out)]) == EXIT_OK
        _, rows = read_csv(out)
        assert [int(r["n"]) for r in rows] == [8, 10]

    def test_cap_checked_before_work(self, tmp_path, capsys):
        argv = ["experiment", "ce-quality", "--n", "60", "--m", "6", "--brute-cap", "1000", "--out", str(tmp_path / "c.csv")]
        assert main(argv) == EXIT_USAGE
        assert "TooLarge" in capsys.readouterr().err
        assert not (tmp_path / "c.csv").exists()

    def test_trials_must_be_positive(self, tmp_path):
        assert main(["experiment", "bnb-speedup", "--trials", "0", "--out", str(tmp_path / "z.csv")]) == EXIT_USAGE
