"""Command-line interface: ``cmmsel {gen,evaluate,solve,experiment}``.

Exit status: 0 success, 2 usage or precondition error, 3 infeasible input
(unbounded or empty region, no bounded subset), 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .error_model import DEFAULT_HALF_WIDTH, DEFAULT_VALIDITY_RATIO
from .errors import (
    AllSamplesInfeasibleError,
    EmptyRegionError,
    GapAtLeastPiError,
    NoFeasibleSubsetError,
    TooLargeError,
    UnboundedError,
    UnequalVariancesError,
)
from .experiments import RankingConfig, default_workers, rank_histogram, ranking_trial, run_trials, trial_seed
from .geometry import TWO_PI
from .select_bnb import bnb_speedup_experiment, branch_and_bound, brute_force
from .select_ce import CEParams, PreselectParams, cross_entropy, preselect, random_search
from .simulate import EqualVariance, PaperVariance, Scenario, compare_angle_distributions, generate_scenario, monte_carlo_error, parse_distribution

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2, 3

_INFEASIBLE = (UnboundedError, EmptyRegionError, NoFeasibleSubsetError, AllSamplesInfeasibleError, GapAtLeastPiError)
_PRECONDITION = (UnequalVariancesError, TooLargeError)


class UsageError(Exception):
    pass


# -- files ---------------------------------------------------------------


def scenario_to_json(sc: Scenario) -> str:
    doc = {
        "half_width_m": sc.half_width,
        "seed": sc.seed,
        "vehicles": [{"id": i, "angle_rad": c.angle, "sigma_sq_m2": c.sigma_sq} for i, c in enumerate(sc.constraints)],
    }
    return json.dumps(doc, indent=2) + "\n"


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"scenario file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"scenario file {path} is not valid JSON: {exc}") from None
    try:
        vehicles = sorted(doc["vehicles"], key=lambda v: int(v["id"]))
        angles = [float(v["angle_rad"]) for v in vehicles]
        sig = [float(v["sigma_sq_m2"]) for v in vehicles]
        w = float(doc["half_width_m"])
        seed = int(doc.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed scenario file {path}: {exc}") from None
    if [int(v["id"]) for v in vehicles] != list(range(len(vehicles))):
        raise UsageError("vehicle ids must be 0..N-1")
    if any(not (0.0 <= a < TWO_PI) for a in angles):
        raise UsageError("angle_rad values must lie in [0, 2*pi)")
    if any(not s > 0 for s in sig):
        raise UsageError("sigma_sq_m2 values must be positive")
    try:
        return Scenario.from_arrays(angles, sig, w, seed, label=str(path))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _header(command: str, config: dict, seed) -> list[str]:
    return [
        f"# cmmsel {__version__}",
        f"# command: {command}",
        "# config: " + json.dumps(config, sort_keys=True, default=str),
        f"# seed: {seed}",
    ]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return v


def write_csv(path, command: str, config: dict, seed, rows: list[dict]) -> None:
    """CSV with a ``#`` header block; columns are the union of row keys in first-seen order."""
    cols: list[str] = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(_header(command, config, seed)) + "\n")
        writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(r.get(k, "")) for k in cols})


def long_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".long" + (p.suffix or ".csv"))


def write_long(path, command: str, config: dict, seed, records) -> None:
    """Plot-ready tidy file: one ``(group, key, variable, value)`` per line."""
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(_header(command, config, seed)) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group", "key", "variable", "value"])
        for rec in records:
            writer.writerow([_fmt(x) for x in rec])


def _long_from_rows(rows, group_key: str, key_field: str):
    for r in rows:
        for k, v in r.items():
            if k != key_field and isinstance(v, (int, float)) and not isinstance(v, bool):
                yield (r.get(group_key, ""), r[key_field], k, v)


# -- parsing helpers -------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _angle_model(text: str, n: int, degrees: bool):
    if text[:1].isdigit() or text[:1] in "-.":
        vals = _float_list(text)
        if len(vals) != n:
            raise UsageError(f"--angles lists {len(vals)} values but --n is {n}")
        arr = np.asarray(vals)
        return np.mod(np.deg2rad(arr) if degrees else arr, TWO_PI)
    if degrees:
        raise UsageError("--degrees applies only to an explicit --angles list")
    try:
        return parse_distribution(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _variance_model(text: str, n: int):
    name, _, arg = text.partition(":")
    if name == "paper":
        return PaperVariance(float(arg) if arg else 0.5)
    if name == "equal":
        return EqualVariance(float(arg) if arg else 0.5)
    vals = _float_list(text)
    if len(vals) != n:
        raise UsageError(f"--variances lists {len(vals)} values but --n is {n}")
    return vals


def _report_row(rep, sc: Scenario, m: int, seed) -> dict:
    return {
        "method": rep.method,
        "n": sc.n,
        "m": m,
        "seed": seed,
        "objective": rep.objective.total,
        "e0_sq": rep.objective.e0_sq,
        "noise_term": rep.objective.noise_term,
        "evals_objective": rep.objective_evaluations,
        "evals_bound": rep.bound_evaluations,
        "nodes_pruned": rep.nodes_pruned,
        "wall_time_s": rep.wall_time,
        "iterations": rep.iterations,
        "converged": int(rep.converged),
        "optimal": int(rep.optimal),
        "selection": rep.best.indices,
    }


# -- commands --------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.n < 3:
        raise UsageError("--n must be at least 3")
    if not args.half_width > 0:
        raise UsageError("--half-width must be positive")
    angles = _angle_model(args.angles, args.n, args.degrees)
    variances = _variance_model(args.variances, args.n)
    try:
        sc = generate_scenario(args.n, angles, variances, args.half_width, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = scenario_to_json(sc)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
        print(f"{args.out}: N={sc.n} w={sc.half_width:g} m variances={args.variances} seed={args.seed}")
    return EXIT_OK


def _selection(text: str, n: int) -> list[int]:
    idx = _int_list(text)
    if len(set(idx)) != len(idx) or any(not (0 <= i < n) for i in idx):
        raise UsageError("--select must list distinct vehicle ids in range")
    return sorted(idx)


def cmd_evaluate(args) -> int:
    sc = load_scenario(args.scenario)
    idx = _selection(args.select, sc.n)
    val = sc.evaluator().detail(idx)
    row = {"selection": tuple(idx), "objective": val.total, "e0_sq": val.e0_sq, "noise_term": val.noise_term}
    if args.mc_samples:
        mc = monte_carlo_error(sc.subset(idx), sc.half_width, args.mc_samples, args.seed, args.ratio)
        row.update(
            mc_samples=mc.samples,
            mc_discarded=mc.discarded_empty,
            mse_exact=mc.mse_exact,
            mse_exact_se=mc.mse_exact_se,
            mse_linearized=mc.mse_linearized,
            relative_gap=mc.relative_gap,
            validity_fraction=mc.validity_fraction,
        )
    print(", ".join(f"{k}={_fmt(v)}" for k, v in row.items()))
    if args.out:
        write_csv(args.out, "evaluate", vars_config(args), args.seed, [row])
    return EXIT_OK


def vars_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def cmd_solve(args) -> int:
    sc = load_scenario(args.scenario)
    m = args.m
    if not (3 <= m <= sc.n):
        raise UsageError(f"--m must satisfy 3 <= m <= N = {sc.n}")
    seed = args.seed
    methods = ["bnb", "ce", "random", "brute"] if args.method == "all" else [args.method]
    if args.method == "all":
        if not sc.equal_variances():
            methods.remove("bnb")
        if math.comb(sc.n, m) > args.brute_cap:
            methods.remove("brute")
    rows, trace = [], []
    for method in methods:
        if method == "bnb":
            rep = branch_and_bound(sc, m, safe=not args.paper_mode)
        elif method == "brute":
            rep = brute_force(sc, m, cap=args.brute_cap)
        elif method == "random":
            rep = random_search(sc, m, args.nr, seed=seed)
        else:
            cand = preselect(sc, m, PreselectParams(args.preselect_k), seed=seed) if args.preselect_k > 0 and sc.n > m else None
            params = CEParams(args.k, args.rho, max_iterations=args.max_iter, convergence_tol=args.tol)
            rep = cross_entropy(sc, m, params, seed=seed, candidates=cand, trace=trace)
        rows.append(_report_row(rep, sc, m, seed))
        print(f"{method}: J={rep.objective.total:.6g} selection={list(rep.best.indices)} evals={rep.total_evaluations} time={rep.wall_time:.3f}s")
    config = vars_config(args)
    if args.out:
        write_csv(args.out, "solve", config, seed, rows)
    if args.trace:
        if not trace:
            raise UsageError("--trace needs --method ce or all")
        write_csv(args.trace, "solve", config, seed, trace)
    return EXIT_OK


def _exp_bnb_speedup(args):
    rows = bnb_speedup_experiment(_int_list(args.n_list), _int_list(args.m_list), args.trials, args.seed, safe=not args.paper_mode)
    for r in rows:
        print(f"N={r['n']} M={r['m']}: ratio={r['ratio']:.3g} mean evals={r['mean_evaluations']:.1f}")
    long = [(f"m={r['m']}", r["n"], k, r[k]) for r in rows for k in ("ratio", "mean_evaluations", "mean_wall_time_s")]
    return rows, long


def _ranking_cfg(args) -> RankingConfig:
    return RankingConfig(
        n=args.n,
        m=args.m,
        sample_count=args.k,
        elite_fraction=args.rho,
        trial_groups=args.preselect_k,
        max_iterations=args.max_iter,
        random_draws=args.nr,
    )


def _exp_ranking(args, with_ce: bool):
    cfg = _ranking_cfg(args)
    if math.comb(cfg.n, cfg.m) > args.brute_cap:
        raise TooLargeError(f"exhaustive ranking needs C({cfg.n}, {cfg.m}) = {math.comb(cfg.n, cfg.m)} > cap {args.brute_cap}")
    jobs = [(cfg, trial_seed(args.seed, t), with_ce, True) for t in range(args.trials)]
    rows = run_trials(ranking_trial, jobs, args.workers)
    for t, r in enumerate(rows):
        r["trial"] = t
    key = "ce_rank" if with_ce else "random_rank"
    ranks = [r[key] for r in rows]
    hist = rank_histogram(ranks)
    print(f"{key}: median {np.median(ranks):g}; within best 20: {sum(x < 20 for x in ranks)}/{len(ranks)}; within best 100: {sum(x < 100 for x in ranks)}/{len(ranks)}")
    for label, count in hist:
        print(f"  rank {label}: {count}")
    long = list(_long_from_rows(rows, "seed", "trial"))
    long += [("histogram", label, key, count) for label, count in hist]
    return rows, long


def _exp_uniform(args):
    dists = [d.strip() for d in args.distributions.split(",")]
    try:
        rows = compare_angle_distributions(args.n, dists, args.trials, args.half_width, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for r in rows:
        print(f"{r['distribution']}: mean e0^2={r['mean_e0_sq']:.4g} (se {r['se_e0_sq']:.2g}), asymptotic {r['asymptotic_e0_sq']:.4g}")
    long = [(r["distribution"], r["n"], k, r[k]) for r in rows for k in ("mean_e0_sq", "se_e0_sq", "asymptotic_e0_sq")]
    return rows, long


def cmd_experiment(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.name == "bnb-speedup":
        rows, long = _exp_bnb_speedup(args)
    elif args.name == "ce-quality":
        rows, long = _exp_ranking(args, with_ce=True)
    elif args.name == "random-baseline":
        rows, long = _exp_ranking(args, with_ce=False)
    else:
        rows, long = _exp_uniform(args)
    config = vars_config(args)
    config.pop("workers")  # results do not depend on it
    out = args.out or f"{args.name}.csv"
    write_csv(out, f"experiment {args.name}", config, args.seed, rows)
    write_long(long_path(out), f"experiment {args.name}", config, args.seed, long)
    print(f"wrote {out} and {long_path(out)}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cmmsel", description="Vehicle-group selection for cooperative map matching.")
    p.add_argument("--version", action="version", version=f"cmmsel {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a scenario file")
    g.add_argument("--n", type=int, required=True, help="number of candidate vehicles (>= 3)")
    g.add_argument("--angles", default="uniform", help="uniform, von_mises:<kappa>, or a comma-separated list")
    g.add_argument("--degrees", action="store_true", help="explicit --angles list is in degrees")
    g.add_argument("--variances", default="paper", help="paper[:base], equal[:sigma_sq], or a comma-separated list")
    g.add_argument("--half-width", type=float, default=DEFAULT_HALF_WIDTH, help="half lane width w in metres")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="scenario.json", help="output path, '-' for stdout")
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("evaluate", help="objective (and optional Monte Carlo check) of one selection")
    e.add_argument("scenario")
    e.add_argument("--select", required=True, help="comma-separated vehicle ids")
    e.add_argument("--mc-samples", type=int, default=0)
    e.add_argument("--ratio", type=float, default=DEFAULT_VALIDITY_RATIO)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("solve", help="select M vehicles from a scenario")
    s.add_argument("scenario")
    s.add_argument("--method", choices=["bnb", "ce", "random", "brute", "all"], default="all")
    s.add_argument("--m", type=int, required=True)
    _solver_flags(s)
    s.add_argument("--out", help="CSV of solver reports")
    s.add_argument("--trace", help="CSV of per-iteration CE statistics")
    s.set_defaults(func=cmd_solve)

    x = sub.add_parser("experiment", help="reproduce a study")
    x.add_argument("name", choices=["bnb-speedup", "ce-quality", "random-baseline", "uniform-optimality"])
    x.add_argument("--trials", type=int, default=20)
    x.add_argument("--n", type=int, default=50)
    x.add_argument("--m", type=int, default=5)
    x.add_argument("--n-list", default="8,10,12,15,20", help="bnb-speedup pool sizes")
    x.add_argument("--m-list", default="3,4,5", help="bnb-speedup group sizes")
    x.add_argument("--distributions", default="uniform,von_mises:1,von_mises:2")
    x.add_argument("--half-width", type=float, default=DEFAULT_HALF_WIDTH)
    _solver_flags(x)
    x.add_argument("--workers", type=int, default=None, help="worker processes (default: $CMMSEL_WORKERS, else 1)")
    x.add_argument("--out", help="CSV path; a .long.csv companion is written next to it")
    x.set_defaults(func=cmd_experiment)
    return p


def _solver_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=1000, help="CE samples per iteration")
    p.add_argument("--rho", type=float, default=0.05, help="CE elite fraction")
    p.add_argument("--preselect-k", type=int, default=10, help="pre-selection trial groups (0 disables)")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-3, help="CE convergence tolerance on the angle std")
    p.add_argument("--nr", type=int, default=5000, help="random-search draws")
    p.add_argument("--paper-mode", action="store_true", help="prune on the raw quadratic bound")
    p.add_argument("--brute-cap", type=int, default=10_000_000)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "workers", 0) is None:
            args.workers = default_workers()
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"cmmsel: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _PRECONDITION as exc:
        print(f"cmmsel: precondition violated ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _INFEASIBLE as exc:
        print(f"cmmsel: infeasible ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        print(f"cmmsel: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"cmmsel: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
