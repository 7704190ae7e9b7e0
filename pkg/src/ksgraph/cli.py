"""Command-line front end.

Subcommands::

    ksgraph test  data.csv --label-col group [--stat SS --stat SA] [--mode both]
    ksgraph test  dist.csv --metric precomputed --labels labels.txt
    ksgraph power --family S1 --K 3 --d 50 --separation 0 0.07 0.14 --reps 200
    ksgraph qq    --K 3 --d 50 --n 50 --reps 1000
    ksgraph diag  data.csv --label-col group

Exit codes: 0 success, 2 input error, 3 numerical or degeneracy error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .counts_moments import count_edges, null_moments, standardized_counts
from .errors import (
    ConstructionError,
    DegenerateInputError,
    InputError,
    SimulationError,
    UnsupportedSizeError,
)
from .graph_core import DistanceMatrix, build_kmst, condition_stats, pairwise_distances
from .inference import TestResult, asymptotic_test, permutation_test, ss_test
from .io import read_distance_csv, read_feature_csv, read_labels
from .simulation import (
    FAMILIES,
    ScenarioSpec,
    estimate_power,
    modal_rank,
    qq_correlation,
    qq_pairs,
    simulate_statistics,
)
from .statistics import matrix_rank

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
SCHEMA_TEST = "ksgraph.test/1"
SCHEMA_DIAG = "ksgraph.diag/1"
SCHEMA_POWER = "ksgraph.power/1"
SCHEMA_QQ = "ksgraph.qq/1"

STATS = ("SW", "SB", "SA", "S", "SS")
RESULT_FIELDS = ["stat", "method", "statistic", "dof", "p_value", "reject", "alpha",
                 "n_permutations", "seed"]
POWER_FIELDS = ["family", "variant", "separation", "d", "K", "n", "k", "test", "alpha",
                "replications", "rejections", "rejection_rate", "mc_se", "seed", "trend"]
QQ_FIELDS = ["stat", "dof", "index", "probability", "empirical_quantile", "chi2_quantile"]


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def _emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _json(doc) -> str:
    return json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n"


def _csv(rows, fields) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in _clean(row).items()})
    return buf.getvalue()


# --- input ---------------------------------------------------------------

def load_input(args):
    """Return ``(DistanceMatrix, labels, label_map, description)``."""
    if args.metric == "precomputed":
        if not args.labels:
            raise InputError("--metric precomputed needs --labels FILE")
        dist = DistanceMatrix(read_distance_csv(args.input))
        labels, mapping = read_labels(args.labels)
        if len(labels) != dist.n:
            raise InputError(f"{len(labels)} labels for a {dist.n} x {dist.n} distance matrix")
        source = {"kind": "distance_csv", "path": str(args.input), "labels": str(args.labels)}
    else:
        if not args.label_col:
            raise InputError("feature input needs --label-col NAME")
        points, labels, mapping, features = read_feature_csv(args.input, args.label_col)
        dist = pairwise_distances(points, args.metric)
        source = {"kind": "feature_csv", "path": str(args.input), "label_col": args.label_col,
                  "n_features": len(features)}
    if len(mapping) < 2:
        raise InputError("need at least two groups")
    return dist, labels, mapping, source


def plan_tests(stats, mode: str) -> list[tuple[str, str]]:
    """``(stat, method)`` pairs to run for a statistic selection and mode."""
    if not stats:
        stats = ["SS", "SA"] + (["S"] if mode != "asym" else [])
    plan = []
    for s in dict.fromkeys(stats):
        if s == "SS":
            plan.append((s, "SS_fast"))
        elif s == "S":
            plan.append((s, "perm_S"))
        else:
            if mode in ("asym", "both"):
                plan.append((s, f"{s}_asym"))
            if mode in ("perm", "both"):
                plan.append((s, f"perm_{s}"))
    return plan


def run_plan(G, labels, plan, n_perm, seed, n_jobs=1) -> list[TestResult]:
    moments = null_moments(G, np.bincount(labels))
    results = []
    for stat, method in plan:
        if method == "SS_fast":
            res = ss_test(G, labels, moments=moments, diagnostics=False)
        elif method.endswith("_asym"):
            res = asymptotic_test(G, labels, kind=stat, moments=moments, diagnostics=False)
        else:
            res = permutation_test(G, labels, kind=stat, n_perm=n_perm, seed=seed,
                                   moments=moments, n_jobs=n_jobs, diagnostics=False)
        results.append(res)
    return results


# --- subcommands ---------------------------------------------------------

def cmd_test(args) -> int:
    if not 0 < args.alpha < 1:
        raise InputError("--alpha must lie in (0, 1)")
    dist, labels, mapping, source = load_input(args)
    G = build_kmst(dist, args.k)
    diag = condition_stats(G)
    plan = plan_tests(args.stat, args.mode)
    results = run_plan(G, labels, plan, args.perms, args.seed, args.jobs)
    strained = bool(diag.ratio_ab >= 1.0)
    rows = []
    for (stat, _), res in zip(plan, results):
        rows.append({
            "stat": stat,
            "method": res.method,
            "statistic": res.statistic,
            "dof": res.dof,
            "p_value": res.p_value,
            "reject": res.reject(args.alpha),
            "alpha": args.alpha,
            "n_permutations": res.n_permutations,
            "seed": res.seed,
            "details": {**res.details, "conditions_strained": strained},
        })
    if args.format == "csv":
        _emit(_csv(rows, RESULT_FIELDS), args.out)
    else:
        doc = {
            "schema": SCHEMA_TEST,
            "version": __version__,
            "input": source,
            "n": int(dist.n),
            "K": len(mapping),
            "group_sizes": np.bincount(labels).tolist(),
            "label_map": mapping,
            "k": args.k,
            "metric": args.metric,
            "mode": args.mode,
            "alpha": args.alpha,
            "diagnostics": diag.asdict(),
            "results": rows,
        }
        _emit(_json(doc), args.out)
    return EXIT_OK


def _cov_report(cov) -> dict:
    eig = np.linalg.eigvalsh(cov) if cov.size else np.zeros(0)
    rank = matrix_rank(cov)
    full = rank == len(eig) and len(eig) > 0
    cond = float(eig.max() / eig.min()) if full and eig.min() > 0 else None
    return {"dim": len(eig), "rank": rank, "full_rank": full, "condition_number": cond,
            "min_eigenvalue": float(eig.min()) if len(eig) else None,
            "max_eigenvalue": float(eig.max()) if len(eig) else None}


def cmd_diag(args) -> int:
    dist, labels, mapping, source = _load_diag_input(args)
    G = build_kmst(dist, args.k)
    K = len(mapping)
    diag = condition_stats(G)
    doc = {
        "schema": SCHEMA_DIAG,
        "version": __version__,
        "input": source,
        "n": int(dist.n),
        "K": K,
        "group_sizes": np.bincount(labels).tolist(),
        "label_map": mapping,
        "k": args.k,
        "metric": args.metric,
        "graph": diag.asdict(),
        "conditions_strained": bool(diag.ratio_ab >= 1.0),
        "counts": count_edges(G, labels, K).R.tolist(),
    }
    if dist.n >= 4:
        moments = null_moments(G, np.bincount(labels))
        counts = count_edges(G, labels, K)
        doc["expected_counts"] = moments.mean_matrix().tolist()
        doc["covariance"] = {
            "W": _cov_report(moments.cov_W),
            "B": _cov_report(moments.cov_B),
            "A": _cov_report(moments.cov_A),
        }
        z = standardized_counts(counts, moments)
        doc["z"] = [[None if np.isnan(v) else float(v) for v in row] for row in z]
        doc["z_undefined"] = np.isnan(z).tolist()
    else:
        doc["expected_counts"] = None
        doc["covariance"] = None
        doc["z"] = None
        doc["z_undefined"] = None
    _emit(_json(doc), args.out)
    return EXIT_OK


def _load_diag_input(args):
    # diagnostics are defined for a single group too
    try:
        return load_input(args)
    except InputError as exc:
        if "at least two groups" not in str(exc):
            raise
    if args.metric == "precomputed":
        dist = DistanceMatrix(read_distance_csv(args.input))
        labels, mapping = read_labels(args.labels)
        source = {"kind": "distance_csv", "path": str(args.input), "labels": str(args.labels)}
    else:
        points, labels, mapping, features = read_feature_csv(args.input, args.label_col)
        dist = pairwise_distances(points, args.metric)
        source = {"kind": "feature_csv", "path": str(args.input), "label_col": args.label_col,
                  "n_features": len(features)}
    return dist, labels, mapping, source


def _scenario_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read scenario config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise InputError("scenario config must be a JSON object")
        unknown = set(cfg) - {"family", "K", "d", "n", "separation", "variant", "tests",
                              "alpha", "replications", "seed", "k", "n_perm"}
        if unknown:
            raise InputError(f"unknown config keys {sorted(unknown)}")
    for key, attr in [("family", "family"), ("K", "K"), ("d", "d"), ("n", "n"),
                      ("separation", "separation"), ("variant", "variant"),
                      ("tests", "tests"), ("alpha", "alpha"), ("replications", "reps"),
                      ("seed", "seed"), ("k", "k"), ("n_perm", "perms")]:
        value = getattr(args, attr, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _as_list(value, default):
    if value is None:
        return list(default)
    return list(value) if isinstance(value, (list, tuple)) else [value]


def cmd_power(args) -> int:
    cfg = _scenario_config(args)
    family = cfg.get("family", "S1_location")
    K = int(cfg.get("K", 3))
    n = cfg.get("n", 50)
    n = n if not isinstance(n, list) or len(n) != 1 else n[0]
    variant = cfg.get("variant", "location")
    tests = _as_list(cfg.get("tests"), ["SS", "SA", "S"])
    alpha = float(cfg.get("alpha", 0.05))
    reps = int(cfg.get("replications", 1000))
    seed = int(cfg.get("seed", 0))
    k = int(cfg.get("k", 5))
    n_perm = int(cfg.get("n_perm", 1000))
    ds = [int(v) for v in _as_list(cfg.get("d"), [50])]
    seps = _as_list(cfg.get("separation"), [None])
    rows = []
    for d in ds:
        block = []
        for sep in seps:
            spec = ScenarioSpec(family, K, d, tuple(n) if isinstance(n, list) else n,
                                None if sep is None else float(sep), variant)
            report = estimate_power(spec, tests, alpha, reps, seed, k=k, n_perm=n_perm,
                                    n_jobs=args.jobs)
            block.extend(report.rows())
        _mark_trend(block)
        rows.extend(block)
    if args.format == "json":
        _emit(_json({"schema": SCHEMA_POWER, "version": __version__, "rows": rows}), args.out)
    else:
        _emit(_csv(rows, POWER_FIELDS), args.out)
    return EXIT_OK


def _mark_trend(rows):
    """Label each test's rates across the separation sweep (2 MC s.e. slack)."""
    by_test: dict[str, list[dict]] = {}
    for row in rows:
        by_test.setdefault(row["test"], []).append(row)
    for group in by_test.values():
        group.sort(key=lambda r: r["separation"])
        ok = all(b["rejection_rate"] + 2 * math.hypot(a["mc_se"], b["mc_se"]) >= a["rejection_rate"]
                 for a, b in zip(group, group[1:]))
        for row in group:
            row["trend"] = "single" if len(group) == 1 else ("nondecreasing" if ok else "non-monotone")


def cmd_qq(args) -> int:
    if args.reps < 0:
        raise InputError("--reps must be nonnegative")
    family = args.family or "S1_location"
    sep = 0.0 if args.separation is None else float(args.separation[0])
    n = args.n or [50]
    spec = ScenarioSpec(family, args.K or 3, (args.d or [50])[0],
                        n[0] if len(n) == 1 else tuple(n), sep, args.variant or "location")
    kinds = args.stat or ["SW", "SB", "SA"]
    for s in kinds:
        if s not in ("SW", "SB", "SA"):
            raise InputError(f"QQ pairs are only defined for SW, SB, SA, not {s!r}")
    sims = simulate_statistics(spec, kinds, args.reps, args.seed or 0, k=args.k, n_jobs=args.jobs)
    rows, summary = [], []
    for s in kinds:
        values, ranks = sims[s]
        if len(values) == 0:
            continue
        dof = modal_rank(ranks)
        probs, emp, theo = qq_pairs(values, dof)
        summary.append({"stat": s, "dof": dof, "replications": len(values),
                        "qq_correlation": qq_correlation(values, dof)})
        for i, (p, e, t) in enumerate(zip(probs, emp, theo), start=1):
            rows.append({"stat": s, "dof": dof, "index": i, "probability": p,
                         "empirical_quantile": e, "chi2_quantile": t})
    if args.format == "json":
        _emit(_json({"schema": SCHEMA_QQ, "version": __version__, "scenario": spec.asdict(),
                     "k": args.k, "seed": args.seed or 0, "summary": summary,
                     "pairs": rows}), args.out)
    else:
        _emit(_csv(rows, QQ_FIELDS), args.out)
    return EXIT_OK


# --- parser --------------------------------------------------------------

def _input_args(p):
    p.add_argument("input", help="feature CSV (header row) or square distance CSV")
    p.add_argument("--label-col", help="group column of a feature CSV")
    p.add_argument("--labels", help="one label per line, paired with a distance CSV")
    p.add_argument("--metric", choices=["euclidean", "manhattan", "precomputed"],
                   default="euclidean")
    p.add_argument("--k", type=int, default=5, help="number of MSTs in the graph (default 5)")
    p.add_argument("--out", help="output file (default stdout)")


def _scenario_args(p):
    p.add_argument("--family", help=f"scenario family, one of {', '.join(FAMILIES)} (or S1..S7)")
    p.add_argument("--K", type=int)
    p.add_argument("--d", type=int, nargs="+")
    p.add_argument("--n", type=int, nargs="+", help="common group size or one size per group")
    p.add_argument("--separation", type=float, nargs="+")
    p.add_argument("--variant", choices=["location", "scale"])
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ksgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run K-sample tests on a dataset")
    _input_args(p)
    p.add_argument("--stat", action="append", choices=STATS,
                   help="statistic to test (repeatable; default SS and SA)")
    p.add_argument("--mode", choices=["asym", "perm", "both"], default="asym")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--perms", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("diag", help="graph conditions, covariance ranks, standardized counts")
    _input_args(p)
    p.set_defaults(func=cmd_diag)

    p = sub.add_parser("power", help="Monte Carlo size/power over a scenario grid")
    _scenario_args(p)
    p.add_argument("--config", help="JSON scenario file; flags override its keys")
    p.add_argument("--tests", nargs="+", help="tests to run (SW SB SA SS S; default SS SA S)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--perms", type=int)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("qq", help="simulated null statistics against chi-square quantiles")
    _scenario_args(p)
    p.add_argument("--stat", action="append", choices=["SW", "SB", "SA"])
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_qq)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, UnsupportedSizeError) as exc:
        print(f"ksgraph: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateInputError, ConstructionError, SimulationError,
            np.linalg.LinAlgError) as exc:
        print(f"ksgraph: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
