"""Command-line entry point for replay-buffer selection, analysis, benchmarks, theory checks and metrics.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .buffer import BudgetWarning, per_class_budget
from .coverage import build_ball_graph, rbf_kernel_matrix
from .embeddings import LabeledPool, l2_normalize, load_embedding, load_labels, pairwise_distances
from .errors import InputError
from .metrics import compute_cl_metrics, load_accuracy_csv
from .pipeline import SelectConfig, episode_sigmas, scale_profiles, select_class, select_pool, thread_count
from .scales import beta_ratio, median_heuristic_sigma
from .selectors import METHODS, OracleRefusal, brute_force_max_coverage, coverage_value
from .synthetic import two_view_classes
from .theory import theory_report

REPORT_SCHEMA = "mers-report/1"
ANALYZE_SCHEMA = "mers-analyze/1"

log = logging.getLogger("mers")


class UsageError(InputError):
    pass


# -- argument parsing -------------------------------------------------------


def _auto_float(s: str):
    if s == "auto":
        return None
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a number, got {s!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"value must be positive, got {s!r}")
    return v


def _auto_int(s: str):
    if s == "auto":
        return None
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or an integer, got {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"value must be >= 1, got {s!r}")
    return v


def _weights(s: str):
    if s == "auto":
        return None
    try:
        w = [float(x) for x in s.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or comma-separated numbers, got {s!r}") from None
    if any(not x >= 0 for x in w):
        raise argparse.ArgumentTypeError("weights must be non-negative")
    return w


def _int_list(s: str):
    try:
        return [int(x) for x in s.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _embedding_arg(s: str):
    path, sep, name = s.rpartition(":")
    if not sep or not name or "/" in name or not path:
        return s, None
    return path, name


def _add_pool_args(p):
    p.add_argument("--embedding", action="append", type=_embedding_arg, required=True, metavar="PATH[:NAME]",
                   help="embedding file (.bin or csv); repeat for several views")
    p.add_argument("--labels", required=True, metavar="PATH", help="one integer label per line")
    p.add_argument("--metric", choices=("cosine", "euclidean"), default="cosine")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--budget", type=int, metavar="N", help="total budget split evenly across classes")
    g.add_argument("--budget-per-class", type=int, metavar="N")
    p.add_argument("--weights", type=_weights, default=None, metavar="auto|w1,w2,...")
    p.add_argument("--sigma", type=_auto_float, default=None, metavar="auto|X")
    p.add_argument("--sigma-scope", choices=("class", "episode"), default="class",
                   help="pool over which the median-heuristic bandwidth is computed")
    p.add_argument("--delta", type=_auto_float, default=None, metavar="auto|X")
    p.add_argument("--k", type=_auto_int, default=None, metavar="auto|N", help="neighbours for delta")
    p.add_argument("--alpha-k", type=_auto_int, default=None, metavar="auto|N",
                   help="neighbours for the embedding weight (default: same as --k)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mers", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mers {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="choose exemplars per class and write a JSON report")
    _add_pool_args(p)
    p.add_argument("--method", choices=METHODS, default="mers-maxherding")

    p = sub.add_parser("analyze", help="print sigma/delta/alpha/k per class and view, plus beta ratios")
    _add_pool_args(p)

    p = sub.add_parser("bench", help="compare selectors on synthetic two-view Gaussian classes (CSV)")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--points-per-class", type=int, default=60)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--m", type=int, default=2, help="discriminative directions in the SL-like view")
    p.add_argument("--sl-alpha", type=float, default=None, help="default: equal volume with --sl-sigma")
    p.add_argument("--sl-beta", type=float, default=0.05)
    p.add_argument("--sl-sigma", type=float, default=0.5)
    p.add_argument("--ssl-sigma", type=float, default=0.5)
    p.add_argument("--budgets", type=_int_list, default=[1, 3, 5])
    p.add_argument("--scaling-sizes", type=_int_list, default=[200, 400, 800])
    p.add_argument("--oracle-limit", type=int, default=50_000, help="max subsets for the exact OPT column")
    p.add_argument("--metric", choices=("cosine", "euclidean"), default="cosine")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH")

    p = sub.add_parser("theory", help="verify the Gaussian divergence and risk-gap results (JSON)")
    p.add_argument("--samples", type=int, default=10**6, help="Monte-Carlo samples for KL checks")
    p.add_argument("--risk-samples", type=int, default=10**5)
    p.add_argument("--experiments", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH")

    p = sub.add_parser("metrics", help="FAA/AAA/Forgetting/Stability from an accuracy-matrix CSV")
    p.add_argument("--matrix", required=True, metavar="PATH")
    p.add_argument("--out", metavar="PATH")
    return parser


# -- helpers ----------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_output(text: str, out) -> None:
    """Write atomically to ``out`` (or stdout); nothing appears on failure."""
    if out is None:
        sys.stdout.write(text)
        return
    out = Path(out)
    fd, tmp = tempfile.mkstemp(dir=out.parent if str(out.parent) else ".", prefix=f".{out.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_pool(args) -> LabeledPool:
    views = []
    for path, name in args.embedding:
        view = load_embedding(path, name=name or Path(path).stem)
        views.append(l2_normalize(view))
    labels = load_labels(args.labels)
    return LabeledPool(views, labels)


def _config(args, method="mers-maxherding") -> SelectConfig:
    return SelectConfig(method=method, metric=args.metric, weights=args.weights, sigma=args.sigma,
                        delta=args.delta, k=args.k, alpha_k=args.alpha_k, sigma_scope=args.sigma_scope,
                        seed=args.seed)


def _budgets(args, pool) -> dict:
    labels = pool.classes
    if args.budget_per_class is not None:
        if args.budget_per_class < 1:
            raise UsageError("--budget-per-class must be >= 1")
        return {c: args.budget_per_class for c in labels}
    if args.budget is not None:
        return dict(zip(labels, per_class_budget(args.budget, len(labels))))
    raise UsageError("one of --budget or --budget-per-class is required")


def _class_record(sel) -> dict:
    r = sel.result
    return {
        "label": sel.label,
        "chosen": [int(i) for i in sel.ids],
        "objective": float(r.objective),
        "per_step_gain": [float(g) for g in r.per_step_gain],
        "weights": [float(w) for w in sel.weights_used],
        "scales": [p.to_dict() for p in r.scales],
        "warnings": list(sel.warnings),
    }


def _config_record(args, pool) -> dict:
    return {
        "embeddings": [v.name for v in pool.views],
        "metric": args.metric,
        "budget": args.budget,
        "budget_per_class": args.budget_per_class,
        "weights": args.weights if args.weights is not None else "auto",
        "sigma": args.sigma if args.sigma is not None else "auto",
        "sigma_scope": args.sigma_scope,
        "delta": args.delta if args.delta is not None else "auto",
        "k": args.k if args.k is not None else "auto",
        "alpha_k": args.alpha_k if args.alpha_k is not None else "auto",
        "seed": args.seed,
    }


# -- commands ---------------------------------------------------------------


def cmd_select(args) -> int:
    pool = load_pool(args)
    budgets = _budgets(args, pool)
    config = _config(args, args.method)
    results = select_pool(pool, budgets, config, threads=thread_count())
    for sel in results:
        for w in sel.warnings:
            log.warning("class %s: %s", sel.label, w)
    report = {
        "schema": REPORT_SCHEMA,
        "method": args.method,
        "config": _config_record(args, pool),
        "classes": [_class_record(s) for s in results],
    }
    write_output(_dump(report), args.out)
    return 0


def cmd_analyze(args) -> int:
    pool = load_pool(args)
    if args.budget is None and args.budget_per_class is None and (args.k is None):
        raise UsageError("analyze needs --budget, --budget-per-class or an explicit --k")
    budgets = _budgets(args, pool) if (args.budget is not None or args.budget_per_class is not None) else None
    config = _config(args)
    names = [v.name for v in pool.views]
    eps = None
    if args.sigma_scope == "episode" and args.sigma is None:
        eps = episode_sigmas([v.points for v in pool.views], args.metric)
    profiles, betas = [], []
    for c in pool.classes:
        rows = pool.class_rows(c)
        if rows.size < 2:
            log.warning("class %s: fewer than 2 points, skipped", c)
            continue
        # An explicit --k makes the budget irrelevant to the scale estimates.
        b = budgets[c] if budgets else 1
        if b < 1:
            log.warning("class %s: zero budget, skipped", c)
            continue
        prof, _, warn = scale_profiles([v.points[rows] for v in pool.views], names, c, min(b, rows.size),
                                       config, eps)
        for w in warn:
            log.warning("class %s: %s", c, w)
        profiles.extend(prof)
        for i in range(len(prof)):
            for j in range(i + 1, len(prof)):
                betas.append({
                    "class_label": int(c),
                    "numerator": prof[i].embedding_name,
                    "denominator": prof[j].embedding_name,
                    "beta": beta_ratio(prof[i].alpha, prof[j].alpha),
                })
    out = {"schema": ANALYZE_SCHEMA, "profiles": [p.to_dict() for p in profiles], "beta": betas}
    write_output(_dump(out), args.out)
    return 0


BENCH_COLUMNS = ["section", "method", "class_label", "budget", "n", "coverage", "opt", "ratio_to_opt",
                 "runtime_s", "overlap", "quadratic_ratio"]


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    labels = list(range(args.classes))
    pool = two_view_classes(rng, labels, args.points_per_class, dim=args.dim, m=args.m, sl_beta=args.sl_beta,
                            sl_sigma=args.sl_sigma, sl_alpha=args.sl_alpha, ssl_sigma=args.ssl_sigma)
    names = [v.name for v in pool.views]
    rows = []
    for c in labels:
        cr = pool.class_rows(c)
        pts = [v.points[cr] for v in pool.views]
        n = cr.size
        for b in args.budgets:
            base_cfg = SelectConfig(metric=args.metric, seed=args.seed)
            profiles, dists, _ = scale_profiles(pts, names, c, min(b, n), base_cfg)
            weights = [p.alpha for p in profiles]
            graphs = [build_ball_graph(d, p.delta, p.embedding_name) for d, p in zip(dists, profiles)]
            opt = None
            if math.comb(n, min(b, n)) <= args.oracle_limit:
                try:
                    opt = brute_force_max_coverage(graphs, weights, b)[1]
                except OracleRefusal:
                    opt = None
            ref = None
            for method in METHODS:
                cfg = SelectConfig(method=method, metric=args.metric, seed=args.seed)
                t0 = time.perf_counter()
                sel = select_class(pts, names, list(range(n)), c, b, cfg)
                dt = time.perf_counter() - t0
                chosen = set(sel.ids)
                if ref is None:
                    ref = chosen
                F = coverage_value(sorted(chosen), graphs, weights)
                rows.append({
                    "section": "comparison", "method": method, "class_label": c, "budget": b, "n": n,
                    "coverage": F, "opt": "" if opt is None else opt,
                    "ratio_to_opt": "" if not opt else F / opt,
                    "runtime_s": dt, "overlap": len(chosen & ref) / len(ref), "quadratic_ratio": "",
                })
    prev = None
    for n in args.scaling_sizes:
        X = rng.standard_normal((n, args.dim))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        t0 = time.perf_counter()
        d = pairwise_distances(X, args.metric)
        rbf_kernel_matrix(d, median_heuristic_sigma(d))
        dt = time.perf_counter() - t0
        qr = "" if prev is None else (dt / prev[1]) / (n / prev[0]) ** 2
        rows.append({"section": "scaling", "method": "kernel-build", "class_label": "", "budget": "", "n": n,
                     "coverage": "", "opt": "", "ratio_to_opt": "", "runtime_s": dt, "overlap": "",
                     "quadratic_ratio": qr})
        prev = (n, dt)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    write_output(buf.getvalue(), args.out)
    return 0


def cmd_theory(args) -> int:
    report = theory_report(samples=args.samples, risk_samples=args.risk_samples,
                           experiments=args.experiments, seed=args.seed)
    write_output(_dump(report), args.out)
    return 0 if report["passed"] else 1


def cmd_metrics(args) -> int:
    A = load_accuracy_csv(args.matrix)
    write_output(_dump(compute_cl_metrics(A)), args.out)
    return 0


COMMANDS = {"select": cmd_select, "analyze": cmd_analyze, "bench": cmd_bench, "theory": cmd_theory,
            "metrics": cmd_metrics}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="mers: %(levelname)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", BudgetWarning)
            warnings.showwarning = lambda msg, *a, **k: log.warning("%s", msg)
            return COMMANDS[args.command](args)
    except (InputError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort exit code contract
        sys.stderr.write(json.dumps({"error": "InternalError", "message": f"{type(exc).__name__}: {exc}"}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
