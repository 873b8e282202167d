"""Command-line interface: ``esv <subcommand> ...``.

Exit status is 0 on success, 2 for unusable input (missing or malformed
files, bad flags) and 3 when a computation fails on valid input.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from .bench import SCENARIOS, export_report, load_scenario, make_scenario, run_convergence
from .deeplift import compare_rules, load_dag
from .errors import BudgetRefusedError, EsvError, SingularSystemError
from .estimators import (
    exact_shapley,
    kernel_shap_solve,
    lime_baseline_solve,
    permutation_estimate,
    sample_coalitions,
)
from .explanation import load_explanation
from .masking import SetFunctionCache, load_grouping, load_table
from .models import load_model
from .viz import (
    ForcePlotSpec,
    StackPlotSpec,
    order_by_similarity,
    render_force_plot,
    render_stack_plot,
)

DEFAULT_COALITIONS = 2048
DEFAULT_ORDERINGS = 256


class UsageError(EsvError):
    pass


def _vector(text, flag):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"{flag}: expected a comma-separated list of numbers, got {text!r}") from None


def _lasso(text):
    if text in ("off", "auto"):
        return None if text == "off" else "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected off, auto or a penalty value") from None


def resolve_threads(flag):
    if flag is not None:
        if flag < 1:
            raise UsageError("--threads must be at least 1")
        return flag
    env = os.environ.get("ESV_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"ESV_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise UsageError(f"ESV_THREADS must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# -- subcommands -----------------------------------------------------------


def cmd_explain(args):
    model = load_model(args.model)
    names, data = load_table(args.data)
    if data.shape[1] != model.n_features:
        raise UsageError(f"--data has {data.shape[1]} columns but the model takes {model.n_features}")
    if not 0 <= args.instance < data.shape[0]:
        raise UsageError(f"--instance {args.instance} out of range for {data.shape[0]} data rows")
    if args.background:
        _, background = load_table(args.background)
    else:
        background = data
    grouping = load_grouping(args.grouping, model.n_features) if args.grouping else None
    cache = SetFunctionCache(model, data[args.instance], background, grouping)
    M = cache.n_players

    if args.estimator == "exact":
        e = exact_shapley(cache)
    elif args.estimator == "perm":
        e = permutation_estimate(cache, args.samples or DEFAULT_ORDERINGS, args.seed)
    else:
        sample = sample_coalitions(M, args.samples or DEFAULT_COALITIONS, args.seed)
        if args.estimator == "kernel":
            e = kernel_shap_solve(cache, sample, args.lasso)
        else:
            e = lime_baseline_solve(cache, sample, args.kernel_width)
    e = e.with_names(grouping.group_names(names) if grouping else names)
    _write(args.out, e.dumps())

    print(f"estimator {e.estimator}, {e.budget} evaluations, seed {e.seed}")
    print(f"base value  {e.base_value:.6g}")
    width = max(len(n) for n in e.names())
    for name, phi in zip(e.names(), e.phi):
        print(f"  {name:<{width}}  {phi:+.6g}")
    print(f"output      {e.output:.6g}")
    return 0


def cmd_plot_force(args):
    e = load_explanation(args.explanation)
    spec = ForcePlotSpec(e, width=args.width or 900, height=args.height or 120)
    _write(args.out, render_force_plot(spec))
    return 0


def cmd_plot_stack(args):
    exps = [load_explanation(p) for p in args.explanations]
    order = None if args.no_reorder else order_by_similarity(exps)
    spec = StackPlotSpec(exps, order, width=args.width or 900, height=args.height or 350)
    _write(args.out, render_stack_plot(spec))
    return 0


def cmd_compare_deeplift(args):
    dag = load_dag(args.model)
    if args.x is not None:
        x = _vector(args.x, "--x")
    elif args.data is not None:
        _, data = load_table(args.data)
        if not 0 <= args.instance < data.shape[0]:
            raise UsageError(f"--instance {args.instance} out of range for {data.shape[0]} data rows")
        x = data[args.instance]
    else:
        raise UsageError("compare-deeplift needs --x or --data")
    if args.reference is None:
        reference = np.zeros(dag.n_features)
    else:
        reference = _vector(args.reference, "--reference")
    for label, v in (("--x", x), ("--reference", reference)):
        if v.shape != (dag.n_features,):
            raise UsageError(f"{label} has {v.size} values but the graph has {dag.n_features} inputs")
    comparison = compare_rules(dag, x, reference)
    _write(args.out, comparison.dumps())
    if args.reference is None:
        print("no --reference given; using the all-zeros reference")
    print(comparison.table())
    return 0


def cmd_bench(args):
    if args.scenario in SCENARIOS:
        scenario = make_scenario(args.scenario, args.seed, args.fast)
    elif os.path.isfile(args.scenario):
        scenario = load_scenario(args.scenario, args.fast)
    else:
        raise UsageError(f"unknown scenario {args.scenario!r}; use one of {', '.join(SCENARIOS)} "
                         "or a scenario file")
    report = run_convergence(scenario, threads=resolve_threads(args.threads))
    for path in export_report(report, args.out):
        print(f"wrote {path}")
    print(report.summary())
    return 0


# -- parser ----------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="esv", description="Expectation Shapley explanations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("explain", help="attribute one prediction")
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--data", required=True, help="CSV with a header row; one instance per row")
    p.add_argument("--instance", type=int, default=0, help="row of --data to explain (default 0)")
    p.add_argument("--background", help="background CSV (default: all rows of --data)")
    p.add_argument("--grouping", help="feature grouping JSON")
    p.add_argument("--estimator", choices=("exact", "perm", "kernel", "lime"), default="kernel")
    p.add_argument("--samples", type=int,
                   help=f"coalitions for kernel/lime (default {DEFAULT_COALITIONS}), "
                        f"orderings for perm (default {DEFAULT_ORDERINGS})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lasso", type=_lasso, default=None, metavar="{off,auto,LAMBDA}",
                   help="kernel estimator support selection (default off)")
    p.add_argument("--kernel-width", type=float, help="LIME kernel width (default 0.75*sqrt(M))")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", default="explanation.json")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("plot-force", help="render one explanation as a force plot")
    p.add_argument("explanation")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--out", default="force.svg")
    p.set_defaults(func=cmd_plot_force)

    p = sub.add_parser("plot-stack", help="render several explanations side by side")
    p.add_argument("explanations", nargs="+")
    p.add_argument("--no-reorder", action="store_true", help="keep the input order")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--out", default="stack.svg")
    p.set_defaults(func=cmd_plot_stack)

    p = sub.add_parser("compare-deeplift", help="DeepLIFT versus exact Shapley on a small graph")
    p.add_argument("--model", required=True, help="DAG JSON file")
    p.add_argument("--x", help="input as comma-separated values")
    p.add_argument("--data", help="CSV to take the input from instead of --x")
    p.add_argument("--instance", type=int, default=0)
    p.add_argument("--reference", help="reference input (default all zeros)")
    p.add_argument("--out", default="comparison.json")
    p.set_defaults(func=cmd_compare_deeplift)

    p = sub.add_parser("bench", help="estimator convergence benchmark")
    p.add_argument("--scenario", required=True, help=f"{' | '.join(SCENARIOS)} | scenario JSON file")
    p.add_argument("--fast", action="store_true", help="20 replicates and budgets up to 512")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", default="bench-out", help="output directory")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SingularSystemError, BudgetRefusedError) as exc:
        print(f"esv: error: {exc}", file=sys.stderr)
        return 3
    except (EsvError, OSError) as exc:
        print(f"esv: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
