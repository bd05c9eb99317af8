"""Command-line front end: fit, multifit, simulate, evaluate, predict, report.

Exit codes: 0 on success, 1 on validation errors (bad values, shapes,
rank-deficient covariates), 2 on IO and usage errors (missing flags or
files, unreadable tables).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as bio
from .designs import GroupedDesign
from .exceptions import BivasError
from .grid import GridFit, aggregate, make_pi_grid, predict, run_grid, select
from .group_fit import EmOptions
from .metrics import auc, coef_mse, fdr_power, group_auc
from .simulate import SimConfig, gen_multitask, simulate_dataset


def _default_threads() -> int:
    env = os.environ.get("BIVAS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _em_options(args) -> EmOptions:
    return EmOptions(max_iter=args.max_iter, rel_tol=args.tol)


def _add_fit_flags(sub):
    sub.add_argument("--grid-size", type=int, default=20,
                     help="number of group-sparsity grid points (default 20)")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: BIVAS_THREADS or all cores)")
    sub.add_argument("--fdr", type=float, default=0.05,
                     help="local fdr selection threshold (default 0.05)")
    sub.add_argument("--tol", type=float, default=1e-5,
                     help="relative bound change declaring convergence")
    sub.add_argument("--max-iter", type=int, default=200)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", default=".", help="output directory")


def _write_fit_artifacts(outdir, gridfit: GridFit, design, args,
                         options: dict):
    os.makedirs(outdir, exist_ok=True)
    summary = aggregate(gridfit)
    report = select(summary, args.fdr)
    bio.write_json(os.path.join(outdir, "model.json"),
                   bio.model_to_dict(gridfit, summary, design, options))
    bio.write_json(os.path.join(outdir, "selection.json"),
                   bio.selection_to_dict(report, summary, design))
    if not gridfit.multitask:
        bio.write_posterior_csv(os.path.join(outdir, "posterior.csv"),
                                summary, design)
        bio.write_groups_csv(os.path.join(outdir, "groups.csv"),
                             summary, design)


def cmd_fit(args) -> int:
    design = bio.load_design(args.data, args.groups, response=args.response,
                             standardize=args.standardize)
    threads = args.threads if args.threads is not None else _default_threads()
    grid = make_pi_grid(design.K, args.grid_size)
    gridfit = run_grid(design, grid, _em_options(args), threads=threads,
                       seed=args.seed)
    options = {
        "grid_size": args.grid_size, "fdr": args.fdr, "tol": args.tol,
        "max_iter": args.max_iter, "seed": args.seed,
        "standardize": bool(args.standardize), "response": args.response,
    }
    _write_fit_artifacts(args.out, gridfit, design, args, options)
    return 0


def cmd_multifit(args) -> int:
    data = bio.load_multitask(args.task_data, response=args.response)
    threads = args.threads if args.threads is not None else _default_threads()
    grid = make_pi_grid(data.K, args.grid_size)
    gridfit = run_grid(data, grid, _em_options(args), threads=threads,
                       seed=args.seed)
    options = {
        "grid_size": args.grid_size, "fdr": args.fdr, "tol": args.tol,
        "max_iter": args.max_iter, "seed": args.seed,
        "response": args.response, "tasks": len(args.task_data),
    }
    _write_fit_artifacts(args.out, gridfit, data, args, options)
    return 0


def cmd_simulate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    sizes = [int(v) for v in str(args.n).split(",")]
    if len(sizes) > 1:
        cfg = SimConfig(n=sizes, p=args.k_groups, K=args.k_groups,
                        rho=args.rho, pi_true=args.pi, alpha_true=args.alpha,
                        snr=args.snr, seed=args.seed)
        data, truth = gen_multitask(cfg)
        for j in range(data.L):
            d = GroupedDesign(data.y[j], data.Z[j], data.X[j],
                              np.arange(data.K),
                              predictor_names=data.predictor_names)
            bio.write_design_csv(os.path.join(args.out, f"task{j}.csv"), d)
        bio.write_json(os.path.join(args.out, "truth.json"),
                       bio.truth_to_dict(truth, {"tasks": data.L}))
    else:
        cfg = SimConfig(n=sizes[0], p=args.p, K=args.k_groups, rho=args.rho,
                        pi_true=args.pi, alpha_true=args.alpha, snr=args.snr,
                        seed=args.seed)
        design, truth = simulate_dataset(cfg)
        bio.write_design_csv(os.path.join(args.out, "data.csv"), design)
        bio.write_group_map(os.path.join(args.out, "groups.csv"), design)
        bio.write_json(os.path.join(args.out, "truth.json"),
                       bio.truth_to_dict(truth, {
                           "group_of": design.group_of.tolist(),
                           "predictors": design.predictor_names,
                       }))
    return 0


def _align_predictors(design, names):
    """Reorder the design's predictor columns to the model's order."""
    if design.predictor_names == names:
        return design.X
    try:
        order = [design.predictor_names.index(nm) for nm in names]
    except ValueError as exc:
        raise BivasError(f"new data is missing model predictors: {exc}") \
            from None
    return design.X[:, order]


def _predict_from_model(model: dict, design: GroupedDesign):
    effect = np.asarray(model["posterior"]["effect"], float)
    omega = np.asarray(model["params"]["omega"], float)
    X = _align_predictors(design, model["predictors"])
    std = model.get("standardize")
    if std is not None:
        X = (X - np.asarray(std["center"])) / np.asarray(std["scale"])
    return design.Z @ omega + X @ effect


def cmd_predict(args) -> int:
    model = bio.read_json(args.model)
    design = bio.load_design(args.data, args.groups, response=args.response,
                             require_response=False)
    if model["model"] == "multitask":
        if args.task is None:
            raise BivasError("multi-task model: pass --task")
        effect = np.asarray(model["posterior"]["effect"], float)[:, args.task]
        omega = np.asarray(model["params"]["omega"][args.task], float)
        X = _align_predictors(design, model["predictors"])
        yhat = design.Z @ omega + X @ effect
    else:
        yhat = _predict_from_model(model, design)
    bio.write_predictions_csv(args.out, yhat)
    return 0


def cmd_evaluate(args) -> int:
    model = bio.read_json(os.path.join(args.fit, "model.json"))
    selection = bio.read_json(os.path.join(args.fit, "selection.json"))
    truth = bio.read_json(args.truth)
    coef = np.asarray(truth["coef"], float)
    eta = np.asarray(truth["eta"], float)

    post = model["posterior"]
    pi_tilde = np.asarray(post["pi_tilde"], float)
    alpha_tilde = np.asarray(post["alpha_tilde"], float)
    effect = np.asarray(post["effect"], float)
    nonzero = coef != 0.0

    if model["model"] == "multitask":
        scores = pi_tilde[:, None] * alpha_tilde
        selected = np.array([[model["predictors"].index(v["predictor"]),
                              v["task"]] for v in selection["variables"]],
                            dtype=int).reshape(-1, 2)
        fdr, power = fdr_power(selected, np.argwhere(nonzero))
        row = {
            "auc": auc(scores.ravel(), nonzero.ravel()),
            "group_auc": group_auc(pi_tilde, eta > 0),
            "fdr": fdr,
            "power": power,
            "mse": coef_mse(effect, coef),
        }
        for j in range(coef.shape[1]):
            row[f"mse_task{j}"] = coef_mse(effect[:, j], coef[:, j])
    else:
        group_of = np.asarray(model["group_of"], int)
        scores = pi_tilde[group_of] * alpha_tilde
        name_idx = {nm: j for j, nm in enumerate(model["predictors"])}
        selected = np.array([name_idx[v["predictor"]]
                             for v in selection["variables"]], dtype=int)
        fdr, power = fdr_power(selected, np.nonzero(nonzero)[0])
        row = {
            "auc": auc(scores, nonzero),
            "group_auc": group_auc(pi_tilde, eta > 0),
            "fdr": fdr,
            "power": power,
            "mse": coef_mse(effect, coef),
        }
    bio.append_metrics_csv(args.out, row)
    return 0


def cmd_report(args) -> int:
    """Aggregate replicate metrics files into a mean/sd table."""
    import csv as _csv

    values: dict[str, list[float]] = {}
    order: list[str] = []
    for path in args.metrics:
        with open(path, newline="") as fh:
            for row in _csv.DictReader(fh):
                for key, val in row.items():
                    if key not in values:
                        values[key] = []
                        order.append(key)
                    values[key].append(float(val))
    with open(args.out, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["metric", "mean", "sd", "n"])
        for key in order:
            arr = np.asarray(values[key])
            writer.writerow([key, repr(float(arr.mean())),
                             repr(float(arr.std(ddof=1) if arr.size > 1 else 0.0)),
                             arr.size])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bivas",
        description="Bi-level variable selection for grouped and "
                    "multi-task regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit the grouped model")
    fit.add_argument("--data", required=True, help="CSV/TSV data table")
    fit.add_argument("--groups", default=None,
                     help="sidecar group map (omit if the table has an "
                          "inline group row)")
    fit.add_argument("--response", default="y")
    fit.add_argument("--standardize", action="store_true",
                     help="center and scale predictor columns before fitting")
    _add_fit_flags(fit)
    fit.set_defaults(func=cmd_fit)

    mfit = sub.add_parser("multifit", help="fit the multi-task model")
    mfit.add_argument("--task-data", action="append", required=True,
                      help="data table for one task; repeat per task")
    mfit.add_argument("--response", default="y")
    _add_fit_flags(mfit)
    mfit.set_defaults(func=cmd_multifit)

    sim = sub.add_parser("simulate", help="draw a synthetic dataset")
    sim.add_argument("--n", required=True,
                     help="sample size, or comma list for multi-task tasks")
    sim.add_argument("--p", type=int, default=100,
                     help="predictor count (grouped model)")
    sim.add_argument("--k-groups", type=int, default=10, dest="k_groups",
                     help="group count (or shared feature count)")
    sim.add_argument("--rho", type=float, default=0.0)
    sim.add_argument("--pi", type=float, default=0.1)
    sim.add_argument("--alpha", type=float, default=0.4)
    sim.add_argument("--snr", type=float, default=1.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default=".")
    sim.set_defaults(func=cmd_simulate)

    pred = sub.add_parser("predict", help="predict on new data")
    pred.add_argument("--model", required=True, help="model.json from fit")
    pred.add_argument("--data", required=True)
    pred.add_argument("--groups", default=None)
    pred.add_argument("--response", default="y")
    pred.add_argument("--task", type=int, default=None)
    pred.add_argument("--out", default="predictions.csv")
    pred.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="score a fit against truth.json")
    ev.add_argument("--fit", required=True, help="directory written by fit")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--out", default="metrics.csv")
    ev.set_defaults(func=cmd_evaluate)

    rep = sub.add_parser("report", help="mean/sd table from metrics files")
    rep.add_argument("--metrics", nargs="+", required=True)
    rep.add_argument("--out", default="report.csv")
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BivasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
