"""File formats: delimited data tables, group maps and model artifacts.

Data tables are CSV or TSV with a header row.  Predictor columns are
declared either by a sidecar group map (two columns: predictor name, group
label) or by an inline group row -- a row directly under the header whose
response cell is the literal word ``group``; cells of that row name each
predictor's group and empty cells mark covariates.  Every numeric value is
written with ``repr``, which round-trips doubles exactly.
"""
from __future__ import annotations

import csv
import json
import os

import numpy as np

from .designs import GroupedDesign, MultiTaskData, validate_design
from .exceptions import DimensionMismatch, NonNumeric
from .grid import GridFit, PosteriorSummary, SelectionReport

GROUP_ROW_MARKER = "group"


def _delimiter(path: str) -> str:
    return "\t" if str(path).endswith(".tsv") else ","


def _fmt(x) -> str:
    return repr(float(x))


def read_table(path: str):
    """Read a delimited table; returns (header, rows of raw strings)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=_delimiter(path))
        rows = [row for row in reader if row]
    if not rows:
        raise NonNumeric(f"{path}: empty table")
    return rows[0], rows[1:]


def read_group_map(path: str) -> dict:
    """Sidecar group map: name -> label, one predictor per row."""
    header, rows = read_table(path)
    if len(header) < 2:
        raise NonNumeric(f"{path}: group map needs two columns")
    return {row[0]: row[1] for row in rows}


def _parse_cell(cell: str, where: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise NonNumeric(f"{where}: cannot parse {cell!r} as a number") from None


def load_design(data_path: str, groups_path: str | None = None, *,
                response: str = "y", standardize: bool = False,
                require_response: bool = True) -> GroupedDesign:
    """Load a data table plus group declaration into a GroupedDesign.

    Columns named in the group declaration become predictors; every other
    non-response column is a covariate.  When no covariate columns exist an
    intercept column of ones is injected.  With ``require_response=False``
    a table without the response column loads with y = 0 (prediction-only
    data; needs the sidecar group map, since the inline marker lives in the
    response cell).
    """
    header, rows = read_table(data_path)
    resp_idx = header.index(response) if response in header else None
    if resp_idx is None and require_response:
        raise DimensionMismatch(
            f"{data_path}: no response column named {response!r}"
        )

    inline: dict = {}
    if resp_idx is not None and rows \
            and rows[0][resp_idx] == GROUP_ROW_MARKER:
        marker_row, rows = rows[0], rows[1:]
        for name, cell in zip(header, marker_row):
            if name != response and cell != "":
                inline[name] = cell
    if groups_path is not None:
        group_label_of = read_group_map(groups_path)   # sidecar wins
    elif inline:
        group_label_of = inline
    else:
        raise DimensionMismatch(
            f"{data_path}: no group map given and no inline group row found"
        )
    missing = [name for name in group_label_of if name not in header]
    if missing:
        raise DimensionMismatch(
            f"{data_path}: group map names absent from table: {missing}"
        )

    pred_names = [name for name in header
                  if name != response and name in group_label_of]
    covar_names = [name for name in header
                   if name != response and name not in group_label_of]

    n = len(rows)
    parsed = np.empty((n, len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DimensionMismatch(
                f"{data_path}: row {i + 2} has {len(row)} cells, "
                f"expected {len(header)}"
            )
        for j, cell in enumerate(row):
            parsed[i, j] = _parse_cell(cell, f"{data_path}: row {i + 2}")

    y = parsed[:, resp_idx] if resp_idx is not None else np.zeros(n)
    X = parsed[:, [header.index(nm) for nm in pred_names]]
    if covar_names:
        Z = parsed[:, [header.index(nm) for nm in covar_names]]
    else:
        Z = np.ones((n, 1))
        covar_names = ["intercept"]
    groups = [group_label_of[nm] for nm in pred_names]
    return validate_design(y, Z, X, groups, standardize=standardize,
                           predictor_names=pred_names,
                           covariate_names=covar_names)


def load_multitask(paths, *, response: str = "y") -> MultiTaskData:
    """Load one table per task; predictor columns are the shared features.

    Every task table must carry an inline group row (or simply mark which
    columns are predictors with it); predictor names must agree across
    tasks in the same order.
    """
    designs = [load_design(p, None, response=response) for p in paths]
    names = designs[0].predictor_names
    for d, p in zip(designs, paths):
        if d.predictor_names != names:
            raise DimensionMismatch(
                f"{p}: predictor columns disagree with the first task"
            )
    tasks = [(d.y, d.Z, d.X) for d in designs]
    return MultiTaskData(tasks, predictor_names=names,
                         covariate_names=[d.covariate_names for d in designs])


def write_design_csv(path: str, design: GroupedDesign, *, response: str = "y"):
    """Write a design back to CSV with an inline group row."""
    header = [response] + design.covariate_names + design.predictor_names
    marker = [GROUP_ROW_MARKER] + [""] * design.r \
        + [str(design.group_labels[design.group_of[j]]) for j in range(design.p)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=_delimiter(path))
        writer.writerow(header)
        writer.writerow(marker)
        for i in range(design.n):
            row = [_fmt(design.y[i])]
            row += [_fmt(v) for v in design.Z[i]]
            row += [_fmt(v) for v in design.X[i]]
            writer.writerow(row)


def write_group_map(path: str, design: GroupedDesign):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=_delimiter(path))
        writer.writerow(["predictor", "group"])
        for j, name in enumerate(design.predictor_names):
            writer.writerow([name, str(design.group_labels[design.group_of[j]])])


# ---------------------------------------------------------------------------
# model artifacts
# ---------------------------------------------------------------------------

def _standardize_record(design: GroupedDesign):
    if design.x_center is None:
        return None
    return {"center": design.x_center.tolist(),
            "scale": design.x_scale.tolist()}


def model_to_dict(gridfit: GridFit, summary: PosteriorSummary,
                  design, options: dict) -> dict:
    """JSON-ready model artifact: aggregated parameters, grid table and the
    per-variable posterior arrays needed for prediction."""
    grid_table = [
        {"pi": float(pi), "elbo": float(e), "weight": float(w),
         "iterations": int(res.iterations), "converged": bool(res.converged)}
        for pi, e, w, res in zip(gridfit.pi_values, gridfit.elbos,
                                 gridfit.weights, gridfit.results)
    ]
    if gridfit.multitask:
        p = summary.params
        return {
            "model": "multitask",
            "options": options,
            "grid": grid_table,
            "params": {
                "alpha": p.alpha,
                "pi": p.pi,
                "sigma_beta2": p.sigma_beta2.tolist(),
                "sigma_e2": p.sigma_e2.tolist(),
                "omega": [w.tolist() for w in p.omega],
            },
            "predictors": design.predictor_names,
            "covariates": design.covariate_names,
            "posterior": {
                "pi_tilde": summary.pi_tilde.tolist(),
                "alpha_tilde": summary.alpha_tilde.tolist(),
                "mu_tilde": summary.mu_tilde.tolist(),
                "effect": summary.effect.tolist(),
            },
        }
    p = summary.params
    return {
        "model": "group",
        "options": options,
        "grid": grid_table,
        "params": {
            "alpha": p.alpha,
            "pi": p.pi,
            "sigma_beta2": p.sigma_beta2,
            "sigma_e2": p.sigma_e2,
            "omega": p.omega.tolist(),
        },
        "predictors": design.predictor_names,
        "covariates": design.covariate_names,
        "group_labels": [str(lab) for lab in design.group_labels],
        "group_of": design.group_of.tolist(),
        "standardize": _standardize_record(design),
        "posterior": {
            "pi_tilde": summary.pi_tilde.tolist(),
            "alpha_tilde": summary.alpha_tilde.tolist(),
            "mu_tilde": summary.mu_tilde.tolist(),
            "effect": summary.effect.tolist(),
        },
    }


def write_json(path: str, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_posterior_csv(path: str, summary: PosteriorSummary, design):
    """Per-variable table: id, group, posteriors, effect, fdr columns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "group", "pi_tilde", "alpha_tilde",
                         "mu_tilde", "effect", "group_fdr", "var_fdr"])
        for j in range(len(design.predictor_names)):
            k = design.group_of[j]
            writer.writerow([
                design.predictor_names[j],
                str(design.group_labels[k]),
                _fmt(summary.pi_tilde[k]),
                _fmt(summary.alpha_tilde[j]),
                _fmt(summary.mu_tilde[j]),
                _fmt(summary.effect[j]),
                _fmt(summary.group_fdr[k]),
                _fmt(summary.var_fdr[j]),
            ])


def write_groups_csv(path: str, summary: PosteriorSummary, design):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "pi_tilde", "fdr"])
        for k in range(summary.pi_tilde.shape[0]):
            writer.writerow([str(design.group_labels[k]),
                             _fmt(summary.pi_tilde[k]),
                             _fmt(summary.group_fdr[k])])


def selection_to_dict(report: SelectionReport, summary: PosteriorSummary,
                      design) -> dict:
    if summary.multitask:
        variables = [
            {"predictor": design.predictor_names[k], "task": int(j),
             "fdr": float(report.var_fdr[k, j])}
            for k, j in report.variables
        ]
        groups = [
            {"group": design.predictor_names[k],
             "fdr": float(report.group_fdr[k])}
            for k in report.groups
        ]
    else:
        variables = [
            {"predictor": design.predictor_names[j],
             "fdr": float(report.var_fdr[j])}
            for j in report.variables
        ]
        groups = [
            {"group": str(design.group_labels[k]),
             "fdr": float(report.group_fdr[k])}
            for k in report.groups
        ]
    return {"threshold": report.threshold, "groups": groups,
            "variables": variables}


def write_predictions_csv(path: str, yhat):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prediction"])
        for v in np.asarray(yhat, float).ravel():
            writer.writerow([_fmt(v)])


def truth_to_dict(truth, extra: dict | None = None) -> dict:
    payload = {
        "eta": truth.eta.tolist(),
        "gamma": truth.gamma.tolist(),
        "beta": truth.beta.tolist(),
        "coef": truth.coef.tolist(),
        "sigma_e2": truth.sigma_e2.tolist()
        if isinstance(truth.sigma_e2, np.ndarray) else truth.sigma_e2,
    }
    if extra:
        payload.update(extra)
    return payload


def append_metrics_csv(path: str, row: dict):
    """Append one metrics row, writing the header when the file is new."""
    exists = os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if not exists:
            writer.writerow(list(row))
        writer.writerow([_fmt(v) if isinstance(v, float) else v
                         for v in row.values()])
