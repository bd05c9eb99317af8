"""Importance-weighted grid over the group-sparsity prior.

The group-level prior inclusion probability is hard to estimate from a
single EM run, so the model is fit once per grid value pi(i) (log10-odds
equally spaced on [-log10 K, 0]) with pi held fixed, and the per-run
posteriors are averaged under weights proportional to exp(elbo).  Runs are
independent, so they are scheduled dynamically over a shared work queue.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .designs import ModelParams, MultiTaskData, MultiTaskParams
from .exceptions import DimensionMismatch, InvalidCount, InvalidThreshold
from .group_fit import EmOptions, EmResult, em_fit, initial_params
from .multitask_fit import mt_em_fit, mt_initial_params


@dataclass
class PiGrid:
    """Grid of group-sparsity prior values, increasing, ending at 0.5."""

    values: np.ndarray

    @property
    def h(self) -> int:
        return self.values.shape[0]


def make_pi_grid(K: int, h: int = 20) -> PiGrid:
    """h prior values whose log10 odds are equally spaced on [-log10 K, 0].

    The endpoints have odds 1/K and 1 (i.e. pi = 1/(K+1) and pi = 0.5);
    h = 1 returns only the upper endpoint.  For K = 1 the interval is
    degenerate and every value equals 0.5.
    """
    if h < 1:
        raise InvalidCount(f"grid size must be >= 1, got {h}")
    if K < 1:
        raise InvalidCount(f"need at least one group, got K={K}")
    if h == 1:
        log_odds = np.array([0.0])
    else:
        log_odds = np.linspace(-np.log10(K), 0.0, h)
    odds = 10.0 ** log_odds
    # pin the endpoints so their odds are exactly 1/K and 1
    odds[-1] = 1.0
    if h > 1:
        odds[0] = 1.0 / K
    return PiGrid(values=odds / (1.0 + odds))


def normalize_weights(elbos) -> np.ndarray:
    """Importance weights exp(elbo - max elbo), normalized to sum to one.

    Subtracting the maximum before exponentiating keeps the computation
    stable for arbitrarily shifted bounds; dividing by the total makes the
    aggregated posteriors convex combinations of the per-run ones.
    """
    elbos = np.asarray(elbos, dtype=float)
    shifted = np.exp(elbos - elbos.max())
    return shifted / shifted.sum()


@dataclass
class GridFit:
    """Per-grid-point converged fits plus their normalized weights."""

    pi_values: np.ndarray
    results: list            # EmResult per grid point
    elbos: np.ndarray
    weights: np.ndarray
    multitask: bool = False
    group_of: np.ndarray | None = None

    @property
    def h(self) -> int:
        return self.pi_values.shape[0]


def run_grid(data, grid: PiGrid, opts: EmOptions | None = None,
             threads: int = 1, seed: int = 0, alpha0: float = 0.1) -> GridFit:
    """Fit the model once per grid value with the group prior held fixed.

    Idle workers claim the next unstarted grid point from a shared queue;
    each run is self-contained and deterministically initialized, so the
    result is identical for any thread count and claim order.  ``seed``
    stretches to one sub-seed per grid index (reserved for stochastic
    initializers; the default initializer is deterministic).
    """
    if threads < 1:
        raise InvalidCount(f"threads must be >= 1, got {threads}")
    base_opts = opts if opts is not None else EmOptions()
    multitask = isinstance(data, MultiTaskData)
    sub_seeds = np.random.SeedSequence(seed).generate_state(grid.h)

    def fit_one(i: int) -> EmResult:
        run_opts = EmOptions(
            max_iter=base_opts.max_iter, rel_tol=base_opts.rel_tol,
            fix_pi=True, fix_alpha=base_opts.fix_alpha,
            trace=base_opts.trace, estep_sweeps=base_opts.estep_sweeps,
        )
        pi = float(grid.values[i])
        _ = sub_seeds[i]   # per-index stream; unused by the deterministic init
        if multitask:
            return mt_em_fit(data, mt_initial_params(data, pi, alpha0), run_opts)
        return em_fit(data, initial_params(data, pi, alpha0), run_opts)

    if threads == 1 or grid.h == 1:
        results = [fit_one(i) for i in range(grid.h)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fit_one, range(grid.h)))

    elbos = np.array([res.elbo for res in results])
    return GridFit(pi_values=grid.values.copy(), results=results,
                   elbos=elbos, weights=normalize_weights(elbos),
                   multitask=multitask,
                   group_of=None if multitask else data.group_of.copy())


@dataclass
class PosteriorSummary:
    """Weight-averaged posteriors, fdr values and aggregated parameters.

    Group arrays have length K.  Variable arrays have length p for the
    grouped model and shape (K, L) for the multi-task model.  ``effect``
    is the elementwise product pi_tilde * alpha_tilde * mu_tilde, the
    posterior mean effect size used for prediction.
    """

    pi_tilde: np.ndarray
    alpha_tilde: np.ndarray
    mu_tilde: np.ndarray
    effect: np.ndarray
    group_fdr: np.ndarray
    var_fdr: np.ndarray
    params: object           # ModelParams or MultiTaskParams (weight-averaged)
    group_of: np.ndarray | None = None
    multitask: bool = False


def aggregate(gridfit: GridFit) -> PosteriorSummary:
    """Average per-run posteriors and parameters under the grid weights."""
    w = gridfit.weights
    states = [res.state for res in gridfit.results]
    plist = [res.params for res in gridfit.results]
    pi_tilde = sum(wi * st.pi_k for wi, st in zip(w, states))
    alpha_tilde = sum(wi * st.alpha_jk for wi, st in zip(w, states))
    mu_tilde = sum(wi * st.mu for wi, st in zip(w, states))

    if gridfit.multitask:
        effect = pi_tilde[:, None] * alpha_tilde * mu_tilde
        params = MultiTaskParams(
            alpha=sum(wi * p.alpha for wi, p in zip(w, plist)),
            pi=sum(wi * p.pi for wi, p in zip(w, plist)),
            sigma_beta2=sum(wi * p.sigma_beta2 for wi, p in zip(w, plist)),
            sigma_e2=sum(wi * p.sigma_e2 for wi, p in zip(w, plist)),
            omega=[sum(wi * p.omega[j] for wi, p in zip(w, plist))
                   for j in range(len(plist[0].omega))],
        )
        group_of = None
    else:
        params = ModelParams(
            alpha=sum(wi * p.alpha for wi, p in zip(w, plist)),
            pi=sum(wi * p.pi for wi, p in zip(w, plist)),
            sigma_beta2=sum(wi * p.sigma_beta2 for wi, p in zip(w, plist)),
            sigma_e2=sum(wi * p.sigma_e2 for wi, p in zip(w, plist)),
            omega=sum(wi * p.omega for wi, p in zip(w, plist)),
        )
        group_of = gridfit.group_of
        effect = pi_tilde[group_of] * alpha_tilde * mu_tilde

    return PosteriorSummary(
        pi_tilde=pi_tilde, alpha_tilde=alpha_tilde, mu_tilde=mu_tilde,
        effect=effect, group_fdr=1.0 - pi_tilde, var_fdr=1.0 - alpha_tilde,
        params=params, group_of=None if group_of is None else group_of.copy(),
        multitask=gridfit.multitask,
    )


@dataclass
class SelectionReport:
    """Indices passing the local-fdr threshold, plus both fdr vectors."""

    threshold: float
    groups: np.ndarray
    variables: np.ndarray    # flat indices (grouped) or (k, task) pairs
    group_fdr: np.ndarray
    var_fdr: np.ndarray


def select(summary: PosteriorSummary, threshold: float = 0.05) -> SelectionReport:
    """Groups and variables whose local fdr is strictly below ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise InvalidThreshold(f"threshold must be in (0, 1), got {threshold}")
    groups = np.nonzero(summary.group_fdr < threshold)[0]
    if summary.multitask:
        variables = np.argwhere(summary.var_fdr < threshold)
    else:
        variables = np.nonzero(summary.var_fdr < threshold)[0]
    return SelectionReport(threshold=threshold, groups=groups,
                           variables=variables,
                           group_fdr=summary.group_fdr.copy(),
                           var_fdr=summary.var_fdr.copy())


def predict(summary: PosteriorSummary, Znew, Xnew, task: int | None = None):
    """Posterior-mean prediction Z omega + X effect on new data.

    For multi-task summaries ``task`` picks the task whose fixed effects
    (and effect column) apply to the supplied design.
    """
    Znew = np.asarray(Znew, float)
    Xnew = np.asarray(Xnew, float)
    if Znew.ndim == 1:
        Znew = Znew[:, None]
    if Xnew.ndim == 1:
        Xnew = Xnew[:, None]
    if Znew.shape[0] != Xnew.shape[0]:
        raise DimensionMismatch("Znew and Xnew row counts disagree")

    if summary.multitask:
        if task is None:
            raise DimensionMismatch("multi-task prediction needs a task index")
        omega = summary.params.omega[task]
        effect = summary.effect[:, task]
    else:
        if task is not None:
            raise DimensionMismatch("task index only applies to multi-task fits")
        omega = summary.params.omega
        effect = summary.effect

    if Znew.shape[1] != omega.shape[0]:
        raise DimensionMismatch(
            f"Znew has {Znew.shape[1]} columns, model has {omega.shape[0]}"
        )
    if Xnew.shape[1] != effect.shape[0]:
        raise DimensionMismatch(
            f"Xnew has {Xnew.shape[1]} columns, model has {effect.shape[0]}"
        )
    return Znew @ omega + Xnew @ effect
