"""Domain types and validation for grouped and multi-task regression data.

The two data containers (:class:`GroupedDesign`, :class:`MultiTaskData`) are
immutable after construction and safe to share across threads.  They cache
everything the fitting engines read repeatedly: per-column squared norms,
per-group column blocks in Fortran order, and a Cholesky factor of Z'Z.
:class:`VariationalState` is the single mutable object; one EM run owns one
state exclusively.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import (
    DimensionMismatch,
    EmptyGroup,
    NaNPresent,
    NonNumeric,
    RankDeficientZ,
)

# Probabilities are kept inside [PROB_EPS, 1 - PROB_EPS] and variances above
# VAR_FLOOR so logits and entropy terms never hit log(0) or divide by zero.
PROB_EPS = 1e-12
VAR_FLOOR = 1e-10

# Z'Z is declared rank deficient when its smallest eigenvalue falls below
# this fraction of the largest.
_Z_RANK_RTOL = 1e-10


def clamp_prob(x):
    """Clamp a probability (scalar or array) to [PROB_EPS, 1 - PROB_EPS]."""
    return np.clip(x, PROB_EPS, 1.0 - PROB_EPS)


def floor_var(x):
    """Floor a variance (scalar or array) at VAR_FLOOR."""
    return np.maximum(x, VAR_FLOOR)


def _as_float_array(a, name):
    try:
        out = np.asarray(a, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise NonNumeric(f"{name} contains non-numeric entries: {exc}") from None
    if out.size and not np.all(np.isfinite(out)):
        raise NaNPresent(f"{name} contains NaN or infinite entries")
    return out


def _check_z_rank(Z):
    """Return the Cholesky factor of Z'Z, raising RankDeficientZ when singular."""
    gram = Z.T @ Z
    if gram.size:
        eigs = np.linalg.eigvalsh(gram)
        if eigs[0] < _Z_RANK_RTOL * max(eigs[-1], 0.0) or eigs[0] <= 0.0:
            raise RankDeficientZ(
                f"Z'Z smallest eigenvalue {eigs[0]:.3e} below "
                f"{_Z_RANK_RTOL:g} x largest {eigs[-1]:.3e}"
            )
    return cho_factor(gram) if gram.size else None


def reindex_groups(labels):
    """Map arbitrary group labels to dense ids in [0, K).

    Ids are assigned in order of first appearance, so the mapping is a
    bijection on the observed labels and group sizes are preserved.
    Returns ``(group_of, unique_labels)``.
    """
    seen: dict = {}
    group_of = np.empty(len(labels), dtype=np.intp)
    uniques = []
    for j, lab in enumerate(labels):
        key = lab.item() if isinstance(lab, np.generic) else lab
        if key not in seen:
            seen[key] = len(uniques)
            uniques.append(key)
        group_of[j] = seen[key]
    return group_of, uniques


class GroupedDesign:
    """Response y, covariates Z and grouped predictors X for one regression.

    Parameters
    ----------
    y : (n,) response vector.
    Z : (n, r) fixed-covariate matrix, typically including an intercept
        column; must have full column rank and r < n.
    X : (n, p) predictor matrix.
    group_of : length-p dense group ids in [0, K).  Use
        :func:`validate_design` to build a design from raw labels.
    group_labels : optional original labels, index k -> label.
    predictor_names, covariate_names : optional column names used by IO.
    x_center, x_scale : optional per-column affine transform that was
        applied to X (recorded so predictions can apply the same one).
    """

    def __init__(self, y, Z, X, group_of, *, group_labels=None,
                 predictor_names=None, covariate_names=None,
                 x_center=None, x_scale=None):
        self.y = _as_float_array(y, "y").ravel()
        self.Z = np.ascontiguousarray(_as_float_array(Z, "Z"))
        if self.Z.ndim == 1:
            self.Z = self.Z[:, None]
        self.X = np.asfortranarray(_as_float_array(X, "X"))
        if self.X.ndim == 1:
            self.X = np.asfortranarray(self.X[:, None])
        self.n = self.y.shape[0]
        if self.Z.shape[0] != self.n or self.X.shape[0] != self.n:
            raise DimensionMismatch(
                f"rows disagree: y has {self.n}, Z has {self.Z.shape[0]}, "
                f"X has {self.X.shape[0]}"
            )
        self.r = self.Z.shape[1]
        self.p = self.X.shape[1]
        if self.r >= self.n:
            raise DimensionMismatch(f"need r < n, got r={self.r}, n={self.n}")

        group_of = np.asarray(group_of)
        if group_of.shape != (self.p,):
            raise DimensionMismatch(
                f"group_of has shape {group_of.shape}, expected ({self.p},)"
            )
        if group_of.size and not np.issubdtype(group_of.dtype, np.integer):
            raise NonNumeric("group_of must hold integer ids; "
                             "use validate_design for raw labels")
        self.group_of = group_of.astype(np.intp)
        self.K = int(self.group_of.max()) + 1 if self.p else 0
        sizes = np.bincount(self.group_of, minlength=self.K)
        if np.any(sizes == 0):
            empty = np.nonzero(sizes == 0)[0]
            raise EmptyGroup(f"group ids with no members: {empty.tolist()}")
        self.group_sizes = sizes

        self.group_labels = list(group_labels) if group_labels is not None \
            else list(range(self.K))
        self.predictor_names = list(predictor_names) if predictor_names is not None \
            else [f"x{j}" for j in range(self.p)]
        self.covariate_names = list(covariate_names) if covariate_names is not None \
            else [f"z{j}" for j in range(self.r)]
        self.x_center = None if x_center is None else np.asarray(x_center, float)
        self.x_scale = None if x_scale is None else np.asarray(x_scale, float)

        # caches used by every sweep
        self.xtx = np.einsum("ij,ij->j", self.X, self.X)
        self.group_members = [np.nonzero(self.group_of == k)[0]
                              for k in range(self.K)]
        self.group_cols = [np.asfortranarray(self.X[:, idx])
                           for idx in self.group_members]
        self._z_cho = _check_z_rank(self.Z)

    def solve_z_gram(self, rhs):
        """Solve (Z'Z) w = rhs using the cached Cholesky factor."""
        if self._z_cho is None:
            return np.zeros(0)
        return cho_solve(self._z_cho, rhs)

    def with_response(self, y):
        """Return a copy sharing all X/Z caches but carrying a new response."""
        y = _as_float_array(y, "y").ravel()
        if y.shape[0] != self.n:
            raise DimensionMismatch(f"y has {y.shape[0]} rows, design has {self.n}")
        out = object.__new__(GroupedDesign)
        out.__dict__ = dict(self.__dict__)
        out.y = y
        return out


def validate_design(y, Z, X, groups, *, standardize=False,
                    predictor_names=None, covariate_names=None):
    """Build a :class:`GroupedDesign` from a parsed numeric table.

    ``groups`` may use arbitrary integer or string labels; they are
    re-indexed densely to [0, K) in order of first appearance.  When
    ``standardize`` is true, predictor columns are centered and scaled to
    unit standard deviation (constant columns are centered only) and the
    transform is recorded on the design.
    """
    X = _as_float_array(X, "X")
    if X.ndim == 1:
        X = X[:, None]
    groups = list(np.asarray(groups).ravel())
    if len(groups) != X.shape[1]:
        raise DimensionMismatch(
            f"{len(groups)} group labels for {X.shape[1]} predictor columns"
        )
    group_of, labels = reindex_groups(groups)

    x_center = x_scale = None
    if standardize and X.shape[1]:
        x_center = X.mean(axis=0)
        sd = X.std(axis=0)
        x_scale = np.where(sd > 0, sd, 1.0)
        X = (X - x_center) / x_scale

    return GroupedDesign(
        y, Z, X, group_of,
        group_labels=labels,
        predictor_names=predictor_names,
        covariate_names=covariate_names,
        x_center=x_center, x_scale=x_scale,
    )


@dataclass
class ModelParams:
    """Model parameters: inclusion priors, variances and fixed effects.

    ``alpha`` and ``pi`` are clamped to [PROB_EPS, 1 - PROB_EPS] and the
    variances floored at VAR_FLOOR on construction.
    """

    alpha: float
    pi: float
    sigma_beta2: float
    sigma_e2: float
    omega: np.ndarray

    def __post_init__(self):
        self.alpha = float(clamp_prob(self.alpha))
        self.pi = float(clamp_prob(self.pi))
        self.sigma_beta2 = float(floor_var(self.sigma_beta2))
        self.sigma_e2 = float(floor_var(self.sigma_e2))
        self.omega = np.asarray(self.omega, dtype=np.float64).ravel()


class VariationalState:
    """Per-coefficient variational posterior plus maintained fit caches.

    Fields
    ------
    mu, s2 : (p,) conditional posterior means and variances of the slab.
    alpha_jk : (p,) variable-level posterior inclusion probabilities.
    pi_k : (K,) group-level posterior inclusion probabilities.
    residual : (n,) maintained y - Z w - sum_k pi_k g_k.
    group_fit : list of K (n,) vectors g_k = sum_{j in k} alpha_jk mu_jk x_jk
        (the group fit *without* its pi_k weight).
    """

    def __init__(self, mu, s2, alpha_jk, pi_k, residual, group_fit):
        self.mu = np.asarray(mu, float).copy()
        self.s2 = np.asarray(s2, float).copy()
        self.alpha_jk = clamp_prob(np.asarray(alpha_jk, float)).copy()
        self.pi_k = clamp_prob(np.asarray(pi_k, float)).copy()
        self.residual = np.asarray(residual, float).copy()
        self.group_fit = [np.asarray(g, float).copy() for g in group_fit]

    @classmethod
    def initial(cls, data: GroupedDesign, params: ModelParams):
        """Zero-mean start: mu = 0, alpha_jk = alpha, pi_k = pi."""
        s2 = slab_variances(data, params)
        state = cls(
            mu=np.zeros(data.p),
            s2=s2,
            alpha_jk=np.full(data.p, params.alpha),
            pi_k=np.full(data.K, params.pi),
            residual=data.y - data.Z @ params.omega,
            group_fit=[np.zeros(data.n) for _ in range(data.K)],
        )
        return state

    def copy(self):
        return VariationalState(self.mu, self.s2, self.alpha_jk, self.pi_k,
                                self.residual, self.group_fit)


def slab_variances(data: GroupedDesign, params: ModelParams):
    """s_jk^2 = sigma_e^2 / (x'x + sigma_e^2 / sigma_beta^2), with the
    zero-norm-column limit s^2 = sigma_beta^2."""
    denom = data.xtx + params.sigma_e2 / params.sigma_beta2
    return np.where(data.xtx > 0.0, params.sigma_e2 / denom, params.sigma_beta2)


def refresh_residual(state: VariationalState, data: GroupedDesign,
                     params: ModelParams) -> VariationalState:
    """Recompute ``residual`` and ``group_fit`` from scratch, in place.

    Idempotent; used to wash out floating-point drift accumulated by the
    incremental updates inside the coordinate sweeps.
    """
    w = state.alpha_jk * state.mu
    for k, idx in enumerate(data.group_members):
        state.group_fit[k][:] = data.group_cols[k] @ w[idx]
    state.residual[:] = data.y - data.Z @ params.omega \
        - data.X @ (state.pi_k[data.group_of] * w)
    return state


# ---------------------------------------------------------------------------
# multi-task containers
# ---------------------------------------------------------------------------

class MultiTaskData:
    """L regression tasks sharing the same K predictors.

    ``tasks`` is a list of (y_j, Z_j, X_j) triples; column k of every X_j
    is the same conceptual feature, so every X_j must have K columns.
    """

    def __init__(self, tasks, *, predictor_names=None, covariate_names=None):
        if not tasks:
            raise DimensionMismatch("need at least one task")
        self.y = []
        self.Z = []
        self.X = []
        self.n = []
        self.r = []
        self._z_cho = []
        self.xtx = []
        K = None
        for t, (y, Z, X) in enumerate(tasks):
            y = _as_float_array(y, f"y[{t}]").ravel()
            Z = np.ascontiguousarray(_as_float_array(Z, f"Z[{t}]"))
            if Z.ndim == 1:
                Z = Z[:, None]
            X = np.asfortranarray(_as_float_array(X, f"X[{t}]"))
            if X.ndim == 1:
                X = np.asfortranarray(X[:, None])
            n = y.shape[0]
            if Z.shape[0] != n or X.shape[0] != n:
                raise DimensionMismatch(f"task {t}: row counts disagree")
            if K is None:
                K = X.shape[1]
            elif X.shape[1] != K:
                raise DimensionMismatch(
                    f"task {t} has {X.shape[1]} predictors, expected {K}"
                )
            if Z.shape[1] >= n:
                raise DimensionMismatch(f"task {t}: need r < n_j")
            self.y.append(y)
            self.Z.append(Z)
            self.X.append(X)
            self.n.append(n)
            self.r.append(Z.shape[1])
            try:
                self._z_cho.append(_check_z_rank(Z))
            except RankDeficientZ as exc:
                raise RankDeficientZ(f"task {t}: {exc}") from None
            self.xtx.append(np.einsum("ij,ij->j", X, X))
        self.L = len(tasks)
        self.K = int(K)
        self.predictor_names = list(predictor_names) if predictor_names is not None \
            else [f"x{k}" for k in range(self.K)]
        self.covariate_names = list(covariate_names) if covariate_names is not None \
            else [[f"z{j}" for j in range(r)] for r in self.r]

    def solve_z_gram(self, task, rhs):
        if self._z_cho[task] is None:
            return np.zeros(0)
        return cho_solve(self._z_cho[task], rhs)


@dataclass
class MultiTaskParams:
    """Shared inclusion priors with per-task variances and fixed effects."""

    alpha: float
    pi: float
    sigma_beta2: np.ndarray   # (L,)
    sigma_e2: np.ndarray      # (L,)
    omega: list = field(default_factory=list)   # L vectors, lengths r_j

    def __post_init__(self):
        self.alpha = float(clamp_prob(self.alpha))
        self.pi = float(clamp_prob(self.pi))
        self.sigma_beta2 = floor_var(np.asarray(self.sigma_beta2, float).ravel())
        self.sigma_e2 = floor_var(np.asarray(self.sigma_e2, float).ravel())
        self.omega = [np.asarray(w, float).ravel() for w in self.omega]


class MtVariationalState:
    """Multi-task variational state: (K, L) coefficient arrays, shared pi_k.

    ``residual[j]`` maintains y_j - Z_j w_j - sum_k pi_k alpha_jk mu_jk x_jk.
    """

    def __init__(self, mu, s2, alpha_jk, pi_k, residual):
        self.mu = np.asarray(mu, float).copy()
        self.s2 = np.asarray(s2, float).copy()
        self.alpha_jk = clamp_prob(np.asarray(alpha_jk, float)).copy()
        self.pi_k = clamp_prob(np.asarray(pi_k, float)).copy()
        self.residual = [np.asarray(r, float).copy() for r in residual]

    @classmethod
    def initial(cls, data: MultiTaskData, params: MultiTaskParams):
        K, L = data.K, data.L
        s2 = np.empty((K, L))
        for j in range(L):
            denom = data.xtx[j] + params.sigma_e2[j] / params.sigma_beta2[j]
            s2[:, j] = np.where(data.xtx[j] > 0.0,
                                params.sigma_e2[j] / denom,
                                params.sigma_beta2[j])
        return cls(
            mu=np.zeros((K, L)),
            s2=s2,
            alpha_jk=np.full((K, L), params.alpha),
            pi_k=np.full(K, params.pi),
            residual=[data.y[j] - data.Z[j] @ params.omega[j] for j in range(L)],
        )

    def copy(self):
        return MtVariationalState(self.mu, self.s2, self.alpha_jk, self.pi_k,
                                  self.residual)


def mt_refresh_residual(state: MtVariationalState, data: MultiTaskData,
                        params: MultiTaskParams) -> MtVariationalState:
    """Recompute every per-task residual from scratch, in place."""
    weighted = state.pi_k[:, None] * state.alpha_jk * state.mu   # (K, L)
    for j in range(data.L):
        state.residual[j][:] = data.y[j] - data.Z[j] @ params.omega[j] \
            - data.X[j] @ weighted[:, j]
    return state
