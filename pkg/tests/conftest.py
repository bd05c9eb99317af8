"""Shared generators and reference (no-caching) implementations for tests.

The reference sweeps recompute every update from the closed-form sums,
deliberately avoiding the residual caches used by the production code, so
they can serve as independent oracles for the cached path.
"""
import math

import numpy as np
import pytest

from bivas import (
    EmOptions,
    GroupedDesign,
    ModelParams,
    MultiTaskData,
    VariationalState,
    em_fit,
    initial_params,
    refresh_residual,
)
from bivas.designs import clamp_prob
from bivas.group_fit import _logit, sigmoid, slab_variances


def random_grouped(rng, n=None, K=None, max_group=4, with_covariate=False,
                   rho=0.0, noise=1.0, active_frac=0.5, n_range=(15, 60),
                   K_range=(2, 6)):
    """Random small GroupedDesign with a planted sparse signal."""
    if n is None:
        n = int(rng.integers(*n_range))
    if K is None:
        K = int(rng.integers(*K_range))
    sizes = rng.integers(1, max_group + 1, K)
    p = int(sizes.sum())
    group_of = np.repeat(np.arange(K), sizes)
    if rho:
        eps = rng.standard_normal((n, p))
        X = np.empty((n, p))
        X[:, 0] = eps[:, 0]
        for j in range(1, p):
            X[:, j] = rho * X[:, j - 1] + math.sqrt(1 - rho * rho) * eps[:, j]
    else:
        X = rng.standard_normal((n, p))
    if with_covariate:
        Z = np.column_stack([np.ones(n), rng.standard_normal(n)])
    else:
        Z = np.ones((n, 1))
    coef = rng.standard_normal(p) * (rng.random(p) < active_frac)
    y = X @ coef + noise * rng.standard_normal(n)
    return GroupedDesign(y, Z, X, group_of)


def random_state(rng, design, params):
    """Arbitrary but valid variational state with consistent caches."""
    state = VariationalState.initial(design, params)
    state.mu[:] = 0.5 * rng.standard_normal(design.p)
    state.alpha_jk[:] = clamp_prob(rng.random(design.p))
    state.pi_k[:] = clamp_prob(rng.random(design.K))
    refresh_residual(state, design, params)
    return state


def random_multitask(rng, L=None, K=None, n_range=(8, 25)):
    """Random small MultiTaskData with a planted shared-support signal."""
    if L is None:
        L = int(rng.integers(2, 4))
    if K is None:
        K = int(rng.integers(2, 7))
    eta = rng.random(K) < 0.5
    tasks = []
    for _ in range(L):
        n = int(rng.integers(*n_range))
        X = rng.standard_normal((n, K))
        coef = eta * rng.standard_normal(K) * (rng.random(K) < 0.7)
        y = X @ coef + rng.standard_normal(n)
        tasks.append((y, np.ones((n, 1)), X))
    return MultiTaskData(tasks)


def direct_numerator(state, design, params, k, pos):
    """Slab-mean numerator from the full double sum, no residual caching."""
    x = design.X[:, pos]
    num = float(x @ (design.y - design.Z @ params.omega))
    for kp in range(design.K):
        for jp in design.group_members[kp]:
            if kp == k and jp == pos:
                continue
            weight = state.alpha_jk[jp] * state.mu[jp]
            if kp != k:
                weight *= state.pi_k[kp]
            num -= weight * float(x @ design.X[:, jp])
    return num


def direct_sweep(state, design, params):
    """Reference coordinate sweep computing every numerator directly."""
    s2 = slab_variances(design, params)
    state.s2[:] = s2
    log_ratio = np.log(s2 / params.sigma_beta2)
    la, lp = _logit(params.alpha), _logit(params.pi)
    for k in range(design.K):
        idx = design.group_members[k]
        for pos in idx:
            num = direct_numerator(state, design, params, k, pos)
            mu_new = num * s2[pos] / params.sigma_e2 \
                if design.xtx[pos] > 0.0 else 0.0
            v = la + 0.5 * state.pi_k[k] * (log_ratio[pos]
                                            + mu_new ** 2 / s2[pos])
            state.mu[pos] = mu_new
            state.alpha_jk[pos] = sigmoid(v)
        u = lp + 0.5 * sum(
            state.alpha_jk[j] * (log_ratio[j] + state.mu[j] ** 2 / s2[j])
            for j in idx)
        coupling = 0.0
        for j in idx:
            for jp in idx:
                if jp == j:
                    continue
                coupling += state.alpha_jk[j] * state.mu[j] \
                    * state.alpha_jk[jp] * state.mu[jp] \
                    * float(design.X[:, j] @ design.X[:, jp])
        u += 0.5 * coupling / params.sigma_e2
        state.pi_k[k] = sigmoid(u)
    return state


def mt_direct_sweep(state, data, params):
    """Reference multi-task sweep from the closed-form sums."""
    K, L = data.K, data.L
    for j in range(L):
        denom = data.xtx[j] + params.sigma_e2[j] / params.sigma_beta2[j]
        state.s2[:, j] = np.where(data.xtx[j] > 0.0,
                                  params.sigma_e2[j] / denom,
                                  params.sigma_beta2[j])
    la, lp = _logit(params.alpha), _logit(params.pi)
    for k in range(K):
        for j in range(L):
            x = data.X[j][:, k]
            num = float(x @ (data.y[j] - data.Z[j] @ params.omega[j]))
            for kp in range(K):
                if kp == k:
                    continue
                num -= state.pi_k[kp] * state.alpha_jk[kp, j] \
                    * state.mu[kp, j] * float(x @ data.X[j][:, kp])
            s2 = state.s2[k, j]
            mu_new = num * s2 / params.sigma_e2[j] \
                if data.xtx[j][k] > 0.0 else 0.0
            v = la + 0.5 * state.pi_k[k] * (
                math.log(s2 / params.sigma_beta2[j]) + mu_new ** 2 / s2)
            state.mu[k, j] = mu_new
            state.alpha_jk[k, j] = sigmoid(v)
        u = lp + 0.5 * sum(
            state.alpha_jk[k, j] * (
                math.log(state.s2[k, j] / params.sigma_beta2[j])
                + state.mu[k, j] ** 2 / state.s2[k, j])
            for j in range(L))
        state.pi_k[k] = sigmoid(u)
    return state


def converge_estep(state, design, params, sweeps=400):
    """Iterate coordinate sweeps at fixed parameters to a fixed point.

    Refreshes the caches first: the sweep's precondition is a residual
    consistent with ``params``, which a preceding M-step invalidates.
    """
    from bivas import estep_sweep

    refresh_residual(state, design, params)
    for _ in range(sweeps):
        prev = state.alpha_jk.copy()
        prev_mu = state.mu.copy()
        estep_sweep(state, design, params)
        if (np.abs(state.alpha_jk - prev).max() < 1e-14
                and np.abs(state.mu - prev_mu).max() < 1e-14):
            break
    refresh_residual(state, design, params)
    return state


def fitted_tiny(rng, **kwargs):
    """Random tiny instance fitted to tight convergence."""
    design = random_grouped(rng, **kwargs)
    init = initial_params(design, pi=float(rng.uniform(0.2, 0.6)))
    result = em_fit(design, init, EmOptions(max_iter=2000, rel_tol=1e-12))
    return design, result


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
