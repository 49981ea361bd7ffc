"""Prediction-error curves over the tuning grid, with fold-level standard
errors and the one-standard-error rule."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._kernels import forward_stepwise_order, lasso_cd_gram
from ._streams import FOLDS, rng_stream
from .data import GAUSSIAN_GRAPHICAL, Dataset
from .exceptions import ConvergenceError, DataError
from .mle import constrained_mle_graphical
from .selectors import (
    FORWARD_STEPWISE,
    GRAPHICAL_LASSO,
    LASSO,
    LOGISTIC_L1,
    GlassoState,
    Selector,
    graphical_lasso,
    logistic_l1,
)

MSE = "mse"
NEG_LOGLIK = "neg_loglik"

# Tuning orientation: for these selectors a larger value is more
# regularized; forward stepwise runs the other way (fewer steps).
_LARGER_IS_STRONGER = (LASSO, GRAPHICAL_LASSO, LOGISTIC_L1)


@dataclass(frozen=True)
class CvCurve:
    """K-fold error curve with the tuning values picked by the minimum and
    by the one-standard-error rule."""

    grid: np.ndarray
    mean_error: np.ndarray
    se_error: np.ndarray
    metric: str
    selector_kind: str
    fold_ids: np.ndarray
    lambda_min: float
    lambda_1se: float


def fold_assignments(n: int, folds: int, seed: int = 0) -> np.ndarray:
    """Seeded random permutation split into contiguous near-equal blocks."""
    if folds < 2 or folds > n:
        raise DataError("folds must lie in [2, n]")
    perm = rng_stream(seed, FOLDS).permutation(n)
    ids = np.empty(n, dtype=np.int64)
    for f, block in enumerate(np.array_split(perm, folds)):
        ids[block] = f
    return ids


def _strength(kind: str, grid: np.ndarray) -> np.ndarray:
    return grid if kind in _LARGER_IS_STRONGER else -grid


def one_se_rule(curve: CvCurve) -> float:
    """Most regularized tuning value within one s.e. of the minimum."""
    i_min = int(np.argmin(curve.mean_error))
    cutoff = curve.mean_error[i_min] + curve.se_error[i_min]
    ok = np.flatnonzero(curve.mean_error <= cutoff)
    strength = _strength(curve.selector_kind, curve.grid)
    return float(curve.grid[ok[np.argmax(strength[ok])]])


def _linear_fold_errors(data, selector, grid, train, val, desc):
    """Per-tuning MSE on the validation rows; per-fold centering."""
    x_tr, y_tr = data.x[train], data.y[train]
    x_va, y_va = data.x[val], data.y[val]
    mu_x = x_tr.mean(axis=0)
    mu_y = y_tr.mean()
    xc, yc = x_tr - mu_x, y_tr - mu_y
    gram = xc.T @ xc
    b = xc.T @ yc
    theta = np.zeros(data.d)
    errs = np.empty(grid.size)
    for ti in desc:
        status = lasso_cd_gram(gram, b, float(grid[ti]), theta, selector.max_iters, selector.tol)
        if status < 0:
            raise ConvergenceError(f"fold lasso failed at tuning {grid[ti]:.6g}")
        pred = (x_va - mu_x) @ theta + mu_y
        errs[ti] = float(np.mean((y_va - pred) ** 2))
    return errs


def _fs_fold_errors(data, grid, train, val):
    """Stepwise path on the training rows, OLS refit per step count."""
    ks = grid.astype(np.int64)
    x_tr, y_tr = data.x[train], data.y[train]
    x_va, y_va = data.x[val], data.y[val]
    mu_x, mu_y = x_tr.mean(axis=0), y_tr.mean()
    xc, yc = x_tr - mu_x, y_tr - mu_y
    kmax = int(ks.max())
    if kmax > 0:
        norms = np.linalg.norm(xc, axis=0)
        if np.any(norms <= 0):
            raise DataError("fold too small: constant column in the training rows")
        order, status = forward_stepwise_order(
            np.ascontiguousarray((xc / norms).T), np.ascontiguousarray(yc), kmax, 1e-10
        )
        if status < 0:
            raise DataError("collinearity during the fold stepwise run")
    else:
        order = np.empty(0, dtype=np.int64)
    errs = np.empty(grid.size)
    for ti, k in enumerate(ks):
        if k == 0:
            pred = np.full(val.size, mu_y)
        else:
            cols = order[:k]
            coef, *_ = np.linalg.lstsq(xc[:, cols], yc, rcond=None)
            pred = (x_va[:, cols] - mu_x[cols]) @ coef + mu_y
        errs[ti] = float(np.mean((y_va - pred) ** 2))
    return errs


def _graphical_fold_errors(data, grid, train, val, desc):
    """Glasso selection on the training rows, constrained-MLE refit, and
    validation negative log-likelihood per tuning value."""
    x_tr = data.x[train] - data.x[train].mean(axis=0)
    x_va = data.x[val] - data.x[val].mean(axis=0)
    if x_tr.shape[0] - 1 <= data.d:
        raise DataError("fold too small for a graphical refit")
    s_tr = x_tr.T @ x_tr / (x_tr.shape[0] - 1)
    s_va = x_va.T @ x_va / max(x_va.shape[0] - 1, 1)
    errs = np.empty(grid.size)
    m = data.n_hypotheses
    state = GlassoState(data.d)
    for ti in desc:
        fit = graphical_lasso(s_tr, float(grid[ti]), state=state)
        h0 = np.setdiff1d(np.arange(m), fit.edge_set.indices)
        theta = constrained_mle_graphical(s_tr, h0, d=data.d)
        sign, logdet = np.linalg.slogdet(theta)
        if sign <= 0:
            raise DataError("constrained refit lost positive definiteness")
        errs[ti] = float(np.trace(s_va @ theta) - logdet)
    return errs


def _logistic_fold_errors(data, grid, train, val, desc):
    x_tr, y_tr = data.x[train], data.y[train]
    x_va, y_va = data.x[val], data.y[val]
    errs = np.empty(grid.size)
    beta = None
    icept = None
    for ti in desc:
        fit = logistic_l1(x_tr, y_tr, lam=float(grid[ti]), beta0=beta, intercept0=icept)
        beta, icept = fit.coefficients, fit.intercept
        eta = np.clip(icept + x_va @ beta, -30, 30)
        p = 1.0 / (1.0 + np.exp(-eta))
        errs[ti] = float(-np.mean(y_va * np.log(p) + (1 - y_va) * np.log1p(-p)))
    return errs


def cv_curve(
    data: Dataset,
    selector: Selector,
    folds: int = 10,
    metric: str | None = None,
    seed: int = 0,
    fold_ids=None,
) -> CvCurve:
    """K-fold prediction-error curve over the selector's tuning grid.

    The metric defaults to mean squared error for continuous responses
    and to validation negative log-likelihood for the graphical setting
    and the penalized logistic selector.  ``fold_ids`` overrides the
    seeded assignment with an explicit per-row fold label.
    """
    grid = np.asarray(selector.resolve_grid(data), dtype=float)
    if metric is None:
        metric = NEG_LOGLIK if (
            data.setting == GAUSSIAN_GRAPHICAL or selector.kind == LOGISTIC_L1
        ) else MSE
    if metric not in (MSE, NEG_LOGLIK):
        raise DataError(f"unknown metric {metric!r}")
    if metric == MSE and data.setting == GAUSSIAN_GRAPHICAL:
        raise DataError("mse is undefined for the graphical setting")
    if fold_ids is not None:
        ids = np.asarray(fold_ids, dtype=np.int64)
        if ids.shape != (data.n,) or set(np.unique(ids)) != set(range(folds)):
            raise DataError("fold_ids must label every row with 0..folds-1")
    else:
        ids = fold_assignments(data.n, folds, seed)
    desc = np.argsort(-grid, kind="stable")
    per_fold = np.empty((folds, grid.size))
    for f in range(folds):
        val = np.flatnonzero(ids == f)
        train = np.flatnonzero(ids != f)
        if selector.kind == LASSO:
            per_fold[f] = _linear_fold_errors(data, selector, grid, train, val, desc)
        elif selector.kind == FORWARD_STEPWISE:
            per_fold[f] = _fs_fold_errors(data, grid, train, val)
        elif selector.kind == GRAPHICAL_LASSO:
            per_fold[f] = _graphical_fold_errors(data, grid, train, val, desc)
        elif selector.kind == LOGISTIC_L1:
            per_fold[f] = _logistic_fold_errors(data, grid, train, val, desc)
        else:
            raise DataError(f"cross-validation does not support selector {selector.kind!r}")
    mean = per_fold.mean(axis=0)
    se = per_fold.std(axis=0, ddof=1) / np.sqrt(folds)
    curve = CvCurve(
        grid=grid,
        mean_error=mean,
        se_error=se,
        metric=metric,
        selector_kind=selector.kind,
        fold_ids=ids,
        lambda_min=float(grid[int(np.argmin(mean))]),
        lambda_1se=np.nan,
    )
    return replace(curve, lambda_1se=one_se_rule(curve))
