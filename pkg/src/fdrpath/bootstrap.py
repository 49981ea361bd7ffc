"""Standard errors for the FDR curve via sparsity-preserving bootstraps.

The naive bootstrap turns every noise variable into a weak signal, which
distorts how many variables the selector picks on resampled data.  Both
schemes here first estimate a null set and force it to stay null in the
generator: the parametric scheme fits the constrained MLE and simulates
from it; the model-X scheme resamples rows of the response and non-null
columns, then redraws the null columns from their declared conditional
law.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._kernels import forward_stepwise_order, lasso_cd_gram
from ._streams import BOOTSTRAP, rng_stream
from .data import GAUSSIAN_GRAPHICAL, GAUSSIAN_LINEAR, MODEL_X, Dataset
from .estimator import FdrConfig, estimate_curve
from .exceptions import ConvergenceError, DataError
from .laws import CovariateLaw, ModelXContext
from .mle import constrained_mle_graphical, constrained_mle_linear
from .selectors import (
    FORWARD_STEPWISE,
    GRAPHICAL_LASSO,
    LASSO,
    GlassoState,
    Selector,
    graphical_lasso,
)

CV_COMPLEMENT = "cv_complement"
PVALUE_RULE = "pvalue_rule"


@dataclass(frozen=True)
class NullSetEstimate:
    """An estimated set of null hypotheses and how it was built."""

    h0_hat: np.ndarray
    source: str
    tuning_cv: float | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "h0_hat", np.unique(np.asarray(self.h0_hat, dtype=np.int64))
        )


@dataclass(frozen=True)
class BootstrapResult:
    grid: np.ndarray
    se: np.ndarray
    fdr_matrix: np.ndarray  # (replicates, tunings)
    null_set: NullSetEstimate


def pvalue_null_set(pvalues, threshold: float = 0.1) -> NullSetEstimate:
    """All hypotheses whose p-value exceeds the threshold."""
    p = np.asarray(pvalues, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise DataError("p-values must lie in [0, 1]")
    return NullSetEstimate(np.flatnonzero(p > threshold), PVALUE_RULE)


# ------------------------------------------------- cross-validated null set
def _gaussian_loglik(y_val, pred, sigma) -> float:
    n = y_val.shape[0]
    if sigma <= 0:
        return -np.inf
    rss = float(np.sum((y_val - pred) ** 2))
    return -0.5 * n * np.log(2 * np.pi * sigma**2) - rss / (2 * sigma**2)


def _linear_fold_loglik(data, selector, grid, train, val, desc):
    x_tr, y_tr = data.x[train], data.y[train]
    x_va, y_va = data.x[val], data.y[val]
    gram = x_tr.T @ x_tr
    b = x_tr.T @ y_tr
    out = np.empty(grid.size)
    if selector.kind == LASSO:
        theta = np.zeros(data.d)
        sel_per = [None] * grid.size
        for ti in desc:
            status = lasso_cd_gram(gram, b, float(grid[ti]), theta, selector.max_iters, selector.tol)
            if status < 0:
                raise ConvergenceError(f"fold lasso failed at tuning {grid[ti]:.6g}")
            sel_per[ti] = np.flatnonzero(theta != 0)
    else:  # forward stepwise
        ks = grid.astype(np.int64)
        kmax = int(ks.max())
        norms = np.linalg.norm(x_tr, axis=0)
        if np.any(norms <= 0):
            raise DataError("fold too small: constant column in the training rows")
        order, status = forward_stepwise_order(
            np.ascontiguousarray((x_tr / norms).T), np.ascontiguousarray(y_tr), kmax, 1e-10
        )
        if status < 0:
            raise DataError("collinearity during the fold stepwise run")
        sel_per = [order[:k] for k in ks]
    for ti in range(grid.size):
        keep = np.asarray(sel_per[ti], dtype=np.int64)
        theta_c = np.zeros(data.d)
        if keep.size:
            xk = x_tr[:, keep]
            coef, *_ = np.linalg.lstsq(xk, y_tr, rcond=None)
            theta_c[keep] = coef
            resid = y_tr - xk @ coef
        else:
            resid = y_tr
        sigma = float(np.sqrt(resid @ resid / x_tr.shape[0]))
        out[ti] = _gaussian_loglik(y_va, x_va @ theta_c, sigma)
    return out


def _graphical_fold_loglik(data, grid, train, val, desc):
    x_tr = data.x[train] - data.x[train].mean(axis=0)
    x_va = data.x[val] - data.x[val].mean(axis=0)
    if x_tr.shape[0] - 1 <= data.d:
        raise DataError("fold too small for a graphical refit")
    s_tr = x_tr.T @ x_tr / (x_tr.shape[0] - 1)
    s_va = x_va.T @ x_va / max(x_va.shape[0] - 1, 1)
    out = np.empty(grid.size)
    m = data.n_hypotheses
    state = GlassoState(data.d)
    for ti in desc:
        fit = graphical_lasso(s_tr, float(grid[ti]), state=state)
        h0 = np.setdiff1d(np.arange(m), fit.edge_set.indices)
        theta = constrained_mle_graphical(s_tr, h0, d=data.d)
        sign, logdet = np.linalg.slogdet(theta)
        if sign <= 0:
            raise DataError("constrained refit lost positive definiteness")
        out[ti] = float(logdet - np.trace(s_va @ theta))
    return out


def cv_null_set(
    data: Dataset, selector: Selector, folds: int = 10, seed: int = 0
) -> NullSetEstimate:
    """Null-set estimate: the complement of the selection at the tuning
    value whose constrained refit scores the best validation likelihood.
    """
    from .crossval import fold_assignments  # shared fold construction

    if data.setting == MODEL_X:
        raise DataError("cv_null_set needs a parametric setting; use pvalue_null_set")
    grid = np.asarray(selector.resolve_grid(data), dtype=float)
    desc = np.argsort(-grid, kind="stable")
    ids = fold_assignments(data.n, folds, seed)
    scores = np.zeros(grid.size)
    for f in range(folds):
        val = np.flatnonzero(ids == f)
        train = np.flatnonzero(ids != f)
        if data.setting == GAUSSIAN_LINEAR:
            if selector.kind not in (LASSO, FORWARD_STEPWISE):
                raise DataError(f"cv_null_set does not support selector {selector.kind!r}")
            scores += _linear_fold_loglik(data, selector, grid, train, val, desc)
        else:
            if selector.kind != GRAPHICAL_LASSO:
                raise DataError(f"cv_null_set does not support selector {selector.kind!r}")
            scores += _graphical_fold_loglik(data, grid, train, val, desc)
    best = float(grid[int(np.argmax(scores / folds))])
    selected = selector.select(data, best)
    h0 = np.setdiff1d(np.arange(data.n_hypotheses), selected.indices)
    return NullSetEstimate(h0, CV_COMPLEMENT, tuning_cv=best)


# ---------------------------------------------------------- the bootstraps
def _replicate_seed(seed: int, m: int) -> int:
    return int(
        np.random.SeedSequence(entropy=int(seed), spawn_key=(BOOTSTRAP, 9, m)).generate_state(
            1, np.uint64
        )[0]
    )


def _parametric_replicate(payload):
    data, selector, cfg, theta, sigma, chol, m = payload
    rng = rng_stream(cfg.seed, BOOTSTRAP, m)
    if data.setting == GAUSSIAN_LINEAR:
        y_m = data.x @ theta + sigma * rng.standard_normal(data.n)
        data_m = Dataset.from_arrays(data.x, y_m, GAUSSIAN_LINEAR, standardize=data.centered)
    else:
        x_m = rng.standard_normal((data.n, data.d)) @ chol.T
        data_m = Dataset.from_arrays(x_m, None, GAUSSIAN_GRAPHICAL, standardize=data.centered)
    cfg_m = replace(cfg, seed=_replicate_seed(cfg.seed, m), workers=1)
    return m, estimate_curve(data_m, selector, cfg_m).fdr_hat


def bootstrap_se_parametric(
    data: Dataset,
    selector: Selector,
    config: FdrConfig | None = None,
    M: int = 10,
    null_set: NullSetEstimate | None = None,
    folds: int = 10,
    workers: int = 1,
) -> BootstrapResult:
    """FDR-curve standard error from a constrained-MLE parametric bootstrap.

    Fits the MLE with the estimated null set pinned to zero, draws ``M``
    datasets from it, re-estimates the curve on each, and reports the
    per-tuning sample standard deviation (denominator M - 1).
    """
    cfg = config or FdrConfig()
    if M < 2:
        raise DataError("the bootstrap needs at least two replicates")
    if data.setting == MODEL_X:
        raise DataError("model_x data needs bootstrap_se_modelx")
    if null_set is None:
        null_set = cv_null_set(data, selector, folds=folds, seed=cfg.seed)
    grid = np.asarray(selector.resolve_grid(data), dtype=float)
    sel_fixed = replace(selector, grid=grid)
    theta = sigma = chol = None
    if data.setting == GAUSSIAN_LINEAR:
        theta, sigma = constrained_mle_linear(data, null_set.h0_hat)
    else:
        s_hat = (data.x.T @ data.x) / data.n_effective
        prec = constrained_mle_graphical(s_hat, null_set.h0_hat, d=data.d)
        chol = np.linalg.cholesky(np.linalg.inv(prec))
    payloads = [(data, sel_fixed, cfg, theta, sigma, chol, m) for m in range(M)]
    mat = np.empty((M, grid.size))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for m, fdr in pool.map(_parametric_replicate, payloads):
                mat[m] = fdr
    else:
        for payload in payloads:
            m, fdr = _parametric_replicate(payload)
            mat[m] = fdr
    return BootstrapResult(
        grid=grid, se=mat.std(axis=0, ddof=1), fdr_matrix=mat, null_set=null_set
    )


def _modelx_replicate(payload):
    data, selector, cfg, h0, m = payload
    rng = rng_stream(cfg.seed, BOOTSTRAP, m)
    n = data.n
    idx = rng.integers(0, n, size=n)
    x_m = data.x[idx].copy()
    y_m = data.y[idx].copy()
    if h0.size:
        rest = np.setdiff1d(np.arange(data.d), h0)
        x_m[:, h0] = data.covariate_law.sample_block(rng, h0, x_m[:, rest])
    data_m = Dataset.from_arrays(
        x_m, y_m, MODEL_X, covariate_law=data.covariate_law, standardize=False
    )
    cfg_m = replace(cfg, seed=_replicate_seed(cfg.seed, m), workers=1)
    return m, estimate_curve(data_m, selector, cfg_m).fdr_hat


def bootstrap_se_modelx(
    data: Dataset,
    selector: Selector,
    config: FdrConfig | None = None,
    M: int = 10,
    null_set: NullSetEstimate | None = None,
    workers: int = 1,
) -> BootstrapResult:
    """FDR-curve standard error from the constrained row bootstrap.

    Rows of the response and the non-null columns are drawn i.i.d. from
    their empirical distribution; the null columns are then redrawn from
    the declared conditional covariate law, so the estimated nulls remain
    null in the generator.
    """
    cfg = config or FdrConfig()
    if M < 2:
        raise DataError("the bootstrap needs at least two replicates")
    if data.setting != MODEL_X:
        raise DataError("bootstrap_se_modelx expects a model_x dataset")
    law = data.covariate_law
    if not isinstance(law, CovariateLaw):
        raise DataError("model-X bootstrap needs a declared covariate law")
    if null_set is None:
        pvals = ModelXContext(data, crt_draws=cfg.crt_draws).pvalues(cfg.seed)
        null_set = pvalue_null_set(pvals)
    if null_set.h0_hat.size:
        # fail early when the law cannot redraw a block jointly
        law.sample_block(
            rng_stream(cfg.seed, BOOTSTRAP, 0, 0),
            null_set.h0_hat,
            data.x[:1, np.setdiff1d(np.arange(data.d), null_set.h0_hat)],
        )
    grid = np.asarray(selector.resolve_grid(data), dtype=float)
    sel_fixed = replace(selector, grid=grid)
    payloads = [(data, sel_fixed, cfg, null_set.h0_hat, m) for m in range(M)]
    mat = np.empty((M, grid.size))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for m, fdr in pool.map(_modelx_replicate, payloads):
                mat[m] = fdr
    else:
        for payload in payloads:
            m, fdr = _modelx_replicate(payload)
            mat[m] = fdr
    return BootstrapResult(
        grid=grid, se=mat.std(axis=0, ddof=1), fdr_matrix=mat, null_set=null_set
    )
