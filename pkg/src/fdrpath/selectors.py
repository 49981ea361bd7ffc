"""Variable-selection procedures behind one uniform interface.

Each procedure maps (data, tuning value) to a :class:`SelectionSet`.
The penalized solvers run coordinate descent on Gram/cross-product form,
which lets the estimator warm-start them across a tuning grid and across
conditional resamples that perturb a single cross product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import (
    GAUSSIAN_GRAPHICAL,
    GAUSSIAN_LINEAR,
    MODEL_X,
    Dataset,
    SelectionSet,
    iter_pairs,
    pair_index,
)
from .exceptions import ConvergenceError, DataError, RankDeficiencyError, SeparationError

LASSO = "lasso"
FORWARD_STEPWISE = "forward_stepwise"
GRAPHICAL_LASSO = "graphical_lasso"
LOGISTIC_L1 = "logistic_l1"
P_THRESHOLD = "p_threshold"
CUSTOM = "custom"
SELECTOR_KINDS = (LASSO, FORWARD_STEPWISE, GRAPHICAL_LASSO, LOGISTIC_L1, P_THRESHOLD, CUSTOM)

DEFAULT_MAX_ITERS = 100_000
DEFAULT_TOL = 1e-8


# ---------------------------------------------------------------- lasso
@dataclass(frozen=True)
class LassoFit:
    """Solution of the l1-penalized least-squares problem at one penalty."""

    coefficients: np.ndarray
    active_set: SelectionSet
    duals: np.ndarray
    lam: float
    sweeps: int


def lasso_gram(G, b, lam, theta0=None, max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL):
    """Solve the lasso given Gram matrix ``G = X'X`` and ``b = X'y``.

    Returns (theta, sweeps).  Raises :class:`ConvergenceError` carrying the
    KKT residual when the sweep cap is hit.
    """
    G = np.ascontiguousarray(G, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    theta = np.zeros(b.shape[0]) if theta0 is None else np.array(theta0, dtype=float)
    sweeps = _kernels.lasso_cd_gram(G, b, float(lam), theta, int(max_iters), float(tol))
    if sweeps < 0:
        resid = float(_kernels.kkt_residual_gram(G, b, float(lam), theta))
        raise ConvergenceError(
            f"lasso did not converge in {max_iters} sweeps (KKT residual {resid:.3e})",
            kkt_residual=resid,
        )
    return theta, sweeps


def _regression_view(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Design/response the regression selectors operate on.

    Linear datasets are used as stored (centering is the dataset's job,
    keeping the conditional-resampling geometry exact).  In the model-X
    setting the covariate law pins the raw columns, so the selectors
    center internally: the equivalent of an unpenalized intercept.
    """
    if data.setting == MODEL_X:
        return data.x - data.x.mean(axis=0), data.y - data.y.mean()
    return data.x, data.y


def lasso_fit(data: Dataset, lam: float, max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL) -> LassoFit:
    """Lasso fit on a regression dataset at penalty ``lam >= 0``."""
    if data.setting not in (GAUSSIAN_LINEAR, MODEL_X):
        raise DataError("lasso applies to regression settings")
    if lam < 0:
        raise DataError("lam must be nonnegative")
    x, y = _regression_view(data)
    G = x.T @ x
    b = x.T @ y
    theta, sweeps = lasso_gram(G, b, lam, max_iters=max_iters, tol=tol)
    duals = b - G @ theta
    return LassoFit(
        coefficients=theta,
        active_set=SelectionSet(np.flatnonzero(theta != 0.0)),
        duals=duals,
        lam=float(lam),
        sweeps=sweeps,
    )


def lasso_lambda_max(data: Dataset) -> float:
    """Smallest penalty with an empty active set."""
    x, y = _regression_view(data)
    return float(np.max(np.abs(x.T @ y)))


def log_grid(top: float, n_points: int = 10, min_ratio: float = 0.01) -> np.ndarray:
    """Log-spaced tuning grid from ``top`` down to ``min_ratio * top``."""
    if top <= 0:
        raise DataError("grid top must be positive")
    return top * np.logspace(0.0, np.log10(min_ratio), n_points)


# ------------------------------------------------------ forward stepwise
def forward_stepwise(data: Dataset, k: int, norm_rtol: float = 1e-10) -> np.ndarray:
    """Greedy stepwise selection order (length-k, distinct indices).

    Columns are normalized to unit norm before the first step; centering
    is the dataset's job.  Raises :class:`RankDeficiencyError` when a
    candidate column degenerates during orthogonalization.
    """
    if data.setting not in (GAUSSIAN_LINEAR, MODEL_X):
        raise DataError("forward stepwise applies to regression settings")
    if not 0 <= k <= min(data.d, data.n - 1):
        raise DataError(f"k must lie in [0, min(d, n-1)] = [0, {min(data.d, data.n - 1)}]")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    x, y = _regression_view(data)
    norms = np.linalg.norm(x, axis=0)
    if np.any(norms <= 0):
        raise RankDeficiencyError("zero-norm column", column=int(np.flatnonzero(norms <= 0)[0]))
    xt = np.ascontiguousarray((x / norms).T)
    order, status = _kernels.forward_stepwise_order(
        xt, np.ascontiguousarray(y, dtype=float), int(k), float(norm_rtol)
    )
    if status < 0:
        raise RankDeficiencyError(
            f"column {-status - 1} became numerically zero during orthogonalization",
            column=int(-status - 1),
        )
    return order


# ------------------------------------------------------- graphical lasso
@dataclass(frozen=True)
class GraphicalLassoFit:
    """Penalized precision estimate with its edge set."""

    precision: np.ndarray
    covariance: np.ndarray
    edge_set: SelectionSet
    lam: float
    sweeps: int


class GlassoState:
    """Warm-start carrier (covariance iterate + per-column coefficients)."""

    def __init__(self, d: int):
        self.W = np.zeros((d, d))
        self.B = np.zeros((d, d))
        self.initialized = False


def graphical_lasso(
    sigma_hat,
    lam: float,
    state: GlassoState | None = None,
    max_sweeps: int = 500,
    tol: float = 1e-7,
    inner_max: int = 10_000,
    inner_tol: float = 1e-10,
) -> GraphicalLassoFit:
    """Maximize log det(T) - trace(S T) - lam * sum of |off-diagonal|.

    The penalty applies to each off-diagonal entry, so the edge set is
    empty exactly when ``lam >= max_{j<k} |S_jk|``.  Passing the previous
    call's :class:`GlassoState` warm-starts the solve.
    """
    S = np.ascontiguousarray(sigma_hat, dtype=float)
    d = S.shape[0]
    if S.ndim != 2 or S.shape[1] != d:
        raise DataError("sigma_hat must be square")
    if not np.allclose(S, S.T, atol=1e-10):
        raise DataError("sigma_hat must be symmetric")
    if np.any(np.diag(S) <= 0):
        raise DataError("sigma_hat must have positive diagonal")
    if lam < 0:
        raise DataError("lam must be nonnegative")
    if state is None or not state.initialized:
        fresh = GlassoState(d)
        # Standard diagonally-dominant start keeps every iterate PD.
        fresh.W = S + lam * np.eye(d)
        fresh.B = np.zeros((d, d))
        state = fresh
    Theta, status = _kernels.glasso_cd(
        S, float(lam), state.W, state.B, int(max_sweeps), float(tol), int(inner_max), float(inner_tol)
    )
    if status == -2:
        raise ConvergenceError("graphical lasso inner solve did not converge")
    if status < 0:
        raise ConvergenceError(f"graphical lasso did not converge in {max_sweeps} sweeps")
    state.initialized = True
    edges = [pair_index(j, k, d) for j, k in iter_pairs(d) if Theta[j, k] != 0.0]
    return GraphicalLassoFit(
        precision=Theta,
        covariance=state.W.copy(),
        edge_set=SelectionSet(np.asarray(edges, dtype=np.int64)),
        lam=float(lam),
        sweeps=status,
    )


def sample_covariance(data: Dataset) -> np.ndarray:
    """Cross-product matrix divided by the effective sample size."""
    if data.setting != GAUSSIAN_GRAPHICAL:
        raise DataError("sample_covariance expects a graphical dataset")
    return (data.x.T @ data.x) / data.n_effective


def glasso_lambda_max(sigma_hat) -> float:
    S = np.asarray(sigma_hat, dtype=float)
    off = S - np.diag(np.diag(S))
    return float(np.max(np.abs(off)))


# ---------------------------------------------------- penalized logistic
@dataclass(frozen=True)
class LogisticFit:
    coefficients: np.ndarray
    intercept: float
    active_set: SelectionSet
    lam: float


def logistic_l1(
    data_or_x,
    y=None,
    lam: float = 1.0,
    beta0=None,
    intercept0: float | None = None,
    max_outer: int = 200,
    max_iters: int = 5_000,
    tol: float = 1e-9,
) -> LogisticFit:
    """l1-penalized logistic regression with an unpenalized intercept.

    Accepts a binary-response dataset or raw (X, y).  Fits by iteratively
    reweighted least squares with a weighted coordinate-descent inner
    solver.  ``lam = 0`` raises :class:`SeparationError` if the fit is
    unbounded.
    """
    if isinstance(data_or_x, Dataset):
        X, yv = data_or_x.x, data_or_x.y
    else:
        X, yv = np.asarray(data_or_x, dtype=float), y
    yv = np.asarray(yv, dtype=float).ravel()
    if not np.all(np.isin(yv, (0.0, 1.0))):
        raise DataError("logistic_l1 needs a response in {0, 1}")
    ybar = yv.mean()
    if ybar in (0.0, 1.0):
        raise DataError("response is constant")
    X = np.ascontiguousarray(X, dtype=float)
    n, d = X.shape
    beta = np.zeros(d) if beta0 is None else np.array(beta0, dtype=float)
    b0 = float(np.log(ybar / (1 - ybar))) if intercept0 is None else float(intercept0)

    def objective(eta_val, beta_val):
        return float(np.sum(np.logaddexp(0.0, eta_val) - yv * eta_val)) + lam * float(
            np.sum(np.abs(beta_val))
        )

    eta = b0 + X @ beta
    obj = objective(eta, beta)
    for _ in range(max_outer):
        p = 1.0 / (1.0 + np.exp(-np.clip(eta, -30, 30)))
        p = np.clip(p, 1e-5, 1 - 1e-5)
        w = p * (1.0 - p)
        z = eta + (yv - p) / w
        beta_old, b0_old = beta.copy(), b0
        b0, sweeps = _kernels.weighted_lasso_cd(
            X, w, z, float(lam), beta, b0, int(max_iters), float(tol)
        )
        if sweeps < 0:
            raise ConvergenceError("logistic inner solve did not converge")
        # step halving keeps the penalized objective monotone even when the
        # quadratic model is poor near saturation
        eta = b0 + X @ beta
        new_obj = objective(eta, beta)
        halvings = 0
        while new_obj > obj + 1e-12 and halvings < 30:
            beta = 0.5 * (beta + beta_old)
            b0 = 0.5 * (b0 + b0_old)
            eta = b0 + X @ beta
            new_obj = objective(eta, beta)
            halvings += 1
        improvement = obj - new_obj
        obj = new_obj
        if improvement < 1e-10 * (abs(obj) + 1.0):
            break
        if lam == 0.0 and np.max(np.abs(eta)) > 36.0:
            raise SeparationError("unpenalized logistic fit is unbounded (separated data)")
    else:
        raise ConvergenceError(f"logistic IRLS did not converge in {max_outer} iterations")
    # step halving can leave tiny ghosts on screened coordinates; one last
    # plain coordinate pass restores exact zeros via soft thresholding
    p = np.clip(1.0 / (1.0 + np.exp(-np.clip(eta, -30, 30))), 1e-5, 1 - 1e-5)
    w = p * (1.0 - p)
    z = eta + (yv - p) / w
    b0, sweeps = _kernels.weighted_lasso_cd(
        X, w, z, float(lam), beta, b0, int(max_iters), float(tol)
    )
    if sweeps < 0:
        raise ConvergenceError("logistic inner solve did not converge")
    return LogisticFit(
        coefficients=beta,
        intercept=b0,
        active_set=SelectionSet(np.flatnonzero(beta != 0.0)),
        lam=float(lam),
    )


def logistic_lambda_max(data_or_x, y=None) -> float:
    """Smallest penalty with an empty active set (intercept-only null)."""
    if isinstance(data_or_x, Dataset):
        X, yv = data_or_x.x, data_or_x.y
    else:
        X, yv = np.asarray(data_or_x, dtype=float), np.asarray(y, dtype=float)
    return float(np.max(np.abs(X.T @ (yv - yv.mean()))))


# -------------------------------------------------------- p-thresholding
def p_threshold(pvalues, c: float) -> SelectionSet:
    """Select every hypothesis with p-value <= c."""
    p = np.asarray(pvalues, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise DataError("p-values must lie in [0, 1]")
    if not 0 < c < 1:
        raise DataError("threshold c must lie in (0, 1)")
    return SelectionSet(np.flatnonzero(p <= c))


# ------------------------------------------------------------- selector
@dataclass
class Selector:
    """A named selection procedure with its tuning grid and solver options.

    ``grid=None`` defers to :meth:`resolve_grid`, which builds the default
    ten-point log grid for the penalized selectors and ``1..min(10, d-1)``
    steps for forward stepwise.
    """

    kind: str
    grid: np.ndarray | None = None
    max_iters: int = DEFAULT_MAX_ITERS
    tol: float = DEFAULT_TOL
    seed: int | None = None
    n_grid: int = 10
    min_ratio: float = 0.01
    func: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in SELECTOR_KINDS:
            raise DataError(f"unknown selector kind {self.kind!r}")
        if self.kind == CUSTOM and not callable(self.func):
            raise DataError("custom selectors need a callable func")
        if self.grid is not None:
            grid = np.atleast_1d(np.asarray(self.grid, dtype=float))
            if grid.size == 0:
                raise DataError("tuning grid is empty")
            self.grid = grid
        if self.tol <= 0:
            raise DataError("tol must be positive")

    def resolve_grid(self, data: Dataset) -> np.ndarray:
        if self.grid is not None:
            return self.grid
        if self.kind == CUSTOM:
            raise DataError("custom selectors need an explicit grid")
        if self.kind == LASSO:
            top = lasso_lambda_max(data)
        elif self.kind == GRAPHICAL_LASSO:
            top = glasso_lambda_max(sample_covariance(data))
        elif self.kind == LOGISTIC_L1:
            top = logistic_lambda_max(data)
        elif self.kind == FORWARD_STEPWISE:
            kmax = min(self.n_grid, data.d - 1, data.n - 1)
            self.grid = np.arange(1, kmax + 1, dtype=float)
            return self.grid
        else:
            raise DataError("p_threshold needs an explicit grid of thresholds")
        self.grid = log_grid(top, self.n_grid, self.min_ratio)
        return self.grid

    def select(self, data: Dataset, tuning, pvalues=None) -> SelectionSet:
        """Run the procedure on observed data at one tuning value."""
        if self.kind == LASSO:
            return lasso_fit(data, float(tuning), self.max_iters, self.tol).active_set
        if self.kind == FORWARD_STEPWISE:
            return SelectionSet(forward_stepwise(data, int(tuning)))
        if self.kind == GRAPHICAL_LASSO:
            return graphical_lasso(sample_covariance(data), float(tuning)).edge_set
        if self.kind == LOGISTIC_L1:
            return logistic_l1(data, lam=float(tuning)).active_set
        if self.kind == P_THRESHOLD:
            if pvalues is None:
                raise DataError("p_threshold selection needs the p-value vector")
            return p_threshold(pvalues, float(tuning))
        if self.kind == CUSTOM:
            if data.setting == GAUSSIAN_GRAPHICAL:
                picked = self.func(sample_covariance(data), float(tuning))
            else:
                picked = self.func(data.x, data.y, float(tuning))
            return SelectionSet(np.asarray(picked, dtype=np.int64))
        raise DataError(f"unknown selector kind {self.kind!r}")
