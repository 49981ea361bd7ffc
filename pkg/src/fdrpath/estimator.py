"""Conservative FDR estimation for variable-selection procedures.

For each hypothesis j and tuning value, the estimator multiplies the
Rao-Blackwellized selection functional

    star_j = E[ 1{j selected} / #selected | sufficient statistic for j ]

(computed under j's null by conditional resampling, or exactly where a
path algorithm exists) by the screening factor phi_j = 1{p_j > zeta} /
(1 - zeta), and sums over hypotheses.  The screening factor has unit
conditional mean under the null, so every null term is unbiased and
every non-null term is nonnegative: the total is conservatively biased
for the true FDR.  The companion per-family error rate estimate replaces
the functional by the conditional selection probability.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import exact
from ._kernels import forward_stepwise_order, glasso_cd, lasso_cd_gram
from ._streams import MC_DRAWS, rng_stream
from .data import (
    GAUSSIAN_GRAPHICAL,
    GAUSSIAN_LINEAR,
    MODEL_X,
    Dataset,
    SelectionSet,
)
from .exceptions import (
    ConvergenceError,
    DataError,
    DegeneratePathError,
    EstimationError,
    FdrPathError,
)
from .laws import (
    GraphicalContext,
    LinearModelContext,
    ModelXContext,
    two_sided_t_pvalue,
)
from .selectors import (
    FORWARD_STEPWISE,
    GRAPHICAL_LASSO,
    LASSO,
    LOGISTIC_L1,
    P_THRESHOLD,
    Selector,
    logistic_l1,
    p_threshold,
)

MODE_ALIASES = {
    "auto": "auto",
    "mc": "monte_carlo",
    "monte_carlo": "monte_carlo",
    "exact": "exact_when_available",
    "exact_when_available": "exact_when_available",
}


def phi_canonical(p, zeta: float = 0.1):
    """Screening factor 1{p > zeta} / (1 - zeta); strict at the boundary."""
    if not 0 < zeta < 1:
        raise DataError("zeta must lie in (0, 1)")
    p = np.asarray(p, dtype=float)
    out = (p > zeta) / (1.0 - zeta)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FdrConfig:
    """Estimator options shared by the library and CLI surfaces."""

    zeta: float = 0.1
    mc_samples: int = 20
    mode: str = "auto"
    seed: int = 0
    crt_draws: int = 199
    workers: int = 1
    degenerate_conditioning: bool = False

    def __post_init__(self):
        if not 0 < self.zeta < 1:
            raise DataError("zeta must lie in (0, 1)")
        if self.mc_samples < 1:
            raise DataError("mc_samples must be at least 1")
        mode = MODE_ALIASES.get(self.mode)
        if mode is None:
            raise DataError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if self.workers < 1:
            raise DataError("workers must be at least 1")


@dataclass(frozen=True)
class FdrCurve:
    """Per-tuning FDR estimate with its per-hypothesis decomposition."""

    grid: np.ndarray
    fdr_hat: np.ndarray
    pfer_hat: np.ndarray
    fdr_star: np.ndarray  # (tunings, hypotheses)
    phi: np.ndarray  # (tunings, hypotheses)
    contributions: np.ndarray  # fdr_star * phi
    n_selected: np.ndarray
    pvalues: np.ndarray
    labels: tuple[str, ...]
    selections: tuple[SelectionSet, ...]
    exact_hypotheses: int = 0
    mc_fallbacks: tuple[int, ...] = ()


# ===================================================== setting engines
class _LinearEngine:
    setting = GAUSSIAN_LINEAR

    def __init__(self, data: Dataset, selector: Selector, grid: np.ndarray, cfg: FdrConfig):
        self.data = data
        self.selector = selector
        self.grid = np.asarray(grid, dtype=float)
        self.cfg = cfg
        self.ctx = LinearModelContext.from_dataset(data)
        self.kind = selector.kind
        self._desc = np.argsort(-self.grid, kind="stable")
        if self.kind == LASSO:
            self._fit_observed_lasso()
        elif self.kind == FORWARD_STEPWISE:
            self._fit_observed_fs()
        elif self.kind == P_THRESHOLD:
            self._sel_obs = [p_threshold(self.ctx.pvalues, c) for c in self.grid]
        elif self.kind == "custom":
            self._sel_obs = [
                SelectionSet(np.asarray(self.selector.func(data.x, data.y, t), dtype=np.int64))
                for t in self.grid
            ]
        else:
            raise DataError(f"selector {self.kind!r} does not apply to the linear setting")

    # -- observed fits ------------------------------------------------
    def _fit_observed_lasso(self):
        T, d = self.grid.size, self.data.d
        self.theta_obs = np.zeros((T, d))
        theta = np.zeros(d)
        for ti in self._desc:
            status = lasso_cd_gram(
                self.ctx.gram, self.ctx.xty, float(self.grid[ti]), theta,
                self.selector.max_iters, self.selector.tol,
            )
            if status < 0:
                raise ConvergenceError(f"observed lasso fit failed at tuning {self.grid[ti]:.6g}")
            self.theta_obs[ti] = theta
        self._sel_obs = [SelectionSet(np.flatnonzero(self.theta_obs[ti] != 0)) for ti in range(T)]

    def _fit_observed_fs(self):
        ks = self.grid.astype(np.int64)
        if np.any(ks.astype(float) != self.grid) or np.any(ks < 0):
            raise DataError("forward stepwise grid must hold nonnegative integers")
        self.kmax = int(ks.max())
        norms = np.linalg.norm(self.data.x, axis=0)
        self.xn = np.ascontiguousarray((self.data.x / norms).T)
        if self.kmax > 0:
            order, status = forward_stepwise_order(
                self.xn, np.ascontiguousarray(self.data.y), self.kmax, 1e-10
            )
            if status < 0:
                raise DataError("collinearity during the observed stepwise run")
            self.order_obs = order
        else:
            self.order_obs = np.empty(0, dtype=np.int64)
        self._sel_obs = [SelectionSet(self.order_obs[:k]) for k in ks]
        self.ks = ks

    # -- shared surface -------------------------------------------------
    def observed_selections(self):
        return self._sel_obs

    def pvalues(self):
        return self.ctx.pvalues

    @property
    def supports_exact(self) -> bool:
        return self.kind in (LASSO, FORWARD_STEPWISE)

    # -- Monte Carlo ---------------------------------------------------
    def star_mc(self, j: int, rng=None):
        rng = rng or rng_stream(self.cfg.seed, MC_DRAWS, j)
        if self.kind == LASSO:
            return self._mc_lasso(j, rng)
        if self.kind == FORWARD_STEPWISE:
            return self._mc_fs(j, rng)
        if self.kind == P_THRESHOLD:
            return self._mc_pthreshold(j, rng)
        return self._mc_custom(j, rng)

    def _mc_lasso(self, j, rng):
        law = self.ctx.law(j)
        M = self.cfg.mc_samples
        T = self.grid.size
        thetas = self.theta_obs.copy()
        b_buf = self.ctx.xty.copy()
        star = np.zeros(T)
        prob = np.zeros(T)
        for _ in range(M):
            v = float(law.draw_v(rng))
            b_buf[j] = law.a + law.c * v
            for ti in self._desc:
                lam = float(self.grid[ti])
                status = lasso_cd_gram(
                    self.ctx.gram, b_buf, lam, thetas[ti],
                    self.selector.max_iters, self.selector.tol,
                )
                if status < 0:
                    raise EstimationError(
                        f"lasso resample failed (hypothesis {j}, tuning {lam:.6g})",
                        hypothesis=j, tuning=lam,
                    )
                th = thetas[ti]
                if th[j] != 0.0:
                    star[ti] += 1.0 / np.count_nonzero(th)
                    prob[ti] += 1.0
        return star / M, prob / M

    def _fs_draw_parts(self, j):
        ctx = self.ctx
        law = ctx.law(j)
        w = ctx.x @ ctx.gram_inv[:, j] * law.c
        base = ctx.fitted - law.v_obs * w
        z = (ctx.y - ctx.fitted) / np.sqrt(ctx.rss) if ctx.rss > 0 else np.zeros(ctx.n)
        return law, w, base, z

    def _mc_fs(self, j, rng):
        law, w, base, z = self._fs_draw_parts(j)
        M = self.cfg.mc_samples
        star = np.zeros(self.grid.size)
        prob = np.zeros(self.grid.size)
        if self.kmax == 0:
            return star, prob
        for _ in range(M):
            v = float(law.draw_v(rng))
            y_new = base + v * w + np.sqrt(max(law.r**2 - v**2, 0.0)) * z
            order, status = forward_stepwise_order(self.xn, y_new, self.kmax, 1e-10)
            if status < 0:
                raise EstimationError(
                    f"stepwise resample hit collinearity (hypothesis {j})", hypothesis=j
                )
            hit = np.flatnonzero(order == j)
            pos = int(hit[0]) if hit.size else self.kmax
            for ti, k in enumerate(self.ks):
                if pos < k:
                    star[ti] += 1.0 / k
                    prob[ti] += 1.0
        return star / M, prob / M

    def _mc_pthreshold(self, j, rng):
        ctx = self.ctx
        law = ctx.law(j)
        M = self.cfg.mc_samples
        q = ctx.gram_inv[:, j]
        ginv_diag = np.diag(ctx.gram_inv)
        star = np.zeros(self.grid.size)
        prob = np.zeros(self.grid.size)
        for _ in range(M):
            v = float(law.draw_v(rng))
            delta = law.a + law.c * v - ctx.xty[j]
            theta_new = ctx.theta_ols + q * delta
            rss_new = max(law.r**2 - v**2, 0.0)
            if rss_new > 0:
                t = theta_new / np.sqrt(ginv_diag * rss_new / ctx.dof)
                p_new = two_sided_t_pvalue(t, ctx.dof)
            else:
                p_new = np.zeros(ctx.p)
            p_sorted = np.sort(p_new)
            for ti, c in enumerate(self.grid):
                if p_new[j] <= c:
                    r = int(np.searchsorted(p_sorted, c, side="right"))
                    star[ti] += 1.0 / r
                    prob[ti] += 1.0
        return star / M, prob / M

    def _mc_custom(self, j, rng):
        law = self.ctx.law(j)
        M = self.cfg.mc_samples
        star = np.zeros(self.grid.size)
        prob = np.zeros(self.grid.size)
        for _ in range(M):
            v = float(law.draw_v(rng))
            y_new = law.reconstruct_y(v)
            for ti, t in enumerate(self.grid):
                sel = np.asarray(self.selector.func(self.data.x, y_new, t), dtype=np.int64)
                if j in sel:
                    star[ti] += 1.0 / sel.size
                    prob[ti] += 1.0
        return star / M, prob / M

    # -- exact ----------------------------------------------------------
    def star_exact(self, j: int):
        law = self.ctx.law(j)
        star = np.zeros(self.grid.size)
        prob = np.zeros(self.grid.size)
        if self.kind == LASSO:
            for ti in self._desc:
                lam = float(self.grid[ti])
                if lam <= 0:
                    raise DegeneratePathError("exact path needs positive penalties")
                path = exact.lasso_homotopy_path(
                    self.ctx.gram, law, lam, theta0=self.theta_obs[ti]
                )
                star[ti], prob[ti] = exact.integrate_path(path, law)
            return star, prob
        if self.kind == FORWARD_STEPWISE:
            kmax = int(self.ks.max())
            if kmax >= 1:
                snapshots = exact.fs_region_snapshots(self.ctx, law, kmax)
                for ti, k in enumerate(self.ks):
                    if k >= 1:
                        mass = exact.region_probability(snapshots[k - 1], law)
                        star[ti] = mass / k
                        prob[ti] = mass
            return star, prob
        raise DataError(f"no exact algorithm for selector {self.kind!r}")


class _GraphicalEngine:
    setting = GAUSSIAN_GRAPHICAL
    supports_exact = False

    def __init__(self, data: Dataset, selector: Selector, grid: np.ndarray, cfg: FdrConfig):
        if selector.kind not in (GRAPHICAL_LASSO, "custom"):
            raise DataError(f"selector {selector.kind!r} does not apply to the graphical setting")
        self.data = data
        self.selector = selector
        self.grid = np.asarray(grid, dtype=float)
        self.cfg = cfg
        self.ctx = GraphicalContext(data)
        self.kind = selector.kind
        self.d = data.d
        self._iu = np.triu_indices(self.d, 1)
        self._desc = np.argsort(-self.grid, kind="stable")
        if self.kind == GRAPHICAL_LASSO:
            self._fit_observed()
        else:
            self._sel_obs = [
                SelectionSet(np.asarray(self.selector.func(self.ctx.sigma_hat, t), dtype=np.int64))
                for t in self.grid
            ]

    def _solve(self, S, lam, W, B):
        theta, status = glasso_cd(S, float(lam), W, B, 500, 1e-7, 10_000, 1e-10)
        if status < 0:
            raise ConvergenceError(f"graphical lasso failed at tuning {lam:.6g}")
        return theta

    def _fit_observed(self):
        S = self.ctx.sigma_hat
        T, d = self.grid.size, self.d
        W = S + float(self.grid[self._desc[0]]) * np.eye(d)
        B = np.zeros((d, d))
        self._W_obs = np.zeros((T, d, d))
        self._B_obs = np.zeros((T, d, d))
        sels = [None] * T
        for ti in self._desc:
            theta = self._solve(S, self.grid[ti], W, B)
            self._W_obs[ti] = W
            self._B_obs[ti] = B
            edges = np.flatnonzero(theta[self._iu] != 0.0)
            sels[ti] = SelectionSet(edges)
        self._sel_obs = sels

    def observed_selections(self):
        return self._sel_obs

    def pvalues(self):
        return self.ctx.pvalues

    def star_mc(self, pair_idx: int, rng=None):
        rng = rng or rng_stream(self.cfg.seed, MC_DRAWS, pair_idx)
        law = self.ctx.law(pair_idx)
        M = self.cfg.mc_samples
        T = self.grid.size
        star = np.zeros(T)
        prob = np.zeros(T)
        sigma_buf = self.ctx.sigma_hat.copy()
        if self.kind == "custom":
            for _ in range(M):
                v = float(law.draw_v(rng))
                law.reconstruct_sigma(v, sigma_buf)
                for ti, t in enumerate(self.grid):
                    sel = np.asarray(self.selector.func(sigma_buf, t), dtype=np.int64)
                    if pair_idx in sel:
                        star[ti] += 1.0 / sel.size
                        prob[ti] += 1.0
            return star / M, prob / M
        W = self._W_obs.copy()
        B = self._B_obs.copy()
        jj, kk = law.j, law.k
        for _ in range(M):
            v = float(law.draw_v(rng))
            law.reconstruct_sigma(v, sigma_buf)
            for ti in self._desc:
                try:
                    theta = self._solve(sigma_buf, self.grid[ti], W[ti], B[ti])
                except ConvergenceError as exc:
                    raise EstimationError(
                        f"graphical resample failed (pair {jj + 1}:{kk + 1}, "
                        f"tuning {self.grid[ti]:.6g})",
                        hypothesis=pair_idx, tuning=float(self.grid[ti]),
                    ) from exc
                if theta[jj, kk] != 0.0:
                    star[ti] += 1.0 / np.count_nonzero(theta[self._iu])
                    prob[ti] += 1.0
        return star / M, prob / M

    def star_exact(self, pair_idx):
        raise DataError("no exact algorithm for the graphical setting")


class _ModelXEngine:
    setting = MODEL_X
    supports_exact = False

    def __init__(self, data: Dataset, selector: Selector, grid: np.ndarray, cfg: FdrConfig):
        self.data = data
        self.selector = selector
        self.grid = np.asarray(grid, dtype=float)
        self.cfg = cfg
        self.mx = ModelXContext(data, crt_draws=cfg.crt_draws)
        self.kind = selector.kind
        self._desc = np.argsort(-self.grid, kind="stable")
        if self.kind in (LASSO, FORWARD_STEPWISE):
            # selectors center internally in this setting (the covariate
            # law pins the raw columns, so the dataset cannot)
            self.xc = data.x - data.x.mean(axis=0)
            self.yc = data.y - data.y.mean()
        if self.kind == LASSO:
            self.gram = self.xc.T @ self.xc
            self.xty = self.xc.T @ self.yc
            self._fit_observed_lasso()
        elif self.kind == LOGISTIC_L1:
            self._fit_observed_logistic()
        elif self.kind == FORWARD_STEPWISE:
            self._fit_observed_fs()
        elif self.kind == "custom":
            self._sel_obs = [
                SelectionSet(np.asarray(self.selector.func(data.x, data.y, t), dtype=np.int64))
                for t in self.grid
            ]
        else:
            raise DataError(f"selector {self.kind!r} does not apply to the model-X setting")

    def _fit_observed_lasso(self):
        T, d = self.grid.size, self.data.d
        self.theta_obs = np.zeros((T, d))
        theta = np.zeros(d)
        for ti in self._desc:
            status = lasso_cd_gram(
                self.gram, self.xty, float(self.grid[ti]), theta,
                self.selector.max_iters, self.selector.tol,
            )
            if status < 0:
                raise ConvergenceError(f"observed lasso fit failed at tuning {self.grid[ti]:.6g}")
            self.theta_obs[ti] = theta
        self._sel_obs = [SelectionSet(np.flatnonzero(t != 0)) for t in self.theta_obs]

    def _fit_observed_logistic(self):
        T, d = self.grid.size, self.data.d
        self.beta_obs = np.zeros((T, d))
        self.icept_obs = np.zeros(T)
        beta = np.zeros(d)
        icept = None
        for ti in self._desc:
            fit = logistic_l1(
                self.data.x, self.data.y, lam=float(self.grid[ti]),
                beta0=beta, intercept0=icept,
            )
            beta = fit.coefficients
            icept = fit.intercept
            self.beta_obs[ti] = beta
            self.icept_obs[ti] = icept
        self._sel_obs = [SelectionSet(np.flatnonzero(b != 0)) for b in self.beta_obs]

    def _fit_observed_fs(self):
        ks = self.grid.astype(np.int64)
        if np.any(ks.astype(float) != self.grid) or np.any(ks < 0):
            raise DataError("forward stepwise grid must hold nonnegative integers")
        self.ks = ks
        self.kmax = int(ks.max())
        if self.kmax > 0:
            norms = np.linalg.norm(self.xc, axis=0)
            xn = np.ascontiguousarray((self.xc / norms).T)
            order, status = forward_stepwise_order(
                xn, np.ascontiguousarray(self.yc), self.kmax, 1e-10
            )
            if status < 0:
                raise DataError("collinearity during the observed stepwise run")
            self.order_obs = order
        else:
            self.order_obs = np.empty(0, dtype=np.int64)
        self._sel_obs = [SelectionSet(self.order_obs[:k]) for k in ks]

    def observed_selections(self):
        return self._sel_obs

    def pvalues(self):
        return self.mx.pvalues(self.cfg.seed)

    def star_mc(self, j: int, rng=None):
        rng = rng or rng_stream(self.cfg.seed, MC_DRAWS, j)
        law = self.mx.law(j)
        M = self.cfg.mc_samples
        T = self.grid.size
        star = np.zeros(T)
        prob = np.zeros(T)
        others = np.delete(np.arange(self.data.d), j)
        if self.kind == LASSO:
            G_buf = self.gram.copy()
            b_buf = self.xty.copy()
            thetas = self.theta_obs.copy()
            xc_others = np.delete(self.xc, j, axis=1)
        elif self.kind == LOGISTIC_L1:
            betas = self.beta_obs.copy()
            icepts = self.icept_obs.copy()
            X_buf = self.data.x.copy()
        elif self.kind == FORWARD_STEPWISE:
            X_buf = self.xc.copy()
        else:
            X_buf = self.data.x.copy()
        for _ in range(M):
            col = law.resample_column(rng)
            if self.kind == LASSO:
                colc = col - col.mean()
                cross = xc_others.T @ colc
                G_buf[j, others] = cross
                G_buf[others, j] = cross
                G_buf[j, j] = colc @ colc
                b_buf[j] = colc @ self.yc
                for ti in self._desc:
                    lam = float(self.grid[ti])
                    status = lasso_cd_gram(
                        G_buf, b_buf, lam, thetas[ti], self.selector.max_iters, self.selector.tol
                    )
                    if status < 0:
                        raise EstimationError(
                            f"lasso resample failed (hypothesis {j}, tuning {lam:.6g})",
                            hypothesis=j, tuning=lam,
                        )
                    th = thetas[ti]
                    if th[j] != 0.0:
                        star[ti] += 1.0 / np.count_nonzero(th)
                        prob[ti] += 1.0
            elif self.kind == LOGISTIC_L1:
                X_buf[:, j] = col
                for ti in self._desc:
                    lam = float(self.grid[ti])
                    try:
                        fit = logistic_l1(
                            X_buf, self.data.y, lam=lam,
                            beta0=betas[ti], intercept0=float(icepts[ti]),
                        )
                    except FdrPathError as exc:
                        raise EstimationError(
                            f"logistic resample failed (hypothesis {j}, tuning {lam:.6g})",
                            hypothesis=j, tuning=lam,
                        ) from exc
                    betas[ti] = fit.coefficients
                    icepts[ti] = fit.intercept
                    if fit.coefficients[j] != 0.0:
                        star[ti] += 1.0 / fit.active_set.size
                        prob[ti] += 1.0
            elif self.kind == FORWARD_STEPWISE:
                X_buf[:, j] = col - col.mean()
                if self.kmax > 0:
                    norms = np.linalg.norm(X_buf, axis=0)
                    order, status = forward_stepwise_order(
                        np.ascontiguousarray((X_buf / norms).T),
                        np.ascontiguousarray(self.yc),
                        self.kmax, 1e-10,
                    )
                    if status < 0:
                        raise EstimationError(
                            f"stepwise resample hit collinearity (hypothesis {j})", hypothesis=j
                        )
                    hit = np.flatnonzero(order == j)
                    pos = int(hit[0]) if hit.size else self.kmax
                    for ti, k in enumerate(self.ks):
                        if pos < k:
                            star[ti] += 1.0 / k
                            prob[ti] += 1.0
            else:
                X_buf[:, j] = col
                for ti, t in enumerate(self.grid):
                    sel = np.asarray(self.selector.func(X_buf, self.data.y, t), dtype=np.int64)
                    if j in sel:
                        star[ti] += 1.0 / sel.size
                        prob[ti] += 1.0
        return star / M, prob / M

    def star_exact(self, j):
        raise DataError("no exact algorithm for the model-X setting")


_ENGINES = {
    GAUSSIAN_LINEAR: _LinearEngine,
    GAUSSIAN_GRAPHICAL: _GraphicalEngine,
    MODEL_X: _ModelXEngine,
}


def _make_engine(data: Dataset, selector: Selector, grid, cfg: FdrConfig):
    return _ENGINES[data.setting](data, selector, grid, cfg)


def _star_for_hypothesis(engine, j: int, cfg: FdrConfig):
    """(star, prob, used_exact) for one hypothesis under the configured mode."""
    if cfg.mode in ("auto", "exact_when_available") and engine.supports_exact:
        try:
            star, prob = engine.star_exact(j)
            return star, prob, True
        except DegeneratePathError:
            pass  # structured fallback: resample instead
    star, prob = engine.star_mc(j)
    return star, prob, False


def _chunk_worker(payload):
    data, selector, grid, cfg, js = payload
    engine = _make_engine(data, selector, grid, cfg)
    out = []
    for j in js:
        star, prob, used_exact = _star_for_hypothesis(engine, int(j), cfg)
        out.append((int(j), star, prob, used_exact))
    return out


def observed_selection_path(
    data: Dataset, selector: Selector, config: FdrConfig | None = None
) -> tuple[np.ndarray, tuple[SelectionSet, ...]]:
    """Selections of the observed data over the grid (warm-started solves)."""
    cfg = config or FdrConfig()
    grid = np.asarray(selector.resolve_grid(data), dtype=float)
    engine = _make_engine(data, selector, grid, cfg)
    return grid, tuple(engine.observed_selections())


def estimate_curve(data: Dataset, selector: Selector, config: FdrConfig | None = None) -> FdrCurve:
    """Estimate the selection FDR (and PFER) curve over the tuning grid.

    p-values are computed once; hypotheses whose screening factor is zero
    contribute nothing and skip the conditional expectation entirely.
    """
    cfg = config or FdrConfig()
    grid = np.asarray(selector.resolve_grid(data), dtype=float)
    engine = _make_engine(data, selector, grid, cfg)
    selections = tuple(engine.observed_selections())
    n_selected = np.array([s.size for s in selections], dtype=np.int64)
    m = data.n_hypotheses
    T = grid.size
    star = np.zeros((T, m))
    prob = np.zeros((T, m))
    labels = tuple(data.hypothesis_labels())

    if cfg.degenerate_conditioning:
        # Conditioning on the full data collapses the conditional law to a
        # point mass at the observed selection and forces phi to one.
        pvals = engine.pvalues()
        phi = np.ones((T, m))
        for ti, sel in enumerate(selections):
            if sel.size:
                star[ti, sel.indices] = 1.0 / sel.size
                prob[ti, sel.indices] = 1.0
        contributions = star * phi
        return FdrCurve(
            grid=grid,
            fdr_hat=contributions.sum(axis=1),
            pfer_hat=(prob * phi).sum(axis=1),
            fdr_star=star,
            phi=phi,
            contributions=contributions,
            n_selected=n_selected,
            pvalues=pvals,
            labels=labels,
            selections=selections,
        )

    pvals = engine.pvalues()
    phi_vec = phi_canonical(pvals, cfg.zeta)
    todo = np.flatnonzero(phi_vec > 0)
    exact_count = 0
    fallbacks = []
    if cfg.workers > 1 and todo.size > 1:
        chunks = [c for c in np.array_split(todo, min(cfg.workers * 4, todo.size)) if c.size]
        payloads = [(data, selector, grid, cfg, chunk) for chunk in chunks]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for result in pool.map(_chunk_worker, payloads):
                for j, s, pr, used_exact in result:
                    star[:, j] = s
                    prob[:, j] = pr
                    exact_count += used_exact
                    if engine.supports_exact and not used_exact:
                        fallbacks.append(j)
    else:
        for j in todo:
            s, pr, used_exact = _star_for_hypothesis(engine, int(j), cfg)
            star[:, j] = s
            prob[:, j] = pr
            exact_count += used_exact
            if engine.supports_exact and not used_exact:
                fallbacks.append(int(j))

    phi = np.tile(phi_vec, (T, 1))
    contributions = star * phi
    return FdrCurve(
        grid=grid,
        fdr_hat=contributions.sum(axis=1),
        pfer_hat=(prob * phi).sum(axis=1),
        fdr_star=star,
        phi=phi,
        contributions=contributions,
        n_selected=n_selected,
        pvalues=pvals,
        labels=labels,
        selections=selections,
        exact_hypotheses=exact_count,
        mc_fallbacks=tuple(fallbacks),
    )


# ------------------------------------------------ thresholding closed form
def threshold_curve_closed_form(pvalues, c: float, zeta: float = 0.1) -> float:
    """Closed-form FDR estimate for p-value thresholding at c <= zeta.

    Equals c / (R(c) + 1) * #{p > zeta} / (1 - zeta); no resampling needed
    because the held-out p-value is uniform given the others.
    """
    if not 0 < c < 1:
        raise DataError("threshold c must lie in (0, 1)")
    if c > zeta:
        raise DataError("the closed form requires c <= zeta")
    p = np.asarray(pvalues, dtype=float)
    r = int(np.sum(p <= c))
    return float(c / (r + 1) * np.sum(p > zeta) / (1.0 - zeta))


def storey_estimate(pvalues, c: float, zeta: float = 0.1) -> float:
    """Storey-style plug-in estimate c / max(R(c), 1) * #{p > zeta} / (1 - zeta)."""
    p = np.asarray(pvalues, dtype=float)
    r = max(int(np.sum(p <= c)), 1)
    return float(c / r * np.sum(p > zeta) / (1.0 - zeta))


# ------------------------------------------------------- generic MC ops
def rao_blackwell_star_mc(draw_selection, hypothesis: int, mc_samples: int, rng) -> float:
    """Monte-Carlo conditional mean of 1{j selected}/#selected (0/0 = 0).

    ``draw_selection(rng)`` produces one conditional resample's selection
    (any container of indices).  The 0/0 convention applies inside the
    integrand, draw by draw.
    """
    if mc_samples < 1:
        raise DataError("mc_samples must be at least 1")
    total = 0.0
    for _ in range(mc_samples):
        sel = draw_selection(rng)
        r = len(sel)
        if r and hypothesis in sel:
            total += 1.0 / r
    return total / mc_samples


def selection_probability_mc(draw_selection, hypothesis: int, mc_samples: int, rng) -> float:
    """Monte-Carlo conditional probability that j is selected."""
    if mc_samples < 1:
        raise DataError("mc_samples must be at least 1")
    hits = 0
    for _ in range(mc_samples):
        if hypothesis in draw_selection(rng):
            hits += 1
    return hits / mc_samples


# --------------------------------------------------------- sklearn shape
class SelectionFDR(BaseEstimator):
    """Estimate the FDR of a variable-selection procedure along its grid.

    Parameters
    ----------
    selector : str or callable
        One of ``lasso``, ``forward_stepwise``, ``graphical_lasso``,
        ``logistic_l1``, ``p_threshold``, or a callable run as a custom
        selector (regression settings: ``f(X, y, tuning) -> indices``;
        graphical: ``f(sigma_hat, tuning) -> pair indices``).
    grid : array-like or None
        Tuning values.  ``None`` builds the default ten-point log grid
        (penalized selectors) or step counts ``1..min(10, d-1)``.
    setting : str
        ``gaussian_linear``, ``model_x``, or ``gaussian_graphical``.
    covariate_law : CovariateLaw, optional
        Declared covariate distribution; required for ``model_x``.
    zeta : float
        Screening level for the p-value factor.
    mc_samples : int
        Conditional resamples per hypothesis in Monte-Carlo mode.
    mode : str
        ``auto`` (exact path algorithms where available), ``mc``, or
        ``exact``.
    compute_se : not provided here; see :mod:`fdrpath.bootstrap`.

    Attributes (after ``fit``)
    --------------------------
    grid_, fdr_hat_, pfer_hat_, fdr_star_, phi_, contributions_,
    pvalues_, n_selected_, labels_, selections_, curve_.
    """

    def __init__(
        self,
        selector="lasso",
        grid=None,
        n_grid=10,
        grid_min_ratio=0.01,
        setting=GAUSSIAN_LINEAR,
        covariate_law=None,
        zeta=0.1,
        mc_samples=20,
        mode="auto",
        crt_draws=199,
        standardize=None,
        degenerate_conditioning=False,
        seed=0,
        workers=1,
    ):
        self.selector = selector
        self.grid = grid
        self.n_grid = n_grid
        self.grid_min_ratio = grid_min_ratio
        self.setting = setting
        self.covariate_law = covariate_law
        self.zeta = zeta
        self.mc_samples = mc_samples
        self.mode = mode
        self.crt_draws = crt_draws
        self.standardize = standardize
        self.degenerate_conditioning = degenerate_conditioning
        self.seed = seed
        self.workers = workers

    def _build_selector(self) -> Selector:
        if callable(self.selector):
            if self.grid is None:
                raise DataError("custom selectors need an explicit grid")
            return Selector(
                kind="custom", grid=np.asarray(self.grid, dtype=float), func=self.selector
            )
        return Selector(
            kind=self.selector,
            grid=None if self.grid is None else np.asarray(self.grid, dtype=float),
            n_grid=self.n_grid,
            min_ratio=self.grid_min_ratio,
        )

    def fit(self, X, y=None):
        if isinstance(X, Dataset):
            data = X
        else:
            data = Dataset.from_arrays(
                np.asarray(X, dtype=float),
                None if y is None else np.asarray(y, dtype=float),
                setting=self.setting,
                covariate_law=self.covariate_law,
                standardize=self.standardize,
            )
        cfg = FdrConfig(
            zeta=self.zeta,
            mc_samples=self.mc_samples,
            mode=self.mode,
            seed=self.seed,
            crt_draws=self.crt_draws,
            workers=self.workers,
            degenerate_conditioning=self.degenerate_conditioning,
        )
        curve = estimate_curve(data, self._build_selector(), cfg)
        self.data_ = data
        self.curve_ = curve
        self.grid_ = curve.grid
        self.fdr_hat_ = curve.fdr_hat
        self.pfer_hat_ = curve.pfer_hat
        self.fdr_star_ = curve.fdr_star
        self.phi_ = curve.phi
        self.contributions_ = curve.contributions
        self.pvalues_ = curve.pvalues
        self.n_selected_ = curve.n_selected
        self.labels_ = curve.labels
        self.selections_ = curve.selections
        return self
