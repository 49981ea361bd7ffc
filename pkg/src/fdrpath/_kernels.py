"""Numba kernels for the solver inner loops.

Everything here is deterministic pure float arithmetic; callers own all
randomness and all error reporting.  Convergence failures are signalled
through return codes so the kernels stay nopython-compatible.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def soft_threshold(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def lasso_cd_gram(G, b, lam, theta, max_iters, tol):
    """Cyclic coordinate descent for 0.5*theta'G theta - b'theta + lam*||theta||_1.

    ``theta`` is updated in place (warm start).  Returns the number of
    sweeps used, or -1 if ``max_iters`` sweeps did not reach ``tol`` on
    the max coefficient change.  ``tol`` is interpreted on the natural
    coefficient scale (the largest univariate solution magnitude), so it
    is invariant to rescaling the response.
    """
    d = b.shape[0]
    scale = 0.0
    for i in range(d):
        if G[i, i] > 0.0:
            c = abs(b[i]) / G[i, i]
            if c > scale:
                scale = c
    if scale > 1.0:
        tol = tol * scale
    for it in range(max_iters):
        max_delta = 0.0
        for i in range(d):
            gii = G[i, i]
            if gii <= 0.0:
                continue
            old = theta[i]
            rho = b[i] - np.dot(G[i], theta) + gii * old
            new = soft_threshold(rho, lam) / gii
            if new != old:
                theta[i] = new
                delta = abs(new - old)
                if delta > max_delta:
                    max_delta = delta
        if max_delta < tol:
            return it + 1
    return -1


@njit(cache=True)
def kkt_residual_gram(G, b, lam, theta):
    """Max KKT violation of a lasso candidate solution (0 = exact)."""
    d = b.shape[0]
    worst = 0.0
    for i in range(d):
        nu = b[i] - np.dot(G[i], theta)
        if theta[i] > 0.0:
            v = abs(nu - lam)
        elif theta[i] < 0.0:
            v = abs(nu + lam)
        else:
            v = abs(nu) - lam
            if v < 0.0:
                v = 0.0
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def forward_stepwise_order(Xt, y, k, rtol):
    """Greedy forward selection on pre-normalized columns.

    ``Xt`` is the variables-by-rows transpose of the design, with every
    variable at unit norm; ``y`` is used as given.  Variables and the
    residual are orthogonalized against each winner and the variables
    renormalized.  Returns (order, status): status is the number of
    completed steps, or -(i+1) when candidate variable i degenerated
    (collinearity) before k steps finished.  Ties break to the lowest
    index (argmax returns the first maximizer).
    """
    d, n = Xt.shape
    Xw = Xt.copy()
    yw = y.copy()
    order = np.full(k, -1, dtype=np.int64)
    active = np.zeros(d, dtype=np.bool_)
    for step in range(k):
        best = -1
        best_val = -1.0
        for i in range(d):
            if active[i]:
                continue
            v = abs(np.dot(Xw[i], yw))
            if v > best_val:
                best_val = v
                best = i
        if best < 0:
            return order, -1
        order[step] = best
        active[best] = True
        xb = Xw[best].copy()
        yw -= np.dot(xb, yw) * xb
        for i in range(d):
            if active[i]:
                continue
            proj = np.dot(xb, Xw[i])
            Xw[i] -= proj * xb
            nrm = np.sqrt(np.dot(Xw[i], Xw[i]))
            if nrm < rtol:
                return order, -(i + 1)
            Xw[i] /= nrm
    return order, k


@njit(cache=True)
def glasso_cd(S, lam, W, B, max_sweeps, tol, inner_max, inner_tol):
    """Blockwise coordinate descent for the l1-penalized precision estimate.

    Maximizes log det(Theta) - trace(S Theta) - lam * sum_{j!=k}|Theta_jk|.
    ``W`` (current covariance iterate) and ``B`` (per-column lasso
    coefficients) are updated in place, so passing back the previous
    solution warm-starts the solve.  Returns (Theta, status) with status
    the number of sweeps, or -1 on non-convergence, -2 if an inner lasso
    failed.
    """
    d = S.shape[0]
    for j in range(d):
        W[j, j] = S[j, j]
    scale = 0.0
    for a in range(d):
        for bb in range(d):
            if a != bb and abs(S[a, bb]) > scale:
                scale = abs(S[a, bb])
    if scale <= 0.0:
        scale = 1.0
    status = -1
    for sweep in range(max_sweeps):
        max_change = 0.0
        for j in range(d):
            # Gram/cross products of the subproblem for column j.
            G11 = np.empty((d - 1, d - 1))
            s12 = np.empty(d - 1)
            beta = np.empty(d - 1)
            r = 0
            for a in range(d):
                if a == j:
                    continue
                s12[r] = S[a, j]
                beta[r] = B[a, j]
                c = 0
                for bcol in range(d):
                    if bcol == j:
                        continue
                    G11[r, c] = W[a, bcol]
                    c += 1
                r += 1
            inner = lasso_cd_gram(G11, s12, lam, beta, inner_max, inner_tol)
            if inner < 0:
                return np.empty((0, 0)), -2
            r = 0
            for a in range(d):
                if a == j:
                    continue
                B[a, j] = beta[r]
                w_new = 0.0
                c = 0
                for bcol in range(d):
                    if bcol == j:
                        continue
                    w_new += G11[r, c] * beta[c]
                    c += 1
                change = abs(w_new - W[a, j])
                if change > max_change:
                    max_change = change
                W[a, j] = w_new
                W[j, a] = w_new
                r += 1
        if max_change < tol * scale:
            status = sweep + 1
            break
    if status < 0:
        return np.empty((0, 0)), -1
    # Recover the precision matrix from the final coefficients.
    Theta = np.zeros((d, d))
    for j in range(d):
        quad = 0.0
        r = 0
        for a in range(d):
            if a == j:
                continue
            quad += W[a, j] * B[a, j]
            r += 1
        tjj = 1.0 / (W[j, j] - quad)
        Theta[j, j] = tjj
        r = 0
        for a in range(d):
            if a == j:
                continue
            Theta[a, j] = -B[a, j] * tjj
            r += 1
    # Exact zero pattern is symmetric; average tiny asymmetries away.
    for a in range(d):
        for bb in range(a + 1, d):
            if Theta[a, bb] == 0.0 or Theta[bb, a] == 0.0:
                Theta[a, bb] = 0.0
                Theta[bb, a] = 0.0
            else:
                m = 0.5 * (Theta[a, bb] + Theta[bb, a])
                Theta[a, bb] = m
                Theta[bb, a] = m
    return Theta, status


@njit(cache=True)
def weighted_lasso_cd(X, w, z, lam, beta, intercept, max_iters, tol):
    """Coordinate descent for 0.5*sum w_i (z_i - b0 - x_i beta)^2 + lam*||beta||_1.

    The intercept is unpenalized.  ``beta`` is updated in place; returns
    (intercept, sweeps) with sweeps = -1 on non-convergence.  ``tol`` is
    interpreted on the natural coefficient scale, as in lasso_cd_gram.
    """
    n, d = X.shape
    wsum = np.sum(w)
    resid = np.empty(n)
    for i in range(n):
        resid[i] = z[i] - intercept - np.dot(X[i], beta)
    scale = 0.0
    for jcol in range(d):
        wx2 = 0.0
        wxz = 0.0
        for i in range(n):
            wx = w[i] * X[i, jcol]
            wx2 += wx * X[i, jcol]
            wxz += wx * z[i]
        if wx2 > 0.0:
            c = abs(wxz) / wx2
            if c > scale:
                scale = c
    if scale > 1.0:
        tol = tol * scale
    for it in range(max_iters):
        max_delta = 0.0
        # intercept update
        num = 0.0
        for i in range(n):
            num += w[i] * resid[i]
        shift = num / wsum
        if shift != 0.0:
            intercept += shift
            for i in range(n):
                resid[i] -= shift
            if abs(shift) > max_delta:
                max_delta = abs(shift)
        for jcol in range(d):
            wx2 = 0.0
            rho = 0.0
            for i in range(n):
                wx = w[i] * X[i, jcol]
                wx2 += wx * X[i, jcol]
                rho += wx * resid[i]
            if wx2 <= 0.0:
                continue
            old = beta[jcol]
            new = soft_threshold(rho + wx2 * old, lam) / wx2
            if new != old:
                delta = new - old
                beta[jcol] = new
                for i in range(n):
                    resid[i] -= delta * X[i, jcol]
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            return intercept, it + 1
    return intercept, -1
