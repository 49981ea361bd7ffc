"""Exact evaluation of the Rao-Blackwellized selection functionals for the
lasso and forward stepwise in the linear setting.

Both algorithms exploit the same structure: conditional on the sufficient
statistic for hypothesis j, every cross product X_i'y with i != j is
frozen and X_j'y moves affinely in the scalar coordinate v.  The lasso
active set is then piecewise constant in v, with knots where an active
coefficient hits zero or an inactive dual hits the penalty boundary; the
stepwise winner comparisons are affine in v against v-free competitors.
Integrating the piecewise-constant integrand against the conditional t
law of v gives the conditional expectation exactly (up to CDF accuracy).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import lasso_cd_gram
from .exceptions import ConvergenceError, DataError, DegeneratePathError
from .laws import LinearLaw, LinearModelContext, t_cdf

EVENT_TOL = 1e-9
TAIL_MASS = 1e-12
INV_REFRESH = 40


@dataclass(frozen=True)
class PiecewiseSelectionPath:
    """Active-set structure of a selector as one coordinate sweeps its support.

    ``breakpoints`` are the interior knots (strictly increasing); segment
    i covers (edges[i], edges[i+1]) where edges prepends ``v_lo`` and
    appends ``v_hi``.  ``j_in[i]`` flags whether the swept hypothesis is
    selected on segment i and ``r_count[i]`` is the selection size.

    The sweep stops once the conditional mass beyond the frontier is
    negligible, so the structure is event-exact only on
    ``[tracked_lo, tracked_hi]``; the outermost segments extend to the
    support boundary carrying the frontier state (integration error below
    the truncation mass).
    """

    breakpoints: np.ndarray
    j_in: np.ndarray
    r_count: np.ndarray
    v_lo: float
    v_hi: float
    tracked_lo: float
    tracked_hi: float

    def __post_init__(self):
        if self.breakpoints.size + 1 != self.j_in.size or self.j_in.size != self.r_count.size:
            raise DataError("segment arrays are inconsistent with the breakpoints")
        if self.breakpoints.size and np.any(np.diff(self.breakpoints) <= 0):
            raise DataError("breakpoints must be strictly increasing")

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate(([self.v_lo], self.breakpoints, [self.v_hi]))

    def segment_at(self, v: float) -> int:
        return int(np.searchsorted(self.breakpoints, v, side="right"))


# ------------------------------------------------------------ lasso path
class _ActiveState:
    """Active set with an incrementally maintained Gram inverse."""

    def __init__(self, G: np.ndarray, active: list[int], signs: list[float]):
        self.G = G
        self.active = list(active)
        self.signs = list(signs)
        self.refresh()
        self._updates = 0

    def refresh(self):
        if self.active:
            sub = self.G[np.ix_(self.active, self.active)]
            try:
                self.kinv = np.linalg.inv(sub)
            except np.linalg.LinAlgError:
                raise DegeneratePathError("singular active-set Gram matrix") from None
        else:
            self.kinv = np.zeros((0, 0))

    def add(self, i: int, sign: float):
        u = self.G[np.asarray(self.active, dtype=np.int64), i] if self.active else np.empty(0)
        gii = self.G[i, i]
        if self.active:
            ku = self.kinv @ u
            schur = gii - u @ ku
        else:
            ku = np.empty(0)
            schur = gii
        if schur <= 1e-12 * max(gii, 1.0):
            raise DegeneratePathError(f"adding variable {i} makes the active Gram singular")
        k = len(self.active)
        new = np.empty((k + 1, k + 1))
        new[:k, :k] = self.kinv + np.outer(ku, ku) / schur
        new[:k, k] = -ku / schur
        new[k, :k] = -ku / schur
        new[k, k] = 1.0 / schur
        self.kinv = new
        self.active.append(i)
        self.signs.append(sign)
        self._bump()

    def drop(self, pos: int):
        k = len(self.active)
        keep = [q for q in range(k) if q != pos]
        e = self.kinv[keep, pos]
        dpp = self.kinv[pos, pos]
        self.kinv = self.kinv[np.ix_(keep, keep)] - np.outer(e, e) / dpp
        del self.active[pos]
        del self.signs[pos]
        self._bump()

    def _bump(self):
        self._updates += 1
        if self._updates % INV_REFRESH == 0:
            self.refresh()


def _observed_active(G, b, lam, theta0=None):
    theta = np.zeros(b.shape[0]) if theta0 is None else np.array(theta0, dtype=float)
    status = lasso_cd_gram(G, b, float(lam), theta, 200_000, 1e-12)
    if status < 0:
        raise ConvergenceError("observed lasso fit for the exact path did not converge")
    active = np.flatnonzero(theta != 0.0)
    return list(active), [float(np.sign(theta[i])) for i in active]


def lasso_homotopy_path(
    G: np.ndarray,
    law: LinearLaw,
    lam: float,
    theta0: np.ndarray | None = None,
    event_tol: float = EVENT_TOL,
    tail_mass: float = TAIL_MASS,
    max_knots: int | None = None,
) -> PiecewiseSelectionPath:
    """Active-set path of the lasso as hypothesis ``law.hypothesis``'s
    coordinate sweeps its conditional support.

    Starts from the observed solution at ``lam`` and sweeps outward in
    both directions, stopping once the remaining conditional t mass is
    below ``tail_mass``.  Raises :class:`DegeneratePathError` on tied
    events or singular updates; callers fall back to Monte Carlo.
    """
    if lam <= 0:
        raise DataError("the exact lasso path needs lam > 0")
    j = law.hypothesis
    d = G.shape[0]
    max_knots = max_knots if max_knots is not None else 60 * d + 200
    b_base = law.reconstruct_b(0.0).astype(float)  # b with the j entry at its v=0 value
    b_base[j] = law.a
    cj = law.c
    active0, signs0 = _observed_active(G, law.reconstruct_b(law.v_obs), lam, theta0)

    def sweep(direction: int):
        state = _ActiveState(G, active0, signs0)
        segments = []
        v_cur = law.v_obs
        tracked = law.r * direction
        knots = 0
        while True:
            act = np.asarray(state.active, dtype=np.int64)
            j_pos = int(np.flatnonzero(act == j)[0]) if j in state.active else -1
            sgn = np.asarray(state.signs)
            if act.size:
                alpha = state.kinv @ (b_base[act] - lam * sgn)
                beta = cj * state.kinv[:, j_pos] if j_pos >= 0 else np.zeros(act.size)
            else:
                alpha = beta = np.empty(0)
            inactive = np.setdiff1d(np.arange(d), act, assume_unique=False)
            if act.size:
                g_in = b_base[inactive] - G[np.ix_(inactive, act)] @ alpha
                h_in = -(G[np.ix_(inactive, act)] @ beta)
            else:
                g_in = b_base[inactive].copy()
                h_in = np.zeros(inactive.size)
            if j_pos < 0:
                h_in[np.flatnonzero(inactive == j)[0]] += cj

            candidates = []  # (v_event, kind, payload)
            for q in range(act.size):
                if beta[q] != 0.0:
                    v_ev = -alpha[q] / beta[q]
                    if (v_ev - v_cur) * direction > event_tol:
                        candidates.append((v_ev, "drop", q))
            for pos, i in enumerate(inactive):
                if h_in[pos] == 0.0:
                    continue
                for bound, sign in ((lam, 1.0), (-lam, -1.0)):
                    v_ev = (bound - g_in[pos]) / h_in[pos]
                    if (v_ev - v_cur) * direction > event_tol:
                        candidates.append((v_ev, "add", (int(i), sign)))

            j_in_seg = j_pos >= 0
            r_seg = int(act.size)
            boundary = law.r if direction > 0 else -law.r
            if candidates:
                candidates.sort(key=lambda cand: direction * cand[0])
                v_next, kind, payload = candidates[0]
            else:
                v_next, kind, payload = boundary, "end", None

            if direction * v_next >= law.r:
                segments.append((v_cur, boundary, j_in_seg, r_seg))
                break
            # remaining conditional mass beyond the frontier
            t_next = float(law.t_from_v(v_next))
            mass = 1.0 - t_cdf(t_next, law.dof) if direction > 0 else t_cdf(t_next, law.dof)
            segments.append((v_cur, v_next, j_in_seg, r_seg))
            if kind == "end":
                break
            if len(candidates) > 1 and abs(candidates[1][0] - v_next) <= event_tol:
                a0, a1 = candidates[0], candidates[1]
                same_var = (
                    a0[1] == a1[1] == "add" and a0[2][0] == a1[2][0]
                ) or (a0[1] == a1[1] == "drop" and a0[2] == a1[2])
                if not same_var:
                    raise DegeneratePathError(
                        f"tied path events near v={v_next:.6g} for hypothesis {j}"
                    )
            if kind == "drop":
                state.drop(payload)
            else:
                state.add(payload[0], payload[1])
            v_cur = v_next
            knots += 1
            if mass < tail_mass:
                act = np.asarray(state.active, dtype=np.int64)
                segments.append((v_cur, boundary, j in state.active, int(act.size)))
                tracked = v_cur
                break
            if knots > max_knots:
                raise DegeneratePathError(f"path exceeded {max_knots} knots for hypothesis {j}")
        return segments, tracked

    up, tracked_hi = sweep(+1)
    down, tracked_lo = sweep(-1)
    # down segments run from high to low v; flip their endpoints and order.
    down_flipped = [(lo, hi, jin, r) for (hi, lo, jin, r) in down][::-1]
    # both sweeps start at v_obs in the observed state; fuse the two halves
    # of the segment containing v_obs.
    fused = (down_flipped[-1][0], up[0][1], up[0][2], up[0][3])
    all_segments = down_flipped[:-1] + [fused] + up[1:]
    lows = np.array([s[0] for s in all_segments])
    breaks = lows[1:]
    j_in = np.array([s[2] for s in all_segments], dtype=bool)
    r_count = np.array([s[3] for s in all_segments], dtype=np.int64)
    return PiecewiseSelectionPath(
        breakpoints=breaks, j_in=j_in, r_count=r_count, v_lo=-law.r, v_hi=law.r,
        tracked_lo=tracked_lo, tracked_hi=tracked_hi,
    )


def _segment_masses(edges: np.ndarray, law: LinearLaw) -> np.ndarray:
    """Conditional t mass per segment; uses the symmetric survival form on
    positive segments to avoid cancellation deep in the upper tail."""
    t_edges = np.asarray(law.t_from_v(edges), dtype=float)
    cdf = t_cdf(t_edges, law.dof)
    mass = np.diff(cdf)
    pos = (t_edges[:-1] >= 0) & (t_edges[1:] >= 0)
    if np.any(pos):
        sf = t_cdf(-t_edges, law.dof)
        mass[pos] = (sf[:-1] - sf[1:])[pos]
    return np.maximum(mass, 0.0)


def integrate_path(path: PiecewiseSelectionPath, law: LinearLaw) -> tuple[float, float]:
    """(expected indicator/size, expected indicator) under the conditional law."""
    mass = _segment_masses(path.edges, law)
    star = 0.0
    prob = 0.0
    for i in range(path.j_in.size):
        if path.j_in[i] and path.r_count[i] > 0:
            star += mass[i] / path.r_count[i]
            prob += mass[i]
    return float(star), float(prob)


def hfdr_star_lasso_exact(path: PiecewiseSelectionPath, law: LinearLaw) -> float:
    """Exact Rao-Blackwellized contribution for the lasso at one penalty."""
    return integrate_path(path, law)[0]


# -------------------------------------------------------- stepwise regions
def _clip_region(lose_lo: float, lose_hi: float, whole: bool, r: float) -> np.ndarray:
    """Clip the complement of the losing interval to the support [-r, r]."""
    if whole or lose_lo >= lose_hi:
        return np.array([[-r, r]])
    pieces = []
    if lose_lo > -r:
        pieces.append([-r, min(lose_lo, r)])
    if lose_hi < r:
        pieces.append([max(lose_hi, -r), r])
    out = np.asarray([p for p in pieces if p[0] < p[1]], dtype=float)
    return out.reshape(-1, 2)


def fs_region_snapshots(
    ctx: LinearModelContext, law: LinearLaw, kmax: int, norm_rtol: float = 1e-10
) -> list[np.ndarray]:
    """Selection regions of hypothesis j for every step budget 1..kmax.

    Runs the auxiliary stepwise procedure that forbids j.  Its comparisons
    do not depend on the conditioned coordinate v (every auxiliary
    functional lies in the span of the other columns, which is orthogonal
    to j's residualized direction), while j's own score at each step is
    affine in v.  Each step's winning set is therefore the outside of one
    interval, and the region for a budget of k steps is the outside of the
    intersection of the first k intervals.  Entry k-1 of the returned list
    is an (m, 2) array of disjoint intervals clipped to [-r, r].
    """
    j = law.hypothesis
    d = ctx.p
    if not 1 <= kmax <= d - 1:
        raise DataError("step budget must lie in [1, d-1] for the auxiliary procedure")
    norms = np.linalg.norm(ctx.x, axis=0)
    if np.any(norms <= 0):
        raise DataError("zero-norm column")
    w = ctx.x @ ctx.gram_inv[:, j] * law.c  # unit residualized direction of column j
    y_c = (ctx.fitted - law.v_obs * w).copy()  # v-free part of the response
    xj = ctx.x[:, j] / norms[j]
    Xw = np.delete(ctx.x / norms, j, axis=1)
    remaining = list(range(d - 1))
    lose_lo, lose_hi = -np.inf, np.inf  # intersection of per-step losing intervals
    whole_support = False
    snapshots: list[np.ndarray] = []
    for _ in range(kmax):
        if whole_support:
            snapshots.append(_clip_region(0.0, 0.0, True, law.r))
            continue
        scores = Xw[:, remaining].T @ y_c
        pos = int(np.argmax(np.abs(scores)))
        m = abs(float(scores[pos]))
        a = float(xj @ y_c)
        slope = float(xj @ w)
        if abs(slope) <= norm_rtol:
            if abs(a) > m:
                whole_support = True
        else:
            v1 = (-m - a) / slope
            v2 = (m - a) / slope
            lose_lo = max(lose_lo, min(v1, v2))
            lose_hi = min(lose_hi, max(v1, v2))
            if lose_lo >= lose_hi:
                whole_support = True
        snapshots.append(_clip_region(lose_lo, lose_hi, whole_support, law.r))
        if whole_support:
            continue
        # advance the auxiliary procedure: orthogonalize against the winner
        win_vec = Xw[:, remaining[pos]].copy()
        del remaining[pos]
        y_c -= (win_vec @ y_c) * win_vec
        xj -= (win_vec @ xj) * win_vec
        nrm = float(np.linalg.norm(xj))
        if nrm < norm_rtol:
            raise DataError(f"column {j} became collinear with the auxiliary selection")
        xj /= nrm
        for q in remaining:
            Xw[:, q] -= (win_vec @ Xw[:, q]) * win_vec
            nq = float(np.linalg.norm(Xw[:, q]))
            if nq < norm_rtol:
                raise DataError("auxiliary candidate column degenerated (collinearity)")
            Xw[:, q] /= nq
    return snapshots


def fs_selection_regions(
    ctx: LinearModelContext, law: LinearLaw, k: int, norm_rtol: float = 1e-10
) -> np.ndarray:
    """v-intervals on which hypothesis j enters a k-step stepwise selection."""
    return fs_region_snapshots(ctx, law, int(k), norm_rtol)[-1]


def region_probability(regions: np.ndarray, law: LinearLaw) -> float:
    """Conditional probability mass of a union of disjoint v-intervals."""
    if regions.size == 0:
        return 0.0
    total = 0.0
    for lo, hi in regions:
        total += float(_segment_masses(np.array([lo, hi]), law)[0])
    return total


def hfdr_star_fs_exact(regions: np.ndarray, law: LinearLaw, k: int) -> float:
    """Exact Rao-Blackwellized contribution for fixed-size stepwise selection."""
    if k < 1:
        raise DataError("k must be at least 1")
    return region_probability(regions, law) / k
