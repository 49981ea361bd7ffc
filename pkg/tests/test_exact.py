import numpy as np
import pytest

from fdrpath._kernels import forward_stepwise_order, lasso_cd_gram
from fdrpath.data import Dataset
from fdrpath.exact import (
    PiecewiseSelectionPath,
    fs_region_snapshots,
    fs_selection_regions,
    hfdr_star_fs_exact,
    hfdr_star_lasso_exact,
    integrate_path,
    lasso_homotopy_path,
    region_probability,
)
from fdrpath.exceptions import DataError
from fdrpath.laws import LinearModelContext


def make_ctx(n, d, seed, beta=None, orthonormal=False):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    if orthonormal:
        x, _ = np.linalg.qr(x)
    b = np.zeros(d)
    if beta is not None:
        b[: len(beta)] = beta
    y = x @ b + rng.standard_normal(n)
    data = Dataset.from_arrays(x, y, "gaussian_linear", standardize=False)
    return LinearModelContext.from_dataset(data)


def refit_active(ctx, law, v, lam):
    b = law.reconstruct_b(v)
    theta = np.zeros(ctx.p)
    assert lasso_cd_gram(ctx.gram, b, lam, theta, 300_000, 1e-12) > 0
    return theta


class TestLassoPath:
    def test_orthonormal_breakpoints_at_penalty(self):
        ctx = make_ctx(30, 5, 0, orthonormal=True)
        lam = 0.7
        for j in range(5):
            law = ctx.law(j)
            path = lasso_homotopy_path(ctx.gram, law, lam)
            inner = path.breakpoints[
                (path.breakpoints > path.tracked_lo) & (path.breakpoints < path.tracked_hi)
            ]
            for bp in inner:
                assert min(abs(bp - lam), abs(bp + lam)) < 1e-8
            # j is selected exactly where |v| > lam
            mids = (path.edges[:-1] + path.edges[1:]) / 2
            for si, vm in enumerate(mids):
                if path.tracked_lo <= vm <= path.tracked_hi:
                    assert path.j_in[si] == (abs(vm) > lam)
            # selection size changes by one at interior knots
            for si in range(len(inner)):
                assert abs(int(path.r_count[si + 1]) - int(path.r_count[si])) == 1

    def test_near_max_penalty_has_knots_and_matches_refits(self):
        # a single active variable just below the empty-set penalty: the
        # path drops it at one coordinate and re-admits it with the
        # opposite sign on the far side
        ctx = make_ctx(25, 6, 1, beta=(3.0,), orthonormal=True)
        lam = 0.95 * np.max(np.abs(ctx.xty))
        law = ctx.law(0)
        path = lasso_homotopy_path(ctx.gram, law, lam)
        assert path.breakpoints.size >= 2
        probes = np.linspace(path.tracked_lo + 1e-6, path.tracked_hi - 1e-6, 200)
        for v in probes:
            if np.min(np.abs(path.breakpoints - v)) < 1e-7:
                continue
            theta = refit_active(ctx, law, v, lam)
            seg = path.segment_at(v)
            assert (theta[0] != 0.0) == path.j_in[seg]
            assert np.count_nonzero(theta) == path.r_count[seg]

    def test_random_instance_segment_midpoints(self):
        ctx = make_ctx(20, 8, 2, beta=(1.5, -2.0))
        lam = 0.3 * np.max(np.abs(ctx.xty))
        for j in range(8):
            law = ctx.law(j)
            path = lasso_homotopy_path(ctx.gram, law, lam)
            mids = (path.edges[:-1] + path.edges[1:]) / 2
            for si, vm in enumerate(mids):
                if not path.tracked_lo <= vm <= path.tracked_hi:
                    continue
                theta = refit_active(ctx, law, vm, lam)
                assert (theta[j] != 0.0) == path.j_in[si]
                assert np.count_nonzero(theta) == path.r_count[si]

    def test_dual_continuity_across_knots(self):
        ctx = make_ctx(30, 6, 3, beta=(2.0, 1.0))
        lam = 0.25 * np.max(np.abs(ctx.xty))
        law = ctx.law(1)
        path = lasso_homotopy_path(ctx.gram, law, lam)
        eps = 1e-7
        for bp in path.breakpoints:
            if not path.tracked_lo < bp < path.tracked_hi:
                continue
            left = refit_active(ctx, law, bp - eps, lam)
            right = refit_active(ctx, law, bp + eps, lam)
            b_l, b_r = law.reconstruct_b(bp - eps), law.reconstruct_b(bp + eps)
            nu_l = b_l - ctx.gram @ left
            nu_r = b_r - ctx.gram @ right
            assert np.max(np.abs(nu_l - nu_r)) < 1e-4  # continuity up to refit tol

    def test_positive_penalty_required(self):
        ctx = make_ctx(20, 4, 4)
        with pytest.raises(DataError):
            lasso_homotopy_path(ctx.gram, ctx.law(0), 0.0)

    def test_work_is_linear_in_knots(self, monkeypatch):
        # every interior knot costs exactly one rank-one active-set update,
        # so the path work is proportional to the knot count by construction
        from fdrpath import exact as exact_mod

        counts = {"updates": 0}
        orig_add = exact_mod._ActiveState.add
        orig_drop = exact_mod._ActiveState.drop

        def counting_add(self, i, sign):
            counts["updates"] += 1
            return orig_add(self, i, sign)

        def counting_drop(self, pos):
            counts["updates"] += 1
            return orig_drop(self, pos)

        monkeypatch.setattr(exact_mod._ActiveState, "add", counting_add)
        monkeypatch.setattr(exact_mod._ActiveState, "drop", counting_drop)
        for seed, lam_frac in ((20, 0.7), (21, 0.3), (22, 0.08)):
            ctx = make_ctx(40, 10, seed, beta=(2.0, -1.0, 1.0))
            lam = lam_frac * np.max(np.abs(ctx.xty))
            for j in range(ctx.p):
                counts["updates"] = 0
                law = ctx.law(j)
                path = lasso_homotopy_path(ctx.gram, law, lam)
                tracked = np.sum(
                    (path.breakpoints >= path.tracked_lo) & (path.breakpoints <= path.tracked_hi)
                )
                assert counts["updates"] == tracked


class TestPathIntegration:
    def _path(self, j_in, r, breaks, r_support=5.0):
        return PiecewiseSelectionPath(
            breakpoints=np.asarray(breaks, dtype=float),
            j_in=np.asarray(j_in, dtype=bool),
            r_count=np.asarray(r, dtype=np.int64),
            v_lo=-r_support, v_hi=r_support,
            tracked_lo=-r_support, tracked_hi=r_support,
        )

    def test_never_selected_integrates_to_zero(self):
        ctx = make_ctx(20, 4, 5)
        law = ctx.law(0)
        path = self._path([False, False], [3, 2], [0.5], r_support=law.r)
        assert hfdr_star_lasso_exact(path, law) == 0.0

    def test_always_selected_with_five(self):
        ctx = make_ctx(20, 4, 6)
        law = ctx.law(0)
        path = self._path([True], [5], [], r_support=law.r)
        assert hfdr_star_lasso_exact(path, law) == pytest.approx(0.2, rel=1e-9)

    def test_matches_mc_oracle(self):
        ctx = make_ctx(30, 8, 7, beta=(1.0, -1.0))
        lam = 0.25 * np.max(np.abs(ctx.xty))
        rng = np.random.default_rng(8)
        for j in (0, 3, 7):
            law = ctx.law(j)
            star, _ = integrate_path(lasso_homotopy_path(ctx.gram, law, lam), law)
            m = 30_000
            vs = law.v_from_t(rng.standard_t(law.dof, m))
            vals = np.empty(m)
            b = ctx.xty.copy()
            th = np.zeros(ctx.p)
            for i, v in enumerate(vs):
                b[j] = law.a + law.c * v
                lasso_cd_gram(ctx.gram, b, lam, th, 100_000, 1e-10)
                nz = np.count_nonzero(th)
                vals[i] = 1.0 / nz if th[j] != 0 else 0.0
            se = vals.std(ddof=1) / np.sqrt(m)
            assert abs(star - vals.mean()) < 4 * se + 1e-4


class TestStepwiseRegions:
    def test_orthonormal_single_step(self):
        ctx = make_ctx(30, 6, 9, orthonormal=True)
        j = 2
        law = ctx.law(j)
        regions = fs_selection_regions(ctx, law, 1)
        others = np.delete(np.abs(ctx.xty), j)
        m = float(others.max())
        # winning set is |v| > m, clipped to the support
        assert regions.shape[0] == 2
        assert regions[0][0] == pytest.approx(-law.r)
        assert regions[0][1] == pytest.approx(-m, rel=1e-9)
        assert regions[1][0] == pytest.approx(m, rel=1e-9)
        assert regions[1][1] == pytest.approx(law.r)

    def test_orthonormal_regions_symmetric(self):
        ctx = make_ctx(40, 5, 10, orthonormal=True)
        law = ctx.law(1)
        for k in (1, 2, 3):
            regions = fs_selection_regions(ctx, law, k)
            flipped = np.sort(-regions, axis=None)
            assert np.allclose(np.sort(regions, axis=None), flipped, rtol=1e-8)

    def test_random_instance_against_stepwise_reruns(self):
        ctx = make_ctx(30, 6, 11, beta=(2.0, -1.0))
        norms = np.linalg.norm(ctx.x, axis=0)
        xt = np.ascontiguousarray((ctx.x / norms).T)
        for j in range(6):
            law = ctx.law(j)
            k = 3
            regions = fs_selection_regions(ctx, law, k)
            probes = np.linspace(-0.995 * law.r, 0.995 * law.r, 500)
            for v in probes:
                inside = any(lo <= v <= hi for lo, hi in regions)
                y_v = law.reconstruct_y(v)
                order, status = forward_stepwise_order(xt, y_v, k, 1e-10)
                assert status == k
                assert (j in order[:k]) == inside, f"j={j} v={v}"

    def test_snapshots_are_nested(self):
        ctx = make_ctx(30, 7, 12)
        law = ctx.law(4)
        snaps = fs_region_snapshots(ctx, law, 4)
        masses = [region_probability(s, law) for s in snaps]
        assert all(b >= a - 1e-12 for a, b in zip(masses, masses[1:]))

    def test_exact_values(self):
        ctx = make_ctx(25, 5, 13)
        law = ctx.law(0)
        assert hfdr_star_fs_exact(np.empty((0, 2)), law, 3) == 0.0
        full = np.array([[-law.r, law.r]])
        assert hfdr_star_fs_exact(full, law, 4) == pytest.approx(0.25, rel=1e-9)

    def test_matches_mc_oracle(self):
        ctx = make_ctx(30, 6, 14, beta=(1.2,))
        norms = np.linalg.norm(ctx.x, axis=0)
        xt = np.ascontiguousarray((ctx.x / norms).T)
        rng = np.random.default_rng(15)
        for j, k in ((0, 2), (4, 3)):
            law = ctx.law(j)
            star = hfdr_star_fs_exact(fs_selection_regions(ctx, law, k), law, k)
            m = 20_000
            vs = law.v_from_t(rng.standard_t(law.dof, m))
            vals = np.empty(m)
            for i, v in enumerate(vs):
                order, _ = forward_stepwise_order(xt, law.reconstruct_y(v), k, 1e-10)
                vals[i] = 1.0 / k if j in order[:k] else 0.0
            se = vals.std(ddof=1) / np.sqrt(m)
            assert abs(star - vals.mean()) < 4 * se + 1e-4
