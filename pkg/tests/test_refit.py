import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from celledge.annotations import CellClass
from celledge.refit import (
    FitGroup,
    FitParams,
    interpolate_gaps,
    local_linear_fit,
    normalized_weights,
    plan_groups,
    refit_closed_curve,
    select_bandwidth,
    select_group_size,
    to_local_frame,
)


def wrapped_gaps(points):
    return np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1)


class TestInterpolateGaps:
    def test_long_edge_subdivided(self):
        # d = 5, step = 1: smallest m with 5/m < 1 is 6, so 5 inserted points
        loop = np.array([[0.0, 0.0], [5.0, 0.0], [5.0, 3.0], [0.0, 3.0]])
        out = interpolate_gaps(loop, 1.0)
        long_edge = out[(out[:, 1] == 0.0)]
        assert len(long_edge) == 7  # both endpoints plus 5 inserted
        spacing = np.diff(long_edge[:, 0])
        np.testing.assert_allclose(spacing, 5.0 / 6.0)

    def test_threshold_gap_untouched(self):
        side = 1.5
        loop = np.array([[0, 0], [side, 0], [side, side], [0, side]], dtype=float)
        out = interpolate_gaps(loop, 1.0)
        assert len(out) == 4

    def test_wraparound_pair_processed(self):
        # only the closing edge (last -> first) is long
        loop = np.array([[0.0, 0.0], [1.5, 0.0], [1.5, 1.5], [0.0, 1.5], [0.0, 8.0]])
        out = interpolate_gaps(loop, 1.0)
        closing = out[np.isclose(out[:, 0], 0.0)]
        assert len(closing) > 2

    @given(st.integers(0, 500), st.floats(0.5, 3.0))
    @settings(max_examples=40, deadline=None)
    def test_gap_bounds_and_subsequence(self, seed, step):
        rng = np.random.default_rng(seed)
        n = rng.integers(3, 20)
        thetas = np.sort(rng.uniform(0, 2 * math.pi, size=n))
        assume(np.diff(thetas).min() > 1e-3)
        pts = np.stack([40 * np.cos(thetas), 40 * np.sin(thetas)], axis=1)
        out = interpolate_gaps(pts, step)
        assert wrapped_gaps(out).max() < 2 * step + 1e-9
        # processed pairs end below step
        for i in range(n):
            d = np.linalg.norm(pts[(i + 1) % n] - pts[i])
            if d > 2 * step:
                j = np.flatnonzero(np.all(out == pts[i], axis=1))[0]
                assert np.linalg.norm(out[(j + 1) % len(out)] - out[j]) < step
        # originals survive as a subsequence
        positions = [np.flatnonzero(np.all(out == p, axis=1))[0] for p in pts]
        assert positions == sorted(positions)


class TestPlanGroups:
    def test_stitched_example(self):
        plan = plan_groups(20, 5, "stitched", overlap=0.5)
        assert (plan.stride, plan.group_count, plan.surplus) == (3.0, 7, 1.0)
        assert plan.radius == 2

    def test_smooth_closed_collapses_stride(self):
        plan = plan_groups(20, 5, "smooth_closed")
        assert plan.stride == 1.0
        assert plan.group_count == 20
        assert plan.surplus == 0.0

    def test_even_group_size_rejected(self):
        with pytest.raises(ValueError):
            plan_groups(20, 6, "smooth_closed")

    def test_fewer_points_than_group_size(self):
        plan = plan_groups(5, 7, "smooth_closed")
        assert plan.single_group
        assert plan.group_count == 1
        assert plan.group_indices(0).tolist() == [0, 1, 2, 3, 4]

    def test_last_group_absorbs_surplus(self):
        plan = plan_groups(20, 5, "stitched", overlap=0.5)
        spans = [plan.group_span(k) for k in range(plan.group_count)]
        assert spans[:-1] == [4] * 6
        assert spans[-1] == 3  # shortened by the surplus point

    def test_groups_cover_loop(self):
        plan = plan_groups(20, 5, "stitched", overlap=1.0)
        covered = set()
        for k in range(plan.group_count):
            covered.update(plan.group_indices(k).tolist())
        assert covered == set(range(20))

    @given(st.integers(10, 5000), st.integers(1, 25), st.integers(0, 200))
    @settings(max_examples=100, deadline=None)
    def test_identities(self, n_points, half, seed):
        group_size = 2 * half + 1
        assume(n_points >= group_size)
        radius = (group_size - 1) // 2

        plan = plan_groups(n_points, group_size, "smooth_closed")
        assert plan.stride == 1.0 and plan.group_count == n_points and plan.surplus == 0.0

        rng = np.random.default_rng(seed)
        overlap = rng.integers(1, 2 * radius) / 2.0
        plan = plan_groups(n_points, group_size, "stitched", overlap)
        assert plan.stride == 2 * (radius - overlap)
        assert plan.group_count == math.ceil(n_points / plan.stride)
        assert plan.surplus == plan.stride * plan.group_count - n_points


class TestLocalFrame:
    def test_identity_chord(self):
        frame, local = to_local_frame(np.array([[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]]))
        np.testing.assert_allclose(local, [[0, 0], [2, 0], [4, 0]], atol=1e-12)

    def test_vertical_chord_rotates(self):
        frame, local = to_local_frame(np.array([[0.0, 0.0], [0.0, 4.0]]))
        np.testing.assert_allclose(local[-1], [4.0, 0.0], atol=1e-12)
        assert np.linalg.det(frame.rotation) == pytest.approx(1.0)

    def test_coincident_endpoints_raise(self):
        with pytest.raises(ValueError):
            to_local_frame(np.array([[1.0, 1.0], [5.0, 3.0], [1.0, 1.0]]))

    @given(st.integers(0, 1000))
    @settings(max_examples=50)
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-100, 100, size=(8, 2))
        assume(np.linalg.norm(pts[-1] - pts[0]) > 1e-6)
        frame, local = to_local_frame(pts)
        np.testing.assert_allclose(frame.to_global(local), pts, atol=1e-9)
        np.testing.assert_allclose(local[0], [0, 0], atol=1e-9)
        assert abs(local[-1][1]) < 1e-9


class TestBandwidth:
    def test_nucleus_group_size(self):
        assert select_group_size(CellClass.NUCLEUS, 25, FitParams()) == 3

    def test_cytoplasm_group_size_odd_adjusted(self):
        assert select_group_size(CellClass.CYTOPLASM, 400, FitParams()) == 11

    def test_collinear_nucleus_bandwidth(self):
        # sigma = 0, so only floor(step * 3) / 6 = 0.5 remains
        assert select_bandwidth(np.zeros(3), 3, CellClass.NUCLEUS, FitParams()) == 0.5

    def test_sigma_two_cytoplasm(self):
        y = np.array([3.0, 3.0, -3.0, -3.0, 0.0, 0.0, 0.0, 0.0, 0.0])  # std exactly 2
        h = select_bandwidth(y, 9, CellClass.CYTOPLASM, FitParams())
        assert h == pytest.approx(10 * (2 * 2 * 3) + 1.5)

    def test_zero_bandwidth_falls_back_to_step(self):
        params = FitParams(step=0.1)
        assert select_bandwidth(np.zeros(5), 5, CellClass.NUCLEUS, params) == 0.1


class TestWeights:
    def test_boosted_positions(self):
        xs = np.arange(7.0)
        group = FitGroup(xs, np.zeros(7), 2.0, (1, 5))
        weights = normalized_weights(group, 3.0)
        plain = norm.pdf((3.0 - xs) / 2.0) / 2.0
        expected = plain.copy()
        expected[[1, 5]] = 1.5 * plain.max()
        np.testing.assert_allclose(weights, expected / expected.sum(), atol=1e-12)

    @given(st.integers(0, 500), st.floats(-10, 10))
    @settings(max_examples=50)
    def test_weights_sum_to_one(self, seed, target):
        rng = np.random.default_rng(seed)
        n = rng.integers(3, 25)
        xs = np.sort(rng.uniform(0, 20, size=n))
        group = FitGroup(xs, rng.normal(size=n), rng.uniform(0.2, 30), (0, n - 1))
        assert normalized_weights(group, target).sum() == pytest.approx(1.0, abs=1e-12)

    def test_underflow_falls_back_to_uniform(self):
        group = FitGroup(np.arange(5.0), np.ones(5), 1e-3, (0, 4))
        weights = normalized_weights(group, 1e6)
        np.testing.assert_allclose(weights, 0.2)


def brute_force_fit(xs, ys, weights, iterations=40, grid=17):
    """Grid-refinement minimizer of the weighted squared loss.

    Runs in weighted-centered coordinates (intercept at the weighted mean
    abscissa, slope scaled by the weighted std) where the loss surface is
    isotropic, so halving boxes provably keep the optimum inside.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    mean_x = (w * xs).sum() / w.sum()
    scale_x = math.sqrt((w * (xs - mean_x) ** 2).sum() / w.sum())
    z = (xs - mean_x) / scale_x

    def loss(u, v):
        resid = ys[None, None, :] - u[:, :, None] - v[:, :, None] * z[None, None, :]
        return (w[None, None, :] * resid**2).sum(axis=2)

    width = float(np.abs(ys).max() + 1.0)
    cu = cv = 0.0
    for _ in range(iterations):
        us = cu + np.linspace(-width, width, grid)
        vs = cv + np.linspace(-width, width, grid)
        values = loss(us[:, None].repeat(grid, 1), vs[None, :].repeat(grid, 0))
        iu, iv = np.unravel_index(np.argmin(values), values.shape)
        cu, cv = us[iu], vs[iv]
        width /= 2.0
    slope = cv / scale_x
    return cu - slope * mean_x, slope


class TestLocalLinearFit:
    def test_exact_line_reproduced(self):
        xs = np.arange(7.0)
        group = FitGroup(xs, 2 * xs + 1, 3.0, (1, 5))
        for target in (-2.0, 0.0, 3.0, 9.5):
            b0, b1 = local_linear_fit(group, target)
            assert b0 == pytest.approx(1.0, abs=1e-9)
            assert b1 == pytest.approx(2.0, abs=1e-9)

    def test_flat_kernel_matches_lstsq_oracle(self):
        # huge bandwidth flattens the kernel; the solve must agree with an
        # independent least-squares path given the same (boosted) weights
        rng = np.random.default_rng(4)
        xs = np.sort(rng.uniform(0, 10, size=9))
        ys = rng.normal(size=9)
        group = FitGroup(xs, ys, 1e9, (0, 8))
        b0, b1 = local_linear_fit(group, 5.0)
        weights = normalized_weights(group, 5.0)
        design = np.stack([np.ones(9), xs], axis=1)
        scaled = np.sqrt(weights)
        expected = np.linalg.lstsq(design * scaled[:, None], ys * scaled, rcond=None)[0]
        assert b0 == pytest.approx(expected[0], abs=1e-9)
        assert b1 == pytest.approx(expected[1], abs=1e-9)

    def test_random_groups_match_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = rng.integers(5, 15)
            xs = np.sort(rng.uniform(0, 10, size=n))
            ys = rng.uniform(-8, 8, size=n)
            h = rng.uniform(1.0, 15.0)
            boost = (int(rng.integers(0, n)), int(rng.integers(0, n)))
            target = rng.uniform(xs[0], xs[-1])
            group = FitGroup(xs, ys, h, boost)
            b0, b1 = local_linear_fit(group, target)
            weights = normalized_weights(group, target)
            e0, e1 = brute_force_fit(xs, ys, weights)
            assert b0 == pytest.approx(e0, abs=1e-6)
            assert b1 == pytest.approx(e1, abs=1e-6)

    def test_degenerate_abscissae_give_weighted_mean(self):
        group = FitGroup(np.full(5, 2.0), np.array([1.0, 2.0, 3.0, 4.0, 5.0]),
                         1.0, (0, 4))
        b0, b1 = local_linear_fit(group, 2.0)
        weights = normalized_weights(group, 2.0)
        assert b1 == 0.0
        assert b0 == pytest.approx((weights * group.local_y).sum())


def circle(n, radius=50.0, center=(256.0, 256.0)):
    thetas = np.linspace(0, 2 * math.pi, n, endpoint=False)
    return np.stack([center[0] + radius * np.cos(thetas),
                     center[1] + radius * np.sin(thetas)], axis=1)


class TestRefitClosedCurve:
    def test_straight_runs_unchanged(self):
        # a large dense square: points away from corners sit on exact lines
        side = np.linspace(0, 40, 41)
        loop = np.concatenate([
            np.stack([side, np.zeros(41)], axis=1)[:-1],
            np.stack([np.full(41, 40.0), side], axis=1)[:-1],
            np.stack([side[::-1], np.full(41, 40.0)], axis=1)[:-1],
            np.stack([np.zeros(41), side[::-1]], axis=1)[:-1],
        ])
        out = refit_closed_curve(loop, CellClass.NUCLEUS, FitParams())
        size = select_group_size(CellClass.NUCLEUS, len(loop), FitParams())
        guard = size // 2 + 1
        corner_dist = np.minimum.reduce([
            np.linalg.norm(loop - c, axis=1)
            for c in ([0, 0], [40, 0], [40, 40], [0, 40])])
        interior = corner_dist > guard
        np.testing.assert_allclose(out[interior], loop[interior], atol=1e-6)

    def test_clean_circle_stays_put(self):
        dense = interpolate_gaps(circle(64), 1.0)
        out = refit_closed_curve(dense, CellClass.CYTOPLASM, FitParams())
        radii = np.linalg.norm(out - [256, 256], axis=1)
        assert np.abs(radii - 50.0).max() < 0.5

    def test_noisy_circle_improves(self):
        rng = np.random.default_rng(12)
        thetas = np.linspace(0, 2 * math.pi, 256, endpoint=False)
        radii = 50.0 + rng.normal(0, 1.0, size=256)
        noisy = np.stack([256 + radii * np.cos(thetas),
                          256 + radii * np.sin(thetas)], axis=1)
        out = refit_closed_curve(noisy, CellClass.CYTOPLASM, FitParams())
        rms_before = np.sqrt(((radii - 50.0) ** 2).mean())
        out_r = np.linalg.norm(out - [256, 256], axis=1)
        rms_after = np.sqrt(((out_r - 50.0) ** 2).mean())
        assert rms_after < rms_before

    def test_point_count_preserved_smooth_closed(self):
        dense = interpolate_gaps(circle(40, radius=30), 1.0)
        out = refit_closed_curve(dense, CellClass.NUCLEUS, FitParams())
        assert len(out) == len(dense)

    def test_tiny_polygon_single_group(self):
        loop = np.array([[0.0, 0.0], [6.0, 0.5], [11.0, 4.0], [6.0, 8.0], [0.0, 7.0]])
        out = refit_closed_curve(loop, CellClass.CYTOPLASM, FitParams())
        assert out.shape == loop.shape
        assert np.all(np.isfinite(out))

    def test_stitched_mode_resamples(self):
        dense = interpolate_gaps(circle(64), 1.0)
        params = FitParams(mode="stitched", overlap=2.0)
        out = refit_closed_curve(dense, CellClass.CYTOPLASM, params)
        radii = np.linalg.norm(out - [256, 256], axis=1)
        assert np.abs(radii - 50.0).max() < 1.0
        # spliced segments stay connected
        assert wrapped_gaps(out).max() < 3 * params.step

    def test_stitched_noisy_circle_improves(self):
        rng = np.random.default_rng(3)
        thetas = np.linspace(0, 2 * math.pi, 320, endpoint=False)
        radii = 50.0 + rng.normal(0, 1.0, size=320)
        noisy = np.stack([256 + radii * np.cos(thetas),
                          256 + radii * np.sin(thetas)], axis=1)
        params = FitParams(mode="stitched", overlap=1.5)
        out = refit_closed_curve(noisy, CellClass.CYTOPLASM, params)
        out_r = np.linalg.norm(out - [256, 256], axis=1)
        assert np.sqrt(((out_r - 50.0) ** 2).mean()) < np.sqrt(((radii - 50.0) ** 2).mean())

    def test_stitched_fractional_stride_rejected(self):
        dense = interpolate_gaps(circle(64), 1.0)
        params = FitParams(mode="stitched", overlap=1.3)
        with pytest.raises(ValueError, match="stride"):
            refit_closed_curve(dense, CellClass.CYTOPLASM, params)

    def test_smooth_closed_matches_scalar_api(self):
        # the vectorized path must agree with composing the public pieces
        rng = np.random.default_rng(21)
        n = 60
        thetas = np.linspace(0, 2 * math.pi, n, endpoint=False)
        radii = 30.0 + rng.normal(0, 0.8, size=n)
        pts = np.stack([80 + radii * np.cos(thetas), 80 + radii * np.sin(thetas)], axis=1)
        params = FitParams()
        cls = CellClass.CYTOPLASM
        out = refit_closed_curve(pts, cls, params)

        size = select_group_size(cls, n, params)
        radius = (size - 1) // 2
        for j in range(0, n, 7):
            idx = [(j + k) % n for k in range(-radius, radius + 1)]
            frame, local = to_local_frame(pts[idx])
            bandwidth = select_bandwidth(local[:, 1], size, cls, params)
            group = FitGroup(local[:, 0], local[:, 1], bandwidth,
                             (radius - 1, radius + 1))
            target = local[radius, 0]
            b0, b1 = local_linear_fit(group, target)
            expected = frame.to_global(np.array([target, b0 + b1 * target]))
            np.testing.assert_allclose(out[j], expected, atol=1e-9)

    def test_degenerate_chord_passes_through(self):
        # wrapped neighbors of index 0 coincide; its group chord collapses
        pts = np.array([[0.0, 0.0], [2.0, 2.0], [4.0, 0.0], [2.0, 2.0]])
        out = refit_closed_curve(pts, CellClass.NUCLEUS, FitParams())
        np.testing.assert_array_equal(out[0], pts[0])
        assert np.all(np.isfinite(out))
