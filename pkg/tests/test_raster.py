import logging

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import label

from celledge.annotations import AnnotationSet, CellClass, PolygonAnnotation
from celledge.raster import bresenham_line, rasterize_loop, rasterize_set

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def square(x0, y0, side):
    return np.array([[x0, y0], [x0 + side, y0],
                     [x0 + side, y0 + side], [x0, y0 + side]], dtype=float)


class TestBresenham:
    def test_endpoints_included(self):
        pts = bresenham_line(1, 1, 6, 3)
        assert pts[0] == (1, 1) and pts[-1] == (6, 3)

    def test_eight_connected_steps(self):
        pts = bresenham_line(0, 0, 7, 5)
        steps = np.abs(np.diff(np.array(pts), axis=0))
        assert steps.max() <= 1

    def test_reversal_same_pixels(self):
        fwd = set(bresenham_line(2, 9, 11, 4))
        rev = set(bresenham_line(11, 4, 2, 9))
        assert fwd == rev


class TestRasterizeLoop:
    def test_square_perimeter_count(self):
        # 9x9 pixel outline: 4 * 9 - 4 corners = 32
        edge_map = rasterize_loop(square(2, 2, 8), (16, 16))
        assert edge_map.bits.sum() == 32

    def test_subpixel_coords_round(self):
        shifted = square(2, 2, 8) + 0.3
        a = rasterize_loop(shifted, (16, 16))
        b = rasterize_loop(np.round(shifted), (16, 16))
        np.testing.assert_array_equal(a.bits, b.bits)

    def test_out_of_bounds_clamped(self):
        loop = np.array([[-5.0, -5.0], [30.0, -5.0], [30.0, 30.0], [-5.0, 30.0]])
        edge_map = rasterize_loop(loop, (16, 16))
        border = np.zeros((16, 16), dtype=bool)
        border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
        np.testing.assert_array_equal(edge_map.bits, border)

    def test_single_pixel_collapse_warns(self, caplog):
        loop = np.array([[3.2, 3.2], [3.3, 3.3], [3.1, 3.4]])
        with caplog.at_level(logging.WARNING):
            edge_map = rasterize_loop(loop, (8, 8))
        assert edge_map.bits.sum() == 1
        assert edge_map.bits[3, 3]
        assert any("single pixel" in record.message for record in caplog.records)

    def test_loop_is_closed_and_connected(self):
        rng = np.random.default_rng(8)
        thetas = np.sort(rng.uniform(0, 2 * np.pi, size=11))
        loop = np.stack([24 + 15 * np.cos(thetas), 24 + 15 * np.sin(thetas)], axis=1)
        edge_map = rasterize_loop(loop, (48, 48))
        _, n_components = label(edge_map.bits, structure=EIGHT_CONNECTED)
        assert n_components == 1
        # closed: no endpoints, every pixel has at least 2 edge neighbors
        padded = np.pad(edge_map.bits, 1)
        ys, xs = np.nonzero(padded)
        for y, x in zip(ys, xs):
            neighborhood = padded[y - 1:y + 2, x - 1:x + 2]
            assert neighborhood.sum() >= 3  # self plus two neighbors

    @given(st.integers(0, 300), st.integers(-3, 3), st.integers(-3, 3))
    @settings(max_examples=30, deadline=None)
    def test_translation_equivariance(self, seed, dx, dy):
        rng = np.random.default_rng(seed)
        thetas = np.sort(rng.uniform(0, 2 * np.pi, size=9))
        loop = np.stack([20 + 9 * np.cos(thetas), 20 + 9 * np.sin(thetas)], axis=1)
        base = rasterize_loop(loop, (40, 40)).bits
        moved = rasterize_loop(loop + [dx, dy], (40, 40)).bits
        np.testing.assert_array_equal(np.roll(base, (dy, dx), axis=(0, 1)), moved)


class TestRasterizeSet:
    def _set(self, loops):
        polys = [PolygonAnnotation(loop, CellClass.CYTOPLASM, f"cytoplasm-{i}")
                 for i, loop in enumerate(loops)]
        return AnnotationSet("x.png", (32, 32), polys)

    def test_disjoint_union_adds(self):
        a, b = square(2, 2, 6), square(16, 16, 6)
        merged = rasterize_set(self._set([a, b]))
        total = rasterize_loop(a, (32, 32)).bits.sum() + rasterize_loop(b, (32, 32)).bits.sum()
        assert merged.bits.sum() == total

    def test_identical_loops_idempotent(self):
        a = square(4, 4, 9)
        merged = rasterize_set(self._set([a, a]))
        assert merged.bits.sum() == rasterize_loop(a, (32, 32)).bits.sum()

    def test_empty_set(self):
        merged = rasterize_set(self._set([]))
        assert merged.bits.sum() == 0

    def test_override_loops(self):
        original = square(2, 2, 6)
        corrected = square(3, 3, 6)
        merged = rasterize_set(self._set([original]), [corrected])
        np.testing.assert_array_equal(
            merged.bits, rasterize_loop(corrected, (32, 32)).bits)
