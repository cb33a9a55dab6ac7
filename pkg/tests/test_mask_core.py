import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from occluseg.exceptions import DegeneratePolygonWarning, DimensionError, SchemaError, ValidationError
from occluseg.mask_core import (
    BinaryMask,
    MultiClassMask,
    Polygon,
    area,
    centroid,
    intersect,
    iou,
    multiclass_split,
    rasterize,
    rle_decode,
    rle_encode,
    safe_point,
    subtract,
    union,
)

from conftest import rect
from oracles import brute_raster


def naive_runs(grid):
    runs, cur, n = [], False, 0
    for v in np.asarray(grid, dtype=bool).ravel().tolist():
        if v == cur:
            n += 1
        else:
            runs.append(n)
            cur, n = v, 1
    runs.append(n)
    return runs


grids = st.integers(1, 12).flatmap(
    lambda h: st.integers(1, 12).flatmap(lambda w: arrays(bool, (h, w)))
)


class TestRle:
    def test_empty(self):
        assert rle_encode(np.zeros((2, 2))).runs == (4,)

    def test_full(self):
        assert rle_encode(np.ones((2, 2))).runs == (0, 4)

    def test_single_pixel(self):
        g = np.zeros((2, 2))
        g[0, 1] = 1
        assert rle_encode(g).runs == (1, 1, 2)

    def test_zero_area(self):
        with pytest.raises(DimensionError):
            rle_encode(np.zeros((0, 3)))

    @given(grids)
    def test_round_trip_and_naive_runs(self, g):
        m = rle_encode(g)
        assert np.array_equal(rle_decode(m), g)
        assert list(m.runs) == naive_runs(g)
        assert sum(m.runs) == g.size
        assert all(r > 0 for r in m.runs[1:])

    def test_non_canonical_rejected(self):
        with pytest.raises(ValidationError):
            BinaryMask(2, 2, (1, 0, 3))
        with pytest.raises(ValidationError):
            BinaryMask(2, 2, (1, 1))

    def test_json(self):
        m = rect(4, 5, 1, 3, 0, 2)
        doc = m.to_json()
        assert doc == {"size": [4, 5], "counts": list(m.runs)}
        assert BinaryMask.from_json(doc) == m
        with pytest.raises(SchemaError, match="counts"):
            BinaryMask.from_json({"size": [4, 5]})


class TestSetOps:
    def test_examples(self):
        a = rect(10, 10, 0, 5, 0, 10)
        b = rect(10, 10, 3, 8, 0, 10)
        e = BinaryMask.empty(10, 10)
        assert intersect(a, e) == e
        assert subtract(a, a) == e
        assert area(intersect(a, b)) == 20
        assert area(union(a, b)) == 80
        assert iou(a, b) == 0.25
        assert iou(a, a) == 1.0
        assert iou(rect(10, 10, 0, 2, 0, 2), rect(10, 10, 5, 6, 5, 6)) == 0.0

    def test_errors(self):
        with pytest.raises(DimensionError):
            intersect(BinaryMask.empty(2, 2), BinaryMask.empty(2, 3))
        with pytest.raises(ValueError):
            iou(BinaryMask.empty(2, 2), BinaryMask.empty(2, 2))

    @given(st.data())
    def test_properties(self, data):
        h = data.draw(st.integers(1, 10))
        w = data.draw(st.integers(1, 10))
        ga = data.draw(arrays(bool, (h, w)))
        gb = data.draw(arrays(bool, (h, w)))
        a, b = rle_encode(ga), rle_encode(gb)
        assert area(union(a, b)) == area(a) + area(b) - area(intersect(a, b))
        assert np.array_equal(subtract(a, b).dense, ga & ~gb)
        if a.area or b.area:
            assert iou(a, b) == iou(b, a)
        if a.area:
            assert iou(a, a) == 1.0


class TestRasterize:
    def test_rectangle_nine_pixels(self):
        m = rasterize(Polygon([(1, 1), (4, 1), (4, 4), (1, 4)]), 5, 5)
        assert m.area == 9
        assert np.array_equal(np.argwhere(m.dense).min(0), [1, 1])
        assert np.array_equal(np.argwhere(m.dense).max(0), [3, 3])

    def test_outside_canvas(self):
        with pytest.warns(DegeneratePolygonWarning):
            m = rasterize(Polygon([(20, 20), (30, 20), (30, 30)]), 5, 5)
        assert m.area == 0

    def test_full_canvas(self):
        m = rasterize(Polygon([(0, 0), (5, 0), (5, 4), (0, 4)]), 4, 5)
        assert m == BinaryMask.full(4, 5)

    def test_degenerate_line(self):
        with pytest.warns(DegeneratePolygonWarning):
            m = rasterize(Polygon([(0, 0), (3, 3), (1, 1)]), 5, 5)
        assert m.area == 0

    def test_too_few_vertices(self):
        with pytest.raises(ValidationError):
            Polygon([(0, 0), (1, 1)])

    def test_edge_on_center_tie(self):
        # left edge through centers x=1.5 is in, right edge through x=3.5 is out
        m = rasterize(Polygon([(1.5, 0), (3.5, 0), (3.5, 1), (1.5, 1)]), 1, 5)
        assert m.dense.tolist() == [[False, True, True, False, False]]
        # top edge on the center row is in, bottom edge is out
        m = rasterize(Polygon([(0, 0.5), (1, 0.5), (1, 1.5), (0, 1.5)]), 3, 1)
        assert m.dense[:, 0].tolist() == [True, False, False]

    @settings(max_examples=150, deadline=None)
    @given(st.lists(st.tuples(st.integers(-8, 40), st.integers(-8, 40)), min_size=3, max_size=7),
           st.integers(0, 3))
    def test_matches_point_in_polygon_oracle(self, pts, quarter):
        verts = [(x / 2 + quarter * 0.25, y / 2) for x, y in pts]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegeneratePolygonWarning)
            m = rasterize(Polygon(verts), 16, 17)
        assert np.array_equal(m.dense, brute_raster(verts, 16, 17))

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 24), st.integers(0, 24)), min_size=3, max_size=6),
           st.integers(-6, 6), st.integers(-6, 6))
    def test_translation_consistent(self, pts, dx, dy):
        verts = [(x / 2 + 7, y / 2 + 7) for x, y in pts]
        poly = Polygon(verts)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegeneratePolygonWarning)
            base = rasterize(poly, 30, 30).dense
            moved = rasterize(poly.translated(dx, dy), 30, 30).dense
        # canvas big enough that nothing is clipped
        assert np.array_equal(np.roll(base, (dy, dx), axis=(0, 1)), moved)


class TestCentroid:
    def test_single_pixel(self):
        m = rect(6, 6, 3, 4, 4, 5)
        assert centroid(m) == (4.5, 3.5)
        assert safe_point(m) == (4, 3)

    def test_symmetric_square(self):
        m = rect(10, 10, 2, 6, 3, 7)
        assert centroid(m) == (5.0, 4.0)

    def test_u_shape(self):
        g = np.zeros((9, 9), dtype=bool)
        g[1:8, 1:3] = True  # left arm
        g[1:8, 6:8] = True  # right arm
        g[7:8, 1:8] = True  # base
        m = rle_encode(g)
        cx, cy = centroid(m)
        assert not g[int(math.floor(cy)), int(math.floor(cx))]
        # brute force: nearest foreground center, row-major tie-break
        best = None
        for r in range(9):
            for c in range(9):
                if g[r, c]:
                    d = (c + 0.5 - cx) ** 2 + (r + 0.5 - cy) ** 2
                    if best is None or d < best[0]:
                        best = (d, c, r)
        assert safe_point(m) == (best[1], best[2])
        x, y = safe_point(m)
        assert g[y, x]

    def test_empty(self):
        with pytest.raises(ValueError):
            centroid(BinaryMask.empty(3, 3))


class TestMultiClass:
    def test_all_background(self):
        v, o = multiclass_split(MultiClassMask(np.zeros((3, 3))))
        assert v.area == 0 and o.area == 0

    def test_all_visible(self):
        v, o = multiclass_split(MultiClassMask(np.ones((3, 3))))
        assert v == BinaryMask.full(3, 3) and o.area == 0

    def test_checkerboard(self):
        lab = 1 + (np.indices((4, 5)).sum(0) % 2)
        v, o = multiclass_split(MultiClassMask(lab))
        assert np.array_equal(v.dense, ~o.dense)
        assert np.array_equal(v.dense, lab == 1)

    def test_bad_label(self):
        with pytest.raises(ValidationError):
            multiclass_split(MultiClassMask(np.full((2, 2), 3)))

    @given(arrays(np.int64, (6, 7), elements=st.integers(0, 2)))
    def test_partition(self, lab):
        v, o = multiclass_split(MultiClassMask(lab))
        assert not (v.dense & o.dense).any()
        assert np.array_equal(v.dense | o.dense, lab != 0)
        assert MultiClassMask.from_masks(v, o).labels.tolist() == lab.tolist()
