import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orchardstudio.geometry import BoundingBox, ScoredBox, area, iou, nms


def box(x0, y0, x1, y1):
    return BoundingBox(x0, y0, x1, y1)


def boxes_strategy():
    coord = st.integers(min_value=0, max_value=50)
    side = st.integers(min_value=1, max_value=30)
    return st.builds(
        lambda x, y, w, h: BoundingBox(float(x), float(y), float(x + w), float(y + h)),
        coord, coord, side, side,
    )


def grid_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Independent oracle: count unit cells (by center) inside each box.

    Exact for integer-corner boxes, which is what the strategies generate.
    """
    x_lo = int(min(a.x_min, b.x_min))
    x_hi = int(max(a.x_max, b.x_max))
    y_lo = int(min(a.y_min, b.y_min))
    y_hi = int(max(a.y_max, b.y_max))
    xs = np.arange(x_lo, x_hi) + 0.5
    ys = np.arange(y_lo, y_hi) + 0.5
    gx, gy = np.meshgrid(xs, ys)

    def inside(bb):
        return (gx > bb.x_min) & (gx < bb.x_max) & (gy > bb.y_min) & (gy < bb.y_max)

    in_a = inside(a)
    in_b = inside(b)
    inter = np.count_nonzero(in_a & in_b)
    union = np.count_nonzero(in_a | in_b)
    return inter / union


class TestBoundingBox:
    def test_rejects_zero_area(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 0, 1)
        with pytest.raises(ValueError):
            BoundingBox(0, 5, 1, 5)

    def test_rejects_inverted(self):
        with pytest.raises(ValueError):
            BoundingBox(2, 0, 1, 1)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, float("inf"), 1)
        with pytest.raises(ValueError):
            BoundingBox(float("nan"), 0, 1, 1)

    def test_scored_box_confidence_range(self):
        with pytest.raises(ValueError):
            ScoredBox(box(0, 0, 1, 1), 1.5)
        with pytest.raises(ValueError):
            ScoredBox(box(0, 0, 1, 1), -0.1)


class TestArea:
    def test_unit_square(self):
        assert area(box(0, 0, 1, 1)) == 1.0

    def test_two_square(self):
        assert area(box(0, 0, 2, 2)) == 4.0

    def test_rectangle(self):
        # (3-1) * (4-1) = 6
        assert area(box(1, 1, 3, 4)) == 6.0


class TestIou:
    def test_identical(self):
        b = box(3, 4, 10, 12)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(box(0, 0, 1, 1), box(5, 5, 6, 6)) == 0.0

    def test_partial_overlap(self):
        # intersection 1, union 4 + 4 - 1 = 7
        assert iou(box(0, 0, 2, 2), box(1, 1, 3, 3)) == pytest.approx(1 / 7, abs=1e-12)

    def test_shared_edge_is_zero(self):
        assert iou(box(0, 0, 1, 1), box(1, 0, 2, 1)) == 0.0

    @given(boxes_strategy(), boxes_strategy())
    @settings(max_examples=200)
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0
        assert iou(a, a) == 1.0

    @given(boxes_strategy(), boxes_strategy())
    @settings(max_examples=200)
    def test_matches_grid_counting_oracle(self, a, b):
        assert iou(a, b) == pytest.approx(grid_iou(a, b), abs=1e-3)


class TestNms:
    def test_single_box(self):
        sb = ScoredBox(box(0, 0, 10, 10), 0.5)
        for thr in (0.0, 0.2, 1.0):
            assert nms([sb], thr) == [sb]

    def test_empty(self):
        assert nms([], 0.5) == []

    def test_suppresses_overlap_keeps_disjoint(self):
        b1 = ScoredBox(box(0, 0, 10, 10), 0.9)
        b2 = ScoredBox(box(1, 1, 11, 11), 0.8)  # IoU with b1 = 81/119 > 0.2
        b3 = ScoredBox(box(20, 20, 30, 30), 0.7)
        assert iou(b1.box, b2.box) == pytest.approx(81 / 119)
        assert nms([b1, b2, b3], 0.2) == [b1, b3]

    def test_threshold_one_drops_only_exact_duplicates(self):
        b1 = ScoredBox(box(0, 0, 10, 10), 0.9)
        dup = ScoredBox(box(0, 0, 10, 10), 0.4)
        near = ScoredBox(box(0, 0, 10, 9.5), 0.5)
        assert nms([b1, dup, near], 1.0) == [b1, near]

    def test_confidence_tie_breaks_lexicographically(self):
        a = ScoredBox(box(5, 5, 15, 15), 0.8)
        b = ScoredBox(box(4, 5, 14, 15), 0.8)  # same confidence, smaller x_min
        out = nms([a, b], 0.2)
        assert out[0] == b

    @given(st.lists(st.builds(ScoredBox, boxes_strategy(),
                              st.sampled_from([0.1, 0.25, 0.5, 0.75, 0.9, 1.0])),
                    max_size=12),
           st.sampled_from([0.0, 0.2, 0.5, 0.8, 1.0]))
    @settings(max_examples=200)
    def test_output_invariants(self, scored, thr):
        out = nms(scored, thr)
        # subset of input
        for sb in out:
            assert sb in scored
        # pairwise IoU never above threshold
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                assert iou(out[i].box, out[j].box) <= thr
        # global confidence maximum always kept
        if scored:
            assert max(s.confidence for s in out) == max(s.confidence for s in scored)
        # sorted by descending confidence
        confs = [s.confidence for s in out]
        assert confs == sorted(confs, reverse=True)
