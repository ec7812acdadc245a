"""Geometry primitives and the shared detection/ground-truth types."""

import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from icevision_kit.core import (
    BoundingBox,
    Detection,
    FrameAnnotations,
    GroundTruthSign,
    Source,
    area,
    best_class,
    iou,
    lerp_box,
)
from icevision_kit.taxonomy import parse_code

finite_coord = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


def boxes():
    return st.tuples(finite_coord, finite_coord, finite_coord, finite_coord).map(
        lambda t: BoundingBox(min(t[0], t[2]), min(t[1], t[3]), max(t[0], t[2]), max(t[1], t[3]))
    )


def exact_iou(a: BoundingBox, b: BoundingBox) -> Fraction:
    """Independent IoU oracle in exact rational arithmetic."""
    ax0, ay0, ax1, ay1 = (Fraction(v) for v in (a.x_min, a.y_min, a.x_max, a.y_max))
    bx0, by0, bx1, by1 = (Fraction(v) for v in (b.x_min, b.y_min, b.x_max, b.y_max))
    iw = max(Fraction(0), min(ax1, bx1) - max(ax0, bx0))
    ih = max(Fraction(0), min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return Fraction(0) if union <= 0 else inter / union


class TestBoundingBox:
    def test_inverted_x_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(10, 0, 0, 10)

    def test_inverted_y_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 10, 10, 0)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(float("nan"), 0, 10, 10)

    def test_infinite_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, float("inf"), 10)

    def test_degenerate_allowed(self):
        box = BoundingBox(5, 5, 5, 9)
        assert box.width == 0

    def test_accessors(self):
        box = BoundingBox(0, 10, 30, 50)
        assert box.width == 30
        assert box.height == 40
        assert box.center == (15, 30)


class TestArea:
    def test_square(self):
        assert area(BoundingBox(0, 0, 10, 10)) == 100

    def test_degenerate(self):
        assert area(BoundingBox(5, 5, 5, 9)) == 0

    def test_below_ignore_bound(self):
        assert area(BoundingBox(0, 0, 9, 9)) == 81


class TestIou:
    def test_identical(self):
        box = BoundingBox(0, 0, 10, 10)
        assert iou(box, box) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)) == 0.0

    def test_half_overlap(self):
        # intersection 50, union 150
        value = iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 15, 10))
        assert value == pytest.approx(1 / 3, abs=1e-15)

    def test_degenerate_pair_zero(self):
        a = BoundingBox(0, 0, 0, 10)
        assert iou(a, a) == 0.0

    @given(boxes(), boxes())
    def test_symmetric_and_bounded(self, a, b):
        ab, ba = iou(a, b), iou(b, a)
        assert ab == ba
        assert 0.0 <= ab <= 1.0

    @given(boxes(), boxes())
    def test_matches_exact_rational_oracle(self, a, b):
        expected = float(exact_iou(a, b))
        assert iou(a, b) == pytest.approx(expected, abs=1e-9)

    @given(boxes(), finite_coord, finite_coord)
    def test_translation_invariant(self, a, dx, dy):
        b = BoundingBox(a.x_min + 10, a.y_min + 5, a.x_max + 10, a.y_max + 5)
        a2 = BoundingBox(a.x_min + dx, a.y_min + dy, a.x_max + dx, a.y_max + dy)
        b2 = BoundingBox(b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy)
        assert iou(a, b) == pytest.approx(iou(a2, b2), abs=1e-9)


class TestLerpBox:
    def test_endpoints(self):
        a = BoundingBox(0, 0, 30, 30)
        b = BoundingBox(30, 30, 60, 60)
        assert lerp_box(a, b, 0.0) == a
        assert lerp_box(a, b, 1.0) == b

    def test_one_third(self):
        a = BoundingBox(0, 0, 30, 30)
        b = BoundingBox(30, 30, 60, 60)
        mid = lerp_box(a, b, 1 / 3)
        for got, want in zip(
            (mid.x_min, mid.y_min, mid.x_max, mid.y_max), (10, 10, 40, 40)
        ):
            assert got == pytest.approx(want, abs=1e-12)

    def test_constant(self):
        a = BoundingBox(1, 2, 3, 4)
        assert lerp_box(a, a, 0.7) == a

    def test_t_out_of_range(self):
        a = BoundingBox(0, 0, 1, 1)
        with pytest.raises(ValueError):
            lerp_box(a, a, -0.1)
        with pytest.raises(ValueError):
            lerp_box(a, a, 1.1)


class TestBestClass:
    def test_plain_argmax(self):
        dist = {parse_code("3.24"): 0.7, parse_code("5.19.1"): 0.3}
        assert best_class(dist) == (parse_code("3.24"), 0.7)

    def test_tie_prefers_canonical_order(self):
        dist = {parse_code("3.25"): 0.5, parse_code("3.24"): 0.5}
        assert best_class(dist)[0] == parse_code("3.24")

    def test_tie_prefers_shorter_prefix(self):
        dist = {parse_code("3.24"): 0.5, parse_code("3"): 0.5}
        assert best_class(dist)[0] == parse_code("3")


class TestDetection:
    def test_confidence_derived(self):
        det = Detection(
            frame_index=0,
            box=BoundingBox(0, 0, 10, 10),
            class_distribution={parse_code("3.24"): 0.8},
        )
        assert det.confidence == 0.8
        assert det.code == parse_code("3.24")
        assert det.source is Source.DETECTED

    def test_confidence_must_match_max(self):
        with pytest.raises(ValueError):
            Detection(
                frame_index=0,
                box=BoundingBox(0, 0, 10, 10),
                class_distribution={parse_code("3.24"): 0.8},
                confidence=0.5,
            )

    def test_distribution_sum_capped(self):
        with pytest.raises(ValueError):
            Detection(
                frame_index=0,
                box=BoundingBox(0, 0, 10, 10),
                class_distribution={parse_code("3.24"): 0.7, parse_code("3.25"): 0.5},
            )

    def test_negative_probability_rejected(self):
        with pytest.raises(ValueError):
            Detection(
                frame_index=0,
                box=BoundingBox(0, 0, 10, 10),
                class_distribution={parse_code("3.24"): -0.1},
            )

    def test_negative_frame_rejected(self):
        with pytest.raises(ValueError):
            Detection(
                frame_index=-1,
                box=BoundingBox(0, 0, 10, 10),
                class_distribution={parse_code("3.24"): 1.0},
            )


class TestFrameAnnotations:
    def test_signs_must_share_frame(self):
        sign = GroundTruthSign(
            frame_index=3, box=BoundingBox(0, 0, 10, 10), code=parse_code("3.24")
        )
        with pytest.raises(ValueError):
            FrameAnnotations(frame_index=4, signs=(sign,))

    def test_annotated_empty_is_distinct(self):
        empty = FrameAnnotations(frame_index=0, signs=())
        assert empty.annotated and not empty.signs
