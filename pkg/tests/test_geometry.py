import math

import pytest
from hypothesis import given, strategies as st

from docground.geometry import BBox, QuantBox, dequantize, iou, quantize, union_box


def test_iou_half_shifted_squares():
    # intersection 0.25*0.25, union 2*0.25 - 0.0625
    a = BBox(0.0, 0.0, 0.5, 0.5)
    b = BBox(0.25, 0.25, 0.75, 0.75)
    assert iou(a, b) == pytest.approx(0.0625 / 0.4375)


def test_iou_contained_box_is_area_ratio():
    outer = BBox(0.0, 0.0, 0.4, 0.5)
    inner = BBox(0.1, 0.1, 0.3, 0.2)
    assert iou(outer, inner) == pytest.approx((0.2 * 0.1) / (0.4 * 0.5))


def test_iou_touching_edges_is_zero():
    assert iou(BBox(0, 0, 0.5, 0.5), BBox(0.5, 0, 1, 0.5)) == 0.0


def test_iou_identical_is_one():
    b = BBox(0.1, 0.2, 0.3, 0.4)
    assert iou(b, b) == 1.0


def test_iou_of_degenerate_boxes_is_zero():
    line = BBox(0.1, 0.1, 0.1, 0.5)
    assert iou(line, line) == 0.0


@pytest.mark.parametrize(
    "coord, expected",
    [(0.0, 0), (0.0005, 0), (0.001, 1), (0.4999, 499), (0.5, 500), (0.9989, 998), (0.9995, 999), (1.0, 999)],
)
def test_quantize_floors_and_clamps(coord, expected):
    assert quantize(BBox(coord, 0, coord, 0)).qx1 == expected


def test_dequantize_uses_bin_centers():
    assert dequantize(QuantBox(0, 1, 998, 999)).as_tuple() == pytest.approx((0.0005, 0.0015, 0.9985, 0.9995))


@pytest.mark.parametrize("bad", [(-0.1, 0, 0.5, 0.5), (0, 0, 1.2, 0.5), (0.5, 0, 0.4, 0.5), (0, float("nan"), 0.5, 0.5)])
def test_bbox_rejects_invalid(bad):
    with pytest.raises(ValueError):
        BBox(*bad)


@pytest.mark.parametrize("bad", [(0, 0, 1000, 5), (-1, 0, 5, 5), (5, 0, 4, 5), (0, 0, 1.0, 5)])
def test_quantbox_rejects_invalid(bad):
    with pytest.raises(ValueError):
        QuantBox(*bad)


def test_union_box():
    u = union_box([BBox(0.1, 0.2, 0.3, 0.4), BBox(0.2, 0.1, 0.5, 0.3)])
    assert u.as_tuple() == (0.1, 0.1, 0.5, 0.4)
    with pytest.raises(ValueError):
        union_box([])


grid = st.integers(0, 999)


@st.composite
def qboxes(draw):
    x1, x2 = sorted((draw(grid), draw(grid)))
    y1, y2 = sorted((draw(grid), draw(grid)))
    return QuantBox(x1, y1, x2, y2)


unit = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def bboxes(draw):
    x1, x2 = sorted((draw(unit), draw(unit)))
    y1, y2 = sorted((draw(unit), draw(unit)))
    return BBox(x1, y1, x2, y2)


@given(qboxes())
def test_quantize_inverts_dequantize(q):
    assert quantize(dequantize(q)) == q


@given(bboxes())
def test_quantization_error_below_one_cell(b):
    back = dequantize(quantize(b))
    for got, want in zip(back.as_tuple(), b.as_tuple()):
        assert abs(got - want) <= 1 / 1000 + 1e-12


@given(bboxes(), bboxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert math.isclose(v, iou(b, a), rel_tol=0, abs_tol=1e-12)
