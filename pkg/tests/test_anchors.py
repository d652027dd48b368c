import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwdetect.anchors import (
    LEVEL_NAMES,
    AnchorSet,
    anchors_from_boxes,
    assign_to_levels,
    format_anchor_file,
    iou_wh,
    kmeans_anchors,
    level_of,
    parse_anchor_file,
)
from uwdetect.dataset_io import BoundingBox

from helpers import ANCHOR_TABLE, PLANTED, planted_boxes


def test_iou_wh():
    assert iou_wh([2, 2], [2, 2])[0, 0] == 1.0
    assert iou_wh([2, 1], [1, 2])[0, 0] == pytest.approx(1 / 3)


def test_identical_boxes_k1():
    c = kmeans_anchors(np.tile([[12.0, 7.0]], (10, 1)), 1)
    np.testing.assert_array_equal(c, [[12.0, 7.0]])


def test_k_equal_distinct_count():
    boxes = np.array([[5.0, 5.0], [10.0, 40.0], [60.0, 20.0], [100.0, 100.0]])
    data = np.repeat(boxes, 3, axis=0)
    c, trace = kmeans_anchors(data, 4, return_trace=True)
    np.testing.assert_array_equal(c, boxes)
    assert trace[-1] == 0.0


def test_too_few_distinct():
    with pytest.raises(ValueError, match="distinct"):
        kmeans_anchors(np.ones((5, 2)), 2)


def test_planted_recovery():
    c, trace = kmeans_anchors(planted_boxes(), 3, seed=0, return_trace=True)
    ious = iou_wh(c, PLANTED).diagonal()
    assert np.all(ious >= 0.95), ious
    assert all(b <= a for a, b in zip(trace, trace[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(2, 8))
def test_trace_non_increasing(seed, k):
    boxes = np.random.default_rng(seed).uniform(1, 100, (60, 2))
    c, trace = kmeans_anchors(boxes, k, seed=seed, return_trace=True)
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    areas = c[:, 0] * c[:, 1]
    assert np.all(np.diff(areas) >= 0)


def test_kmeans_deterministic():
    boxes = planted_boxes(seed=4)
    np.testing.assert_array_equal(kmeans_anchors(boxes, 3, seed=2), kmeans_anchors(boxes, 3, seed=2))


def test_anchor_table_regroups():
    flat = [a for level in ANCHOR_TABLE.values() for a in level]
    order = np.random.default_rng(11).permutation(len(flat))
    got = assign_to_levels([flat[i] for i in order])
    assert {name: [tuple(int(v) for v in a) for a in anchors] for name, anchors in got.levels} == ANCHOR_TABLE
    assert level_of(got, (82, 96)) == "P2/4"
    assert level_of(got, (623, 636)) == "P5/32"


def test_area_key_contiguous_chunks():
    anchors = [(i + 1.0, i + 1.0) for i in range(12)]
    got = assign_to_levels(anchors, key="area")
    assert [a for _, level in got.levels for a in level] == anchors


def test_identical_anchors_keep_input_order():
    got = assign_to_levels([(5.0, 5.0)] * 12)
    assert [name for name, _ in got.levels] == list(LEVEL_NAMES)


def test_wrong_count():
    with pytest.raises(ValueError, match="exactly 12"):
        assign_to_levels([(1.0, 1.0)] * 11)


def test_anchor_file_round_trip():
    flat = [a for level in ANCHOR_TABLE.values() for a in level]
    anchor_set = assign_to_levels(flat)
    text = format_anchor_file(anchor_set)
    assert text.splitlines()[0] == "P2/4: 82,96 134,183 164,418"
    assert parse_anchor_file(text) == anchor_set
    with pytest.raises(ValueError):
        AnchorSet(anchor_set.levels[:3])


def test_anchors_from_normalized_boxes():
    flat = [a for level in ANCHOR_TABLE.values() for a in level]
    boxes = [BoundingBox(0.5, 0.5, w / 640, h / 640, 0) for w, h in flat] * 3
    got = anchors_from_boxes(boxes, k=12)
    assert format_anchor_file(got) == format_anchor_file(assign_to_levels(flat))
