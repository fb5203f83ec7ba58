import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weakseg.core import Segmentation
from weakseg.metrics import EvalReport, evaluate, iou_iod, mof, mof_bg, segment_overlaps

A, B, BG = 1, 2, 0


def test_mof_examples():
    assert mof([A, A, B, B], [A, A, B, B]) == 1.0
    assert mof([A, A, B, B], [A, B, B, B]) == 0.75
    assert mof([A, A], [B, B]) == 0.0
    with pytest.raises(ValueError):
        mof([A], [A, B])


def test_mof_accepts_segmentations():
    gt = Segmentation((A, B), (1, 3))
    assert mof(Segmentation((A, B), (2, 2)), gt) == 0.75


def test_mof_bg_examples():
    assert mof_bg([A, A, B], [BG, A, A], BG) == 0.5
    assert mof_bg([A, B, B], [A, A, B], BG) == mof([A, B, B], [A, A, B])
    assert mof_bg([BG, B, A], [BG, A, B], BG) == 0.0
    with pytest.raises(ValueError):
        mof_bg([A, A], [BG, BG], BG)


def test_iou_iod_examples():
    gt = [A] * 10 + [B] * 10
    assert iou_iod(gt, gt) == (1.0, 1.0)
    pred = [B] * 5 + [A] * 10 + [B] * 5
    ov = segment_overlaps(pred, gt)
    assert ov[0] == pytest.approx((5 / 15, 5 / 10))
    # B over [10,20): best detection is [15,20), IoU 5/10, IoD 1
    assert ov[1] == pytest.approx((0.5, 1.0))


def test_missing_class_scores_zero():
    assert segment_overlaps([B] * 4, [A, A, B, B]) == [(0.0, 0.0), pytest.approx((0.5, 0.5))]


def test_background_segments_excluded():
    gt = [BG, BG, A, A]
    pred = [A, A, A, A]
    assert segment_overlaps(pred, gt, BG) == [pytest.approx((0.5, 0.5))]
    with pytest.raises(ValueError):
        iou_iod([BG, BG], [BG, BG], BG)


def _labels(rng, T, K):
    return rng.integers(0, K, size=T)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metric_properties(seed):
    rng = np.random.default_rng(seed)
    T, K = int(rng.integers(2, 40)), 4
    gt = np.repeat(rng.integers(0, K, size=5), rng.integers(1, 8, size=5))[:T]
    T = gt.size
    pred = _labels(rng, T, K)
    if np.all(gt == BG):
        gt[0] = A
    vals = [mof(pred, gt), mof_bg(pred, gt, BG), *iou_iod(pred, gt, BG)]
    assert all(0.0 <= v <= 1.0 for v in vals)
    for iou, iod in segment_overlaps(pred, gt, BG):
        assert iou <= iod + 1e-15
    # predictions on background frames do not matter for Mof-bg
    pred2 = pred.copy()
    pred2[gt == BG] = (pred2[gt == BG] + 1) % K
    assert mof_bg(pred2, gt, BG) == vals[1]
    # consistent relabelling of classes
    perm = rng.permutation(K)
    assert mof(perm[pred], perm[gt]) == vals[0]
    assert iou_iod(perm[pred], perm[gt], perm[BG]) == pytest.approx(tuple(vals[2:]))


def test_evaluate_pools_frames_and_segments():
    gts = {"v1": [A, A, B, B], "v2": [BG, A, A, A, A, A]}
    preds = {"v1": [A, B, B, B], "v2": [BG, A, A, A, A, A]}
    rep = evaluate(preds, gts, BG)
    assert rep.mof == pytest.approx(9 / 10)
    assert rep.mof_bg == pytest.approx(8 / 9)
    # segments: v1 A (IoU 1/2, IoD 1), v1 B (2/3, 2/3), v2 A (1, 1)
    assert rep.iou == pytest.approx((0.5 + 2 / 3 + 1) / 3)
    assert rep.iod == pytest.approx((1 + 2 / 3 + 1) / 3)
    assert set(rep.per_video) == {"v1", "v2"}
    with pytest.raises(ValueError):
        evaluate({"v1": preds["v1"]}, gts, BG)


def test_report_serialization():
    rep = EvalReport(0.9, 0.8, 0.5, 0.6, {"v": {"mof": 0.9}})
    back = EvalReport.from_lines(rep.to_lines())
    assert (back.mof, back.mof_bg, back.iou, back.iod) == (0.9, 0.8, 0.5, 0.6)
    text = rep.to_text()
    assert text.startswith("mof: 0.900000") and "video v:" in text
