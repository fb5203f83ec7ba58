"""Frame- and segment-level evaluation of predicted labelings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import Segmentation


def _pair(pred, gt) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred.to_frames() if isinstance(pred, Segmentation) else pred, dtype=np.int64).ravel()
    g = np.asarray(gt.to_frames() if isinstance(gt, Segmentation) else gt, dtype=np.int64).ravel()
    if p.shape != g.shape:
        raise ValueError(f"prediction has {p.size} frames, ground truth has {g.size}")
    return p, g


def mof(pred, gt) -> float:
    """Fraction of frames whose predicted label matches the ground truth."""
    p, g = _pair(pred, gt)
    if g.size == 0:
        raise ValueError("no frames")
    return float(np.mean(p == g))


def mof_bg(pred, gt, background_id: int) -> float:
    """Frame accuracy over frames whose ground truth is not background."""
    p, g = _pair(pred, gt)
    keep = g != background_id
    if not keep.any():
        raise ValueError("ground truth contains only background frames")
    return float(np.mean(p[keep] == g[keep]))


def _segments(labels: np.ndarray) -> List[Tuple[int, int, int]]:
    seg = Segmentation.from_frames(labels)
    cuts = seg.cuts
    return [(a, cuts[i], cuts[i + 1]) for i, a in enumerate(seg.labels)]


def segment_overlaps(pred, gt, background_id: Optional[int] = None) -> List[Tuple[float, float]]:
    """Per non-background ground-truth segment, ``(IoU, IoD)`` against the same-class
    detection with the largest intersection (zeros when there is none)."""
    p, g = _pair(pred, gt)
    dets = _segments(p)
    out = []
    for a, s, e in _segments(g):
        if a == background_id:
            continue
        best = None
        for b, ds, de in dets:
            if b != a:
                continue
            inter = max(0, min(e, de) - max(s, ds))
            if best is None or inter > best[0]:
                best = (inter, ds, de)
        if best is None or best[0] == 0:
            out.append((0.0, 0.0))
            continue
        inter, ds, de = best
        union = (e - s) + (de - ds) - inter
        out.append((inter / union, inter / (de - ds)))
    return out


def iou_iod(pred, gt, background_id: Optional[int] = None) -> Tuple[float, float]:
    ov = segment_overlaps(pred, gt, background_id)
    if not ov:
        raise ValueError("no non-background ground-truth segments")
    a = np.asarray(ov)
    return float(a[:, 0].mean()), float(a[:, 1].mean())


@dataclass
class EvalReport:
    mof: float
    mof_bg: float
    iou: float
    iod: float
    per_video: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"mof: {self.mof:.6f}", f"mof_bg: {self.mof_bg:.6f}",
                 f"iou: {self.iou:.6f}", f"iod: {self.iod:.6f}"]
        for vid in sorted(self.per_video):
            m = self.per_video[vid]
            lines.append(f"video {vid}: " + " ".join(f"{k}={v:.6f}" for k, v in m.items()))
        return "\n".join(lines) + "\n"

    def to_lines(self) -> str:
        return "".join(f"{k} {getattr(self, k)!r}\n" for k in ("mof", "mof_bg", "iou", "iod"))

    @classmethod
    def from_lines(cls, text: str) -> "EvalReport":
        vals = {}
        for line in text.splitlines():
            parts = line.split()
            if len(parts) == 2:
                vals[parts[0]] = float(parts[1])
        return cls(vals["mof"], vals["mof_bg"], vals["iou"], vals["iod"])


def evaluate(preds: Dict[str, Sequence[int]], gts: Dict[str, Sequence[int]],
             background_id: Optional[int] = None) -> EvalReport:
    """Dataset-level metrics: frames pooled for Mof, GT segments pooled for IoU/IoD."""
    missing = sorted(set(gts) - set(preds))
    if missing:
        raise ValueError(f"no prediction for {missing[0]}")
    correct = total = correct_fg = total_fg = 0
    overlaps = []
    per_video = {}
    for vid in sorted(gts):
        p, g = _pair(preds[vid], gts[vid])
        hit = p == g
        correct += int(hit.sum())
        total += g.size
        fg = g != background_id if background_id is not None else np.ones(g.size, bool)
        correct_fg += int(hit[fg].sum())
        total_fg += int(fg.sum())
        ov = segment_overlaps(p, g, background_id)
        overlaps.extend(ov)
        entry = {"mof": float(hit.mean())}
        if ov:
            entry["iou"] = float(np.mean([o[0] for o in ov]))
            entry["iod"] = float(np.mean([o[1] for o in ov]))
        per_video[vid] = entry
    if total == 0:
        raise ValueError("nothing to evaluate")
    ov = np.asarray(overlaps) if overlaps else np.zeros((1, 2))
    return EvalReport(
        mof=correct / total,
        mof_bg=correct_fg / total_fg if total_fg else 0.0,
        iou=float(ov[:, 0].mean()),
        iod=float(ov[:, 1].mean()),
        per_video=per_video,
    )
