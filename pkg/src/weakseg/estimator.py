"""scikit-learn style front end.

``X`` is a list of ``(T_i, D)`` feature matrices (one per video) and ``y`` a
list of transcripts, each an ordered sequence of class labels. Predictions
are per-frame label arrays, one per video.
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .core import Dataset, LabelSet, Video
from .metrics import mof
from .scorer import scorer_forward
from .trainer import TrainConfig, align, segment, train


def check_sequences(X, n_features: Optional[int] = None) -> List[np.ndarray]:
    """Validate a list of 2-d float feature matrices with a common width."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    seqs = [check_array(x, dtype=np.float64) for x in X]
    if not seqs:
        raise ValueError("expected at least one sequence")
    widths = {s.shape[1] for s in seqs}
    if len(widths) != 1:
        raise ValueError(f"sequences have different feature widths {sorted(widths)}")
    if n_features is not None and widths != {n_features}:
        raise ValueError(f"X has {widths.pop()} features, estimator was fitted with {n_features}")
    return seqs


def check_transcripts(y, n_sequences: int) -> List[list]:
    ys = [list(t) for t in y]
    if len(ys) != n_sequences:
        raise ValueError(f"got {len(ys)} transcripts for {n_sequences} sequences")
    for i, t in enumerate(ys):
        if not t:
            raise ValueError(f"transcript {i} is empty")
        if any(a == b for a, b in zip(t, t[1:])):
            raise ValueError(f"transcript {i} repeats a label on adjacent positions")
    return ys


class WeakSegmenter(BaseEstimator):
    """Temporal segmentation learned from ordered action lists.

    Parameters mirror :class:`weakseg.trainer.TrainConfig`; ``random_state``
    seeds both parameter initialisation and video sampling.
    """

    def __init__(self, window=20, loss="CDF", alpha=0.1, n_iter=2000, lr=0.01, lr_drop_at=None,
                 lr_dropped=0.001, scorer="gru", hidden=64, normalize_by_length=True,
                 max_segment_length=None, background=None, random_state=0):
        self.window = window
        self.loss = loss
        self.alpha = alpha
        self.n_iter = n_iter
        self.lr = lr
        self.lr_drop_at = lr_drop_at
        self.lr_dropped = lr_dropped
        self.scorer = scorer
        self.hidden = hidden
        self.normalize_by_length = normalize_by_length
        self.max_segment_length = max_segment_length
        self.background = background
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            window=self.window, loss=self.loss, alpha=self.alpha, iterations=self.n_iter, lr=self.lr,
            lr_drop_at=self.lr_drop_at, lr_dropped=self.lr_dropped, seed=self.random_state,
            scorer=self.scorer, hidden=self.hidden, normalize_by_length=self.normalize_by_length,
            max_segment_length=self.max_segment_length,
        )

    def _encode(self, t) -> tuple:
        index = {c: i for i, c in enumerate(self.classes_)}
        try:
            return tuple(index[a] for a in t)
        except KeyError as exc:
            raise ValueError(f"unknown label {exc.args[0]!r}") from None

    def fit(self, X, y, log_file=None):
        seqs = check_sequences(X)
        ys = check_transcripts(y, len(seqs))
        labels = {a for t in ys for a in t}
        if self.background is not None:
            labels.add(self.background)
        self.classes_ = np.array(sorted(labels))
        bg = None
        if self.background is not None:
            bg = int(np.flatnonzero(self.classes_ == self.background)[0])
        label_set = LabelSet(tuple(str(c) for c in self.classes_), bg)
        videos = [Video(f"seq{i}", x, self._encode(t)) for i, (x, t) in enumerate(zip(seqs, ys))]
        self.n_features_in_ = seqs[0].shape[1]
        self.state_ = train(self._config(), Dataset(label_set, videos), log_file=log_file)
        return self

    def predict(self, X, transcript_pool=None) -> List[np.ndarray]:
        """Segment each sequence, choosing its transcript among those seen in ``fit``."""
        check_is_fitted(self, "state_")
        seqs = check_sequences(X, self.n_features_in_)
        pool = None if transcript_pool is None else [self._encode(t) for t in transcript_pool]
        out = []
        for x in seqs:
            seg = segment(self.state_, x, pool, self.window, self.max_segment_length)
            out.append(self.classes_[seg.to_frames()])
        return out

    def align(self, X, y) -> List[np.ndarray]:
        """Frame labels for sequences whose transcripts are known."""
        check_is_fitted(self, "state_")
        seqs = check_sequences(X, self.n_features_in_)
        ys = check_transcripts(y, len(seqs))
        return [self.classes_[align(self.state_, x, self._encode(t), self.window,
                                    self.max_segment_length).to_frames()]
                for x, t in zip(seqs, ys)]

    def predict_log_proba(self, X) -> List[np.ndarray]:
        check_is_fitted(self, "state_")
        seqs = check_sequences(X, self.n_features_in_)
        return [scorer_forward(self.state_.params, x)[0].values.copy() for x in seqs]

    def score(self, X, y_frames) -> float:
        """Frame accuracy pooled over all sequences."""
        preds = self.predict(X)
        p = np.concatenate(preds)
        g = np.concatenate([np.asarray(f) for f in y_frames])
        idx = {c: i for i, c in enumerate(self.classes_)}
        return mof([idx[a] for a in p], [idx.get(a, -1) for a in g])
