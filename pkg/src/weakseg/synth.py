"""Seeded synthetic corpora of segmented feature sequences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .core import Dataset, LabelSet, Video


@dataclass
class SynthConfig:
    K: int = 5
    D: int = 8
    n_videos: int = 100
    transcript_length: Tuple[int, int] = (2, 5)
    mean_length: Union[float, Sequence[float]] = 20.0
    centers: Optional[np.ndarray] = None  # K x D; drawn from N(0, center_scale^2) when omitted
    center_scale: float = 1.0
    noise: float = 0.5
    background_prob: float = 0.0
    n_templates: Optional[int] = None  # draw transcripts from this many fixed orderings
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.transcript_length
        if self.K < 1 or self.D < 1 or self.n_videos < 1 or lo < 1 or hi < lo:
            raise ValueError("counts must be >= 1 and the transcript length range non-empty")
        if self.noise < 0:
            raise ValueError("noise scale must be >= 0")
        if not 0 <= self.background_prob <= 1:
            raise ValueError("background_prob must lie in [0, 1]")
        lam = np.broadcast_to(np.asarray(self.mean_length, dtype=float), (self.K,))
        if np.any(lam <= 0):
            raise ValueError("mean segment lengths must be > 0")
        if self.n_templates is not None and self.n_templates < 1:
            raise ValueError("n_templates must be >= 1")
        n_actions = self.K - 1 if self.background_prob > 0 else self.K
        if n_actions < 1:
            raise ValueError("background needs at least one other class")
        if n_actions == 1 and hi > 1:
            raise ValueError(f"transcripts longer than 1 need at least 2 action classes (got {n_actions})")
        if self.centers is not None and np.shape(self.centers) != (self.K, self.D):
            raise ValueError("centers must be K x D")

    @property
    def lambdas(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.mean_length, dtype=float), (self.K,)).copy()

    @property
    def background_id(self) -> Optional[int]:
        return 0 if self.background_prob > 0 else None


def _sample_transcript(rng, cfg: SynthConfig):
    lo, hi = cfg.transcript_length
    n = int(rng.integers(lo, hi + 1))
    first = 1 if cfg.background_id is not None else 0
    labels = []
    for _ in range(n):
        choices = [a for a in range(first, cfg.K) if not labels or a != labels[-1]]
        labels.append(int(rng.choice(choices)))
    if cfg.background_id is not None:
        if rng.random() < cfg.background_prob:
            labels.insert(0, 0)
        if rng.random() < cfg.background_prob:
            labels.append(0)
    return tuple(labels)


def _poisson_positive(rng, lam: float) -> int:
    while True:
        l = int(rng.poisson(lam))
        if l > 0:
            return l


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Transcripts without adjacent repeats, Poisson lengths (zero rejected),
    features = class centre + isotropic Gaussian noise, full frame labels."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.centers is not None:
        centers = np.asarray(cfg.centers, dtype=float)
    else:
        centers = rng.normal(0.0, cfg.center_scale, size=(cfg.K, cfg.D))
    lam = cfg.lambdas
    templates = None
    if cfg.n_templates is not None:
        templates = [_sample_transcript(rng, cfg) for _ in range(cfg.n_templates)]
    names = [f"a{a}" for a in range(cfg.K)]
    if cfg.background_id is not None:
        names[0] = "background"
    label_set = LabelSet(tuple(names), cfg.background_id)
    width = max(4, len(str(cfg.n_videos - 1)))
    videos = []
    for i in range(cfg.n_videos):
        if templates is not None:
            transcript = templates[int(rng.integers(len(templates)))]
        else:
            transcript = _sample_transcript(rng, cfg)
        lengths = [_poisson_positive(rng, lam[a]) for a in transcript]
        gt = np.repeat(np.asarray(transcript, dtype=np.int64), lengths)
        x = centers[gt] + cfg.noise * rng.normal(size=(gt.size, cfg.D))
        videos.append(Video(f"vid{i:0{width}d}", x, transcript, gt))
    return Dataset(label_set, videos)


def train_test_split(d: Dataset, n_test: int) -> Tuple[Dataset, Dataset]:
    """Last ``n_test`` videos become the test set."""
    if not 0 <= n_test < len(d):
        raise ValueError("n_test must leave at least one training video")
    cut = len(d) - n_test
    return Dataset(d.label_set, d.videos[:cut]), Dataset(d.label_set, d.videos[cut:])
