"""Domain types, dataset container and the on-disk dataset layout.

Class indices are dense integers ``0..K-1``; names only matter for I/O.
Segmentations store per-segment lengths, cut positions are prefix sums.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp


class ValidationError(ValueError):
    """Raised when a domain value violates one of its invariants."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabelSet:
    names: Tuple[str, ...]
    background_id: Optional[int] = None

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 1:
            raise ValidationError("label set needs at least one class")
        if len(set(names)) != len(names):
            raise ValidationError("class names must be unique")
        for n in names:
            if not n or any(c.isspace() for c in n):
                raise ValidationError(f"invalid class name {n!r}")
        if self.background_id is not None and not 0 <= self.background_id < len(names):
            raise ValidationError(f"background_id {self.background_id} out of range")

    @property
    def K(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown class name {name!r}") from None

    def encode(self, names: Iterable[str]) -> List[int]:
        return [self.index(n) for n in names]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.names[int(i)] for i in ids]


@dataclass(frozen=True, eq=False)
class FrameSequence:
    features: np.ndarray
    video_id: str = ""

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValidationError(f"{self.video_id}: features must be a non-empty T x D matrix")
        if not np.all(np.isfinite(x)):
            raise ValidationError(f"{self.video_id}: features contain non-finite values")
        object.__setattr__(self, "features", _readonly(x))

    @property
    def T(self) -> int:
        return self.features.shape[0]

    @property
    def D(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FrameSequence):
            return NotImplemented
        return self.video_id == other.video_id and np.array_equal(self.features, other.features)

    __hash__ = None


@dataclass(frozen=True)
class Transcript:
    """Ordered action labels of a video, without timing."""

    labels: Tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(a) for a in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 1:
            raise ValidationError("transcript must contain at least one label")
        if any(a < 0 for a in labels):
            raise ValidationError("transcript labels must be non-negative")
        for a, b in zip(labels, labels[1:]):
            if a == b:
                raise ValidationError(f"adjacent transcript labels repeat ({a})")

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __getitem__(self, i):
        return self.labels[i]

    def __lt__(self, other: "Transcript") -> bool:
        return self.labels < other.labels

    def check_classes(self, K: int) -> None:
        bad = [a for a in self.labels if a >= K]
        if bad:
            raise ValidationError(f"transcript references unknown class {bad[0]} (K={K})")


def as_transcript(labels, K: Optional[int] = None) -> Transcript:
    t = labels if isinstance(labels, Transcript) else Transcript(tuple(labels))
    if K is not None:
        t.check_classes(K)
    return t


@dataclass(frozen=True)
class Segmentation:
    labels: Tuple[int, ...]
    lengths: Tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(a) for a in self.labels)
        lengths = tuple(int(n) for n in self.lengths)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "lengths", lengths)
        if len(labels) != len(lengths):
            raise ValidationError("labels and lengths differ in size")
        if not labels:
            raise ValidationError("empty segmentation")
        if any(n < 1 for n in lengths):
            raise ValidationError("segment lengths must be >= 1")
        for a, b in zip(labels, labels[1:]):
            if a == b:
                raise ValidationError(f"adjacent segment labels repeat ({a})")

    @property
    def T(self) -> int:
        return sum(self.lengths)

    @property
    def N(self) -> int:
        return len(self.labels)

    @property
    def cuts(self) -> Tuple[int, ...]:
        """Cut positions ``b_1 = 0, ..., b_{N+1} = T``."""
        return tuple(int(c) for c in np.concatenate([[0], np.cumsum(self.lengths)]))

    @property
    def transcript(self) -> Transcript:
        return Transcript(self.labels)

    def to_frames(self) -> np.ndarray:
        return np.repeat(np.asarray(self.labels, dtype=np.int64), self.lengths)

    @classmethod
    def from_frames(cls, frame_labels) -> "Segmentation":
        f = np.asarray(frame_labels, dtype=np.int64)
        if f.ndim != 1 or f.size == 0:
            raise ValidationError("frame labels must be a non-empty 1-d sequence")
        change = np.flatnonzero(np.diff(f)) + 1
        starts = np.concatenate([[0], change])
        ends = np.concatenate([change, [f.size]])
        return cls(tuple(f[starts]), tuple(ends - starts))

    @classmethod
    def from_cuts(cls, labels, cuts) -> "Segmentation":
        return cls(tuple(labels), tuple(np.diff(np.asarray(cuts, dtype=np.int64))))


@dataclass(frozen=True, eq=False)
class FrameLogPosteriors:
    """T x K matrix of per-frame class log-probabilities."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValidationError("log-posteriors must be a non-empty T x K matrix")
        if np.any(np.isnan(v)) or np.any(v == np.inf):
            raise ValidationError("log-posteriors must be finite or -inf")
        err = np.max(np.abs(logsumexp(v, axis=1)))
        if not err <= 1e-6:
            raise ValidationError(f"log-posterior rows do not normalize (max |lse| = {err:.3g})")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_scores(cls, scores) -> "FrameLogPosteriors":
        """Log-softmax normalize an arbitrary T x K score matrix."""
        s = np.asarray(scores, dtype=np.float64)
        return cls(s - logsumexp(s, axis=1, keepdims=True))


def as_log_posteriors(post) -> FrameLogPosteriors:
    return post if isinstance(post, FrameLogPosteriors) else FrameLogPosteriors(post)


@dataclass(eq=False)
class Video:
    """One dataset record. Fields are kept raw; see :func:`validate_dataset`."""

    video_id: str
    features: np.ndarray
    transcript: Tuple[int, ...]
    ground_truth: Optional[np.ndarray] = None

    @property
    def T(self) -> int:
        return int(np.shape(self.features)[0])

    @property
    def frames(self) -> FrameSequence:
        return FrameSequence(self.features, self.video_id)


@dataclass(eq=False)
class Dataset:
    label_set: LabelSet
    videos: List[Video] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.videos)

    def __iter__(self):
        return iter(self.videos)

    def transcripts(self) -> List[Transcript]:
        return [Transcript(v.transcript) for v in self.videos]

    def subset(self, ids: Sequence[str]) -> "Dataset":
        wanted = set(ids)
        return Dataset(self.label_set, [v for v in self.videos if v.video_id in wanted])


def validate_dataset(d: Dataset) -> List[str]:
    """Return one description per invariant violation; empty when the dataset is sound."""
    problems = []
    K = d.label_set.K
    seen = set()
    for v in d.videos:
        vid = v.video_id
        if vid in seen:
            problems.append(f"{vid}: video_id: duplicate id")
        seen.add(vid)
        x = np.asarray(v.features)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            problems.append(f"{vid}: features: expected non-empty T x D matrix, got shape {x.shape}")
        elif not np.all(np.isfinite(x)):
            problems.append(f"{vid}: features: non-finite entries")
        tr = list(v.transcript)
        if not tr:
            problems.append(f"{vid}: transcript: empty")
        bad = [a for a in tr if not 0 <= a < K]
        if bad:
            problems.append(f"{vid}: transcript: label {bad[0]} outside 0..{K - 1}")
        rep = [a for a, b in zip(tr, tr[1:]) if a == b]
        if rep:
            problems.append(f"{vid}: transcript: adjacent repeated label {rep[0]}")
        if v.ground_truth is not None:
            gt = np.asarray(v.ground_truth)
            if x.ndim == 2 and gt.shape != (x.shape[0],):
                problems.append(f"{vid}: ground_truth: length {gt.size} != T={x.shape[0]}")
            elif gt.size and (gt.min() < 0 or gt.max() >= K):
                problems.append(f"{vid}: ground_truth: label outside 0..{K - 1}")
    return problems


# -- file layout -----------------------------------------------------------
#   mapping.txt               "index name" per line
#   features/<video>.txt      T lines of D floats
#   transcripts/<video>.txt   one class name per line
#   groundTruth/<video>.txt   one class name per frame (optional)


def read_mapping(path) -> LabelSet:
    pairs = []
    bg = None
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ValidationError(f"{path}: malformed mapping line {line!r}")
            pairs.append((int(parts[0]), parts[1]))
    pairs.sort()
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise ValidationError(f"{path}: indices must be 0..K-1")
    names = tuple(n for _, n in pairs)
    for i, n in enumerate(names):
        if n.lower() in ("background", "bg", "sil", "silence"):
            bg = i
            break
    return LabelSet(names, bg)


def write_mapping(path, label_set: LabelSet) -> None:
    with open(path, "w") as fh:
        for i, n in enumerate(label_set.names):
            fh.write(f"{i} {n}\n")


def read_label_file(path) -> List[str]:
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip()]


def write_label_file(path, names: Iterable[str]) -> None:
    with open(path, "w") as fh:
        for n in names:
            fh.write(f"{n}\n")


def read_features(path) -> np.ndarray:
    x = np.loadtxt(path, dtype=np.float64, ndmin=2)
    return x


def write_features(path, x: np.ndarray) -> None:
    with open(path, "w") as fh:
        for row in np.asarray(x, dtype=np.float64):
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


def load_dataset(root, label_set: Optional[LabelSet] = None) -> Dataset:
    """Read a dataset directory. Content problems are left for :func:`validate_dataset`."""
    root = Path(root)
    if label_set is None:
        label_set = read_mapping(root / "mapping.txt")
    feat_dir = root / "features"
    if not feat_dir.is_dir():
        raise FileNotFoundError(f"{feat_dir} not found")
    videos = []
    for fpath in sorted(feat_dir.glob("*.txt")):
        vid = fpath.stem
        tpath = root / "transcripts" / f"{vid}.txt"
        if not tpath.exists():
            raise FileNotFoundError(f"missing transcript {tpath}")
        transcript = tuple(label_set.encode(read_label_file(tpath)))
        gpath = root / "groundTruth" / f"{vid}.txt"
        gt = None
        if gpath.exists():
            gt = np.asarray(label_set.encode(read_label_file(gpath)), dtype=np.int64)
        videos.append(Video(vid, read_features(fpath), transcript, gt))
    return Dataset(label_set, videos)


def save_dataset(d: Dataset, root) -> None:
    root = Path(root)
    for sub in ("features", "transcripts", "groundTruth"):
        os.makedirs(root / sub, exist_ok=True)
    write_mapping(root / "mapping.txt", d.label_set)
    names = d.label_set.names
    for v in d.videos:
        write_features(root / "features" / f"{v.video_id}.txt", v.features)
        write_label_file(root / "transcripts" / f"{v.video_id}.txt", [names[a] for a in v.transcript])
        if v.ground_truth is not None:
            write_label_file(root / "groundTruth" / f"{v.video_id}.txt", [names[a] for a in v.ground_truth])
