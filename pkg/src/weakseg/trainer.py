"""Weakly supervised training loop and inference.

Each iteration decodes the current video with the transcript-constrained
Viterbi (the anchor), builds the segmentation graph around the anchor cuts,
takes one SGD step on the chosen graph loss and then folds the anchor into the
pseudo-ground-truth history that drives the Poisson means and class priors of
later iterations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, TextIO

import numpy as np

from .core import Dataset, Segmentation, Transcript, ValidationError, Video, as_transcript, validate_dataset
from .hmm import (
    ClassPrior,
    InfeasibleTranscriptError,
    LengthModel,
    constrained_viterbi,
    select_transcript,
)
from .losses import LossKind, loss_backward, loss_value
from .scorer import (
    ScorerParams,
    init_params,
    read_params,
    scorer_backward,
    scorer_forward,
    sgd_step,
    write_params,
)
from .seggraph import build_graph, map_valid_path, path_energy, PathAssignment

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    window: int = 20
    loss: str = "CDF"
    alpha: float = 0.1
    iterations: int = 2000
    lr: float = 0.01
    lr_drop_at: Optional[int] = None  # defaults to 60% of iterations
    lr_dropped: float = 0.001
    seed: int = 0
    scorer: str = "gru"
    hidden: int = 64
    normalize_by_length: bool = True
    max_segment_length: Optional[int] = None

    def __post_init__(self):
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not (self.lr > 0 and self.lr_dropped > 0):
            raise ValueError("learning rates must be > 0")
        LossKind.parse(self.loss, self.alpha)

    @property
    def loss_kind(self) -> LossKind:
        return LossKind.parse(self.loss, self.alpha)

    @property
    def drop_iteration(self) -> int:
        return self.lr_drop_at if self.lr_drop_at is not None else int(round(0.6 * self.iterations))

    def lr_at(self, iteration: int) -> float:
        """Learning rate for a 0-based iteration index."""
        return self.lr if iteration < self.drop_iteration else self.lr_dropped


@dataclass
class PseudoGtHistory:
    """Running statistics of every anchor segmentation seen so far."""

    frames: np.ndarray
    segments: np.ndarray
    segment_length: np.ndarray

    @classmethod
    def empty(cls, K: int) -> "PseudoGtHistory":
        return cls(np.zeros(K, dtype=np.int64), np.zeros(K, dtype=np.int64), np.zeros(K, dtype=np.int64))

    @property
    def total_frames(self) -> int:
        return int(self.frames.sum())

    def add(self, seg: Segmentation) -> None:
        for a, l in zip(seg.labels, seg.lengths):
            self.frames[a] += l
            self.segments[a] += 1
            self.segment_length[a] += l

    def copy(self) -> "PseudoGtHistory":
        return PseudoGtHistory(self.frames.copy(), self.segments.copy(), self.segment_length.copy())


@dataclass
class ModelState:
    params: ScorerParams
    prior: ClassPrior
    lengths: LengthModel
    history: PseudoGtHistory
    init_lambda: float
    transcripts: List[Transcript] = field(default_factory=list)
    iteration: int = 0

    @property
    def K(self) -> int:
        return self.prior.K

    def refresh_statistics(self) -> None:
        """Poisson means and class priors from the history.

        Unseen classes keep the initial mean and get a prior floor of 1/(frames + K).
        """
        h, K = self.history, self.K
        lam = np.full(K, self.init_lambda)
        seen = h.segments > 0
        lam[seen] = h.segment_length[seen] / h.segments[seen]
        self.lengths = LengthModel(lam)
        total = h.total_frames
        if total == 0:
            self.prior = ClassPrior.uniform(K)
            return
        p = h.frames / total
        p[h.frames == 0] = 1.0 / (total + K)
        self.prior = ClassPrior.from_probs(p)


def init_state(cfg: TrainConfig, dataset: Dataset) -> ModelState:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    problems = validate_dataset(dataset)
    if problems:
        raise ValidationError("; ".join(problems))
    K = dataset.label_set.K
    D = int(np.shape(dataset.videos[0].features)[1])
    mean_T = np.mean([v.T for v in dataset.videos])
    mean_N = np.mean([len(v.transcript) for v in dataset.videos])
    lam0 = float(mean_T / mean_N)
    params = init_params(cfg.scorer, D, K, cfg.hidden, cfg.seed)
    return ModelState(
        params=params,
        prior=ClassPrior.uniform(K),
        lengths=LengthModel.constant(K, lam0),
        history=PseudoGtHistory.empty(K),
        init_lambda=lam0,
        transcripts=sorted(set(dataset.transcripts())),
    )


@dataclass
class StepReport:
    iteration: int
    video_id: str
    loss: Optional[float]
    lr: float
    anchor: Optional[Segmentation] = None
    skipped: Optional[str] = None

    def log_line(self) -> str:
        loss = "nan" if self.loss is None else repr(self.loss)
        return f"{self.iteration} {self.video_id} {loss} {self.lr!r}"


def train_step(state: ModelState, video: Video, cfg: TrainConfig, lr: Optional[float] = None) -> StepReport:
    """One weakly supervised update on a single video; mutates ``state``."""
    it = state.iteration
    lr = cfg.lr_at(it) if lr is None else lr
    transcript = as_transcript(video.transcript, state.K)
    post, cache = scorer_forward(state.params, video.features)
    try:
        anchor = constrained_viterbi(post, state.prior, state.lengths, transcript, cfg.max_segment_length)
    except InfeasibleTranscriptError as exc:
        state.iteration += 1
        return StepReport(it, video.video_id, None, lr, skipped=str(exc))
    graph = build_graph(anchor.segmentation, post, cfg.window)
    grads = loss_backward(graph, transcript, cfg.loss_kind)
    scale = 1.0 / post.T if cfg.normalize_by_length else 1.0
    pgrads = scorer_backward(state.params, cache, grads.d_frame * scale)
    state.params = sgd_step(state.params, pgrads, lr)
    # current loss used the pre-update statistics; history only informs later steps
    state.history.add(anchor.segmentation)
    state.refresh_statistics()
    state.iteration += 1
    return StepReport(it, video.video_id, grads.value * scale, lr, anchor.segmentation)


def train(
    cfg: TrainConfig,
    dataset: Dataset,
    state: Optional[ModelState] = None,
    log_file: Optional[TextIO] = None,
    callback: Optional[Callable[[StepReport], None]] = None,
) -> ModelState:
    """Run ``cfg.iterations`` steps, one uniformly sampled video (with replacement) each."""
    if state is None:
        state = init_state(cfg, dataset)
    rng = np.random.default_rng(cfg.seed + 1)
    videos = dataset.videos
    for _ in range(cfg.iterations):
        video = videos[int(rng.integers(len(videos)))]
        report = train_step(state, video, cfg)
        if report.skipped:
            log.warning("iteration %d: skipped %s (%s)", report.iteration, video.video_id, report.skipped)
        if log_file is not None:
            log_file.write(report.log_line() + "\n")
        if callback is not None:
            callback(report)
    return state


# -- inference ---------------------------------------------------------------


@dataclass(frozen=True)
class Decoded:
    segmentation: Segmentation
    anchor: Segmentation
    energy: float
    anchor_energy: float
    transcript: Transcript


def _refine(state: ModelState, post, transcript: Transcript, anchor: Segmentation, window: int) -> Decoded:
    graph = build_graph(anchor, post, window)
    path, energy = map_valid_path(graph, transcript)
    anchor_energy = path_energy(graph, PathAssignment(anchor.cuts, anchor.labels))
    return Decoded(path.to_segmentation(), anchor, energy, anchor_energy, transcript)


def decode(state: ModelState, video, transcript_pool: Iterable, window: int = 0,
           max_segment_length: Optional[int] = None) -> Decoded:
    features = video.features if isinstance(video, Video) else video
    post, _ = scorer_forward(state.params, features)
    transcript, res = select_transcript(post, state.prior, state.lengths, transcript_pool, max_segment_length)
    return _refine(state, post, transcript, res.segmentation, window)


def segment(state: ModelState, video, transcript_pool: Optional[Iterable] = None, window: int = 0,
            max_segment_length: Optional[int] = None) -> Segmentation:
    """Segment a video, choosing its transcript among ``transcript_pool`` (default: training transcripts)."""
    pool = state.transcripts if transcript_pool is None else list(transcript_pool)
    if not pool:
        raise ValueError("empty transcript pool")
    return decode(state, video, pool, window, max_segment_length).segmentation


def align(state: ModelState, video, transcript, window: int = 0,
          max_segment_length: Optional[int] = None) -> Segmentation:
    """Segment a video whose transcript is known."""
    return decode(state, video, [transcript], window, max_segment_length).segmentation


# -- checkpoint ----------------------------------------------------------------
#   weakseg-checkpoint 1
#   scorer ... (see scorer.write_params)
#   lambda <K floats>
#   log_prior <K floats>
#   init_lambda <float>
#   iteration <int>
#   history_frames / history_segments / history_length <K ints>
#   transcripts <count>, then one line of class indices per transcript

CHECKPOINT_MAGIC = "weakseg-checkpoint 1"


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_state(state: ModelState, path) -> None:
    with open(path, "w") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        write_params(fh, state.params)
        fh.write(f"lambda {_floats(state.lengths.lam)}\n")
        fh.write(f"log_prior {_floats(state.prior.log_p)}\n")
        fh.write(f"init_lambda {state.init_lambda!r}\n")
        fh.write(f"iteration {state.iteration}\n")
        h = state.history
        fh.write("history_frames " + " ".join(str(int(v)) for v in h.frames) + "\n")
        fh.write("history_segments " + " ".join(str(int(v)) for v in h.segments) + "\n")
        fh.write("history_length " + " ".join(str(int(v)) for v in h.segment_length) + "\n")
        fh.write(f"transcripts {len(state.transcripts)}\n")
        for t in state.transcripts:
            fh.write(" ".join(str(a) for a in t.labels) + "\n")


def load_state(path) -> ModelState:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    it = iter(lines[1:])
    params = read_params(it)
    fields = {}
    transcripts = []
    for line in it:
        key, _, rest = line.partition(" ")
        if key == "transcripts":
            transcripts = [Transcript(tuple(int(a) for a in next(it).split())) for _ in range(int(rest))]
        else:
            fields[key] = rest.split()
    hist = PseudoGtHistory(*(np.array([int(v) for v in fields[k]], dtype=np.int64)
                             for k in ("history_frames", "history_segments", "history_length")))
    return ModelState(
        params=params,
        prior=ClassPrior([float(v) for v in fields["log_prior"]]),
        lengths=LengthModel([float(v) for v in fields["lambda"]]),
        history=hist,
        init_lambda=float(fields["init_lambda"][0]),
        transcripts=transcripts,
        iteration=int(fields["iteration"][0]),
    )
