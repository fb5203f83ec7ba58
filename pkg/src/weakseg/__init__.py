"""Weakly supervised temporal segmentation with segmentation-graph energy losses."""

from .core import (
    Dataset,
    FrameLogPosteriors,
    FrameSequence,
    LabelSet,
    Segmentation,
    Transcript,
    ValidationError,
    Video,
    load_dataset,
    save_dataset,
    validate_dataset,
)
from .estimator import WeakSegmenter
from .hmm import ClassPrior, LengthModel, ViterbiResult, constrained_viterbi, poisson_log_pmf, select_transcript
from .losses import LossGradients, LossKind, forward_loss, logadd, loss_backward, loss_value
from .seggraph import PathAssignment, SegGraph, build_graph, enumerate_paths, path_energy

__version__ = "0.1.0"
