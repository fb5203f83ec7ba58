"""HMM scoring pieces and the transcript-constrained Viterbi decoder.

A segmentation ``(a_1..a_N, l_1..l_N)`` of a T-frame video is scored as

    sum_t [log p(a_n(t) | x_t) - log p(a_n(t))]  +  sum_n log Poisson(l_n; lambda_{a_n})

The constant transcript prior is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numba
import numpy as np
from scipy.special import gammaln, logsumexp

from .core import (
    FrameLogPosteriors,
    Segmentation,
    Transcript,
    ValidationError,
    as_log_posteriors,
    as_transcript,
)

NEG_INF = -np.inf


class InfeasibleTranscriptError(ValueError):
    """The transcript has more segments than the video has frames."""


@dataclass(frozen=True, eq=False)
class ClassPrior:
    log_p: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.log_p, dtype=np.float64).ravel()
        if lp.size < 1 or not np.all(np.isfinite(lp)):
            raise ValidationError("class prior must be a non-empty vector of finite log-probabilities")
        if abs(logsumexp(lp)) > 1e-6:
            raise ValidationError("class prior does not sum to one")
        lp = lp.copy()
        lp.setflags(write=False)
        object.__setattr__(self, "log_p", lp)

    @property
    def K(self) -> int:
        return self.log_p.size

    @classmethod
    def uniform(cls, K: int) -> "ClassPrior":
        return cls(np.full(K, -np.log(K)))

    @classmethod
    def from_probs(cls, p) -> "ClassPrior":
        p = np.asarray(p, dtype=np.float64)
        return cls(np.log(p / p.sum()))


@dataclass(frozen=True, eq=False)
class LengthModel:
    """Per-class Poisson means of segment length."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=np.float64).ravel()
        if lam.size < 1 or not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValidationError("Poisson means must be finite and > 0")
        lam = lam.copy()
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def K(self) -> int:
        return self.lam.size

    @classmethod
    def constant(cls, K: int, value: float) -> "LengthModel":
        return cls(np.full(K, float(value)))


@dataclass(frozen=True)
class ViterbiResult:
    segmentation: Segmentation
    log_posterior: float


@numba.njit(cache=True)
def _viterbi_kernel(cum, n_inf, pois, labels, max_len):
    # cum/n_inf: K x (T+1) prefix sums; pois: N x (T+1) log-pmf tables
    N = labels.shape[0]
    T = cum.shape[1] - 1
    prev = np.full(T + 1, -np.inf)
    prev[0] = 0.0
    cur = np.empty(T + 1)
    back = np.zeros((N, T + 1), dtype=np.int64)
    for n in range(N):
        a = labels[n]
        cur[:] = -np.inf
        for t in range(1, T + 1):
            lo = 0 if max_len <= 0 else max(0, t - max_len)
            ct = cum[a, t]
            kt = n_inf[a, t]
            best = -np.inf
            arg = 0
            for tp in range(lo, t):
                sp = prev[tp]
                if sp == -np.inf or n_inf[a, tp] < kt:
                    continue
                v = sp - cum[a, tp] + ct + pois[n, t - tp]
                if v > best:  # strict: the earliest boundary keeps ties
                    best = v
                    arg = tp
            cur[t] = best
            back[n, t] = arg
        prev, cur = cur, prev
    return prev[T], back


def frame_log_likelihood(post, prior: ClassPrior) -> np.ndarray:
    """``log p(a|x_t) - log p(a)``, the frame likelihood up to a per-frame constant."""
    post = as_log_posteriors(post)
    if post.K != prior.K:
        raise ValueError(f"posteriors have K={post.K} but prior has K={prior.K}")
    return post.values - prior.log_p[None, :]


def poisson_log_pmf(l, lam):
    """``l log(lam) - lam - log(l!)``; vectorizes over ``l``."""
    lam = float(lam)
    if not lam > 0:
        raise ValueError(f"Poisson mean must be > 0, got {lam}")
    l_arr = np.asarray(l, dtype=np.float64)
    if np.any(l_arr < 0):
        raise ValueError("Poisson support is l >= 0")
    out = l_arr * np.log(lam) - lam - gammaln(l_arr + 1.0)
    return float(out) if out.ndim == 0 else out


def _check_inputs(post, prior, lengths, transcript):
    post = as_log_posteriors(post)
    if not (post.K == prior.K == lengths.K):
        raise ValueError("posteriors, prior and length model disagree on K")
    transcript = as_transcript(transcript, post.K)
    if len(transcript) > post.T:
        raise InfeasibleTranscriptError(
            f"transcript has {len(transcript)} segments but the video has only {post.T} frames"
        )
    return post, transcript


def constrained_viterbi(
    post,
    prior: ClassPrior,
    lengths: LengthModel,
    transcript,
    max_segment_length: Optional[int] = None,
) -> ViterbiResult:
    """Best length assignment for a fixed transcript.

    Runs in O(T^2 N) time. Ties go to the earlier boundary. ``max_segment_length``
    bounds every segment (an approximation, off by default).
    """
    post, transcript = _check_inputs(post, prior, lengths, transcript)
    return decode_log_likelihood(frame_log_likelihood(post, prior), lengths, transcript, max_segment_length)


def decode_log_likelihood(ll, lengths: LengthModel, transcript, max_segment_length: Optional[int] = None) -> ViterbiResult:
    """Constrained decode of an arbitrary T x K frame log-likelihood matrix."""
    ll = np.asarray(ll, dtype=np.float64)
    if ll.ndim != 2 or ll.shape[1] != lengths.K or np.any(np.isnan(ll)) or np.any(ll == np.inf):
        raise ValueError("frame log-likelihoods must be a T x K matrix of finite or -inf values")
    transcript = as_transcript(transcript, lengths.K)
    T, N = ll.shape[0], len(transcript)
    if N > T:
        raise InfeasibleTranscriptError(f"transcript has {N} segments but the video has only {T} frames")
    # cum[t, a] = sum of ll over frames 0..t-1; -inf frames are counted apart
    finite = np.isfinite(ll)
    cum = np.zeros((T + 1, ll.shape[1]))
    np.cumsum(np.where(finite, ll, 0.0), axis=0, out=cum[1:])
    n_inf = np.zeros((T + 1, ll.shape[1]), dtype=np.int64)
    np.cumsum(~finite, axis=0, out=n_inf[1:])

    if max_segment_length is not None and max_segment_length < 1:
        raise ValueError("max_segment_length must be >= 1")
    labels = np.asarray(transcript.labels, dtype=np.int64)
    pois = np.empty((N, T + 1))
    for a in np.unique(labels):
        pois[labels == a] = poisson_log_pmf(np.arange(T + 1), lengths.lam[a])
    score, back = _viterbi_kernel(
        np.ascontiguousarray(cum.T), np.ascontiguousarray(n_inf.T), pois, labels, max_segment_length or 0
    )

    total = float(score)
    if total == NEG_INF:
        raise InfeasibleTranscriptError("no feasible segmentation (segment length cap too small?)")
    cuts = [T]
    for n in range(N - 1, -1, -1):
        cuts.append(int(back[n, cuts[-1]]))
    cuts.reverse()
    return ViterbiResult(Segmentation.from_cuts(transcript.labels, cuts), total)


def segmentation_log_posterior(post, prior: ClassPrior, lengths: LengthModel, seg: Segmentation) -> float:
    """Score of a given segmentation under the same model the decoder maximizes."""
    post = as_log_posteriors(post)
    if seg.T != post.T:
        raise ValueError("segmentation does not cover the video")
    ll = frame_log_likelihood(post, prior)
    frames = seg.to_frames()
    total = float(np.sum(ll[np.arange(post.T), frames]))
    for a, l in zip(seg.labels, seg.lengths):
        total += poisson_log_pmf(l, lengths.lam[a])
    return total


def select_transcript(
    post,
    prior: ClassPrior,
    lengths: LengthModel,
    candidates: Iterable,
    max_segment_length: Optional[int] = None,
) -> Tuple[Transcript, ViterbiResult]:
    """Pick the candidate transcript whose constrained decode scores highest.

    Raw log-posteriors are compared across transcripts of different length.
    Ties go to the lexicographically smaller transcript.
    """
    post = as_log_posteriors(post)
    pool = sorted({as_transcript(c, post.K) for c in candidates})
    if not pool:
        raise ValueError("no candidate transcripts")
    best: Optional[Tuple[Transcript, ViterbiResult]] = None
    for cand in pool:
        if len(cand) > post.T:
            continue
        try:
            res = constrained_viterbi(post, prior, lengths, cand, max_segment_length)
        except InfeasibleTranscriptError:
            continue
        if best is None or res.log_posterior > best[1].log_posterior:
            best = (cand, res)
    if best is None:
        raise InfeasibleTranscriptError("every candidate transcript is longer than the video")
    return best
