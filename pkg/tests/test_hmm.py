import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weakseg.core import FrameLogPosteriors, Segmentation, Transcript
from weakseg.hmm import (
    ClassPrior,
    InfeasibleTranscriptError,
    LengthModel,
    constrained_viterbi,
    decode_log_likelihood,
    frame_log_likelihood,
    poisson_log_pmf,
    segmentation_log_posterior,
    select_transcript,
)
from weakseg.oracle import brute_force_viterbi, compositions

from conftest import random_post


# -- frame likelihood ---------------------------------------------------------


def test_uniform_prior_shifts_by_log_K(rng):
    post = random_post(rng, 7, 4)
    out = frame_log_likelihood(post, ClassPrior.uniform(4))
    np.testing.assert_allclose(out, post.values + np.log(4), atol=1e-12)


def test_posterior_equal_to_prior_cancels():
    p = np.array([0.1, 0.2, 0.7])
    post = FrameLogPosteriors(np.tile(np.log(p), (5, 1)))
    assert np.all(frame_log_likelihood(post, ClassPrior.from_probs(p)) == 0.0)


def test_two_class_row():
    post = FrameLogPosteriors(np.log([[0.9, 0.1]]))
    out = frame_log_likelihood(post, ClassPrior(np.log([0.5, 0.5])))
    # direct subtraction: log(0.9) - log(0.5), log(0.1) - log(0.5)
    np.testing.assert_allclose(out[0], [0.5877867, -1.6094379], atol=1e-6)


def test_frame_likelihood_shape_mismatch(rng):
    with pytest.raises(ValueError):
        frame_log_likelihood(random_post(rng, 3, 3), ClassPrior.uniform(2))


# -- Poisson -------------------------------------------------------------------


@pytest.mark.parametrize("l,lam,expected", [
    (0, 1.0, -1.0),
    (2, 2.0, math.log(2.0) - 2.0),
    (5, 5.0, math.log(5**5 * math.exp(-5) / 120)),
])
def test_poisson_values(l, lam, expected):
    assert poisson_log_pmf(l, lam) == pytest.approx(expected, abs=1e-12)


def test_poisson_reported_decimals():
    assert poisson_log_pmf(2, 2.0) == pytest.approx(-1.30685, abs=1e-5)
    assert poisson_log_pmf(5, 5.0) == pytest.approx(-1.74030, abs=1e-5)


@pytest.mark.parametrize("lam", [0.0, -1.0])
def test_poisson_rejects_bad_mean(lam):
    with pytest.raises(ValueError):
        poisson_log_pmf(1, lam)


@given(st.floats(min_value=0.05, max_value=400.0))
def test_poisson_normalizes(lam):
    top = math.ceil(lam + 12 * math.sqrt(lam))
    total = np.exp(poisson_log_pmf(np.arange(top + 1), lam)).sum()
    assert abs(total - 1.0) <= 1e-6


# -- constrained Viterbi -------------------------------------------------------


def test_single_frame_single_segment(rng):
    post = random_post(rng, 1, 3)
    prior = ClassPrior.from_probs([0.2, 0.3, 0.5])
    lm = LengthModel([2.0, 3.0, 4.0])
    res = constrained_viterbi(post, prior, lm, [1])
    assert res.segmentation == Segmentation((1,), (1,))
    expected = post.values[0, 1] - prior.log_p[1] + poisson_log_pmf(1, 3.0)
    assert res.log_posterior == pytest.approx(expected, abs=1e-12)


def test_three_frames_two_segments():
    post = FrameLogPosteriors(np.log([[0.95, 0.05], [0.95, 0.05], [0.05, 0.95]]))
    prior, lm = ClassPrior.uniform(2), LengthModel.constant(2, 2.0)
    # enumerate the two feasible splits [1,2] and [2,1]
    ll = frame_log_likelihood(post, prior)
    scores = {
        (1, 2): ll[0, 0] + ll[1, 1] + ll[2, 1] + poisson_log_pmf(1, 2.0) + poisson_log_pmf(2, 2.0),
        (2, 1): ll[0, 0] + ll[1, 0] + ll[2, 1] + poisson_log_pmf(2, 2.0) + poisson_log_pmf(1, 2.0),
    }
    best = max(scores, key=scores.get)
    assert best == (2, 1)
    res = constrained_viterbi(post, prior, lm, [0, 1])
    assert res.segmentation.lengths == best
    assert res.log_posterior == pytest.approx(scores[best], abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 4), st.integers(1, 4))
def test_viterbi_matches_exhaustive_search(seed, T, N, K):
    rng = np.random.default_rng(seed)
    if K == 1:
        N = 1
    N = min(N, T)
    labels = [int(rng.integers(K))]
    while len(labels) < N:
        a = int(rng.integers(K))
        if a != labels[-1]:
            labels.append(a)
    post = random_post(rng, T, K)
    prior = ClassPrior.from_probs(rng.uniform(0.1, 1.0, K))
    lm = LengthModel(rng.uniform(0.5, 15.0, K))
    res = constrained_viterbi(post, prior, lm, labels)
    seg, best = brute_force_viterbi(post, prior, lm, labels)
    assert abs(res.log_posterior - best) <= 1e-9 * max(1.0, abs(best))
    assert res.segmentation == seg
    assert res.segmentation.labels == tuple(labels)
    assert res.segmentation.T == T


def test_ties_go_to_earlier_boundary():
    # constant posteriors + identical means: [2,3] and [3,2] tie exactly
    post = FrameLogPosteriors(np.full((5, 2), -np.log(2)))
    res = constrained_viterbi(post, ClassPrior.uniform(2), LengthModel.constant(2, 2.5), [0, 1])
    seg, _ = brute_force_viterbi(post, ClassPrior.uniform(2), LengthModel.constant(2, 2.5), [0, 1])
    assert res.segmentation == seg == Segmentation((0, 1), (2, 3))


def test_log_posterior_is_sum_of_terms(rng):
    post = random_post(rng, 20, 3)
    prior = ClassPrior.from_probs([0.5, 0.3, 0.2])
    lm = LengthModel([4.0, 6.0, 9.0])
    res = constrained_viterbi(post, prior, lm, [2, 0, 1])
    assert res.log_posterior == pytest.approx(
        segmentation_log_posterior(post, prior, lm, res.segmentation), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50), st.integers(0, 11))
def test_row_shift_leaves_argmax_unchanged(seed, shift, row):
    rng = np.random.default_rng(seed)
    ll = rng.normal(size=(12, 3))
    lm = LengthModel([3.0, 4.0, 5.0])
    base = decode_log_likelihood(ll, lm, [0, 1, 2])
    ll2 = ll.copy()
    ll2[row] += shift
    moved = decode_log_likelihood(ll2, lm, [0, 1, 2])
    assert moved.segmentation == base.segmentation
    assert moved.log_posterior == pytest.approx(base.log_posterior + shift, abs=1e-9)


def test_infeasible_and_unknown_class(rng):
    post = random_post(rng, 2, 3)
    prior, lm = ClassPrior.uniform(3), LengthModel.constant(3, 1.0)
    with pytest.raises(InfeasibleTranscriptError):
        constrained_viterbi(post, prior, lm, [0, 1, 2])
    with pytest.raises(ValueError):
        constrained_viterbi(post, prior, lm, [5])


def test_segment_length_cap(rng):
    post = random_post(rng, 12, 2)
    prior, lm = ClassPrior.uniform(2), LengthModel([10.0, 1.0])
    res = constrained_viterbi(post, prior, lm, [0, 1], max_segment_length=6)
    assert max(res.segmentation.lengths) <= 6
    best = max(
        (segmentation_log_posterior(post, prior, lm, Segmentation.from_cuts((0, 1), c)), c)
        for c in compositions(12, 2) if max(np.diff(c)) <= 6
    )
    assert res.log_posterior == pytest.approx(best[0], abs=1e-10)
    with pytest.raises(InfeasibleTranscriptError):
        constrained_viterbi(post, prior, lm, [0, 1], max_segment_length=5)


def test_minus_inf_posteriors_block_segments():
    v = np.full((4, 2), np.log(0.5))
    v[0] = [0.0, -np.inf]
    post = FrameLogPosteriors(v)
    prior, lm = ClassPrior.uniform(2), LengthModel.constant(2, 2.0)
    # frame 0 cannot be class 1, so no segmentation may start with it
    for tr in ([1, 0], [1]):
        with pytest.raises(InfeasibleTranscriptError):
            constrained_viterbi(post, prior, lm, tr)
    res = constrained_viterbi(post, prior, lm, [0, 1])
    seg, best = brute_force_viterbi(post, prior, lm, [0, 1])
    assert res.segmentation == seg
    assert res.log_posterior == pytest.approx(best, abs=1e-12)


# -- transcript selection ----------------------------------------------------


def _separable_video(rng, transcript, lengths, K, sharp=4.0):
    frames = np.repeat(transcript, lengths)
    scores = rng.normal(scale=0.3, size=(frames.size, K))
    scores[np.arange(frames.size), frames] += sharp
    return FrameLogPosteriors.from_scores(scores)


def test_single_candidate(rng):
    post = random_post(rng, 10, 3)
    t, res = select_transcript(post, ClassPrior.uniform(3), LengthModel.constant(3, 5.0), [[2, 0]])
    assert t == Transcript((2, 0))
    assert res.segmentation.labels == (2, 0)


def test_true_transcript_wins_on_separable_video(rng):
    post = _separable_video(rng, [0, 2, 1], [6, 5, 7], 3)
    prior, lm = ClassPrior.uniform(3), LengthModel.constant(3, 6.0)
    cands = [Transcript((0, 2, 1)), Transcript((1, 2, 0))]
    scores = {c: constrained_viterbi(post, prior, lm, c).log_posterior for c in cands}
    expected = max(cands, key=scores.get)
    assert expected == Transcript((0, 2, 1))
    t, _ = select_transcript(post, prior, lm, cands)
    assert t == expected


def test_duplicates_do_not_matter(rng):
    post = random_post(rng, 9, 3)
    prior, lm = ClassPrior.uniform(3), LengthModel.constant(3, 3.0)
    a = select_transcript(post, prior, lm, [[0, 1], [2, 1, 0], [1]])
    b = select_transcript(post, prior, lm, [[0, 1], [2, 1, 0], [1], [0, 1], (2, 1, 0)])
    assert a == b


def test_selection_tie_prefers_smaller_transcript():
    post = FrameLogPosteriors(np.full((4, 3), -np.log(3)))
    t, _ = select_transcript(post, ClassPrior.uniform(3), LengthModel.constant(3, 2.0), [[2, 1], [1, 2], [0, 2]])
    assert t == Transcript((0, 2))


def test_all_candidates_infeasible(rng):
    post = random_post(rng, 2, 3)
    with pytest.raises(InfeasibleTranscriptError):
        select_transcript(post, ClassPrior.uniform(3), LengthModel.constant(3, 1.0), [[0, 1, 2]])
