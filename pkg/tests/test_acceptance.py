"""Acceptance suite: one recorded pass/fail line per top-level criterion.

Run with ``pytest tests/test_acceptance.py -s`` (or as part of the full run);
the summary block at the end of the pytest output lists every criterion.
"""

import time

import numpy as np
import pytest

from weakseg.core import Segmentation, Transcript
from weakseg.hmm import ClassPrior, LengthModel, constrained_viterbi
from weakseg.losses import CDF, DF, F, forward_loss, logadd_all_paths, logadd_hard_invalid, loss_backward
from weakseg.metrics import iou_iod, mof, mof_bg
from weakseg.oracle import (
    brute_force_all,
    brute_force_hard,
    brute_force_valid,
    brute_force_viterbi,
    edge_gradient_check,
    random_case,
    random_viterbi_case,
    scorer_gradient_check,
)
from weakseg.scorer import scorer_forward
from weakseg.seggraph import PathAssignment, build_graph, enumerate_paths, path_energy
from weakseg.synth import SynthConfig, generate_synthetic, train_test_split
from weakseg.trainer import TrainConfig, decode, segment, train

from conftest import random_post, record_criterion


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


def test_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = {"forward": 0.0, "all_paths": 0.0, "hard_invalid": 0.0}
    n = 250
    for _ in range(n):
        g, tr, _ = random_case(rng, max_layers=5, max_layer_size=3, max_K=4)
        assert len(g.layers) <= 5 and max(g.layer_sizes) <= 3 and g.K <= 4
        worst["forward"] = max(worst["forward"], _rel(forward_loss(g, tr), brute_force_valid(g, tr)))
        worst["all_paths"] = max(worst["all_paths"], _rel(logadd_all_paths(g), brute_force_all(g)))
        worst["hard_invalid"] = max(worst["hard_invalid"], _rel(logadd_hard_invalid(g, tr), brute_force_hard(g, tr)))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-9 and elapsed < 60
    detail = f"{n} graphs, max rel dev " + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f", {elapsed:.1f}s"
    record_criterion("oracle equivalence", ok, detail)
    assert ok, detail


def test_gradient_correctness():
    rng = np.random.default_rng(7)
    kinds = {"F": F, "DF(0.1)": DF(0.1), "CDF": CDF}
    worst = dict.fromkeys(kinds, 0.0)
    checked = dict.fromkeys(kinds, 0)
    n = 60
    for _ in range(n):
        g, tr, _ = random_case(rng)
        for name, kind in kinds.items():
            dev = edge_gradient_check(g, tr, kind, h=1e-5)
            if dev is not None:
                worst[name] = max(worst[name], dev)
                checked[name] += 1
    scorer = {
        "linear": max(scorer_gradient_check("linear", rng, T=int(rng.integers(1, 11))) for _ in range(5)),
        "gru": max(scorer_gradient_check("gru", rng, T=int(rng.integers(1, 11)), hidden=int(rng.integers(1, 9)))
                   for _ in range(5)),
    }
    ok = max(worst.values()) <= 1e-5 and max(scorer.values()) <= 1e-4 and min(checked.values()) >= 50
    detail = (", ".join(f"{k} {v:.2e} ({checked[k]} graphs)" for k, v in worst.items())
              + "; scorer " + ", ".join(f"{k} {v:.2e}" for k, v in scorer.items()))
    record_criterion("gradient correctness", ok, detail)
    assert ok, detail


def test_viterbi_exactness():
    rng = np.random.default_rng(11)
    worst, mismatches, n = 0.0, 0, 120
    for _ in range(n):
        post, prior, lengths, tr = random_viterbi_case(rng, max_T=30, max_N=4, max_K=4)
        res = constrained_viterbi(post, prior, lengths, tr)
        seg, best = brute_force_viterbi(post, prior, lengths, tr)
        worst = max(worst, _rel(res.log_posterior, best))
        mismatches += int(seg != res.segmentation)
    ok = worst <= 1e-9 and mismatches == 0
    detail = f"{n} cases (T<=30, N<=4, K<=4), max rel dev {worst:.2e}, {mismatches} segmentation mismatches"
    record_criterion("viterbi exactness", ok, detail)
    assert ok, detail


def test_zero_window_identity():
    rng = np.random.default_rng(5)
    n, bad = 100, 0
    for _ in range(n):
        K = int(rng.integers(2, 6))
        N = int(rng.integers(1, 7))
        labels = [int(rng.integers(K))]
        while len(labels) < N:
            a = int(rng.integers(K))
            if a != labels[-1]:
                labels.append(a)
        anchor = Segmentation(tuple(labels), tuple(int(l) for l in rng.integers(1, 30, size=N)))
        g = build_graph(anchor, random_post(rng, anchor.T, K), window=0)
        (p,) = enumerate_paths(g, anchor.transcript)
        bad += int(forward_loss(g, anchor.transcript) != path_energy(g, p))
    record_criterion("zero-window forward loss equals anchor energy", bad == 0, f"{n - bad}/{n} exact matches")
    assert bad == 0


@pytest.fixture(scope="module")
def e2e_corpus():
    d = generate_synthetic(SynthConfig(K=5, D=8, n_videos=100, transcript_length=(2, 4), mean_length=15.0,
                                       noise=0.5, n_templates=10, seed=100))
    return train_test_split(d, 20)


E2E = dict(window=6, iterations=2000, scorer="gru", hidden=16)


def _fit_and_score(train_set, test_set, loss, seed):
    start = time.perf_counter()
    state = train(TrainConfig(loss=loss, seed=seed, **E2E), train_set)
    preds = [segment(state, v, window=E2E["window"]).to_frames() for v in test_set.videos]
    score = mof(np.concatenate(preds), np.concatenate([v.ground_truth for v in test_set.videos]))
    return score, time.perf_counter() - start, state


@pytest.mark.slow
def test_refinement_never_hurts(e2e_corpus):
    train_set, test_set = e2e_corpus
    state = train(TrainConfig(loss="CDF", seed=0, window=6, iterations=300, scorer="gru", hidden=16), train_set)
    n, bad = 0, 0
    for window in (2, 6, 20):
        for v in test_set.videos:
            for pool in (state.transcripts, [Transcript(v.transcript)]):
                res = decode(state, v, pool, window)
                post, _ = scorer_forward(state.params, v.features)
                g = build_graph(res.anchor, post, window)
                seg = res.segmentation
                e_out = path_energy(g, PathAssignment(seg.cuts, seg.labels))
                e_anchor = path_energy(g, PathAssignment(res.anchor.cuts, res.anchor.labels))
                bad += int(not e_out <= e_anchor)
                n += 1
    record_criterion("refinement never hurts", bad == 0, f"{n - bad}/{n} decodes with energy <= anchor energy")
    assert bad == 0


@pytest.mark.slow
def test_end_to_end_trend(e2e_corpus):
    train_set, test_set = e2e_corpus
    scores = {"CDF": [], "F": []}
    times = []
    for seed in range(5):
        for loss in scores:
            s, t, _ = _fit_and_score(train_set, test_set, loss, seed)
            scores[loss].append(s)
            times.append(t)
    cdf, f = np.mean(scores["CDF"]), np.mean(scores["F"])
    ok = min(scores["CDF"]) >= 0.8 and cdf >= f - 0.01 and max(times) <= 300
    detail = (f"CDF Mof per seed {[round(x, 4) for x in scores['CDF']]} (mean {cdf:.4f}); "
              f"F mean {f:.4f}; slowest run {max(times):.1f}s")
    record_criterion("end-to-end synthetic trend", ok, detail)
    assert ok, detail


def _best_time(fn, reps=7):
    best = np.inf
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


@pytest.mark.slow
def test_complexity_scaling():
    rng = np.random.default_rng(3)
    K, N = 5, 6
    tr = Transcript((0, 1, 2, 3, 4, 0))
    prior, lengths = ClassPrior.uniform(K), LengthModel.constant(K, 400.0)
    posts = {T: random_post(rng, T, K) for T in (2000, 4000)}
    constrained_viterbi(posts[2000], prior, lengths, tr)  # compile
    times = {2000: np.inf, 4000: np.inf}
    for _ in range(7):
        # interleave to even out machine noise
        for T in times:
            t = time.perf_counter()
            constrained_viterbi(posts[T], prior, lengths, tr)
            times[T] = min(times[T], time.perf_counter() - t)
    v_ratio = times[4000] / times[2000]

    T, Nl = 2000, 10
    labels = tuple(int(a) for a in np.arange(Nl) % K)
    anchor = Segmentation(labels, (T // Nl,) * Nl)
    post = random_post(rng, T, K)
    graphs = {w: build_graph(anchor, post, w) for w in (20, 40)}
    loss_times = {w: _best_time(lambda g=g: loss_backward(g, labels, CDF)) for w, g in graphs.items()}
    l_ratio = loss_times[40] / loss_times[20]

    ok = 3.0 <= v_ratio <= 5.5 and l_ratio <= 5.0
    detail = (f"viterbi T 2000->4000 x{v_ratio:.2f} ({times[2000] * 1e3:.1f}ms -> {times[4000] * 1e3:.1f}ms); "
              f"loss window 20->40 x{l_ratio:.2f}")
    record_criterion("complexity scaling", ok, detail)
    assert ok, detail


def test_metric_sanity():
    gt = [0, 1, 1, 2, 2, 2]
    perfect = (mof(gt, gt), mof_bg(gt, gt, 0), *iou_iod(gt, gt, 0))
    examples = [
        mof([1, 1, 2, 2], [1, 2, 2, 2]) == 0.75,
        mof_bg([1, 1, 2], [0, 1, 1], 0) == 0.5,
        # GT segments: class 1 vs detection [5,15) gives 5/15; class 2 vs [15,20) gives 5/10
        iou_iod([2] * 5 + [1] * 10 + [2] * 5, [1] * 10 + [2] * 10)[0] == (5 / 15 + 5 / 10) / 2,
    ]
    a = [1] * 10 + [0] * 10
    d = [0] * 5 + [1] * 10 + [0] * 5
    iou, iod = iou_iod(d, a, background_id=0)
    examples.append(iou == 5 / 15 and iod == 5 / 10)
    ok = perfect == (1.0, 1.0, 1.0, 1.0) and all(examples)
    record_criterion("metric sanity", ok, f"perfect {perfect}, hand examples {sum(examples)}/{len(examples)} exact")
    assert ok
