"""Brute-force references for the dynamic programs, and finite-difference checks.

Everything here enumerates explicitly and is meant for tiny inputs only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import FrameLogPosteriors, Segmentation, Transcript, as_log_posteriors, as_transcript
from .hmm import ClassPrior, LengthModel, constrained_viterbi, frame_log_likelihood, poisson_log_pmf
from .losses import LossKind, forward_loss, logadd, logadd_all_paths, logadd_hard_invalid, loss_from_weights
from .scorer import init_params, scorer_backward, scorer_forward
from .seggraph import SegGraph, _vertex_paths, build_graph, enumerate_paths, path_energy


# -- Viterbi -----------------------------------------------------------------


def compositions(T: int, N: int):
    """All ways of splitting T frames into N positive lengths, as cut tuples (0, ..., T)."""
    for inner in itertools.combinations(range(1, T), N - 1):
        yield (0,) + inner + (T,)


def brute_force_viterbi(post, prior: ClassPrior, lengths: LengthModel, transcript,
                        tie_tol: float = 1e-9) -> Tuple[Segmentation, float]:
    """Exhaustive search over length compositions.

    Among scores within ``tie_tol`` of the best, the one with the earliest last
    cut wins, then the earliest second-to-last cut, and so on.
    """
    post = as_log_posteriors(post)
    transcript = as_transcript(transcript, post.K)
    ll = frame_log_likelihood(post, prior)
    scored = []
    for cuts in compositions(post.T, len(transcript)):
        s = 0.0
        for n, a in enumerate(transcript):
            for t in range(cuts[n], cuts[n + 1]):
                s += ll[t, a]
            s += poisson_log_pmf(cuts[n + 1] - cuts[n], lengths.lam[a])
        scored.append((s, cuts))
    best = max(s for s, _ in scored)
    tied = [c for s, c in scored if s >= best - tie_tol]
    cuts = min(tied, key=lambda c: tuple(reversed(c)))
    return Segmentation.from_cuts(transcript.labels, cuts), best


# -- path sets -----------------------------------------------------------------


def brute_force_valid(g: SegGraph, transcript) -> float:
    return logadd([path_energy(g, p) for p in enumerate_paths(g, transcript)])


def brute_force_all(g: SegGraph) -> float:
    return logadd([path_energy(g, p) for p in enumerate_paths(g)])


def brute_force_hard(g: SegGraph, transcript) -> float:
    """Each edge picks any class; a class costs its weight if strictly below the
    transcript class's weight on that edge, and nothing otherwise."""
    transcript = as_transcript(transcript, g.K)
    energies = []
    for verts in _vertex_paths(g):
        per_edge = []
        for n, (v, v2) in enumerate(zip(verts, verts[1:])):
            ref = g.edge_weight(v, v2, transcript[n])
            opts = []
            for a in range(g.K):
                w = g.edge_weight(v, v2, a)
                opts.append(w if w < ref else 0.0)
            per_edge.append(opts)
        for choice in itertools.product(*per_edge):
            energies.append(float(sum(choice)))
    return logadd(energies)


def brute_force_loss(g: SegGraph, transcript, kind) -> float:
    kind = LossKind.parse(kind)
    v = brute_force_valid(g, transcript)
    if kind.variant == "F":
        return v
    if kind.variant == "DF":
        return v - kind.alpha * brute_force_all(g)
    return v - brute_force_hard(g, transcript)


# -- random instances ---------------------------------------------------------


def random_case(rng: np.random.Generator, max_layers: int = 5, max_layer_size: int = 3, max_K: int = 4,
                scale: float = 2.0):
    """Random (graph, transcript) with at most ``max_layers`` layers of at most ``max_layer_size`` vertices."""
    K = int(rng.integers(1, max_K + 1))
    N = 1 if K == 1 else int(rng.integers(1, max_layers))
    labels = [int(rng.integers(K))]
    while len(labels) < N:
        a = int(rng.integers(K))
        if a != labels[-1]:
            labels.append(a)
    lengths = rng.integers(2, 7, size=N)
    T = int(lengths.sum())
    post = FrameLogPosteriors.from_scores(scale * rng.normal(size=(T, K)))
    window = int(rng.integers(0, max_layer_size + 1))
    g = build_graph(Segmentation(tuple(labels), tuple(int(l) for l in lengths)), post, window)
    return g, Transcript(tuple(labels)), post


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(b))


def edge_gradient_check(g: SegGraph, transcript, kind, h: float = 1e-5, tie_gap: float = 1e-3) -> Optional[float]:
    """Max deviation of analytic d loss / d w from central differences, relative to
    ``max(1, max |fd|)``. Edges with a class within ``tie_gap`` of the transcript
    class are skipped for CDF. Returns None when nothing was checkable."""
    kind = LossKind.parse(kind)
    transcript = as_transcript(transcript, g.K)
    weights = g.all_edge_weights()
    masks = [g.layers[n - 1][:, None] < g.layers[n][None, :] for n in range(1, g.N + 1)]
    _, grads = loss_from_weights(weights, transcript, kind, masks, want_grad=True)
    ana, fd = [], []
    for n, W in enumerate(weights):
        a_n = transcript[n]
        for i, j in zip(*np.nonzero(masks[n])):
            if not np.all(np.isfinite(W[i, j])):
                continue
            if kind.variant == "CDF":
                gap = np.abs(np.delete(W[i, j], a_n) - W[i, j, a_n])
                if gap.size and gap.min() < tie_gap:
                    continue
            for a in range(g.K):
                wp = [w.copy() for w in weights]
                wm = [w.copy() for w in weights]
                wp[n][i, j, a] += h
                wm[n][i, j, a] -= h
                fp = loss_from_weights(wp, transcript, kind, masks)[0]
                fm = loss_from_weights(wm, transcript, kind, masks)[0]
                fd.append((fp - fm) / (2 * h))
                ana.append(grads[n][i, j, a])
    if not fd:
        return None
    ana, fd = np.asarray(ana), np.asarray(fd)
    return float(np.max(np.abs(ana - fd)) / max(1.0, np.max(np.abs(fd))))


def scorer_gradient_check(variant: str, rng: np.random.Generator, T: int = 6, D: int = 3, K: int = 3,
                          hidden: int = 4, h: float = 1e-6) -> float:
    """Max deviation of scorer gradients from central differences, relative to ``max(1, max |fd|)``."""
    params = init_params(variant, D, K, hidden, seed=int(rng.integers(2**31)), scale=0.5)
    x = rng.normal(size=(T, D))
    G = rng.normal(size=(T, K))

    def f(p):
        return float(np.sum(G * scorer_forward(p, x)[0].values))

    _, cache = scorer_forward(params, x)
    grads = scorer_backward(params, cache, G)
    worst = 0.0
    for name in params.names():
        a = params.arrays[name]
        fd = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            fp = f(params)
            a[idx] = old - h
            fm = f(params)
            a[idx] = old
            fd[idx] = (fp - fm) / (2 * h)
        dev = np.max(np.abs(grads.arrays[name] - fd)) / max(1.0, np.max(np.abs(fd)))
        worst = max(worst, float(dev))
    return worst


@dataclass
class OracleReport:
    n_graphs: int
    max_loss_dev: Dict[str, float]
    n_grad_graphs: int
    max_grad_dev: Dict[str, float]
    max_scorer_dev: Dict[str, float]
    n_viterbi: int
    max_viterbi_dev: float
    viterbi_mismatches: int

    @property
    def loss_dev(self) -> float:
        return max(self.max_loss_dev.values())

    @property
    def grad_dev(self) -> float:
        return max(list(self.max_grad_dev.values()) + list(self.max_scorer_dev.values()))

    def ok(self, loss_tol: float = 1e-9, grad_tol: float = 1e-5, scorer_tol: float = 1e-4) -> bool:
        return (self.loss_dev <= loss_tol
                and max(self.max_grad_dev.values()) <= grad_tol
                and max(self.max_scorer_dev.values()) <= scorer_tol
                and self.max_viterbi_dev <= 1e-9 and self.viterbi_mismatches == 0)

    def to_text(self) -> str:
        lines = [f"graphs checked: {self.n_graphs}"]
        lines += [f"max relative deviation {k}: {v:.3e}" for k, v in self.max_loss_dev.items()]
        lines.append(f"gradient graphs checked: {self.n_grad_graphs}")
        lines += [f"max gradient deviation {k}: {v:.3e}" for k, v in self.max_grad_dev.items()]
        lines += [f"max scorer gradient deviation {k}: {v:.3e}" for k, v in self.max_scorer_dev.items()]
        lines.append(f"viterbi cases: {self.n_viterbi}, max value deviation {self.max_viterbi_dev:.3e}, "
                     f"segmentation mismatches {self.viterbi_mismatches}")
        lines.append(f"max loss deviation: {self.loss_dev:.3e}")
        lines.append(f"max gradient deviation: {self.grad_dev:.3e}")
        return "\n".join(lines) + "\n"


def random_viterbi_case(rng: np.random.Generator, max_T: int = 30, max_N: int = 4, max_K: int = 4):
    K = int(rng.integers(1, max_K + 1))
    N = 1 if K == 1 else int(rng.integers(1, max_N + 1))
    T = int(rng.integers(N, max_T + 1))
    labels = [int(rng.integers(K))]
    while len(labels) < N:
        a = int(rng.integers(K))
        if a != labels[-1]:
            labels.append(a)
    post = FrameLogPosteriors.from_scores(rng.normal(size=(T, K)))
    prior = ClassPrior.from_probs(rng.uniform(0.2, 1.0, size=K))
    lengths = LengthModel(rng.uniform(1.0, 12.0, size=K))
    return post, prior, lengths, Transcript(tuple(labels))


def run_oracle_suite(n_graphs: int = 200, n_grad: int = 50, n_viterbi: int = 50, seed: int = 0,
                     alpha: float = 0.1) -> OracleReport:
    rng = np.random.default_rng(seed)
    loss_dev = {"forward": 0.0, "all_paths": 0.0, "hard_invalid": 0.0}
    for _ in range(n_graphs):
        g, tr, _ = random_case(rng)
        loss_dev["forward"] = max(loss_dev["forward"], _rel(forward_loss(g, tr), brute_force_valid(g, tr)))
        loss_dev["all_paths"] = max(loss_dev["all_paths"], _rel(logadd_all_paths(g), brute_force_all(g)))
        loss_dev["hard_invalid"] = max(loss_dev["hard_invalid"],
                                       _rel(logadd_hard_invalid(g, tr), brute_force_hard(g, tr)))
    grad_dev = {"F": 0.0, f"DF({alpha:g})": 0.0, "CDF": 0.0}
    kinds = {"F": LossKind("F"), f"DF({alpha:g})": LossKind("DF", alpha), "CDF": LossKind("CDF")}
    for _ in range(n_grad):
        g, tr, _ = random_case(rng)
        for name, kind in kinds.items():
            dev = edge_gradient_check(g, tr, kind)
            if dev is not None:
                grad_dev[name] = max(grad_dev[name], dev)
    scorer_dev = {
        "linear": max(scorer_gradient_check("linear", rng) for _ in range(3)),
        "gru": max(scorer_gradient_check("gru", rng, T=8, hidden=6) for _ in range(3)),
    }
    vit_dev, mismatches = 0.0, 0
    for _ in range(n_viterbi):
        post, prior, lengths, tr = random_viterbi_case(rng, max_T=14)
        res = constrained_viterbi(post, prior, lengths, tr)
        seg, best = brute_force_viterbi(post, prior, lengths, tr)
        vit_dev = max(vit_dev, _rel(res.log_posterior, best))
        mismatches += int(seg != res.segmentation)
    return OracleReport(n_graphs, loss_dev, n_grad, grad_dev, scorer_dev, n_viterbi, vit_dev, mismatches)
