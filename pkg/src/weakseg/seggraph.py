"""Layered segmentation graph around an anchor segmentation.

Layer ``n`` holds candidate positions for the n-th cut. Positions are frame
boundaries in ``[0, T]``; an edge ``(v, v')`` between consecutive layers is
the segment of frames ``v+1 .. v'`` (half-open ``(v, v']``), and labelling it
with class ``a`` costs ``sum -log p(a|x_t)`` over those frames.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import Segmentation, Transcript, as_log_posteriors, as_transcript

MAX_ENUMERATED_PATHS = 10**6


class GraphError(ValueError):
    pass


def window_offsets(window: int) -> Tuple[int, int]:
    """Frames taken left and right of a cut for a centred window of ``window`` frames."""
    if window < 0:
        raise GraphError(f"window must be >= 0, got {window}")
    if window <= 1:
        return 0, 0
    return window // 2, (window - 1) // 2


@dataclass(frozen=True, eq=False)
class SegGraph:
    layers: Tuple[np.ndarray, ...]
    T: int
    K: int
    neg_log_post_prefix: np.ndarray
    # running count of -inf log-posteriors; kept apart so prefix differences stay finite
    inf_prefix: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return len(self.layers) - 1

    @property
    def layer_sizes(self) -> List[int]:
        return [len(l) for l in self.layers]

    @property
    def n_vertices(self) -> int:
        return sum(self.layer_sizes)

    @property
    def n_edges(self) -> int:
        return sum(int(np.sum(self.layers[n - 1][:, None] < self.layers[n][None, :]))
                   for n in range(1, len(self.layers)))

    def n_vertex_paths(self) -> int:
        count = np.ones(1, dtype=object)
        for n in range(1, len(self.layers)):
            ok = self.layers[n - 1][:, None] < self.layers[n][None, :]
            count = np.array([sum(count[i] for i in np.flatnonzero(ok[:, j])) for j in range(ok.shape[1])],
                             dtype=object)
        return int(sum(count))

    def _check_positions(self, v, v2):
        if not (0 <= v < v2 <= self.T):
            raise GraphError(f"invalid segment ({v}, {v2}] for T={self.T}")

    def edge_weight(self, v: int, v2: int, a: int) -> float:
        """Energy of labelling frames ``v+1..v2`` with class ``a``."""
        self._check_positions(v, v2)
        if not 0 <= a < self.K:
            raise GraphError(f"class {a} out of range")
        if self.inf_prefix is not None and self.inf_prefix[v2, a] > self.inf_prefix[v, a]:
            return np.inf
        return float(self.neg_log_post_prefix[v2, a] - self.neg_log_post_prefix[v, a])

    def edge_weights(self, n: int) -> np.ndarray:
        """Weights between layers ``n-1`` and ``n`` as a ``(|L_{n-1}|, |L_n|, K)`` array.

        Pairs that are not temporally ordered get ``+inf``.
        """
        if not 1 <= n <= self.N:
            raise GraphError(f"layer transition {n} out of range 1..{self.N}")
        src, dst = self.layers[n - 1], self.layers[n]
        P = self.neg_log_post_prefix
        w = P[dst][None, :, :] - P[src][:, None, :]
        if self.inf_prefix is not None:
            I = self.inf_prefix
            w[(I[dst][None, :, :] - I[src][:, None, :]) > 0] = np.inf
        w[~(src[:, None] < dst[None, :])] = np.inf
        return w

    def all_edge_weights(self) -> List[np.ndarray]:
        return [self.edge_weights(n) for n in range(1, self.N + 1)]

    def dump(self, transcript: Optional[Transcript] = None, names: Optional[Sequence[str]] = None) -> str:
        """Plain-text table of layers, edges and per-class weights."""
        names = list(names) if names is not None else [str(a) for a in range(self.K)]
        lines = [f"# T={self.T} K={self.K} N={self.N} vertices={self.n_vertices} edges={self.n_edges}"]
        for n, layer in enumerate(self.layers):
            lines.append(f"layer {n}: " + " ".join(str(int(v)) for v in layer))
        lines.append("from\tto\tlen\t" + ("valid\t" if transcript is not None else "") + "\t".join(names))
        for n in range(1, self.N + 1):
            w = self.edge_weights(n)
            for i, v in enumerate(self.layers[n - 1]):
                for j, v2 in enumerate(self.layers[n]):
                    if v >= v2:
                        continue
                    cols = [f"{int(v)}", f"{int(v2)}", f"{int(v2 - v)}"]
                    if transcript is not None:
                        cols.append(names[transcript[n - 1]])
                    cols += [f"{x:.6g}" for x in w[i, j]]
                    lines.append("\t".join(cols))
        return "\n".join(lines) + "\n"


def _prefix_sums(post_values: np.ndarray):
    neg = -post_values
    finite = np.isfinite(neg)
    T, K = neg.shape
    P = np.zeros((T + 1, K))
    np.cumsum(np.where(finite, neg, 0.0), axis=0, out=P[1:])
    P.setflags(write=False)
    inf_prefix = None
    if not finite.all():
        inf_prefix = np.zeros((T + 1, K), dtype=np.int64)
        np.cumsum(~finite, axis=0, out=inf_prefix[1:])
        inf_prefix.setflags(write=False)
    return P, inf_prefix


def _prune(layers: List[np.ndarray]) -> List[np.ndarray]:
    # every kept vertex must have a predecessor and a successor
    changed = True
    while changed:
        changed = False
        for n in range(1, len(layers)):
            keep = layers[n][layers[n] > layers[n - 1].min()] if layers[n - 1].size else layers[n][:0]
            if keep.size != layers[n].size:
                layers[n], changed = keep, True
        for n in range(len(layers) - 2, -1, -1):
            keep = layers[n][layers[n] < layers[n + 1].max()] if layers[n + 1].size else layers[n][:0]
            if keep.size != layers[n].size:
                layers[n], changed = keep, True
    return layers


def build_graph(anchor: Segmentation, post, window: int = 0) -> SegGraph:
    """Segmentation graph with a centred ``window`` of candidate positions around each anchor cut.

    The first and last layers are exactly ``{0}`` and ``{T}``.
    """
    post = as_log_posteriors(post)
    T, K = post.T, post.K
    if anchor.T != T:
        raise GraphError(f"anchor covers {anchor.T} frames, posteriors have {T}")
    left, right = window_offsets(window)
    cuts = anchor.cuts
    layers = [np.array([0], dtype=np.int64)]
    for n, b in enumerate(cuts[1:-1], start=1):
        pos = np.arange(b - left, b + right + 1, dtype=np.int64)
        pos = pos[(pos > 0) & (pos < T)]
        if pos.size == 0:
            raise GraphError(f"hyper-node {n} is empty after clipping to (0, {T})")
        layers.append(pos)
    layers.append(np.array([T], dtype=np.int64))
    layers = _prune(layers)
    for n, l in enumerate(layers):
        if l.size == 0:
            raise GraphError(f"hyper-node {n} is empty after monotonicity pruning")
        l.setflags(write=False)
    P, inf_prefix = _prefix_sums(post.values)
    return SegGraph(tuple(layers), T, K, P, inf_prefix)


@dataclass(frozen=True)
class PathAssignment:
    vertices: Tuple[int, ...]
    classes: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))
        object.__setattr__(self, "classes", tuple(int(a) for a in self.classes))
        if any(a >= b for a, b in zip(self.vertices, self.vertices[1:])):
            raise GraphError("path vertices must be strictly increasing")
        if len(self.classes) != len(self.vertices) - 1:
            raise GraphError("a path needs one class per edge")

    def to_segmentation(self) -> Segmentation:
        return Segmentation.from_cuts(self.classes, self.vertices)


def check_path(g: SegGraph, p: PathAssignment) -> None:
    if len(p.vertices) != len(g.layers):
        raise GraphError(f"path has {len(p.vertices)} vertices, graph has {len(g.layers)} layers")
    for n, (v, layer) in enumerate(zip(p.vertices, g.layers)):
        if v not in set(layer.tolist()):
            raise GraphError(f"vertex {v} is not in layer {n}")
    if any(not 0 <= a < g.K for a in p.classes):
        raise GraphError("path class out of range")


def path_energy(g: SegGraph, p: PathAssignment) -> float:
    check_path(g, p)
    return float(sum(g.edge_weight(v, v2, a) for v, v2, a in zip(p.vertices, p.vertices[1:], p.classes)))


def _vertex_paths(g: SegGraph):
    def rec(n, prefix):
        if n == len(g.layers):
            yield tuple(prefix)
            return
        for v in g.layers[n]:
            if v > prefix[-1]:
                prefix.append(int(v))
                yield from rec(n + 1, prefix)
                prefix.pop()

    for v0 in g.layers[0]:
        yield from rec(1, [int(v0)])


def enumerate_paths(g: SegGraph, transcript=None, limit: int = MAX_ENUMERATED_PATHS) -> List[PathAssignment]:
    """All valid paths (classes fixed to ``transcript``) or, without one, every class-labelled path."""
    n_vertex = g.n_vertex_paths()
    if transcript is not None:
        transcript = as_transcript(transcript, g.K)
        if len(transcript) != g.N:
            raise GraphError(f"transcript has {len(transcript)} labels, graph has {g.N} edges per path")
        total = n_vertex
    else:
        total = n_vertex * g.K ** g.N
    if total > limit:
        raise GraphError(f"{total} paths exceed the enumeration guard of {limit}")
    out = []
    for verts in _vertex_paths(g):
        if transcript is not None:
            out.append(PathAssignment(verts, transcript.labels))
        else:
            for classes in itertools.product(range(g.K), repeat=g.N):
                out.append(PathAssignment(verts, classes))
    return out


def map_valid_path(g: SegGraph, transcript) -> Tuple[PathAssignment, float]:
    """Minimum-energy valid path by a min-sum pass; ties go to earlier positions."""
    transcript = as_transcript(transcript, g.K)
    if len(transcript) != g.N:
        raise GraphError(f"transcript has {len(transcript)} labels, graph has {g.N} edges per path")
    best = np.zeros(1)
    back = []
    for n, a in enumerate(transcript, start=1):
        cand = best[:, None] + g.edge_weights(n)[..., a]
        idx = np.argmin(cand, axis=0)
        back.append(idx)
        best = cand[idx, np.arange(cand.shape[1])]
    energy = float(best[0])
    if not np.isfinite(energy):
        raise GraphError("no finite-energy valid path")
    j = 0
    verts = [int(g.layers[-1][0])]
    for n in range(g.N, 0, -1):
        j = int(back[n - 1][j])
        verts.append(int(g.layers[n - 1][j]))
    verts.reverse()
    return PathAssignment(tuple(verts), transcript.labels), energy
