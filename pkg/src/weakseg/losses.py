"""Energy losses over the segmentation graph and their exact gradients.

Every loss is built from ``logadd`` totals over path sets:

* valid paths (classes fixed to the transcript),
* all paths (any class on any edge),
* "hard" paths: on each edge a class ``a`` contributes its weight when
  ``w(a) < w(a_n)`` and a zero-cost continuation otherwise.

All three share one recursion. Each layer transition carries a choice-cost
tensor ``C[i, j, a]`` (``+inf`` = not allowed); the edge cost is
``logadd_a C[i, j, a]`` and a forward/backward sweep over the layers gives the
total plus the softmin weight of each (edge, class) choice, which is the
derivative of the total w.r.t. that choice's cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import as_transcript
from .seggraph import SegGraph

INF = np.inf


class NonFiniteLossError(FloatingPointError):
    def __init__(self, msg, layer=None):
        super().__init__(msg)
        self.layer = layer


@dataclass(frozen=True)
class LossKind:
    """``F``, ``DF`` (with weight ``alpha`` on the all-paths term) or ``CDF``."""

    variant: str = "CDF"
    alpha: float = 0.1

    def __post_init__(self):
        v = self.variant.upper()
        if v not in ("F", "DF", "CDF"):
            raise ValueError(f"unknown loss variant {self.variant!r}")
        object.__setattr__(self, "variant", v)
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")

    @classmethod
    def parse(cls, spec, alpha: float = 0.1) -> "LossKind":
        if isinstance(spec, LossKind):
            return spec
        return cls(str(spec), alpha)

    def __str__(self):
        return f"DF(alpha={self.alpha:g})" if self.variant == "DF" else self.variant


F = LossKind("F")
CDF = LossKind("CDF")


def DF(alpha: float = 0.1) -> LossKind:
    return LossKind("DF", alpha)


@dataclass(eq=False)
class LossGradients:
    value: float
    d_edge: List[np.ndarray]  # per layer transition, shape (|L_{n-1}|, |L_n|, K)
    d_frame: np.ndarray  # T x K, d loss / d log p(a|x_t)


def logadd(values) -> float:
    """``-log sum exp(-v)``, shifted by the minimum. ``+inf`` entries are neutral."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("logadd of an empty set")
    return float(_logadd(v, axis=0))


def _logadd(x: np.ndarray, axis) -> np.ndarray:
    m = np.min(x, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(-(x - safe)), axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = np.where(np.isfinite(m), safe - np.log(s), m)
    return np.squeeze(out, axis=axis)


# -- choice costs ------------------------------------------------------------


def _masks_for(weights: Sequence[np.ndarray], masks) -> List[np.ndarray]:
    if masks is not None:
        return [np.asarray(m, dtype=bool) for m in masks]
    return [~np.all(np.isinf(W), axis=-1) for W in weights]


def _valid_costs(W: np.ndarray, mask: np.ndarray, a: int):
    C = np.full_like(W, INF)
    C[..., a] = np.where(mask, W[..., a], INF)
    return C, None


def _all_costs(W: np.ndarray, mask: np.ndarray):
    return np.where(mask[..., None], W, INF), None


def _hard_costs(W: np.ndarray, mask: np.ndarray, a: int):
    hard = W < W[..., a : a + 1]
    C = np.where(hard, W, 0.0)
    C[~mask] = INF
    return C, hard


def _sweep(costs: Sequence[np.ndarray], want_grad: bool):
    """Forward/backward over layers. Returns (total, per-choice softmin weights)."""
    edge = [_logadd(C, axis=-1) for C in costs]
    fwd = [np.zeros(1)]
    for n, r in enumerate(edge, start=1):
        fwd.append(_logadd(fwd[-1][:, None] + r, axis=0))
        if not np.any(np.isfinite(fwd[-1])):
            raise NonFiniteLossError(f"no finite path reaches layer {n}", layer=n)
    total = float(fwd[-1][0])
    if not want_grad:
        return total, None
    bwd = [None] * (len(edge) + 1)
    bwd[-1] = np.zeros(1)
    for n in range(len(edge), 0, -1):
        bwd[n - 1] = _logadd(edge[n - 1] + bwd[n][None, :], axis=1)
    grads = []
    for n, (C, r) in enumerate(zip(costs, edge), start=1):
        through = fwd[n - 1][:, None] + r + bwd[n][None, :]
        with np.errstate(invalid="ignore"):
            m = np.where(np.isfinite(through), np.exp(-(through - total)), 0.0)
            share = np.where(np.isfinite(C), np.exp(-(C - r[..., None])), 0.0)
        g = m[..., None] * share
        if not np.all(np.isfinite(g)):
            raise NonFiniteLossError(f"non-finite gradient at layer transition {n}", layer=n)
        grads.append(g)
    return total, grads


def _check_transcript(weights, transcript):
    transcript = as_transcript(transcript, weights[0].shape[-1])
    if len(transcript) != len(weights):
        raise ValueError(f"transcript has {len(transcript)} labels but the graph has {len(weights)} layer transitions")
    return transcript


# -- weight-level API (used directly by gradient checks) -------------------


def valid_total(weights, transcript, masks=None, want_grad=False):
    transcript = _check_transcript(weights, transcript)
    masks = _masks_for(weights, masks)
    costs = [_valid_costs(W, m, a)[0] for W, m, a in zip(weights, masks, transcript)]
    return _sweep(costs, want_grad)


def all_paths_total(weights, masks=None, want_grad=False):
    masks = _masks_for(weights, masks)
    costs = [_all_costs(W, m)[0] for W, m in zip(weights, masks)]
    return _sweep(costs, want_grad)


def hard_invalid_total(weights, transcript, masks=None, want_grad=False):
    transcript = _check_transcript(weights, transcript)
    masks = _masks_for(weights, masks)
    built = [_hard_costs(W, m, a) for W, m, a in zip(weights, masks, transcript)]
    total, grads = _sweep([c for c, _ in built], want_grad)
    if grads is not None:
        # zero-cost fallbacks do not depend on the weights
        grads = [g * hard for g, (_, hard) in zip(grads, built)]
    return total, grads


def loss_from_weights(weights, transcript, kind=CDF, masks=None, want_grad=False) -> Tuple[float, Optional[list]]:
    """Loss value (and d loss / d w per layer transition) for explicit edge weights."""
    kind = LossKind.parse(kind)
    v, gv = valid_total(weights, transcript, masks, want_grad)
    if kind.variant == "F" or (kind.variant == "DF" and kind.alpha == 0):
        return v, gv
    if kind.variant == "DF":
        z, gz = all_paths_total(weights, masks, want_grad)
        value = v - kind.alpha * z
        grads = None if gv is None else [a - kind.alpha * b for a, b in zip(gv, gz)]
    else:
        z, gz = hard_invalid_total(weights, transcript, masks, want_grad)
        value = v - z
        grads = None if gv is None else [a - b for a, b in zip(gv, gz)]
    if not np.isfinite(value):
        raise NonFiniteLossError(f"loss is not finite ({value})")
    return value, grads


# -- graph-level API -------------------------------------------------------


def _graph_inputs(g: SegGraph):
    weights = g.all_edge_weights()
    masks = [g.layers[n - 1][:, None] < g.layers[n][None, :] for n in range(1, g.N + 1)]
    return weights, masks


def forward_loss(g: SegGraph, transcript) -> float:
    """logadd of the energies of all valid paths."""
    w, m = _graph_inputs(g)
    return valid_total(w, transcript, m)[0]


def logadd_all_paths(g: SegGraph) -> float:
    w, m = _graph_inputs(g)
    return all_paths_total(w, m)[0]


def logadd_hard_invalid(g: SegGraph, transcript) -> float:
    w, m = _graph_inputs(g)
    return hard_invalid_total(w, transcript, m)[0]


def loss_value(g: SegGraph, transcript, kind=CDF) -> float:
    w, m = _graph_inputs(g)
    return loss_from_weights(w, transcript, kind, m)[0]


def edge_to_frame_gradient(g: SegGraph, d_edge: Sequence[np.ndarray]) -> np.ndarray:
    """Chain rule through the edge energies: ``d_frame[t] = -sum of d_edge over edges covering t``."""
    diff = np.zeros((g.T + 1, g.K))
    for n, d in enumerate(d_edge, start=1):
        src, dst = g.layers[n - 1], g.layers[n]
        np.add.at(diff, src, d.sum(axis=1))
        np.add.at(diff, dst, -d.sum(axis=0))
    return -np.cumsum(diff, axis=0)[: g.T]


def loss_backward(g: SegGraph, transcript, kind=CDF) -> LossGradients:
    w, m = _graph_inputs(g)
    value, d_edge = loss_from_weights(w, transcript, kind, m, want_grad=True)
    d_frame = edge_to_frame_gradient(g, d_edge)
    if not np.all(np.isfinite(d_frame)):
        raise NonFiniteLossError("non-finite frame gradient")
    return LossGradients(value, d_edge, d_frame)
