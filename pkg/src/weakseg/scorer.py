"""Frame scorers producing per-frame class log-posteriors.

Two variants, both plain numpy in float64:

``linear``
    ``log_softmax(x W + b)``
``gru``
    single-layer GRU (zero initial state, left to right) followed by a linear
    read-out and ``log_softmax``. Gates follow the usual convention::

        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        c = tanh(x Wh + (r * h) Uh + bh)
        h' = (1 - z) * h + z * c

Backward passes are written out by hand (BPTT for the GRU).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, TextIO

import numpy as np
from scipy.special import expit, log_softmax

from .core import FrameLogPosteriors, FrameSequence

LINEAR_SHAPES = {"W": ("D", "K"), "b": ("K",)}
GRU_SHAPES = {
    "Wz": ("D", "H"), "Wr": ("D", "H"), "Wh": ("D", "H"),
    "Uz": ("H", "H"), "Ur": ("H", "H"), "Uh": ("H", "H"),
    "bz": ("H",), "br": ("H",), "bh": ("H",),
    "Wo": ("H", "K"), "bo": ("K",),
}


class ScorerParams:
    """Named weight arrays of one scorer variant."""

    def __init__(self, variant: str, arrays: Dict[str, np.ndarray]):
        if variant not in ("linear", "gru"):
            raise ValueError(f"unknown scorer variant {variant!r}")
        spec = LINEAR_SHAPES if variant == "linear" else GRU_SHAPES
        if set(arrays) != set(spec):
            raise ValueError(f"{variant} scorer needs arrays {sorted(spec)}, got {sorted(arrays)}")
        self.variant = variant
        self.arrays = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}
        dims = {}
        for name, axes in spec.items():
            shape = self.arrays[name].shape
            if len(shape) != len(axes):
                raise ValueError(f"{name}: expected {len(axes)}-d array, got shape {shape}")
            for ax, n in zip(axes, shape):
                if dims.setdefault(ax, n) != n:
                    raise ValueError(f"{name}: inconsistent size for {ax} ({n} vs {dims[ax]})")
        self.dims = dims
        for name, a in self.arrays.items():
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name}: non-finite values")

    D = property(lambda self: self.dims["D"])
    K = property(lambda self: self.dims["K"])
    H = property(lambda self: self.dims.get("H", 0))

    def __getitem__(self, name):
        return self.arrays[name]

    def __eq__(self, other):
        if not isinstance(other, ScorerParams):
            return NotImplemented
        return self.variant == other.variant and all(
            np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)

    def copy(self):
        return type(self)(self.variant, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self):
        return type(self)(self.variant, {k: np.zeros_like(v) for k, v in self.arrays.items()})

    def names(self) -> List[str]:
        spec = LINEAR_SHAPES if self.variant == "linear" else GRU_SHAPES
        return list(spec)


class ParamGradients(ScorerParams):
    pass


def init_params(variant: str, D: int, K: int, hidden: int = 64, seed: int = 0, scale: float = 0.1) -> ScorerParams:
    """Uniform(-scale, scale) initialisation from a seeded generator."""
    rng = np.random.default_rng(seed)
    spec = LINEAR_SHAPES if variant == "linear" else GRU_SHAPES
    sizes = {"D": D, "K": K, "H": hidden}
    arrays = {name: rng.uniform(-scale, scale, size=tuple(sizes[a] for a in axes))
              for name, axes in spec.items()}
    return ScorerParams(variant, arrays)


@dataclass(eq=False)
class ScorerCache:
    variant: str
    x: np.ndarray
    log_post: np.ndarray
    hidden: Optional[np.ndarray] = None  # (T+1, H), row 0 is the initial state
    gates: Dict[str, np.ndarray] = field(default_factory=dict)


def _features(params: ScorerParams, video) -> np.ndarray:
    x = video.features if isinstance(video, FrameSequence) else np.asarray(video, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.D:
        raise ValueError(f"expected T x {params.D} features, got shape {x.shape}")
    return x


def scorer_forward(params: ScorerParams, video):
    """Return ``(FrameLogPosteriors, cache)``."""
    x = _features(params, video)
    if params.variant == "linear":
        logits = x @ params["W"] + params["b"]
        lp = log_softmax(logits, axis=1)
        return FrameLogPosteriors(lp), ScorerCache("linear", x, lp)

    T, H = x.shape[0], params.H
    xz = x @ params["Wz"] + params["bz"]
    xr = x @ params["Wr"] + params["br"]
    xh = x @ params["Wh"] + params["bh"]
    Uz, Ur, Uh = params["Uz"], params["Ur"], params["Uh"]
    h = np.zeros((T + 1, H))
    z = np.empty((T, H))
    r = np.empty((T, H))
    c = np.empty((T, H))
    for t in range(T):
        hp = h[t]
        z[t] = expit(xz[t] + hp @ Uz)
        r[t] = expit(xr[t] + hp @ Ur)
        c[t] = np.tanh(xh[t] + (r[t] * hp) @ Uh)
        h[t + 1] = hp + z[t] * (c[t] - hp)
    logits = h[1:] @ params["Wo"] + params["bo"]
    lp = log_softmax(logits, axis=1)
    return FrameLogPosteriors(lp), ScorerCache("gru", x, lp, h, {"z": z, "r": r, "c": c})


def scorer_backward(params: ScorerParams, cache: ScorerCache, d_frame) -> ParamGradients:
    """Gradient of ``sum(d_frame * log_post)`` with respect to every parameter."""
    G = np.asarray(d_frame, dtype=np.float64)
    if cache.variant != params.variant or G.shape != cache.log_post.shape:
        raise ValueError("cache / cotangent do not match the parameters")
    # through log_softmax
    dlogits = G - np.exp(cache.log_post) * G.sum(axis=1, keepdims=True)
    x = cache.x
    if params.variant == "linear":
        return ParamGradients("linear", {"W": x.T @ dlogits, "b": dlogits.sum(axis=0)})

    h, z, r, c = cache.hidden, cache.gates["z"], cache.gates["r"], cache.gates["c"]
    T = x.shape[0]
    Uz, Ur, Uh = params["Uz"], params["Ur"], params["Uh"]
    dWo = h[1:].T @ dlogits
    dbo = dlogits.sum(axis=0)
    dH = dlogits @ params["Wo"].T
    daz = np.empty_like(z)
    dar = np.empty_like(r)
    dah = np.empty_like(c)
    dh_next = np.zeros(params.H)
    for t in range(T - 1, -1, -1):
        hp = h[t]
        dh = dH[t] + dh_next
        dz = dh * (c[t] - hp)
        dc = dh * z[t]
        dhp = dh * (1.0 - z[t])
        dah[t] = dc * (1.0 - c[t] ** 2)
        drh = dah[t] @ Uh.T
        dr = drh * hp
        dhp += drh * r[t]
        dar[t] = dr * r[t] * (1.0 - r[t])
        daz[t] = dz * z[t] * (1.0 - z[t])
        dhp += daz[t] @ Uz.T + dar[t] @ Ur.T
        dh_next = dhp
    hprev = h[:-1]
    return ParamGradients("gru", {
        "Wz": x.T @ daz, "Wr": x.T @ dar, "Wh": x.T @ dah,
        "Uz": hprev.T @ daz, "Ur": hprev.T @ dar, "Uh": (r * hprev).T @ dah,
        "bz": daz.sum(axis=0), "br": dar.sum(axis=0), "bh": dah.sum(axis=0),
        "Wo": dWo, "bo": dbo,
    })


def sgd_step(params: ScorerParams, grads: ScorerParams, lr: float) -> ScorerParams:
    """``params - lr * grads`` as a new parameter set."""
    if not lr >= 0:
        raise ValueError("learning rate must be >= 0")
    if grads.variant != params.variant:
        raise ValueError("gradient variant does not match parameters")
    out = {}
    for k, p in params.arrays.items():
        g = grads.arrays[k]
        if g.shape != p.shape:
            raise ValueError(f"{k}: gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"{k}: non-finite gradient")
        out[k] = p - lr * g
    return ScorerParams(params.variant, out)


# -- checkpoint text format --------------------------------------------------
#   scorer <variant>
#   array <name> <ndim> <shape...>
#   <row-major values on one line>


def write_params(fh: TextIO, params: ScorerParams) -> None:
    fh.write(f"scorer {params.variant}\n")
    for name in params.names():
        a = params[name]
        fh.write(f"array {name} {a.ndim} {' '.join(str(s) for s in a.shape)}\n")
        fh.write(" ".join(repr(float(v)) for v in a.ravel()) + "\n")


def read_params(lines: Iterable[str]) -> ScorerParams:
    it = iter(lines)
    head = next(it).split()
    if len(head) != 2 or head[0] != "scorer":
        raise ValueError(f"expected 'scorer <variant>' header, got {' '.join(head)!r}")
    variant = head[1]
    n_arrays = len(LINEAR_SHAPES if variant == "linear" else GRU_SHAPES)
    arrays = {}
    for _ in range(n_arrays):
        parts = next(it).split()
        if parts[0] != "array":
            raise ValueError(f"expected 'array' line, got {parts[0]!r}")
        name, ndim = parts[1], int(parts[2])
        shape = tuple(int(s) for s in parts[3:3 + ndim])
        vals = np.array([float(v) for v in next(it).split()], dtype=np.float64)
        arrays[name] = vals.reshape(shape)
    return ScorerParams(variant, arrays)
