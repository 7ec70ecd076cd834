"""Layer families with closed-form forward and backward passes.

Five families share one functional interface::

    params = init_layer(spec, stream)
    Y, cache = forward(params, X)
    dX, grads = backward(params, cache, dY)

``X`` is ``(batch, d_in)``; weights are stored ``(d_out, d_in)`` so a batch
forward is a matmul against the transposed weights.

affine
    ``sigmoid(X W^T + b)``; the plain autoencoder layer.
polynomial
    ``sigmoid(sum_i X**i C_i^T + b)`` for ``i = 0..p``. The ``i = 0`` term is a
    full ``(d_out, d_in)`` matrix contracted with an all-ones input.
bspline
    ``silu(X) W_base^T`` plus a learnable cubic B-spline per edge on a fixed
    uniform knot grid (efficient-KAN layout, with the per-edge spline scaler).
fourier
    truncated Fourier series per edge plus an output bias.
wavelet
    Mexican-hat wavelet per edge with learnable translation and scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .ndcore import RngStream, as_matrix, rng_normal, rng_uniform

__all__ = [
    "KINDS",
    "LayerSpec",
    "LayerParams",
    "init_layer",
    "forward",
    "backward",
    "count_parameters",
    "bspline_knots",
    "bspline_basis",
    "mexican_hat",
    "MEXICAN_HAT_NORM",
    "WAVELET_MIN_SCALE",
]

KINDS = ("affine", "polynomial", "bspline", "fourier", "wavelet")
_SIGMOID_DEFAULT = {"affine": True, "polynomial": True, "bspline": False, "fourier": False, "wavelet": False}
POLY_INITS = ("linear", "uniform")

MEXICAN_HAT_NORM = 2.0 / (math.sqrt(3.0) * math.pi ** 0.25)
WAVELET_MIN_SCALE = 1e-3


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    d_in: int
    d_out: int
    order_p: int = 1
    grid_size: int = 5
    spline_order: int = 3
    grid_range: tuple = (-1.0, 1.0)
    apply_sigmoid: bool | None = None
    poly_init: str = "linear"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}; expected one of {KINDS}")
        if self.d_in < 1 or self.d_out < 1:
            raise ValueError(f"layer dims must be positive, got {self.d_in}->{self.d_out}")
        if self.kind == "polynomial":
            if self.order_p < 1:
                raise ValueError(f"polynomial order must be >= 1, got {self.order_p}")
            if self.order_p > 3:
                warnings.warn(f"polynomial order {self.order_p} is outside the tested range 1..3", stacklevel=3)
            if self.poly_init not in POLY_INITS:
                raise ValueError(f"poly_init must be one of {POLY_INITS}")
        if self.grid_size < 1 or self.spline_order < 1:
            raise ValueError("grid_size and spline_order must be positive")
        lo, hi = self.grid_range
        if not lo < hi:
            raise ValueError(f"grid_range must be increasing, got {self.grid_range}")
        object.__setattr__(self, "grid_range", (float(lo), float(hi)))
        if self.apply_sigmoid is None:
            object.__setattr__(self, "apply_sigmoid", _SIGMOID_DEFAULT[self.kind])

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "d_in": self.d_in, "d_out": self.d_out, "apply_sigmoid": self.apply_sigmoid}
        if self.kind == "polynomial":
            d.update(order_p=self.order_p, poly_init=self.poly_init)
        if self.kind in ("bspline", "fourier"):
            d["grid_size"] = self.grid_size
        if self.kind == "bspline":
            d.update(spline_order=self.spline_order, grid_range=list(self.grid_range))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        if "grid_range" in d:
            d["grid_range"] = tuple(d["grid_range"])
        return cls(**d)


@dataclass
class LayerParams:
    """Learnable tensors of one layer, in canonical order.

    ``version`` is bumped by the optimizer after every in-place update so a
    cache produced before the update is rejected by :func:`backward`.
    """

    spec: LayerSpec
    tensors: dict = field(default_factory=dict)
    version: int = 0

    def names(self):
        return list(self.tensors)

    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "LayerParams":
        return LayerParams(self.spec, {k: v.copy() for k, v in self.tensors.items()}, self.version)

    def constrain(self):
        """Project parameters back onto their feasible set (after a step)."""
        if self.spec.kind == "wavelet":
            np.maximum(self.tensors["scale"], WAVELET_MIN_SCALE, out=self.tensors["scale"])
        self.version += 1

    def __getitem__(self, name):
        return self.tensors[name]


def param_shapes(spec: LayerSpec) -> dict:
    o, i = spec.d_out, spec.d_in
    if spec.kind == "affine":
        return {"W": (o, i), "b": (o,)}
    if spec.kind == "polynomial":
        shapes = {f"C{k}": (o, i) for k in range(spec.order_p + 1)}
        shapes["b"] = (o,)
        return shapes
    if spec.kind == "bspline":
        m = spec.grid_size + spec.spline_order
        return {"base_W": (o, i), "spline_coeffs": (o, i, m), "spline_scaler": (o, i)}
    if spec.kind == "fourier":
        g = spec.grid_size
        return {"cos_coeffs": (o, i, g), "sin_coeffs": (o, i, g), "bias": (o,)}
    return {"weight": (o, i), "translation": (o, i), "scale": (o, i)}


def count_parameters(spec: LayerSpec) -> int:
    o, i = spec.d_out, spec.d_in
    if spec.kind == "affine":
        return o * i + o
    if spec.kind == "polynomial":
        return (spec.order_p + 1) * o * i + o
    if spec.kind == "bspline":
        return o * i * (2 + spec.grid_size + spec.spline_order)
    if spec.kind == "fourier":
        return 2 * spec.grid_size * o * i + o
    return 3 * o * i


def init_layer(spec: LayerSpec, stream: RngStream) -> LayerParams:
    """Draw initial parameters; deterministic given the stream state.

    Linear weights (``W``, ``C1``, ``base_W``, wavelet ``weight``) are uniform
    on ``+-1/sqrt(d_in)``. Polynomial ``C0, C2..Cp`` and all biases start at
    zero, so a fresh polynomial layer is exactly a sigmoid affine layer
    (``poly_init="uniform"`` draws every order like ``C1`` instead).
    """
    o, i = spec.d_out, spec.d_in
    bound = 1.0 / math.sqrt(i)
    shapes = param_shapes(spec)
    t = {}
    if spec.kind == "affine":
        t["W"] = rng_uniform(stream, -bound, bound, o, i)
        t["b"] = np.zeros(o)
    elif spec.kind == "polynomial":
        for k in range(spec.order_p + 1):
            if k == 1 or spec.poly_init == "uniform":
                t[f"C{k}"] = rng_uniform(stream, -bound, bound, o, i)
            else:
                t[f"C{k}"] = np.zeros((o, i))
        t["b"] = np.zeros(o)
    elif spec.kind == "bspline":
        m = spec.grid_size + spec.spline_order
        t["base_W"] = rng_uniform(stream, -bound, bound, o, i)
        t["spline_coeffs"] = rng_normal(stream, 0.0, 0.1 / spec.grid_size, o, i * m).reshape(o, i, m)
        t["spline_scaler"] = rng_uniform(stream, -bound, bound, o, i)
    elif spec.kind == "fourier":
        g = spec.grid_size
        std = 1.0 / (math.sqrt(i) * math.sqrt(g))
        t["cos_coeffs"] = rng_normal(stream, 0.0, std, o, i * g).reshape(o, i, g)
        t["sin_coeffs"] = rng_normal(stream, 0.0, std, o, i * g).reshape(o, i, g)
        t["bias"] = np.zeros(o)
    else:
        t["weight"] = rng_uniform(stream, -bound, bound, o, i)
        t["translation"] = np.zeros((o, i))
        t["scale"] = np.ones((o, i))
    assert {k: v.shape for k, v in t.items()} == shapes
    return LayerParams(spec, t)


def _sigmoid(h):
    return expit(h)


def silu(x):
    return x * expit(x)


def bspline_knots(spec: LayerSpec) -> np.ndarray:
    """Uniform knot vector over ``grid_range`` padded by ``spline_order`` knots each side."""
    lo, hi = spec.grid_range
    h = (hi - lo) / spec.grid_size
    k = spec.spline_order
    return lo + h * np.arange(-k, spec.grid_size + k + 1, dtype=np.float64)


def bspline_basis(x, knots, order: int, with_derivative: bool = False):
    """Cox-de Boor basis values for every entry of ``x``.

    Returns an array of shape ``x.shape + (len(knots) - order - 1,)``. Points
    outside ``[knots[0], knots[-1])`` get an all-zero basis row. With
    ``with_derivative`` the d/dx of each basis function is returned too.
    """
    x = np.asarray(x, dtype=np.float64)[..., None]
    t = knots
    B = ((x >= t[:-1]) & (x < t[1:])).astype(np.float64)
    prev = B
    for q in range(1, order + 1):
        prev = B
        left = (x - t[: -(q + 1)]) / (t[q:-1] - t[: -(q + 1)])
        right = (t[q + 1:] - x) / (t[q + 1:] - t[1:-q])
        B = left * prev[..., :-1] + right * prev[..., 1:]
    if not with_derivative:
        return B
    # d/dx B_{j,k} = k/(t_{j+k}-t_j) B_{j,k-1} - k/(t_{j+k+1}-t_{j+1}) B_{j+1,k-1}
    k = order
    dB = k / (t[k:-1] - t[: -(k + 1)]) * prev[..., :-1] - k / (t[k + 1:] - t[1:-k]) * prev[..., 1:]
    return B, dB


def mexican_hat(u):
    u2 = u * u
    return MEXICAN_HAT_NORM * (1.0 - u2) * np.exp(-0.5 * u2)


def _mexican_hat_with_grad(u):
    u2 = u * u
    e = MEXICAN_HAT_NORM * np.exp(-0.5 * u2)
    return (1.0 - u2) * e, u * (u2 - 3.0) * e


def forward(params: LayerParams, X):
    spec = params.spec
    X = as_matrix(X, "X")
    if X.shape[1] != spec.d_in:
        raise ValueError(f"{spec.kind} layer expects {spec.d_in} input columns, got {X.shape[1]}")
    t = params.tensors
    cache = {"owner": id(params), "version": params.version, "kind": spec.kind, "X": X}
    if spec.kind == "affine":
        H = X @ t["W"].T + t["b"]
    elif spec.kind == "polynomial":
        pows = [None, X]
        for _ in range(2, spec.order_p + 1):
            pows.append(pows[-1] * X)
        H = X @ t["C1"].T
        for k in range(2, spec.order_p + 1):
            H += pows[k] @ t[f"C{k}"].T
        H += t["C0"].sum(axis=1) + t["b"]
        cache["pows"] = pows
    elif spec.kind == "bspline":
        knots = bspline_knots(spec)
        B, dB = bspline_basis(X, knots, spec.spline_order, with_derivative=True)
        n, m = X.shape[0], B.shape[-1]
        w_eff = (t["spline_coeffs"] * t["spline_scaler"][:, :, None]).reshape(spec.d_out, -1)
        sig = expit(X)
        act = X * sig
        H = act @ t["base_W"].T + B.reshape(n, -1) @ w_eff.T
        cache.update(B=B, dB=dB, sig=sig, act=act, w_eff=w_eff)
    elif spec.kind == "fourier":
        k = np.arange(1, spec.grid_size + 1, dtype=np.float64)
        kx = X[:, :, None] * k
        C, S = np.cos(kx), np.sin(kx)
        n = X.shape[0]
        H = (C.reshape(n, -1) @ t["cos_coeffs"].reshape(spec.d_out, -1).T
             + S.reshape(n, -1) @ t["sin_coeffs"].reshape(spec.d_out, -1).T
             + t["bias"])
        cache.update(C=C, S=S, k=k)
    else:
        U = (X[:, None, :] - t["translation"]) / t["scale"]
        psi, dpsi = _mexican_hat_with_grad(U)
        H = np.einsum("noi,oi->no", psi, t["weight"])
        cache.update(U=U, psi=psi, dpsi=dpsi)
    if spec.apply_sigmoid:
        Y = _sigmoid(H)
    else:
        Y = H
    cache["Y"] = Y
    return Y, cache


def backward(params: LayerParams, cache: dict, dY):
    """Return ``(dX, grads)`` for the forward call that produced ``cache``."""
    spec = params.spec
    if cache.get("owner") != id(params) or cache.get("kind") != spec.kind:
        raise ValueError("cache was produced by a different layer")
    if cache.get("version") != params.version:
        raise ValueError("stale cache: parameters changed since the forward pass")
    X = cache["X"]
    dY = as_matrix(dY, "dY")
    if dY.shape != (X.shape[0], spec.d_out):
        raise ValueError(f"dY shape {dY.shape} does not match forward output {(X.shape[0], spec.d_out)}")
    t = params.tensors
    if spec.apply_sigmoid:
        Y = cache["Y"]
        dH = dY * Y * (1.0 - Y)
    else:
        dH = dY
    g = {}
    if spec.kind == "affine":
        g["W"] = dH.T @ X
        g["b"] = dH.sum(axis=0)
        dX = dH @ t["W"]
    elif spec.kind == "polynomial":
        pows = cache["pows"]
        col = dH.sum(axis=0)
        g["C0"] = np.repeat(col[:, None], spec.d_in, axis=1)
        g["C1"] = dH.T @ X
        dX = dH @ t["C1"]
        for k in range(2, spec.order_p + 1):
            g[f"C{k}"] = dH.T @ pows[k]
            dX += k * pows[k - 1] * (dH @ t[f"C{k}"])
        g["b"] = col
        g = {name: g[name] for name in t}
    elif spec.kind == "bspline":
        B, dB, sig, act, w_eff = cache["B"], cache["dB"], cache["sig"], cache["act"], cache["w_eff"]
        n, m = X.shape[0], B.shape[-1]
        g["base_W"] = dH.T @ act
        g_eff = (dH.T @ B.reshape(n, -1)).reshape(spec.d_out, spec.d_in, m)
        g["spline_coeffs"] = g_eff * t["spline_scaler"][:, :, None]
        g["spline_scaler"] = (g_eff * t["spline_coeffs"]).sum(axis=-1)
        dsilu = sig * (1.0 + X * (1.0 - sig))
        dX = (dH @ t["base_W"]) * dsilu
        dX += ((dH @ w_eff).reshape(n, spec.d_in, m) * dB).sum(axis=-1)
    elif spec.kind == "fourier":
        C, S, k = cache["C"], cache["S"], cache["k"]
        n = X.shape[0]
        shape3 = (spec.d_out, spec.d_in, spec.grid_size)
        g["cos_coeffs"] = (dH.T @ C.reshape(n, -1)).reshape(shape3)
        g["sin_coeffs"] = (dH.T @ S.reshape(n, -1)).reshape(shape3)
        g["bias"] = dH.sum(axis=0)
        dC = (dH @ t["cos_coeffs"].reshape(spec.d_out, -1)).reshape(n, spec.d_in, -1)
        dS = (dH @ t["sin_coeffs"].reshape(spec.d_out, -1)).reshape(n, spec.d_in, -1)
        dX = ((dS * C - dC * S) * k).sum(axis=-1)
    else:
        U, psi, dpsi = cache["U"], cache["psi"], cache["dpsi"]
        scale = t["scale"]
        g["weight"] = np.einsum("no,noi->oi", dH, psi)
        dU_over_s = dH[:, :, None] * (t["weight"] * dpsi) / scale
        dX = dU_over_s.sum(axis=1)
        g["translation"] = -dU_over_s.sum(axis=0)
        g["scale"] = -(dU_over_s * U).sum(axis=0)
    return dX, g
