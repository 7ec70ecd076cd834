"""Adam with coupled L2 weight decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "Adam", "adam_step"]


@dataclass
class AdamState:
    """Moment buffers stored flat, in the model's canonical tensor order."""

    size: int
    lr: float = 1e-4
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)
        if self.m.shape != (self.size,) or self.v.shape != (self.size,):
            raise ValueError("moment buffers must be flat vectors of the parameter count")

    def header(self) -> dict:
        return {"size": self.size, "lr": self.lr, "weight_decay": self.weight_decay,
                "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "t": self.t,
                "sections": ["m", "v"]}

    @classmethod
    def from_header(cls, header: dict, m=None, v=None) -> "AdamState":
        keys = ("size", "lr", "weight_decay", "beta1", "beta2", "eps", "t")
        return cls(**{k: header[k] for k in keys}, m=m, v=v)


def adam_step(params: list, grads: list, state: AdamState):
    """Apply one in-place Adam update to ``params`` (a list of arrays).

    ``grads`` must match ``params`` one-to-one in shape. The decay term
    ``weight_decay * theta`` is added to the gradient before the moments.
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameter tensors but {len(grads)} gradients")
    total = sum(p.size for p in params)
    if total != state.size:
        raise ValueError(f"optimizer sized for {state.size} scalars, parameters have {total}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    step_size = state.lr / bc1
    sqrt_bc2 = math.sqrt(bc2)
    off = 0
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {p.shape}")
        n = p.size
        m = state.m[off:off + n].reshape(p.shape)
        v = state.v[off:off + n].reshape(p.shape)
        if state.weight_decay:
            g = g + state.weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step_size * m / (np.sqrt(v) / sqrt_bc2 + state.eps)
        off += n
    return params, state


class Adam:
    """Optimizer bound to an :class:`~kae.model.Autoencoder`."""

    def __init__(self, model, lr: float = 1e-4, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.model = model
        self.state = AdamState(model.n_parameters(), lr=lr, weight_decay=weight_decay,
                               beta1=beta1, beta2=beta2, eps=eps)

    @property
    def m(self):
        return self.state.m

    @property
    def v(self):
        return self.state.v

    def header(self) -> dict:
        return self.state.header()

    def step(self, enc_grads: dict, dec_grads: dict):
        params, grads = [], []
        for layer, lg in ((self.model.encoder, enc_grads), (self.model.decoder, dec_grads)):
            for name, arr in layer.tensors.items():
                params.append(arr)
                grads.append(lg[name])
        adam_step(params, grads, self.state)
        for layer in self.model.layers:
            layer.constrain()
