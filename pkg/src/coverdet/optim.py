"""ADAM optimizer with L2 regularization applied as a gradient penalty."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch
from .tensor import Tensor


@dataclass
class AdamState:
    """Moment accumulators plus hyperparameters; step counts applied updates."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2_lambda: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class Adam:
    """Updates a named parameter dict in place.

    `l2_names` lists the parameters the L2 penalty applies to (weights only;
    biases and the comparison head stay unpenalized).
    """

    def __init__(self, params: dict[str, Tensor], lr=0.001, beta1=0.9, beta2=0.999,
                 eps=1e-8, l2_lambda=0.0, l2_names=()):
        self.params = params
        self.l2_names = frozenset(l2_names)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, l2_lambda=l2_lambda)
        for name, p in params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def step(self):
        s = self.state
        s.step += 1
        bc1 = 1.0 - s.beta1 ** s.step
        bc2 = 1.0 - s.beta2 ** s.step
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if g.shape != p.data.shape:
                raise ShapeMismatch(f"grad shape {g.shape} != param shape {p.data.shape} for {name}")
            if s.l2_lambda != 0.0 and name in self.l2_names:
                g = g + s.l2_lambda * p.data
            m = s.m[name]
            v = s.v[name]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * g * g
            mhat = m / bc1
            vhat = v / bc2
            p.data -= (s.lr * mhat / (np.sqrt(vhat) + s.eps)).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flatten moments and scalars into named f32 arrays for checkpointing."""
        out = {}
        s = self.state
        scalars = np.array([s.step, s.lr, s.beta1, s.beta2, s.eps, s.l2_lambda], dtype=np.float64)
        # bit-split doubles into float32 pairs so the f32 container stays lossless
        out["adam.scalars"] = scalars.view(np.float32)
        for name in self.params:
            out[f"adam.m.{name}"] = s.m[name]
            out[f"adam.v.{name}"] = s.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        s = self.state
        sc = np.ascontiguousarray(arrays["adam.scalars"]).view(np.float64)
        s.step = int(sc[0])
        s.lr, s.beta1, s.beta2, s.eps, s.l2_lambda = (float(x) for x in sc[1:6])
        for name in self.params:
            s.m[name] = arrays[f"adam.m.{name}"].copy()
            s.v[name] = arrays[f"adam.v.{name}"].copy()
