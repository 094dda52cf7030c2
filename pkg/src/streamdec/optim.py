"""Parameter groups and the AdamW optimizer (decoupled weight decay)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

__all__ = ["ParameterGroup", "AdamW", "MissingGradError"]


class MissingGradError(RuntimeError):
    """A trainable parameter had no gradient at step time."""


@dataclass
class ParameterGroup:
    """A named set of parameters that can be frozen as a unit."""
    name: str
    params: list  # list[(param_name, Tensor)]
    trainable: bool = True


@dataclass
class AdamWState:
    lr: float
    weight_decay: float
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class AdamW:
    """AdamW over parameter groups.

    Weight decay is decoupled (applied to the weights directly, not folded
    into the gradient). Groups with ``trainable=False`` are left bit-identical
    by a step.
    """

    def __init__(self, groups, lr, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
        self.groups = list(groups)
        self.state = AdamWState(lr=lr, weight_decay=weight_decay,
                                betas=tuple(betas), eps=eps)

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = float(value)

    def zero_grad(self):
        for group in self.groups:
            for _, p in group.params:
                p.grad = None

    def step(self):
        st = self.state
        st.step_count += 1
        b1, b2 = st.betas
        bc1 = 1.0 - b1 ** st.step_count
        bc2 = 1.0 - b2 ** st.step_count
        for group in self.groups:
            if not group.trainable:
                continue
            for name, p in group.params:
                if p.grad is None:
                    raise MissingGradError(
                        f"parameter '{name}' in group '{group.name}' has no grad")
                key = (group.name, name)
                if key not in st.m:
                    st.m[key] = np.zeros_like(p.data)
                    st.v[key] = np.zeros_like(p.data)
                g = p.grad
                st.m[key] = b1 * st.m[key] + (1.0 - b1) * g
                st.v[key] = b2 * st.v[key] + (1.0 - b2) * g * g
                mhat = st.m[key] / bc1
                vhat = st.v[key] / bc2
                p.data -= st.lr * (mhat / (np.sqrt(vhat) + st.eps)
                                   + st.weight_decay * p.data)

    def set_trainable(self, **by_name):
        for group in self.groups:
            if group.name in by_name:
                group.trainable = bool(by_name[group.name])
