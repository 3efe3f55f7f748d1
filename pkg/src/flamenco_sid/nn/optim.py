"""Adam, as a pure step function and a small stateful wrapper."""

from __future__ import annotations

import numpy as np

LR = 0.001
BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def init_state(params) -> dict:
    return {"t": 0, "m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]}


def adam_step(params, grads, state, lr=LR, beta1=BETA1, beta2=BETA2, eps=EPS):
    """Bias-corrected Adam update of the arrays in ``params`` (in place).

    ``grads`` entries may be None (parameter untouched this step). Returns
    ``params`` and ``state`` for convenience.
    """
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g is None:
            continue
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
    return params, state


class Adam:
    def __init__(self, params, lr=LR, beta1=BETA1, beta2=BETA2, eps=EPS):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = init_state([p.data for p in self.params])

    def step(self):
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state,
                  self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
