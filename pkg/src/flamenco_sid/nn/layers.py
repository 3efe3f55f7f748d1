"""Parameterised layers with train/eval modes and a flat state dict."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .rng import generator
from .tensor import Tensor


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True, name=name)


class Module:
    """Base class. Parameters, buffers and child modules are discovered from attributes."""

    training = True

    def _children(self):
        for key, val in vars(self).items():
            if isinstance(val, Module):
                yield key, val
            elif isinstance(val, (list, tuple)) and val and all(isinstance(v, Module) for v in val):
                for i, v in enumerate(val):
                    yield f"{key}.{i}", v

    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            if isinstance(val, Parameter):
                yield prefix + key, val
        for key, child in self._children():
            yield from child.named_parameters(f"{prefix}{key}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for key in getattr(self, "_buffer_names", ()):
            yield prefix + key, getattr(self, key)
        for key, child in self._children():
            yield from child.named_buffers(f"{prefix}{key}.")

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {name: p.data for name, p in self.named_parameters()}
        out.update({name: b for name, b in self.named_buffers()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        missing = (set(params) | set(bufs)) - set(state)
        extra = set(state) - (set(params) | set(bufs))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=p.dtype)
        for name, b in bufs.items():
            b[...] = state[name]

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        for mod in self._modules():
            for key in getattr(mod, "_buffer_names", ()):
                setattr(mod, key, getattr(mod, key).astype(dtype))
        return self

    def _modules(self):
        yield self
        for _, child in self._children():
            yield from child._modules()

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def orthogonal(rng, rows, cols, dtype):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    q = q if rows >= cols else q.T
    return q[:rows, :cols].astype(dtype)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel=3, stride=1, padding=None, bias=True, dtype=np.float32, rng=None):
        rng = rng or generator("init")
        k = (kernel, kernel) if np.isscalar(kernel) else tuple(kernel)
        self.stride = stride
        self.padding = (k[0] // 2, k[1] // 2) if padding is None else padding
        self.weight = Parameter(he_uniform(rng, (c_out, c_in) + k, c_in * k[0] * k[1], dtype))
        self.bias = Parameter(np.zeros(c_out, dtype)) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    _buffer_names = ("running_mean", "running_var")

    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        self.gamma = Parameter(np.ones(channels, dtype))
        self.beta = Parameter(np.zeros(channels, dtype))
        self.running_mean = np.zeros(channels, dtype)
        self.running_var = np.ones(channels, dtype)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x):
        return F.batchnorm2d(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             self.training, self.momentum, self.eps)


class Linear(Module):
    def __init__(self, d_in, d_out, bias=True, dtype=np.float32, rng=None):
        rng = rng or generator("init")
        self.weight = Parameter(he_uniform(rng, (d_out, d_in), d_in, dtype))
        self.bias = Parameter(np.zeros(d_out, dtype)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Dropout(Module):
    def __init__(self, p=0.1, rng=None):
        self.p = p
        self.rng = rng or generator("dropout")

    def forward(self, x):
        return F.dropout(x, self.p, self.training, self.rng)


class MaxPool2d(Module):
    def __init__(self, kernel, stride=None, padding=0):
        self.kernel, self.stride, self.padding = kernel, stride, padding

    def forward(self, x):
        return F.maxpool2d(x, self.kernel, self.stride, self.padding)


class ELU(Module):
    def forward(self, x):
        return F.elu(x)


class ReLU(Module):
    def forward(self, x):
        return F.relu(x)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class GRU(Module):
    """Stacked GRU; input T x N x D, returns T x N x H of the top layer."""

    def __init__(self, d_in, hidden, num_layers=1, dtype=np.float32, rng=None):
        rng = rng or generator("init")
        self.cells = [_RecurrentCell(d_in if i == 0 else hidden, hidden, 3, dtype, rng) for i in range(num_layers)]

    def forward(self, x):
        for cell in self.cells:
            x = F.gru(x, cell.w_ih, cell.w_hh, cell.b_ih, cell.b_hh)
        return x


class BLSTM(Module):
    """Bidirectional LSTM; input T x N x D, returns T x N x 2H (forward then backward)."""

    def __init__(self, d_in, hidden, dtype=np.float32, rng=None):
        rng = rng or generator("init")
        self.hidden = hidden
        self.fwd = _RecurrentCell(d_in, hidden, 4, dtype, rng, forget_bias=True)
        self.bwd = _RecurrentCell(d_in, hidden, 4, dtype, rng, forget_bias=True)

    def forward(self, x):
        return F.blstm(x, self.fwd.weights(), self.bwd.weights())


class _RecurrentCell(Module):
    def __init__(self, d_in, hidden, gates, dtype, rng, forget_bias=False):
        bound = np.sqrt(6.0 / (d_in + hidden))
        self.w_ih = Parameter(rng.uniform(-bound, bound, (gates * hidden, d_in)).astype(dtype))
        self.w_hh = Parameter(np.concatenate([orthogonal(rng, hidden, hidden, dtype) for _ in range(gates)]))
        self.b_ih = Parameter(np.zeros(gates * hidden, dtype))
        b_hh = np.zeros(gates * hidden, dtype)
        if forget_bias:
            b_hh[hidden : 2 * hidden] = 1.0
        self.b_hh = Parameter(b_hh)

    def weights(self):
        return self.w_ih, self.w_hh, self.b_ih, self.b_hh
