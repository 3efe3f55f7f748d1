"""Differentiable layer functions on :class:`Tensor`.

Layouts: images are N x C x H x W, sequences are T x N x D. Gradients are
written by hand for every op; the recurrent ops run their own
backpropagation through time.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, concat, make


def _pair(v):
    return (int(v), int(v)) if np.isscalar(v) else (int(v[0]), int(v[1]))


def _sigmoid(a):
    # split by sign so neither branch overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# ------------------------------------------------------------------ activations


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    neg = alpha * np.expm1(np.minimum(x.data, 0))
    pos = x.data > 0
    y = np.where(pos, x.data, neg).astype(x.dtype)
    return make(y, (x,), lambda g: (g * np.where(pos, 1, neg + alpha).astype(x.dtype),))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return make(y, (x,), lambda g: (g * y * (1 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return make(y, (x,), lambda g: (g * (1 - y * y),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return make(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    return make(y, (x,), lambda g: (g - np.exp(y) * g.sum(axis=axis, keepdims=True),))


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError("labels must be N integers in [0, K)")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()

    def back(g):
        d = np.exp(logp)
        d[np.arange(n), labels] -= 1.0
        return (d * (g / n),)
    return make(np.asarray(loss, dtype=logits.dtype), (logits,), back)


# ----------------------------------------------------------------------- dense


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """y = x W^T + b with W of shape out x in."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} vs weight {weight.shape}")
    y = x.data @ weight.data.T
    if bias is not None:
        y = y + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        out = [g @ weight.data, g.T @ x.data]
        if bias is not None:
            out.append(g.sum(axis=0))
        return out
    return make(y, parents, back)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: keep with probability 1-p and scale by 1/(1-p); identity in inference."""
    if not 0 <= p < 1:
        raise ValueError("dropout p must be in [0, 1)")
    if not training or p == 0:
        return x
    rng = rng if rng is not None else np.random.default_rng()
    mask = ((rng.random(x.shape) >= p) / (1.0 - p)).astype(x.dtype)
    return make(x.data * mask, (x,), lambda g: (g * mask,))


# --------------------------------------------------------------------- conv/pool


_COL_BUDGET = 1 << 21  # elements per im2col chunk (8 MB in float32)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Cross-correlation. Public layout is NCHW.

    Internally the input is moved to NHWC and unfolded into a contiguous
    column buffer a few images at a time, so each chunk is one cache-sized
    matmul against the (kh kw C) x F kernel matrix.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d expects N x C x H x W input and F x C x kh x kw weight")
    n, c, h, w = x.shape
    f, c2, kh, kw = weight.shape
    if c != c2:
        raise ShapeError(f"conv2d: input has {c} channels, weight expects {c2}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ShapeError("kernel larger than padded input")
    ho, wo = (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1
    dt = np.result_type(x.dtype, weight.dtype)
    xh = np.zeros((n, h + 2 * ph, w + 2 * pw, c), dtype=dt)
    xh[:, ph : ph + h, pw : pw + w, :] = x.data.transpose(0, 2, 3, 1)
    wm = weight.data.transpose(2, 3, 1, 0).reshape(kh * kw * c, f)
    step = max(1, _COL_BUDGET // (ho * wo * kh * kw * c))

    def offsets():
        for i in range(kh):
            for j in range(kw):
                yield i, j, (slice(i, i + sh * (ho - 1) + 1, sh), slice(j, j + sw * (wo - 1) + 1, sw))

    def unfold(s0, s1, buf):
        for i, j, (si, sj) in offsets():
            buf[:, :, :, i, j, :] = xh[s0:s1, si, sj, :]
        return buf.reshape(-1, kh * kw * c)

    out = np.empty((n, ho, wo, f), dtype=dt)
    buf = np.empty((min(step, n), ho, wo, kh, kw, c), dtype=dt)
    for s0 in range(0, n, step):
        s1 = min(n, s0 + step)
        out[s0:s1] = (unfold(s0, s1, buf[: s1 - s0]) @ wm).reshape(s1 - s0, ho, wo, f)
    if bias is not None:
        out += bias.data
    result = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        gh = np.ascontiguousarray(g.transpose(0, 2, 3, 1))
        dwm = np.zeros_like(wm)
        dxh = np.zeros_like(xh) if x.requires_grad else None
        cbuf = np.empty((min(step, n), ho, wo, kh, kw, c), dtype=dt)
        for s0 in range(0, n, step):
            s1 = min(n, s0 + step)
            gc = gh[s0:s1].reshape(-1, f)
            dwm += unfold(s0, s1, cbuf[: s1 - s0]).T @ gc
            if dxh is not None:
                dcol = (gc @ wm.T).reshape(s1 - s0, ho, wo, kh, kw, c)
                for i, j, (si, sj) in offsets():
                    dxh[s0:s1, si, sj, :] += dcol[:, :, :, i, j, :]
        dx = None
        if dxh is not None:
            dx = np.ascontiguousarray(dxh[:, ph : ph + h, pw : pw + w, :].transpose(0, 3, 1, 2))
        dw = dwm.reshape(kh, kw, c, f).transpose(3, 2, 0, 1).astype(weight.dtype)
        out_g = [dx, dw]
        if bias is not None:
            out_g.append(g.sum(axis=(0, 2, 3)))
        return out_g
    return make(result, parents, back)


def maxpool2d(x: Tensor, kernel=2, stride=None, padding=0) -> Tensor:
    """Max over windows; the gradient goes to the first maximal position of each window."""
    kh, kw = _pair(kernel)
    sh, sw = _pair(kernel if stride is None else stride)
    ph, pw = _pair(padding)
    n, c, h, w = x.shape
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ShapeError("pool window larger than padded input")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf) if ph or pw else x.data
    ho, wo = (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
    flat = win.reshape(n, c, ho, wo, kh * kw)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def back(g):
        dxp = np.zeros(xp.shape, dtype=x.dtype)
        for o in range(kh * kw):
            i, j = divmod(o, kw)
            dxp[:, :, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw] += np.where(arg == o, g, 0)
        return (dxp[:, :, ph : ph + h, pw : pw + w],)
    return make(out, (x,), back)


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
                training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel normalisation over (N, H, W).

    Training uses batch statistics and updates the running buffers in place
    (running = (1 - momentum) running + momentum batch, unbiased variance).
    Inference uses the running buffers.
    """
    n, c, h, w = x.shape
    shape = (1, c, 1, 1)
    if training:
        if n < 2:
            raise ValueError("batchnorm in training mode needs a batch of at least 2")
        m = n * h * w
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * m / max(m - 1, 1)
    else:
        mean, var = running_mean, running_var
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mean.reshape(shape).astype(x.dtype)) * inv.reshape(shape)
    y = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    def back(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        dxhat = g * gamma.data.reshape(shape)
        if training:
            dx = (inv.reshape(shape) / m) * (m * dxhat - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                                             - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True))
        else:
            dx = dxhat * inv.reshape(shape)
        return dx, dgamma, dbeta
    return make(y, (x, gamma, beta), back)


# -------------------------------------------------------------------- recurrent


def gru(x: Tensor, w_ih: Tensor, w_hh: Tensor, b_ih: Tensor, b_hh: Tensor, h0: Tensor | None = None) -> Tensor:
    """Single-layer GRU over T x N x D; returns all hidden states, T x N x H.

    Gate order in the stacked weights is (reset, update, candidate):
    r = s(W_ir x + b_ir + W_hr h + b_hr), z likewise,
    n = tanh(W_in x + b_in + r (W_hn h + b_hn)), h' = (1 - z) n + z h.
    """
    t_len, n, d = x.shape
    hid = w_hh.shape[1]
    if t_len < 1:
        raise ShapeError("sequence must have T >= 1")
    if w_ih.shape != (3 * hid, d) or w_hh.shape != (3 * hid, hid):
        raise ShapeError("gru weight shapes do not match input/hidden sizes")
    xi = (x.data.reshape(t_len * n, d) @ w_ih.data.T + b_ih.data).reshape(t_len, n, 3 * hid)
    h = np.zeros((n, hid), dtype=x.dtype) if h0 is None else h0.data
    hs = np.empty((t_len, n, hid), dtype=xi.dtype)
    cache = []
    for t in range(t_len):
        hh = h @ w_hh.data.T + b_hh.data
        r = _sigmoid(xi[t, :, :hid] + hh[:, :hid])
        z = _sigmoid(xi[t, :, hid : 2 * hid] + hh[:, hid : 2 * hid])
        cand = np.tanh(xi[t, :, 2 * hid :] + r * hh[:, 2 * hid :])
        cache.append((h, r, z, cand, hh[:, 2 * hid :]))
        h = (1 - z) * cand + z * h
        hs[t] = h
    parents = [x, w_ih, w_hh, b_ih, b_hh] + ([h0] if h0 is not None else [])

    def back(g):
        dxi = np.empty_like(xi)
        dw_hh = np.zeros_like(w_hh.data)
        db_hh = np.zeros_like(b_hh.data)
        dh = np.zeros((n, hid), dtype=g.dtype)
        for t in range(t_len - 1, -1, -1):
            hp, r, z, cand, hn = cache[t]
            dh = dh + g[t]
            da_n = dh * (1 - z) * (1 - cand * cand)
            da_r = da_n * hn * r * (1 - r)
            da_z = dh * (hp - cand) * z * (1 - z)
            dxi[t] = np.concatenate([da_r, da_z, da_n], axis=1)
            dhh = np.concatenate([da_r, da_z, da_n * r], axis=1)
            dw_hh += dhh.T @ hp
            db_hh += dhh.sum(axis=0)
            dh = dh * z + dhh @ w_hh.data
        flat = dxi.reshape(t_len * n, 3 * hid)
        out = [(flat @ w_ih.data).reshape(t_len, n, d), flat.T @ x.data.reshape(t_len * n, d),
               dw_hh, flat.sum(axis=0), db_hh]
        if h0 is not None:
            out.append(dh)
        return out
    return make(hs, parents, back)


def lstm(x: Tensor, w_ih: Tensor, w_hh: Tensor, b_ih: Tensor, b_hh: Tensor, reverse: bool = False) -> Tensor:
    """Single-direction LSTM over T x N x D, zero initial state; returns T x N x H.

    Gate order (input, forget, cell, output). With ``reverse`` the recurrence
    runs from t = T-1 down to 0 and output t is the state after reading x_t.
    """
    t_len, n, d = x.shape
    hid = w_hh.shape[1]
    if t_len < 1:
        raise ShapeError("sequence must have T >= 1")
    if w_ih.shape != (4 * hid, d) or w_hh.shape != (4 * hid, hid):
        raise ShapeError("lstm weight shapes do not match input/hidden sizes")
    xi = (x.data.reshape(t_len * n, d) @ w_ih.data.T + b_ih.data).reshape(t_len, n, 4 * hid)
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    h = np.zeros((n, hid), dtype=xi.dtype)
    c = np.zeros((n, hid), dtype=xi.dtype)
    hs = np.empty((t_len, n, hid), dtype=xi.dtype)
    cache = {}
    for t in order:
        a = xi[t] + h @ w_hh.data.T + b_hh.data
        i = _sigmoid(a[:, :hid])
        f = _sigmoid(a[:, hid : 2 * hid])
        gc = np.tanh(a[:, 2 * hid : 3 * hid])
        o = _sigmoid(a[:, 3 * hid :])
        c_new = f * c + i * gc
        tc = np.tanh(c_new)
        cache[t] = (h, c, i, f, gc, o, tc)
        h, c = o * tc, c_new
        hs[t] = h

    def back(g):
        dxi = np.empty_like(xi)
        dw_hh = np.zeros_like(w_hh.data)
        dh = np.zeros((n, hid), dtype=g.dtype)
        dc = np.zeros((n, hid), dtype=g.dtype)
        for t in reversed(list(order)):
            hp, cp, i, f, gc, o, tc = cache[t]
            dh = dh + g[t]
            dc = dc + dh * o * (1 - tc * tc)
            da = np.concatenate([dc * gc * i * (1 - i), dc * cp * f * (1 - f),
                                 dc * i * (1 - gc * gc), dh * tc * o * (1 - o)], axis=1)
            dxi[t] = da
            dw_hh += da.T @ hp
            dh = da @ w_hh.data
            dc = dc * f
        flat = dxi.reshape(t_len * n, 4 * hid)
        db = flat.sum(axis=0)
        return [(flat @ w_ih.data).reshape(t_len, n, d), flat.T @ x.data.reshape(t_len * n, d), dw_hh, db, db.copy()]
    return make(hs, (x, w_ih, w_hh, b_ih, b_hh), back)


def blstm(x: Tensor, fwd, bwd) -> Tensor:
    """Forward and time-reversed LSTMs, outputs concatenated per step: T x N x 2H.

    ``fwd`` and ``bwd`` are (w_ih, w_hh, b_ih, b_hh) tuples.
    """
    return concat([lstm(x, *fwd), lstm(x, *bwd, reverse=True)], axis=2)


def flatten(x: Tensor) -> Tensor:
    return x.reshape(x.shape[0], -1)


__all__ = ["relu", "elu", "sigmoid", "tanh", "softmax", "log_softmax", "cross_entropy", "linear",
           "dropout", "conv2d", "maxpool2d", "batchnorm2d", "gru", "lstm", "blstm", "flatten", "as_tensor"]
