"""Differentiable layers with explicit forward/backward passes.

Conventions: sequence tensors are (batch, time, channels), pooled vectors
are (batch, features).  Each layer caches whatever its backward pass needs
during forward; backward returns the gradient w.r.t. the input and
accumulates parameter gradients into Param.grad.
"""

from __future__ import annotations

import numpy as np


class Param:
    """A trainable array with an accumulated gradient."""

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.zeros_like(self.value)

    @property
    def size(self) -> int:
        return self.value.size


def _fan_in_uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class Layer:
    params: list[Param]

    def __init__(self):
        self.params = []

    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Linear(Layer):
    """Affine map on the last axis; accepts 2-d or 3-d input."""

    def __init__(self, d_in: int, d_out: int, rng, bias: bool = True):
        super().__init__()
        self.w = Param(_fan_in_uniform(rng, (d_in, d_out), d_in))
        self.b = Param(np.zeros(d_out)) if bias else None
        self.params = [self.w] + ([self.b] if bias else [])

    def forward(self, x, train=False):
        self._x = x
        y = x @ self.w.value
        return y + self.b.value if self.b is not None else y

    def backward(self, dy):
        x = self._x
        if x.ndim == 3:
            self.w.grad += np.einsum("btd,bte->de", x, dy)
            if self.b is not None:
                self.b.grad += dy.sum(axis=(0, 1))
        else:
            self.w.grad += x.T @ dy
            if self.b is not None:
                self.b.grad += dy.sum(axis=0)
        return dy @ self.w.value.T


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return dy * self._mask


class Conv1d(Layer):
    """1-d convolution along time, stride 1, zero 'same' padding."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng):
        super().__init__()
        self.kernel = kernel
        self.w = Param(_fan_in_uniform(rng, (kernel, c_in, c_out), kernel * c_in))
        self.b = Param(np.zeros(c_out))
        self.params = [self.w, self.b]
        self.pad_left = (kernel - 1) // 2
        self.pad_right = kernel // 2

    def _windows(self, xp):
        n, tp, c = xp.shape
        t_out = tp - self.kernel + 1
        s0, s1, s2 = xp.strides
        return np.lib.stride_tricks.as_strided(
            xp, shape=(n, t_out, self.kernel, c), strides=(s0, s1, s1, s2),
            writeable=False,
        )

    def forward(self, x, train=False):
        xp = np.pad(x, ((0, 0), (self.pad_left, self.pad_right), (0, 0)))
        self._xp_windows = self._windows(xp)
        self._in_time = x.shape[1]
        return (
            np.einsum("btkc,kcd->btd", self._xp_windows, self.w.value)
            + self.b.value
        )

    def backward(self, dy):
        self.w.grad += np.einsum("btkc,btd->kcd", self._xp_windows, dy)
        self.b.grad += dy.sum(axis=(0, 1))
        n, t, _ = dy.shape
        dxp = np.zeros((n, t + self.kernel - 1, self.w.value.shape[1]))
        for k in range(self.kernel):
            dxp[:, k:k + t] += dy @ self.w.value[k].T
        return dxp[:, self.pad_left:self.pad_left + self._in_time]


class BatchNorm(Layer):
    """Channel-wise batch normalization over (batch, time).

    Running statistics use momentum 0.1 and are frozen in eval mode.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.gamma = Param(np.ones(channels))
        self.beta = Param(np.zeros(channels))
        self.params = [self.gamma, self.beta]
        self.momentum = momentum
        self.eps = eps
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x, train=False):
        if train:
            axes = tuple(range(x.ndim - 1))
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
            self._m = np.prod([x.shape[a] for a in axes])
        else:
            mean, var = self.running_mean, self.running_var
        self._train = train
        self._std = np.sqrt(var + self.eps)
        self._xhat = (x - mean) / self._std
        return self.gamma.value * self._xhat + self.beta.value

    def backward(self, dy):
        axes = tuple(range(dy.ndim - 1))
        self.gamma.grad += (dy * self._xhat).sum(axis=axes)
        self.beta.grad += dy.sum(axis=axes)
        dxhat = dy * self.gamma.value
        if not self._train:
            return dxhat / self._std
        m = self._m
        return (
            dxhat
            - dxhat.mean(axis=axes)
            - self._xhat * (dxhat * self._xhat).sum(axis=axes) / m
        ) / self._std


class MaxPool1d(Layer):
    """Non-overlapping max pooling along time (width = stride = 2 by default)."""

    def __init__(self, width: int = 2):
        super().__init__()
        self.width = width

    def forward(self, x, train=False):
        n, t, c = x.shape
        t_out = t // self.width
        blocks = x[:, :t_out * self.width].reshape(n, t_out, self.width, c)
        self._argmax = blocks.argmax(axis=2)
        self._in_shape = x.shape
        return blocks.max(axis=2)

    def backward(self, dy):
        n, t_out, c = dy.shape
        dblocks = np.zeros((n, t_out, self.width, c))
        ni, ti, ci = np.ogrid[:n, :t_out, :c]
        dblocks[ni, ti, self._argmax, ci] = dy
        dx = np.zeros(self._in_shape)
        dx[:, :t_out * self.width] = dblocks.reshape(n, t_out * self.width, c)
        return dx


class AvgPool1d(Layer):
    """Non-overlapping average pooling along time."""

    def __init__(self, factor: int):
        super().__init__()
        self.factor = factor

    def forward(self, x, train=False):
        n, t, c = x.shape
        t_out = t // self.factor
        self._in_shape = x.shape
        return x[:, :t_out * self.factor].reshape(n, t_out, self.factor, c).mean(axis=2)

    def backward(self, dy):
        n, t_out, c = dy.shape
        dx = np.zeros(self._in_shape)
        spread = np.repeat(dy / self.factor, self.factor, axis=1)
        dx[:, :t_out * self.factor] = spread
        return dx


class GlobalAvgPool(Layer):
    """Mean over the time axis: (batch, time, c) -> (batch, c)."""

    def forward(self, x, train=False):
        self._t = x.shape[1]
        return x.mean(axis=1)

    def backward(self, dy):
        return np.repeat(dy[:, None, :], self._t, axis=1) / self._t


class LayerNorm(Layer):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.gamma = Param(np.ones(dim))
        self.beta = Param(np.zeros(dim))
        self.params = [self.gamma, self.beta]
        self.eps = eps

    def forward(self, x, train=False):
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        self._std = np.sqrt(var + self.eps)
        self._xhat = (x - mean) / self._std
        return self.gamma.value * self._xhat + self.beta.value

    def backward(self, dy):
        axes = tuple(range(dy.ndim - 1))
        self.gamma.grad += (dy * self._xhat).sum(axis=axes)
        self.beta.grad += dy.sum(axis=axes)
        dxhat = dy * self.gamma.value
        d = dy.shape[-1]
        return (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - self._xhat * (dxhat * self._xhat).mean(axis=-1, keepdims=True)
        ) / self._std


class PositionalEncoding(Layer):
    """Additive sinusoidal position signal; no parameters."""

    def __init__(self, dim: int, max_len: int = 4096):
        super().__init__()
        pos = np.arange(max_len)[:, None]
        i = np.arange(dim)[None, :]
        angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
        pe = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
        self.pe = pe

    def forward(self, x, train=False):
        return x + self.pe[: x.shape[1]]

    def backward(self, dy):
        return dy


class MultiHeadSelfAttention(Layer):
    def __init__(self, d_model: int, n_heads: int, rng):
        super().__init__()
        if d_model % n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        self.h = n_heads
        self.dk = d_model // n_heads
        self.wq = Linear(d_model, d_model, rng)
        # no key bias: a constant shift of all keys cancels in the softmax,
        # leaving the parameter without any gradient signal
        self.wk = Linear(d_model, d_model, rng, bias=False)
        self.wv = Linear(d_model, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)
        self.params = (
            self.wq.params + self.wk.params + self.wv.params + self.wo.params
        )

    def _split(self, x):
        n, t, d = x.shape
        return x.reshape(n, t, self.h, self.dk).transpose(0, 2, 1, 3)

    def _merge(self, x):
        n, h, t, dk = x.shape
        return x.transpose(0, 2, 1, 3).reshape(n, t, h * dk)

    def forward(self, x, train=False):
        q = self._split(self.wq.forward(x))
        k = self._split(self.wk.forward(x))
        v = self._split(self.wv.forward(x))
        scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(self.dk)
        attn = softmax(scores, axis=-1)
        ctx = attn @ v
        self._q, self._k, self._v, self._attn = q, k, v, attn
        return self.wo.forward(self._merge(ctx))

    def backward(self, dy):
        dctx = self._split(self.wo.backward(dy))
        dattn = dctx @ self._v.transpose(0, 1, 3, 2)
        dv = self._attn.transpose(0, 1, 3, 2) @ dctx
        # softmax backward over the last axis
        dscores = self._attn * (dattn - (dattn * self._attn).sum(axis=-1, keepdims=True))
        dscores /= np.sqrt(self.dk)
        dq = dscores @ self._k
        dk = dscores.transpose(0, 1, 3, 2) @ self._q
        dx = self.wq.backward(self._merge(dq))
        dx += self.wk.backward(self._merge(dk))
        dx += self.wv.backward(self._merge(dv))
        return dx


class TransformerEncoderBlock(Layer):
    """Post-norm encoder block: attention and feed-forward sublayers with
    residual connections and layer normalization."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng):
        super().__init__()
        self.attn = MultiHeadSelfAttention(d_model, n_heads, rng)
        self.ln1 = LayerNorm(d_model)
        self.ff1 = Linear(d_model, d_ff, rng)
        self.relu = ReLU()
        self.ff2 = Linear(d_ff, d_model, rng)
        self.ln2 = LayerNorm(d_model)
        self.params = (
            self.attn.params + self.ln1.params + self.ff1.params
            + self.ff2.params + self.ln2.params
        )

    def forward(self, x, train=False):
        a = self.attn.forward(x, train)
        x1 = self.ln1.forward(x + a, train)
        f = self.ff2.forward(self.relu.forward(self.ff1.forward(x1, train), train), train)
        return self.ln2.forward(x1 + f, train)

    def backward(self, dy):
        d = self.ln2.backward(dy)
        df = self.ff1.backward(self.relu.backward(self.ff2.backward(d)))
        dx1 = self.ln1.backward(d + df)
        return dx1 + self.attn.backward(dx1)


class Sequential(Layer):
    def __init__(self, *layers: Layer):
        super().__init__()
        self.layers = list(layers)
        self.params = [p for l in self.layers for p in l.params]

    def forward(self, x, train=False):
        for l in self.layers:
            x = l.forward(x, train)
        return x

    def backward(self, dy):
        for l in reversed(self.layers):
            dy = l.backward(dy)
        return dy
