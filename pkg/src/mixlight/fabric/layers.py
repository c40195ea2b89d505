"""Parameterized layers: convolutions (time and frequency-strided), their

transposed mirrors, linear/layer-norm, multi-head attention, and the
transformer blocks used by the latent module. Convolutions are primitives with
hand-written backward passes shaped as single GEMMs; everything else composes
tensor primitives.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, InputError
from . import tensor as T
from .tensor import Tensor, _accumulate, _make


class Parameter:
    """Named learnable array with Adam state."""

    __slots__ = ("name", "tensor", "m", "v")

    def __init__(self, name: str, array: np.ndarray):
        self.name = name
        self.tensor = Tensor(array, requires_grad=True, op=f"param:{name}")
        self.m = np.zeros_like(array)
        self.v = np.zeros_like(array)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data


class ParamStore:
    """Creates uniquely named parameters with seeded fan-in uniform init."""

    def __init__(self, rng: np.random.Generator, dtype=np.float32):
        self.rng = rng
        self.dtype = dtype
        self.params: dict[str, Parameter] = {}

    def new(self, name, shape, fan_in, zero=False, fill=None, scale=1.0) -> Parameter:
        if name in self.params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        if zero:
            arr = np.zeros(shape, dtype=self.dtype)
        elif fill is not None:
            arr = np.full(shape, fill, dtype=self.dtype)
        else:
            bound = scale / np.sqrt(max(fan_in, 1))
            arr = self.rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        p = Parameter(name, arr)
        self.params[name] = p
        return p

    def all(self):
        return list(self.params.values())

    def count(self) -> int:
        return sum(p.data.size for p in self.all())


# ---------------------------------------------------------------------------
# convolution primitives
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of [C_in, T] with [C_out, C_in, K] kernels."""
    c_out, c_in, k = w.data.shape
    if x.data.shape[0] != c_in:
        raise InputError(f"conv1d channel mismatch: x has {x.data.shape[0]}, kernel {c_in}")
    xd = np.pad(x.data, ((0, 0), (pad, pad))) if pad else x.data
    t_out = (xd.shape[1] - k) // stride + 1
    if t_out < 1:
        raise InputError("conv1d output would be empty")
    win = np.lib.stride_tricks.sliding_window_view(xd, k, axis=1)[:, ::stride][:, :t_out]
    cols = np.ascontiguousarray(win.transpose(0, 2, 1)).reshape(c_in * k, t_out)
    w2 = w.data.reshape(c_out, c_in * k)
    out = w2 @ cols + b.data[:, None]

    def backward(g):
        _accumulate(w, (g @ cols.T).reshape(c_out, c_in, k))
        _accumulate(b, g.sum(axis=1))
        if x.requires_grad:
            dcols = (w2.T @ g).reshape(c_in, k, t_out)
            dxp = np.zeros_like(xd)
            for kk in range(k):
                dxp[:, kk : kk + stride * (t_out - 1) + 1 : stride] += dcols[:, kk, :]
            _accumulate(x, dxp[:, pad : pad + x.data.shape[1]] if pad else dxp)

    return _make(out, (x, w, b), backward, "conv1d")


def conv2d_freq(x: Tensor, w: Tensor, b: Tensor, stride: int, pad: int) -> Tensor:
    """Convolution strided along the frequency axis of [C_in, F, T];

    the time axis passes through untouched (kernel size 1 in time).
    """
    c_out, c_in, k = w.data.shape
    if x.data.shape[0] != c_in:
        raise InputError("conv2d_freq channel mismatch")
    xd = np.pad(x.data, ((0, 0), (pad, pad), (0, 0))) if pad else x.data
    f_out = (xd.shape[1] - k) // stride + 1
    if f_out < 1:
        raise ConfigError("conv2d_freq frequency axis not divisible by the stride plan")
    t = xd.shape[2]
    win = np.lib.stride_tricks.sliding_window_view(xd, k, axis=1)[:, ::stride][:, :f_out]
    # win: [C_in, F_out, T, K] -> cols [C_in*K, F_out*T]
    cols = np.ascontiguousarray(win.transpose(0, 3, 1, 2)).reshape(c_in * k, f_out * t)
    w2 = w.data.reshape(c_out, c_in * k)
    out = (w2 @ cols + b.data[:, None]).reshape(c_out, f_out, t)

    def backward(g):
        g2 = g.reshape(c_out, f_out * t)
        _accumulate(w, (g2 @ cols.T).reshape(c_out, c_in, k))
        _accumulate(b, g2.sum(axis=1))
        if x.requires_grad:
            dcols = (w2.T @ g2).reshape(c_in, k, f_out, t)
            dxp = np.zeros_like(xd)
            for kk in range(k):
                dxp[:, kk : kk + stride * (f_out - 1) + 1 : stride, :] += dcols[:, kk]
            _accumulate(x, dxp[:, pad : pad + x.data.shape[1], :] if pad else dxp)

    return _make(out, (x, w, b), backward, "conv2d_freq")


def transposed_conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int, pad: int) -> Tensor:
    """Transposed counterpart of conv1d; kernel is [C_in, C_out, K]."""
    c_in, c_out, k = w.data.shape
    if x.data.shape[0] != c_in:
        raise InputError("transposed_conv1d channel mismatch")
    t_in = x.data.shape[1]
    full = (t_in - 1) * stride + k
    if full - 2 * pad < 1:
        raise ConfigError("transposed_conv1d output would be empty")
    w2 = w.data.reshape(c_in, c_out * k)
    contrib = (w2.T @ x.data).reshape(c_out, k, t_in)
    buf = np.zeros((c_out, full), dtype=x.data.dtype)
    for kk in range(k):
        buf[:, kk : kk + stride * (t_in - 1) + 1 : stride] += contrib[:, kk, :]
    out = buf[:, pad : full - pad] + b.data[:, None]

    def backward(g):
        gfull = np.zeros((c_out, full), dtype=g.dtype)
        gfull[:, pad : full - pad] = g
        dcontrib = np.empty((c_out, k, t_in), dtype=g.dtype)
        for kk in range(k):
            dcontrib[:, kk, :] = gfull[:, kk : kk + stride * (t_in - 1) + 1 : stride]
        dc2 = dcontrib.reshape(c_out * k, t_in)
        _accumulate(b, g.sum(axis=1))
        _accumulate(w, (x.data @ dc2.T).reshape(c_in, c_out, k))
        if x.requires_grad:
            _accumulate(x, w2 @ dc2)

    return _make(out, (x, w, b), backward, "transposed_conv1d")


def transposed_conv2d_freq(x: Tensor, w: Tensor, b: Tensor, stride: int, pad: int) -> Tensor:
    """Transposed frequency-strided convolution on [C_in, F, T]."""
    c_in, c_out, k = w.data.shape
    if x.data.shape[0] != c_in:
        raise InputError("transposed_conv2d_freq channel mismatch")
    f_in, t = x.data.shape[1], x.data.shape[2]
    full = (f_in - 1) * stride + k
    if full - 2 * pad < 1:
        raise ConfigError("transposed_conv2d_freq output would be empty")
    w2 = w.data.reshape(c_in, c_out * k)
    contrib = (w2.T @ x.data.reshape(c_in, f_in * t)).reshape(c_out, k, f_in, t)
    buf = np.zeros((c_out, full, t), dtype=x.data.dtype)
    for kk in range(k):
        buf[:, kk : kk + stride * (f_in - 1) + 1 : stride, :] += contrib[:, kk]
    out = buf[:, pad : full - pad, :] + b.data[:, None, None]

    def backward(g):
        gfull = np.zeros((c_out, full, t), dtype=g.dtype)
        gfull[:, pad : full - pad, :] = g
        dcontrib = np.empty((c_out, k, f_in, t), dtype=g.dtype)
        for kk in range(k):
            dcontrib[:, kk] = gfull[:, kk : kk + stride * (f_in - 1) + 1 : stride, :]
        dc2 = dcontrib.reshape(c_out * k, f_in * t)
        _accumulate(b, g.sum(axis=(1, 2)))
        _accumulate(w, (dc2 @ x.data.reshape(c_in, f_in * t).T).T.reshape(c_in, c_out, k))
        if x.requires_grad:
            _accumulate(x, (w2 @ dc2).reshape(c_in, f_in, t))

    return _make(out, (x, w, b), backward, "transposed_conv2d_freq")


# ---------------------------------------------------------------------------
# layer classes
# ---------------------------------------------------------------------------

class Conv1d:
    def __init__(self, store: ParamStore, name, c_in, c_out, kernel, stride, pad):
        self.stride, self.pad = stride, pad
        self.w = store.new(f"{name}.w", (c_out, c_in, kernel), fan_in=c_in * kernel)
        self.b = store.new(f"{name}.b", (c_out,), fan_in=c_in * kernel)

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.w.tensor, self.b.tensor, self.stride, self.pad)


class ConvFreq2d:
    def __init__(self, store, name, c_in, c_out, kernel, stride, pad):
        self.stride, self.pad = stride, pad
        self.w = store.new(f"{name}.w", (c_out, c_in, kernel), fan_in=c_in * kernel)
        self.b = store.new(f"{name}.b", (c_out,), fan_in=c_in * kernel)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d_freq(x, self.w.tensor, self.b.tensor, self.stride, self.pad)


class TConv1d:
    def __init__(self, store, name, c_in, c_out, kernel, stride, pad, w_scale=1.0, b_fill=None):
        self.stride, self.pad = stride, pad
        fan = c_in * kernel
        self.w = store.new(f"{name}.w", (c_in, c_out, kernel), fan_in=fan, scale=w_scale)
        if b_fill is None:
            self.b = store.new(f"{name}.b", (c_out,), fan_in=fan)
        else:
            self.b = store.new(f"{name}.b", (c_out,), fan_in=fan, fill=b_fill)

    def __call__(self, x: Tensor) -> Tensor:
        return transposed_conv1d(x, self.w.tensor, self.b.tensor, self.stride, self.pad)


class TConvFreq2d:
    def __init__(self, store, name, c_in, c_out, kernel, stride, pad, w_scale=1.0, b_fill=None):
        self.stride, self.pad = stride, pad
        fan = c_in * kernel
        self.w = store.new(f"{name}.w", (c_in, c_out, kernel), fan_in=fan, scale=w_scale)
        if b_fill is None:
            self.b = store.new(f"{name}.b", (c_out,), fan_in=fan)
        else:
            self.b = store.new(f"{name}.b", (c_out,), fan_in=fan, fill=b_fill)

    def __call__(self, x: Tensor) -> Tensor:
        return transposed_conv2d_freq(x, self.w.tensor, self.b.tensor, self.stride, self.pad)


class Linear:
    def __init__(self, store, name, c_in, c_out, zero=False):
        self.w = store.new(f"{name}.w", (c_in, c_out), fan_in=c_in, zero=zero)
        self.b = store.new(f"{name}.b", (c_out,), fan_in=c_in, zero=zero)

    def __call__(self, x: Tensor) -> Tensor:
        return T.matmul(x, self.w.tensor) + self.b.tensor


class LayerNorm:
    def __init__(self, store, name, dim, eps=1e-5):
        self.eps = eps
        self.gamma = store.new(f"{name}.gamma", (dim,), fan_in=1, fill=1.0)
        self.beta = store.new(f"{name}.beta", (dim,), fan_in=1, zero=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm_core(x, self.eps) * self.gamma.tensor + self.beta.tensor


class MultiHeadAttention:
    """Scaled dot-product attention over [L, C] sequences."""

    def __init__(self, store, name, dim, heads):
        if dim % heads != 0:
            raise ConfigError(f"attention dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.dim = dim
        self.q = Linear(store, f"{name}.q", dim, dim)
        self.k = Linear(store, f"{name}.k", dim, dim)
        self.v = Linear(store, f"{name}.v", dim, dim)
        self.out = Linear(store, f"{name}.out", dim, dim)

    def __call__(self, query: Tensor, memory: Tensor) -> Tensor:
        l_q = query.data.shape[0]
        l_kv = memory.data.shape[0]
        dh = self.dim // self.heads
        q = self.q(query).reshape(l_q, self.heads, dh).transpose(1, 0, 2)
        k = self.k(memory).reshape(l_kv, self.heads, dh).transpose(1, 0, 2)
        v = self.v(memory).reshape(l_kv, self.heads, dh).transpose(1, 0, 2)
        scores = T.matmul(q, k.transpose(0, 2, 1)) * (1.0 / np.sqrt(dh))
        attn = T.softmax(scores, axis=-1)
        ctx = T.matmul(attn, v).transpose(1, 0, 2).reshape(l_q, self.dim)
        return self.out(ctx)


class FeedForward:
    def __init__(self, store, name, dim, hidden):
        self.inner = Linear(store, f"{name}.in", dim, hidden)
        self.outer = Linear(store, f"{name}.out", hidden, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(T.gelu(self.inner(x)))


class EncoderBlock:
    """Pre-norm self-attention + feed-forward."""

    def __init__(self, store, name, dim, heads, ffn):
        self.norm1 = LayerNorm(store, f"{name}.ln1", dim)
        self.attn = MultiHeadAttention(store, f"{name}.attn", dim, heads)
        self.norm2 = LayerNorm(store, f"{name}.ln2", dim)
        self.ffn = FeedForward(store, f"{name}.ffn", dim, ffn)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h)
        return x + self.ffn(self.norm2(x))


class DecoderBlock:
    """Pre-norm self-attention, cross-attention (optional), feed-forward."""

    def __init__(self, store, name, dim, heads, ffn, cross: bool):
        self.norm1 = LayerNorm(store, f"{name}.ln1", dim)
        self.self_attn = MultiHeadAttention(store, f"{name}.self", dim, heads)
        self.cross_attn = None
        if cross:
            self.norm2 = LayerNorm(store, f"{name}.ln2", dim)
            self.cross_attn = MultiHeadAttention(store, f"{name}.cross", dim, heads)
        self.norm3 = LayerNorm(store, f"{name}.ln3", dim)
        self.ffn = FeedForward(store, f"{name}.ffn", dim, ffn)

    def __call__(self, x: Tensor, memory: Tensor | None) -> Tensor:
        h = self.norm1(x)
        x = x + self.self_attn(h, h)
        if self.cross_attn is not None:
            if memory is None:
                raise InputError("decoder block built with cross-attention needs a memory")
            x = x + self.cross_attn(self.norm2(x), memory)
        return x + self.ffn(self.norm3(x))


def sinusoidal_pe(length: int, dim: int, dtype=np.float32) -> np.ndarray:
    """Interleaved sin/cos positional encoding; row 0 is [0, 1, 0, 1, ...]."""
    pos = np.arange(length)[:, None]
    idx = np.arange(0, dim, 2)[None, :]
    angles = pos * 10000.0 ** (-idx / dim)
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : dim // 2])
    return pe.astype(dtype)
