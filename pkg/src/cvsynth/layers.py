"""Layers with cached activations and hand-written backward passes.

Layers operate on raw float64 arrays; parameters are Tensors so the
optimizer and gradient checks can reach them. ``forward`` caches whatever
``backward`` needs; ``backward`` returns the input cotangent and
accumulates parameter gradients.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ParameterError
from .geometry import build_lattice
from .ops import relu_nd, relu_vjp_nd, softmax_nd, softmax_vjp_nd
from .rng import SplitMix64
from .tensor import Tensor


class Linear:
    """Affine map on the last axis; equivalent to a 1x1x1 convolution."""

    def __init__(self, c_in: int, c_out: int, rng: SplitMix64 | None = None,
                 zero_init: bool = False, bias: bool = True):
        if zero_init or rng is None:
            w = np.zeros((c_in, c_out))
        else:
            w = rng.normal(size=(c_in, c_out), scale=np.sqrt(1.0 / c_in))
        self.weight = Tensor(w)
        self.bias = Tensor(np.zeros(c_out)) if bias else None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        out = x @ self.weight.data
        if self.bias is not None:
            out += self.bias.data
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x2 = self._x.reshape(-1, self._x.shape[-1])
        d2 = dout.reshape(-1, dout.shape[-1])
        self.weight.add_grad(x2.T @ d2)
        if self.bias is not None:
            self.bias.add_grad(d2.sum(axis=0))
        return dout @ self.weight.data.T

    def params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out


class _ConvGeometry:
    """Gather/scatter index plan between a dense grid and centered-kernel
    patches at a given stride; shared by Conv3d and ConvTranspose3d."""

    def __init__(self, big_shape, kernel_size: int, stride: int):
        if kernel_size % 2 == 0 or kernel_size < 1:
            raise ParameterError(f"kernel size must be odd, got {kernel_size}")
        self.big_shape = tuple(big_shape)
        self.kernel_size = kernel_size
        self.stride = stride
        pad = (kernel_size - 1) // 2
        self.pad = pad
        self.small_shape = tuple(
            (ext + 2 * pad - kernel_size) // stride + 1 for ext in self.big_shape
        )
        padded = [ext + 2 * pad for ext in self.big_shape]
        self._padded_shape = tuple(padded)

        offsets = build_lattice(kernel_size).points.astype(np.int64)
        centers = np.stack(
            np.meshgrid(
                *[np.arange(ext) * stride for ext in self.small_shape], indexing="ij"
            ),
            axis=-1,
        ).reshape(-1, 3)
        # positions into the zero-padded grid: center + pad + offset
        pos = centers[:, None, :] + (offsets[None, :, :] + pad)
        strides = np.array(
            [padded[1] * padded[2], padded[2], 1], dtype=np.int64
        )
        self.flat_index = pos @ strides  # (n_small, K^3)

    def gather(self, big: np.ndarray) -> np.ndarray:
        """(n_small, K^3 * C) patches from a (big_shape, C) array."""
        c = big.shape[-1]
        padded = np.zeros(self._padded_shape + (c,), dtype=np.float64)
        p = self.pad
        padded[p:p + self.big_shape[0], p:p + self.big_shape[1], p:p + self.big_shape[2]] = big
        flat = padded.reshape(-1, c)
        patches = flat[self.flat_index]  # (n_small, K^3, C)
        return patches.reshape(self.flat_index.shape[0], -1)

    def scatter(self, dpatches: np.ndarray, c: int) -> np.ndarray:
        """Adjoint of gather: accumulate patches back onto the big grid."""
        dpadded = np.zeros((int(np.prod(self._padded_shape)), c), dtype=np.float64)
        np.add.at(dpadded, self.flat_index.reshape(-1),
                  dpatches.reshape(-1, self.kernel_size**3, c).reshape(-1, c))
        dpadded = dpadded.reshape(self._padded_shape + (c,))
        p = self.pad
        return dpadded[p:p + self.big_shape[0], p:p + self.big_shape[1], p:p + self.big_shape[2]]


class Conv3d:
    """Dense strided 3-D convolution with zero padding (kernel - 1) / 2.

    Weight layout is (K^3, C_in, C_out) indexed by the same lattice order
    as the rotated kernels.
    """

    def __init__(self, c_in: int, c_out: int, kernel_size: int, stride: int,
                 input_shape, rng: SplitMix64):
        self.c_in, self.c_out = c_in, c_out
        self.geom = _ConvGeometry(input_shape, kernel_size, stride)
        fan_in = kernel_size**3 * c_in
        self.weight = Tensor(rng.normal(size=(kernel_size**3, c_in, c_out),
                                        scale=np.sqrt(2.0 / fan_in)))
        self.bias = Tensor(np.zeros(c_out))

    @property
    def output_shape(self):
        return self.geom.small_shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape != self.geom.big_shape + (self.c_in,):
            raise DimensionError(
                f"conv input {x.shape} != expected {self.geom.big_shape + (self.c_in,)}"
            )
        self._patches = self.geom.gather(x)
        w2 = self.weight.data.reshape(-1, self.c_out)
        out = self._patches @ w2 + self.bias.data
        return out.reshape(self.geom.small_shape + (self.c_out,))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        d2 = dout.reshape(-1, self.c_out)
        self.weight.add_grad((self._patches.T @ d2).reshape(self.weight.shape))
        self.bias.add_grad(d2.sum(axis=0))
        dpatches = d2 @ self.weight.data.reshape(-1, self.c_out).T
        return self.geom.scatter(dpatches, self.c_in)

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]


class ConvTranspose3d:
    """Adjoint of :class:`Conv3d` for a fixed geometry: maps the small grid
    back to the big one, exactly inverting the paired conv's shapes."""

    def __init__(self, c_in: int, c_out: int, kernel_size: int, stride: int,
                 output_shape, rng: SplitMix64):
        self.c_in, self.c_out = c_in, c_out
        self.geom = _ConvGeometry(output_shape, kernel_size, stride)
        # each output voxel receives ~K^3 / stride^3 scatter taps, not K^3
        fan_in = max(1, kernel_size**3 // stride**3) * c_in
        # weight indexed (K^3, C_out, C_in): the adjoint contracts C_in away
        self.weight = Tensor(rng.normal(size=(kernel_size**3, c_out, c_in),
                                        scale=np.sqrt(2.0 / fan_in)))
        self.bias = Tensor(np.zeros(c_out))

    @property
    def output_shape(self):
        return self.geom.big_shape

    def forward(self, y: np.ndarray) -> np.ndarray:
        if y.shape != self.geom.small_shape + (self.c_in,):
            raise DimensionError(
                f"transposed-conv input {y.shape} != expected "
                f"{self.geom.small_shape + (self.c_in,)}"
            )
        self._y = y
        w2 = self.weight.data.reshape(-1, self.c_in)
        dpatches = y.reshape(-1, self.c_in) @ w2.T
        out = self.geom.scatter(dpatches, self.c_out)
        return out + self.bias.data

    def backward(self, dout: np.ndarray) -> np.ndarray:
        dpatches = self.geom.gather(dout)  # (n_small, K^3 * C_out)
        y2 = self._y.reshape(-1, self.c_in)
        self.weight.add_grad((dpatches.T @ y2).reshape(self.weight.shape))
        self.bias.add_grad(dout.reshape(-1, self.c_out).sum(axis=0))
        return (dpatches @ self.weight.data.reshape(-1, self.c_in)).reshape(self._y.shape)

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]


def attention_forward(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                      heads: int, scale: bool):
    """Scaled dot-product attention, softmax over keys per query.

    Shapes: q (Lq, C); k, v (Lk, C); heads must divide C. Returns the
    (Lq, C) output and the cache for :func:`attention_backward`.
    """
    lq, c = q.shape
    lk = k.shape[0]
    if c % heads:
        raise DimensionError(f"{heads} heads do not divide {c} channels")
    hd = c // heads
    s = 1.0 / np.sqrt(hd) if scale else 1.0
    qh = q.reshape(lq, heads, hd)
    kh = k.reshape(lk, heads, hd)
    vh = v.reshape(lk, heads, hd)
    logits = np.einsum("qhd,khd->hqk", qh, kh) * s
    probs = softmax_nd(logits, axis=2)
    out = np.einsum("hqk,khd->qhd", probs, vh).reshape(lq, c)
    cache = (qh, kh, vh, probs, s)
    return out, cache


def attention_backward(cache, dout: np.ndarray):
    qh, kh, vh, probs, s = cache
    lq, heads, hd = qh.shape
    lk = kh.shape[0]
    d_oh = dout.reshape(lq, heads, hd)
    dv = np.einsum("hqk,qhd->khd", probs, d_oh)
    dprobs = np.einsum("qhd,khd->hqk", d_oh, vh)
    dlogits = softmax_vjp_nd(probs, dprobs, axis=2) * s
    dq = np.einsum("hqk,khd->qhd", dlogits, kh)
    dk = np.einsum("hqk,qhd->khd", dlogits, qh)
    return dq.reshape(lq, -1), dk.reshape(lk, -1), dv.reshape(lk, -1)


class EncoderLayer:
    """Self-attention plus a two-layer feed-forward, both with residuals.

    No normalization layers: the blocks here are shallow and the residual
    stream must stay bit-exact when the branches are zero.
    """

    def __init__(self, channels: int, heads: int, rng: SplitMix64,
                 hidden_mult: int = 2, scale: bool = True):
        self.heads = heads
        self.scale = scale
        self.wq = Linear(channels, channels, rng.fork("wq"))
        # no key bias: a constant key offset shifts all of a query's logits
        # equally and cancels in the softmax
        self.wk = Linear(channels, channels, rng.fork("wk"), bias=False)
        self.wv = Linear(channels, channels, rng.fork("wv"))
        self.wo = Linear(channels, channels, rng.fork("wo"))
        hidden = hidden_mult * channels
        self.ff1 = Linear(channels, hidden, rng.fork("ff1"))
        self.ff2 = Linear(hidden, channels, rng.fork("ff2"))

    def forward(self, x: np.ndarray) -> np.ndarray:
        q = self.wq.forward(x)
        k = self.wk.forward(x)
        v = self.wv.forward(x)
        attn, self._cache = attention_forward(q, k, v, self.heads, self.scale)
        mid = x + self.wo.forward(attn)
        self._pre_act = self.ff1.forward(mid)
        hidden = relu_nd(self._pre_act)
        return mid + self.ff2.forward(hidden)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        dhidden = self.ff2.backward(dout)
        dmid = dout + self.ff1.backward(relu_vjp_nd(self._pre_act, dhidden))
        dattn = self.wo.backward(dmid)
        dq, dk, dv = attention_backward(self._cache, dattn)
        dx = dmid
        dx = dx + self.wq.backward(dq)
        dx = dx + self.wk.backward(dk)
        dx = dx + self.wv.backward(dv)
        return dx

    def params(self):
        out = []
        for name, sub in (("wq", self.wq), ("wk", self.wk), ("wv", self.wv),
                          ("wo", self.wo), ("ff1", self.ff1), ("ff2", self.ff2)):
            out += [(f"{name}.{p}", t) for p, t in sub.params()]
        return out


class DownBlock:
    """Stride-2 residual block: relu(conv3(x) + conv1(x))."""

    def __init__(self, c_in: int, c_out: int, input_shape, rng: SplitMix64):
        self.conv = Conv3d(c_in, c_out, 3, 2, input_shape, rng.fork("conv"))
        self.skip = Conv3d(c_in, c_out, 1, 2, input_shape, rng.fork("skip"))

    @property
    def output_shape(self):
        return self.conv.output_shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._pre = self.conv.forward(x) + self.skip.forward(x)
        return relu_nd(self._pre)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        dpre = relu_vjp_nd(self._pre, dout)
        return self.conv.backward(dpre) + self.skip.backward(dpre)

    def params(self):
        return [(f"conv.{n}", t) for n, t in self.conv.params()] + \
               [(f"skip.{n}", t) for n, t in self.skip.params()]


class UpBlock:
    """Stride-2 transposed residual block mirroring :class:`DownBlock`."""

    def __init__(self, c_in: int, c_out: int, output_shape, rng: SplitMix64):
        self.conv = ConvTranspose3d(c_in, c_out, 3, 2, output_shape, rng.fork("conv"))
        self.skip = ConvTranspose3d(c_in, c_out, 1, 2, output_shape, rng.fork("skip"))

    @property
    def output_shape(self):
        return self.conv.output_shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._pre = self.conv.forward(x) + self.skip.forward(x)
        return relu_nd(self._pre)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        dpre = relu_vjp_nd(self._pre, dout)
        return self.conv.backward(dpre) + self.skip.backward(dpre)

    def params(self):
        return [(f"conv.{n}", t) for n, t in self.conv.params()] + \
               [(f"skip.{n}", t) for n, t in self.skip.params()]
