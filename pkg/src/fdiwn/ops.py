"""Layer primitives: convolution, activations, channel rearrangements,
pooling statistics, group normalization, and bicubic resampling.

All operations are pure functions of their inputs and differentiate through
the tape, except the bicubic resamplers, which belong to the data pipeline
and do not track gradients.

Convolution layout follows the usual cross-correlation convention: weights
are ``(out_c, in_c / groups, k, k)``, biases are per-channel ``(1, out_c, 1,
1)``.  The fast path lowers each convolution to one batched matrix multiply
per forward (im2col); backward uses the explicit transposed-correlation
formulas and recomputes the column matrix instead of caching it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cost
from .tensor import ShapeError, Tensor, record_op

__all__ = [
    "ConvParams",
    "conv2d",
    "relu",
    "sigmoid",
    "reshape",
    "channel_split",
    "concat_channels",
    "channel_shuffle",
    "pixel_shuffle",
    "global_pool_stats",
    "group_norm",
    "bicubic_resize",
    "bicubic_upsample",
]


# ---------------------------------------------------------------------------
# convolution

@dataclass
class ConvParams:
    """Weights and geometry of one 2-D convolution.

    ``weight`` is ``(out_c, in_c/groups, k, k)``; ``bias`` is ``(1, out_c,
    1, 1)`` or None.  ``groups`` must divide both channel counts.
    """

    weight: Tensor
    bias: Tensor | None = None
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        if self.weight.data.ndim != 4:
            raise ShapeError(f"conv weight must be 4-D; got {self.weight.shape}")
        out_c = self.weight.shape[0]
        if self.stride < 1 or self.padding < 0 or self.groups < 1:
            raise ShapeError(
                f"invalid conv geometry: stride={self.stride} padding={self.padding} groups={self.groups}"
            )
        if out_c % self.groups != 0:
            raise ShapeError(f"out_c={out_c} not divisible by groups={self.groups}")
        if self.weight.shape[2] != self.weight.shape[3]:
            raise ShapeError(f"only square kernels supported; got {self.weight.shape}")
        if self.bias is not None and self.bias.shape != (1, out_c, 1, 1):
            raise ShapeError(
                f"conv bias must be (1,{out_c},1,1); got {self.bias.shape}"
            )

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1] * self.groups

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]


def _im2col(xp: np.ndarray, k: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """(n, c, hp, wp) padded input -> (n, c*k*k, out_h*out_w) patch matrix."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, k, k, out_h, out_w), dtype=xp.dtype)
    for ki in range(k):
        for kj in range(k):
            cols[:, :, ki, kj] = xp[:, :, ki:ki + stride * out_h:stride, kj:kj + stride * out_w:stride]
    return cols.reshape(n, c * k * k, out_h * out_w)


def _col2im(gcols: np.ndarray, x_shape, k: int, stride: int, padding: int,
            out_h: int, out_w: int) -> np.ndarray:
    """Scatter-add patch gradients back to the (unpadded) input layout."""
    n, c, h, w = x_shape
    gxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=gcols.dtype)
    gc = gcols.reshape(n, c, k, k, out_h, out_w)
    for ki in range(k):
        for kj in range(k):
            gxp[:, :, ki:ki + stride * out_h:stride, kj:kj + stride * out_w:stride] += gc[:, :, ki, kj]
    if padding:
        return gxp[:, :, padding:padding + h, padding:padding + w]
    return gxp


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    n, ci, h, w = x.shape
    co = p.out_channels
    k, s, pad, g = p.kernel_size, p.stride, p.padding, p.groups
    if ci % g != 0:
        raise ShapeError(f"input channels {ci} not divisible by groups {g}")
    if p.in_channels != ci:
        raise ShapeError(
            f"conv expects {p.in_channels} input channels (weight {p.weight.shape}, groups {g}); got {ci}"
        )
    out_h = (h + 2 * pad - k) // s + 1
    out_w = (w + 2 * pad - k) // s + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError(
            f"conv output would be empty: input {h}x{w}, k={k}, stride={s}, padding={pad}"
        )
    L = out_h * out_w
    cig = ci // g
    w_mat = p.weight.data.reshape(g, co // g, cig * k * k)

    def make_cols() -> np.ndarray:
        if k == 1 and s == 1 and pad == 0:
            return x.data.reshape(n, g, cig, L)
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
        return _im2col(xp, k, s, out_h, out_w).reshape(n, g, cig * k * k, L)

    cols = make_cols()
    out_data = np.matmul(w_mat[None], cols)  # (n, g, co/g, L)
    out_data = out_data.reshape(n, co, out_h, out_w)
    if p.bias is not None:
        out_data = out_data + p.bias.data
    cost.add_macs(k * k * cig * co * L * n)
    out = Tensor(out_data)

    def rule(gy):
        gy_r = gy.reshape(n, g, co // g, L)
        cols_b = make_cols()
        gw = np.matmul(gy_r, cols_b.transpose(0, 1, 3, 2)).sum(axis=0)
        gw = gw.reshape(p.weight.shape)
        gcols = np.matmul(w_mat.transpose(0, 2, 1)[None], gy_r)
        if k == 1 and s == 1 and pad == 0:
            gx = gcols.reshape(n, ci, h, w)
        else:
            gx = _col2im(gcols.reshape(n, ci * k * k, L), x.shape, k, s, pad, out_h, out_w)
        if p.bias is not None:
            gb = gy.sum(axis=(0, 2, 3)).reshape(1, co, 1, 1)
            return gx, gw, gb
        return gx, gw

    inputs = (x, p.weight) if p.bias is None else (x, p.weight, p.bias)
    return record_op(out, inputs, rule)


# ---------------------------------------------------------------------------
# activations

def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))

    def rule(g):
        return (g * (x.data > 0),)

    return record_op(out, (x,), rule)


def sigmoid(x: Tensor) -> Tensor:
    # exp overflow for very negative inputs saturates to 1/inf = 0, which is
    # the right limit; silence the spurious warning instead of branching
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(y)

    def rule(g):
        return (g * y * (1.0 - y),)

    return record_op(out, (x,), rule)


# ---------------------------------------------------------------------------
# channel rearrangements

def reshape(x: Tensor, shape: tuple[int, int, int, int]) -> Tensor:
    """Size-preserving 4-D reshape (e.g. folding channel groups into batch)."""
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    out = Tensor(x.data.reshape(shape))

    def rule(g):
        return (g.reshape(x.shape),)

    return record_op(out, (x,), rule)


def channel_split(x: Tensor, ratio: float = 0.5) -> tuple[Tensor, Tensor]:
    """Contiguous channel split: first part retained, second part distilled."""
    c = x.shape[1]
    c1 = c * ratio
    if abs(c1 - round(c1)) > 1e-9 or not 0 < round(c1) < c:
        raise ShapeError(f"cannot split {c} channels at ratio {ratio}")
    c1 = int(round(c1))
    first = Tensor(np.ascontiguousarray(x.data[:, :c1]))
    second = Tensor(np.ascontiguousarray(x.data[:, c1:]))

    def rule_first(g):
        full = np.zeros_like(x.data)
        full[:, :c1] = g
        return (full,)

    def rule_second(g):
        full = np.zeros_like(x.data)
        full[:, c1:] = g
        return (full,)

    record_op(first, (x,), rule_first)
    record_op(second, (x,), rule_second)
    return first, second


def concat_channels(xs: list[Tensor]) -> Tensor:
    if not xs:
        raise ShapeError("concat of an empty list")
    n, _, h, w = xs[0].shape
    for t in xs[1:]:
        if t.shape[0] != n or t.shape[2] != h or t.shape[3] != w:
            raise ShapeError(
                f"concat needs matching batch/spatial dims: {xs[0].shape} vs {t.shape}"
            )
    out = Tensor(np.concatenate([t.data for t in xs], axis=1))
    bounds = np.cumsum([0] + [t.shape[1] for t in xs])

    def rule(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return record_op(out, tuple(xs), rule)


def _shuffle_channels(arr: np.ndarray, groups: int) -> np.ndarray:
    n, c, h, w = arr.shape
    return (
        arr.reshape(n, groups, c // groups, h, w)
        .transpose(0, 2, 1, 3, 4)
        .reshape(n, c, h, w)
    )


def channel_shuffle(x: Tensor, groups: int) -> Tensor:
    """Interleave channel groups: out[:, i] = x[:, (i % g)*(c//g) + i//g]."""
    c = x.shape[1]
    if c % groups != 0:
        raise ShapeError(f"channels {c} not divisible by shuffle groups {groups}")
    out = Tensor(_shuffle_channels(x.data, groups))

    def rule(g):
        return (_shuffle_channels(g, c // groups),)

    return record_op(out, (x,), rule)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Sub-pixel rearrangement (n, c, h, w) -> (n, c/r^2, h*r, w*r)."""
    n, c, h, w = x.shape
    if c % (r * r) != 0:
        raise ShapeError(f"channels {c} not divisible by r^2 = {r * r}")
    co = c // (r * r)
    out_data = (
        x.data.reshape(n, co, r, r, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, co, h * r, w * r)
    )
    out = Tensor(np.ascontiguousarray(out_data))

    def rule(g):
        gi = (
            g.reshape(n, co, h, r, w, r)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, c, h, w)
        )
        return (np.ascontiguousarray(gi),)

    return record_op(out, (x,), rule)


# ---------------------------------------------------------------------------
# pooled statistics and normalization

_STD_EPS = 1e-12  # keeps the std gradient finite on (nearly) constant maps


def spatial_mean(x: Tensor) -> Tensor:
    """Global average pooling: per-channel spatial mean, (n, c, 1, 1)."""
    m = x.shape[2] * x.shape[3]
    out = Tensor(x.data.mean(axis=(2, 3), keepdims=True))

    def rule(g):
        return (np.broadcast_to(g / m, x.shape).astype(x.data.dtype),)

    return record_op(out, (x,), rule)


def global_pool_stats(x: Tensor) -> tuple[Tensor, Tensor]:
    """Per-channel spatial mean and population standard deviation, (n,c,1,1)."""
    n, c, h, w = x.shape
    m = h * w
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    centered = x.data - mu
    var = np.square(centered).mean(axis=(2, 3), keepdims=True)
    std = np.sqrt(var + np.asarray(_STD_EPS, dtype=x.data.dtype))
    cost.add_macs(x.size)
    mean_t = Tensor(mu)
    std_t = Tensor(std)

    def rule_mean(g):
        return (np.broadcast_to(g / m, x.shape).astype(x.data.dtype),)

    def rule_std(g):
        return (g * centered / (m * std),)

    record_op(mean_t, (x,), rule_mean)
    record_op(std_t, (x,), rule_std)
    return mean_t, std_t


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each (sample, channel-group) to zero mean / unit variance
    (population convention), then apply the per-channel affine."""
    n, c, h, w = x.shape
    if c % groups != 0:
        raise ShapeError(f"channels {c} not divisible by norm groups {groups}")
    if gamma.shape != (1, c, 1, 1) or beta.shape != (1, c, 1, 1):
        raise ShapeError(
            f"group_norm affine must be (1,{c},1,1); got {gamma.shape} and {beta.shape}"
        )
    m = (c // groups) * h * w
    xg = x.data.reshape(n, groups, m)
    mu = xg.mean(axis=2, keepdims=True)
    var = np.square(xg - mu).mean(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = ((xg - mu) * inv).reshape(x.shape)
    out = Tensor(gamma.data * xhat + beta.data)
    cost.add_macs(x.size)

    def rule(g):
        hg = (g * gamma.data).reshape(n, groups, m)
        xh = xhat.reshape(n, groups, m)
        gx = inv * (hg - hg.mean(axis=2, keepdims=True) - xh * (hg * xh).mean(axis=2, keepdims=True))
        ggamma = (g * xhat).sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
        gbeta = g.sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
        return gx.reshape(x.shape), ggamma, gbeta

    return record_op(out, (x, gamma, beta), rule)


# ---------------------------------------------------------------------------
# bicubic resampling (data pipeline only, no gradients)

def _cubic_kernel(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    at = np.abs(t)
    at2, at3 = at * at, at * at * at
    near = (a + 2) * at3 - (a + 3) * at2 + 1
    far = a * at3 - 5 * a * at2 + 8 * a * at - 4 * a
    return np.where(at <= 1, near, np.where(at < 2, far, 0.0))


def _resample_axis(data: np.ndarray, axis: int, out_len: int, centers: np.ndarray,
                   support: float, scale: float) -> np.ndarray:
    """1-D bicubic resample along ``axis`` with edge replication.

    ``centers`` are source-space sample positions per output index;
    ``support``/``scale`` widen the kernel for anti-aliased downsampling.
    """
    in_len = data.shape[axis]
    left = np.floor(centers - support).astype(int) + 1
    taps = int(np.ceil(2 * support))
    offsets = np.arange(taps)
    idx = left[:, None] + offsets[None, :]
    weights = _cubic_kernel((centers[:, None] - idx) / scale)
    weights /= weights.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, in_len - 1)

    moved = np.moveaxis(data, axis, -1)
    gathered = moved[..., idx]  # (..., out_len, taps)
    res = np.einsum("...ot,ot->...o", gathered, weights)
    return np.moveaxis(res, -1, axis)


def _bicubic_nd(data: np.ndarray, factor: int, down: bool) -> np.ndarray:
    work = data.astype(np.float64, copy=False)
    for axis in (2, 3):
        in_len = work.shape[axis]
        if down:
            out_len = in_len // factor
            centers = (np.arange(out_len) + 0.5) * factor - 0.5
            work = _resample_axis(work, axis, out_len, centers, 2.0 * factor, float(factor))
        else:
            out_len = in_len * factor
            centers = (np.arange(out_len) + 0.5) / factor - 0.5
            work = _resample_axis(work, axis, out_len, centers, 2.0, 1.0)
    return work


def bicubic_resize(img: Tensor, factor: int) -> Tensor:
    """Anti-aliased bicubic downsampling by an integer factor (a = -0.5)."""
    if factor < 1:
        raise ShapeError(f"downsample factor must be >= 1; got {factor}")
    if factor == 1:
        return Tensor(img.data.copy(), dtype=img.data.dtype)
    n, c, h, w = img.shape
    if h % factor or w % factor:
        raise ShapeError(f"image dims {h}x{w} not divisible by factor {factor}")
    out = _bicubic_nd(img.data, factor, down=True)
    return Tensor(out.astype(img.data.dtype))


def bicubic_upsample(img: Tensor, factor: int) -> Tensor:
    """Bicubic upsampling by an integer factor (a = -0.5); the reference
    interpolation baseline super-resolution is measured against."""
    if factor < 1:
        raise ShapeError(f"upsample factor must be >= 1; got {factor}")
    if factor == 1:
        return Tensor(img.data.copy(), dtype=img.data.dtype)
    out = _bicubic_nd(img.data, factor, down=False)
    return Tensor(out.astype(img.data.dtype))
