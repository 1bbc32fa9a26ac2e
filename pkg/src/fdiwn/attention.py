"""Shuffle attention: grouped dual-branch gating with a final channel shuffle.

Channels are folded into ``groups`` independent groups.  Half of each group
passes a channel gate driven by global average pooling; the other half passes
a spatial gate driven by group normalization.  The halves are re-joined and
the full channel axis is shuffled so information crosses group boundaries.
The unit preserves shape and every output magnitude is bounded by its
pre-gate magnitude (gates live in (0, 1)).
"""

from __future__ import annotations

import numpy as np

from .nn import Module
from .ops import (
    channel_shuffle,
    channel_split,
    concat_channels,
    global_pool_stats,
    group_norm,
    reshape,
    sigmoid,
)
from .tensor import ShapeError, Tensor, default_dtype, mul

__all__ = ["ShuffleAttention"]


def _affine_param(value: float, channels: int) -> Tensor:
    return Tensor(np.full((1, channels, 1, 1), value, dtype=default_dtype()),
                  requires_grad=True)


class ShuffleAttention(Module):
    def __init__(self, channels: int, groups: int):
        super().__init__()
        if channels % groups != 0:
            raise ShapeError(f"channels {channels} not divisible by groups {groups}")
        per_group = channels // groups
        if per_group % 2 != 0:
            raise ShapeError(
                f"each of the {groups} groups needs an even channel count; got {per_group}"
            )
        self.channels = channels
        self.groups = groups
        branch = per_group // 2
        # gate affines are shared across groups, sized per sub-branch
        self.channel_weight = _affine_param(0.0, branch)
        self.channel_bias = _affine_param(1.0, branch)
        self.spatial_weight = _affine_param(0.0, branch)
        self.spatial_bias = _affine_param(1.0, branch)
        self.norm_gamma = _affine_param(1.0, branch)
        self.norm_beta = _affine_param(0.0, branch)

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        if c != self.channels:
            raise ShapeError(f"attention built for {self.channels} channels; got {c}")
        g = self.groups
        folded = reshape(x, (n * g, c // g, h, w))
        half_c, half_s = channel_split(folded, 0.5)

        pooled, _ = global_pool_stats(half_c)
        gate_c = sigmoid(mul(pooled, self.channel_weight) + self.channel_bias)
        out_c = mul(half_c, gate_c)

        normed = group_norm(half_s, 1, self.norm_gamma, self.norm_beta)
        gate_s = sigmoid(mul(normed, self.spatial_weight) + self.spatial_bias)
        out_s = mul(half_s, gate_s)

        merged = reshape(concat_channels([out_c, out_s]), (n, c, h, w))
        return channel_shuffle(merged, g)
