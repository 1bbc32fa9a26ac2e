"""Building blocks: wide residual weighting units, combination-coefficient
gates, the two-stage butterfly interaction block (WDIB), and the
self-calibration fusion (SCF) that joins its two branches.

Block variants used by the ablation harness are driven by constructor
switches: the butterfly wiring, the distillation gates, and the fusion unit
can each be replaced by their plain counterparts, and the wide units can be
swapped for basic residual blocks.
"""

from __future__ import annotations

import numpy as np

from .attention import ShuffleAttention
from .nn import Conv2d, Module, ModuleList, Scale
from .ops import channel_split, concat_channels, global_pool_stats, relu, sigmoid
from .tensor import ShapeError, Tensor, mul

__all__ = [
    "WideResidualUnit",
    "BasicResBlock",
    "CombinationGate",
    "DistillGate",
    "SelfCalibrationFusion",
    "InteractionBlock",
]


class WideResidualUnit(Module):
    """Wide-activation residual unit with learnable branch weights.

    Expands channels before the activation (1x1, in -> wide), reduces back
    (1x1, wide -> out), applies shuffle attention, and adds a weighted
    shortcut.  ``shortcut="identity"`` is the identity-residual flavour
    (WIRW); ``shortcut="conv3"`` carries a 3x3 conv so the unit can change
    channel count (WCRW); ``shortcut="conv1"`` is the light variant used
    inside the fusion unit where the input is an already-mixed concat.
    """

    def __init__(self, in_channels: int, out_channels: int, wide_channels: int,
                 sa_groups: int, rng: np.random.Generator, shortcut: str = "identity"):
        super().__init__()
        if shortcut == "identity" and in_channels != out_channels:
            raise ShapeError(
                f"identity shortcut needs matching channels; got {in_channels} -> {out_channels}"
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.expand = Conv2d(in_channels, wide_channels, 1, rng)
        self.reduce = Conv2d(wide_channels, out_channels, 1, rng)
        self.attention = ShuffleAttention(out_channels, sa_groups)
        if shortcut == "identity":
            self.shortcut = None
        elif shortcut == "conv3":
            self.shortcut = Conv2d(in_channels, out_channels, 3, rng)
        elif shortcut == "conv1":
            self.shortcut = Conv2d(in_channels, out_channels, 1, rng)
        else:
            raise ValueError(f"unknown shortcut kind: {shortcut!r}")
        self.branch_weight = Scale(1.0)
        self.residual_weight = Scale(1.0)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.in_channels:
            raise ShapeError(
                f"wide unit expects {self.in_channels} channels; got {x.shape[1]}"
            )
        y = self.attention(self.reduce(relu(self.expand(x))))
        skip = x if self.shortcut is None else self.shortcut(x)
        return self.branch_weight(y) + self.residual_weight(skip)


class BasicResBlock(Module):
    """Plain two-conv residual block (ablation stand-in for the wide units)."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng)
        self.shortcut = None if in_channels == out_channels else Conv2d(in_channels, out_channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        y = self.conv2(relu(self.conv1(x)))
        skip = x if self.shortcut is None else self.shortcut(x)
        return y + skip


class CombinationGate(Module):
    """Per-channel gate in (0,1) learned from pooled feature statistics.

    Mean and standard deviation are pooled per channel, concatenated, and
    passed through a two-conv head with a sigmoid; ``forward`` applies the
    gate to its own input.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        hidden = max(channels // 2, 1)
        self.squeeze = Conv2d(2 * channels, hidden, 1, rng)
        self.excite = Conv2d(hidden, channels, 1, rng)

    def coefficients(self, x: Tensor) -> Tensor:
        mean, std = global_pool_stats(x)
        stats = concat_channels([mean, std])
        return sigmoid(self.excite(relu(self.squeeze(stats))))

    def forward(self, x: Tensor) -> Tensor:
        return mul(x, self.coefficients(x))


class DistillGate(Module):
    """Distillation connection gate: 3x3 conv expanding half channels back to
    full width, followed by a sigmoid."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return sigmoid(self.conv(x))


class SelfCalibrationFusion(Module):
    """Fuses the two branch outputs by adaptive weighting, concatenation,
    sigmoid self-gating of the second branch, and a wide-residual reduction."""

    def __init__(self, channels: int, wide_channels: int, sa_groups: int,
                 rng: np.random.Generator):
        super().__init__()
        self.channels = channels
        self.weight_a = Scale(1.0)
        self.weight_b = Scale(1.0)
        self.gate = Conv2d(2 * channels, channels, 1, rng)
        self.fuse = WideResidualUnit(2 * channels, channels, wide_channels,
                                     sa_groups, rng, shortcut="conv1")

    def forward(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeError(f"fusion inputs must match: {a.shape} vs {b.shape}")
        wa = self.weight_a(a)
        wb = self.weight_b(b)
        cat = concat_channels([wa, wb])
        return mul(wb, sigmoid(self.gate(cat))) + self.fuse(cat)


class PlainFusion(Module):
    """Concat + 1x1 reduction; the baseline the fusion unit is measured against."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.reduce = Conv2d(2 * channels, channels, 1, rng)

    def forward(self, a: Tensor, b: Tensor) -> Tensor:
        return self.reduce(concat_channels([a, b]))


class _ConvStack(Module):
    """Three cascaded 3x3 conv + ReLU layers (Baseline1 block body)."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.layers = ModuleList([Conv2d(channels, channels, 3, rng) for _ in range(3)])

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = relu(layer(x))
        return x


class _UnitCascade(Module):
    """Identity-residual unit followed by a conv-residual unit (Baseline2 body)."""

    def __init__(self, channels: int, wide_channels: int, sa_groups: int,
                 rng: np.random.Generator):
        super().__init__()
        self.first = WideResidualUnit(channels, channels, wide_channels, sa_groups, rng)
        self.second = WideResidualUnit(channels, channels, wide_channels, sa_groups, rng,
                                       shortcut="conv3")

    def forward(self, x: Tensor) -> Tensor:
        return self.second(self.first(x))


class InteractionBlock(Module):
    """Two-stage butterfly block with distillation connections and fusion.

    Stage 1 refines the input, splits it into a retained half and a distilled
    half, expands the retained half back to full width, and mixes the upper
    and lower branches through self-gating coefficient vectors.  Stage 2
    repeats the pattern on the lower branch.  The two distilled halves
    re-enter through gated products before the final fusion, and the whole
    block is residual around its input.

    Switches: ``butterfly=False`` collapses the body to a plain cascade,
    ``wide_units=False`` replaces every wide unit with a basic residual
    block, ``distillation=False`` severs the gated distillation products,
    and ``scf=False`` swaps the fusion unit for concat + 1x1 conv.
    """

    def __init__(self, channels: int, wide_channels: int, sa_groups: int,
                 rng: np.random.Generator, *, butterfly: bool = True,
                 wide_units: bool = True, distillation: bool = True, scf: bool = True):
        super().__init__()
        if channels % 2 != 0:
            raise ShapeError(f"interaction block needs an even channel count; got {channels}")
        self.channels = channels
        self.butterfly = butterfly
        self.distillation = distillation
        half = channels // 2

        def wide(cin, cout, shortcut="identity"):
            if wide_units:
                return WideResidualUnit(cin, cout, wide_channels, sa_groups, rng,
                                        shortcut=shortcut)
            return BasicResBlock(cin, cout, rng)

        if not butterfly:
            if wide_units:
                self.body = _UnitCascade(channels, wide_channels, sa_groups, rng)
            else:
                self.body = _ConvStack(channels, rng)
            self._assert_ledger()
            return

        self.refine1 = wide(channels, channels)
        self.expand1 = wide(half, channels, shortcut="conv3")
        self.refine2 = wide(channels, channels)
        self.expand2 = wide(half, channels, shortcut="conv3")
        self.gate_upper1 = CombinationGate(channels, rng)
        self.gate_lower1 = CombinationGate(channels, rng)
        self.gate_upper2 = CombinationGate(channels, rng)
        self.gate_lower2 = CombinationGate(channels, rng)
        if distillation:
            self.distill_gate1 = DistillGate(half, channels, rng)
            self.distill_gate2 = DistillGate(half, channels, rng)
        self.out_upper = wide(channels, channels)
        self.out_lower = wide(channels, channels)
        if scf:
            self.fusion = SelfCalibrationFusion(channels, wide_channels, sa_groups, rng)
        else:
            self.fusion = PlainFusion(channels, rng)
        self._assert_ledger()

    # -- channel accounting --------------------------------------------------

    def channel_ledger(self) -> dict[str, int]:
        c = self.channels
        return {
            "input": c, "refined": c, "remain": c // 2, "distill": c // 2,
            "expanded": c, "upper": c, "lower": c, "distill_gate": c,
            "branch_out": c, "concat": 2 * c, "fused": c, "output": c,
        }

    def _assert_ledger(self):
        led = self.channel_ledger()
        if not self.butterfly:
            return
        checks = [
            (self.refine1.in_channels, led["input"], "stage-1 refine input"),
            (self.refine1.out_channels, led["refined"], "stage-1 refine output"),
            (self.expand1.in_channels, led["remain"], "stage-1 expand input"),
            (self.expand1.out_channels, led["expanded"], "stage-1 expand output"),
            (self.refine2.in_channels, led["lower"], "stage-2 refine input"),
            (self.expand2.in_channels, led["remain"], "stage-2 expand input"),
            (self.expand2.out_channels, led["expanded"], "stage-2 expand output"),
            (self.out_upper.in_channels, led["upper"], "upper output unit input"),
            (self.out_upper.out_channels, led["branch_out"], "upper branch output"),
            (self.out_lower.out_channels, led["branch_out"], "lower branch output"),
        ]
        if self.distillation:
            checks += [
                (self.distill_gate1.conv.in_channels, led["distill"], "distill gate 1 input"),
                (self.distill_gate1.conv.out_channels, led["distill_gate"], "distill gate 1 output"),
                (self.distill_gate2.conv.out_channels, led["distill_gate"], "distill gate 2 output"),
            ]
        if isinstance(self.fusion, SelfCalibrationFusion):
            checks += [
                (self.fusion.gate.in_channels, led["concat"], "fusion gate input"),
                (self.fusion.fuse.in_channels, led["concat"], "fusion reduce input"),
                (self.fusion.fuse.out_channels, led["fused"], "fusion reduce output"),
            ]
        for got, want, stage in checks:
            if got != want:
                raise ShapeError(f"channel ledger violated at {stage}: {got} != {want}")

    # -- forward --------------------------------------------------------------

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.channels:
            raise ShapeError(
                f"interaction block expects {self.channels} channels; got {x.shape[1]}"
            )
        if not self.butterfly:
            return self.body(x) + x

        # stage 1
        remain1, distill1 = channel_split(self.refine1(x), 0.5)
        t1 = self.expand1(remain1)
        upper = self.gate_upper1(x) + t1
        lower = self.gate_lower1(t1) + x

        # stage 2
        remain2, distill2 = channel_split(self.refine2(lower), 0.5)
        t2 = self.expand2(remain2)
        upper2 = self.gate_upper2(t2) + upper
        lower2 = self.gate_lower2(upper) + t2

        # distillation connections
        if self.distillation:
            branch_a = self.out_upper(mul(upper2, self.distill_gate1(distill1)))
            branch_b = self.out_lower(mul(lower2, self.distill_gate2(distill2)))
        else:
            branch_a = self.out_upper(upper2)
            branch_b = self.out_lower(lower2)

        return self.fusion(branch_a, branch_b) + x
