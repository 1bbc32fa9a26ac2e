"""Full super-resolution network: shuffle-fusion groups chained behind a
shallow feature extractor, with dual-path sub-pixel upsampling.

Also hosts the architecture configuration, parameter/multi-adds inspection,
and the binary weight-file format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import cost
from .blocks import InteractionBlock, WideResidualUnit
from .nn import Conv2d, Module, ModuleList, Scale
from .ops import channel_shuffle, concat_channels, pixel_shuffle
from .tensor import ShapeError, Tensor, zeros_like

__all__ = [
    "FdiwnConfig",
    "ShuffleFusionGroup",
    "FDIWN",
    "CONFIG_PRESETS",
    "ABLATION_VARIANTS",
    "config_preset",
    "ablation_config",
    "count_params",
    "count_multi_adds",
    "conv_macs",
    "serialize_params",
    "deserialize_params",
    "save_weights",
    "load_weights",
    "build_model",
    "WeightFormatError",
]


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class FdiwnConfig:
    """Architecture hyperparameters and ablation switches."""

    scale: int = 4
    channels: int = 24
    wide_channels: int = 48
    n_groups: int = 6
    n_blocks: int = 3
    sa_groups: int = 0        # 0 = channels // 2
    cgs_groups: int = 4
    wide_units: bool = True
    distillation: bool = True
    scf: bool = True
    block_interaction: bool = True
    long_skip: bool = True
    butterfly: bool = True

    def resolved_sa_groups(self) -> int:
        return self.sa_groups if self.sa_groups else self.channels // 2

    def validate(self):
        c = self.channels
        if self.scale not in (2, 3, 4):
            raise ShapeError(f"scale must be 2, 3 or 4; got {self.scale}")
        if c % 2 != 0:
            raise ShapeError(f"channels must be even; got {c}")
        if self.n_groups < 1 or self.n_blocks < 1:
            raise ShapeError("need at least one group and one block")
        g = self.resolved_sa_groups()
        if c % g != 0 or (c // g) % 2 != 0:
            raise ShapeError(f"attention groups {g} incompatible with {c} channels")
        if (2 * c) % self.cgs_groups != 0 or c % self.cgs_groups != 0:
            raise ShapeError(f"fuse groups {self.cgs_groups} incompatible with {c} channels")


CONFIG_PRESETS = {
    "fdiwn": FdiwnConfig(),
    "fdiwn-m": FdiwnConfig(n_groups=4),
    "tiny": FdiwnConfig(scale=2, channels=16, wide_channels=32, n_groups=2, n_blocks=2),
    "smoke": FdiwnConfig(scale=2, channels=8, wide_channels=16, n_groups=1, n_blocks=1),
}


def config_preset(name: str, scale: int | None = None) -> FdiwnConfig:
    if name not in CONFIG_PRESETS:
        raise KeyError(f"unknown config preset {name!r}; have {sorted(CONFIG_PRESETS)}")
    cfg = CONFIG_PRESETS[name]
    if scale is not None:
        cfg = replace(cfg, scale=scale)
    cfg.validate()
    return cfg


ABLATION_VARIANTS = {
    "full": {},
    "baseline1": {"wide_units": False, "butterfly": False, "distillation": False, "scf": False},
    "baseline2": {"wide_units": True, "butterfly": False, "distillation": False, "scf": False},
    "no-scf": {"scf": False},
    "no-dc": {"distillation": False},
    "plain-resblock": {"wide_units": False},
    "no-interaction": {"block_interaction": False},
    "no-wirw-skip": {"long_skip": False},
}


def ablation_config(variant: str, base: FdiwnConfig | None = None) -> FdiwnConfig:
    if variant not in ABLATION_VARIANTS:
        raise KeyError(f"unknown ablation variant {variant!r}; have {sorted(ABLATION_VARIANTS)}")
    cfg = replace(base or FdiwnConfig(), **ABLATION_VARIANTS[variant])
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# groups and network

class ShuffleFusionGroup(Module):
    """Chain of interaction blocks fused pairwise by grouped 1x1 conv +
    channel shuffle, with a weighted long skip around the whole group."""

    def __init__(self, cfg: FdiwnConfig, rng: np.random.Generator):
        super().__init__()
        c = cfg.channels
        sa = cfg.resolved_sa_groups()
        self.cfg = cfg
        self.blocks = ModuleList([
            InteractionBlock(c, cfg.wide_channels, sa, rng,
                             butterfly=cfg.butterfly, wide_units=cfg.wide_units,
                             distillation=cfg.distillation, scf=cfg.scf)
            for _ in range(cfg.n_blocks)
        ])
        if cfg.block_interaction:
            self.fuse_convs = ModuleList([
                Conv2d(2 * c, c, 1, rng, groups=cfg.cgs_groups)
                for _ in range(cfg.n_blocks - 1)
            ])
            self.out_weight = Scale(1.0)
            self.skip_weight = Scale(1.0)
            if cfg.long_skip:
                self.skip_unit = WideResidualUnit(c, c, cfg.wide_channels, sa, rng)
            else:
                self.skip_unit = None

    def _fuse(self, a: Tensor, b: Tensor, conv: Conv2d) -> Tensor:
        mixed = conv(concat_channels([a, b]))
        return channel_shuffle(mixed, self.cfg.cgs_groups)

    def forward(self, x: Tensor) -> Tensor:
        outs = []
        cur = x
        for block in self.blocks:
            cur = block(cur)
            outs.append(cur)
        if not self.cfg.block_interaction:
            return outs[-1]
        agg = outs[0]
        for conv, nxt in zip(self.fuse_convs, outs[1:]):
            agg = self._fuse(agg, nxt, conv)
        skip = self.skip_unit(x) if self.skip_unit is not None else x
        return self.out_weight(agg + outs[-1]) + self.skip_weight(skip)


class FDIWN(Module):
    """Feature distillation interaction weighted network.

    A 3x3 conv extracts shallow features; the group chain applies
    inter-group residual additions (first and last group excluded); the
    reconstruction upsamples the sum of raw group outputs and adds a
    directly-upsampled copy of the input image.  Output is not clamped.
    """

    def __init__(self, cfg: FdiwnConfig, rng: np.random.Generator | None = None):
        super().__init__()
        cfg.validate()
        if rng is None:
            rng = np.random.default_rng(0)
        c, r = cfg.channels, cfg.scale
        self.cfg = cfg
        self.head = Conv2d(3, c, 3, rng)
        self.groups = ModuleList([ShuffleFusionGroup(cfg, rng) for _ in range(cfg.n_groups)])
        self.up_deep = Conv2d(c, 3 * r * r, 3, rng)
        self.up_image = Conv2d(3, 3 * r * r, 3, rng)

    def forward(self, lr: Tensor) -> Tensor:
        if lr.shape[1] != 3:
            raise ShapeError(f"expected a 3-channel image; got {lr.shape[1]} channels")
        r = self.cfg.scale
        n_groups = len(self.groups)
        cur = self.head(lr)
        deep = None
        for i, group in enumerate(self.groups):
            out = group(cur)
            deep = out if deep is None else deep + out
            if i == 0 or i == n_groups - 1:
                cur = out
            else:
                cur = out + cur
        sr_deep = pixel_shuffle(self.up_deep(deep), r)
        sr_image = pixel_shuffle(self.up_image(lr), r)
        return sr_deep + sr_image

    def state_dict(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())


def build_model(cfg: FdiwnConfig, seed: int = 0) -> FDIWN:
    return FDIWN(cfg, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# inspection

def count_params(model: FDIWN | Module) -> int:
    """Total learnable scalar count, adaptive weights included."""
    return model.param_count()


def conv_macs(kernel: int, in_channels: int, out_channels: int,
              out_h: int, out_w: int, groups: int = 1) -> int:
    """Multiply-accumulates of a single convolution at a given output size."""
    return kernel * kernel * (in_channels // groups) * out_channels * out_h * out_w


def count_multi_adds(cfg: FdiwnConfig, output_resolution: tuple[int, int] = (1280, 720)) -> int:
    """Analytic MAC count of one forward pass at the given output resolution.

    Counts convolution kernel MACs plus elementwise products.  Every op's
    cost is affine in the pixel count (pooled heads are the constant part),
    so two instrumented forwards at small sizes determine the model exactly
    and the result is extrapolated to the requested resolution.
    """
    out_w, out_h = output_resolution
    r = cfg.scale
    target_px = (out_w * out_h) / (r * r)
    model = build_model(cfg, seed=0)

    def macs_at(h: int, w: int) -> int:
        x = Tensor(np.zeros((1, 3, h, w), dtype=np.float32))
        with cost.mac_counter() as counter:
            model(x)
        return counter.macs

    m1 = macs_at(8, 8)
    m2 = macs_at(8, 16)
    per_px, rem = divmod(m2 - m1, 64)
    if rem:
        raise AssertionError("per-pixel cost is not affine in pixel count")
    constant = m1 - per_px * 64
    return int(round(per_px * target_px + constant))


# ---------------------------------------------------------------------------
# weight files

MAGIC = b"FDWN"
VERSION_WEIGHTS = 1
VERSION_TRAINING = 2


class WeightFormatError(ValueError):
    """Raised for malformed, truncated, or unknown-version weight streams."""


_ABLATION_BITS = ("wide_units", "distillation", "scf", "block_interaction",
                  "long_skip", "butterfly")


def _ablation_mask(cfg: FdiwnConfig) -> int:
    mask = 0
    for i, name in enumerate(_ABLATION_BITS):
        if getattr(cfg, name):
            mask |= 1 << i
    return mask


def _ablation_from_mask(mask: int) -> dict[str, bool]:
    return {name: bool(mask & (1 << i)) for i, name in enumerate(_ABLATION_BITS)}


def _pack_config(cfg: FdiwnConfig) -> bytes:
    return struct.pack(
        "<8I", cfg.scale, cfg.channels, cfg.wide_channels, cfg.n_groups,
        cfg.n_blocks, cfg.resolved_sa_groups(), cfg.cgs_groups, _ablation_mask(cfg),
    )


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightFormatError(
                f"truncated stream: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> bool:
        return self.pos == len(self.data)


def _unpack_config(reader: _Reader) -> FdiwnConfig:
    scale, c, wc, ng, nb, sa, cgs, mask = reader.unpack("<8I")
    cfg = FdiwnConfig(scale=scale, channels=c, wide_channels=wc, n_groups=ng,
                      n_blocks=nb, sa_groups=sa, cgs_groups=cgs,
                      **_ablation_from_mask(mask))
    cfg.validate()
    return cfg


def serialize_params(model: FDIWN, train_state=None) -> bytes:
    """Encode config and parameters (little-endian, raw float32).

    With ``train_state`` given, the optimizer moments, step counter, learning
    rate and RNG state are appended and the version field is bumped.
    """
    params = model.state_dict()
    version = VERSION_WEIGHTS if train_state is None else VERSION_TRAINING
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", version)
    out += _pack_config(model.cfg)
    out += struct.pack("<I", len(params))
    for name, t in params.items():
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", 4)
        out += struct.pack("<4I", *t.shape)
        out += np.ascontiguousarray(t.data, dtype="<f4").tobytes()
    if train_state is not None:
        out += train_state.encode(params)
    return bytes(out)


def deserialize_params(data: bytes) -> tuple[FdiwnConfig, dict[str, np.ndarray], "_Reader | None"]:
    """Decode a weight stream; returns (config, name->array, trailing reader).

    The trailing reader is positioned at the training-state block for
    version-2 streams and None for plain weight files.
    """
    reader = _Reader(data)
    if reader.take(4) != MAGIC:
        raise WeightFormatError("bad magic: not a weight file")
    (version,) = reader.unpack("<I")
    if version not in (VERSION_WEIGHTS, VERSION_TRAINING):
        raise WeightFormatError(f"unknown weight-format version {version}")
    cfg = _unpack_config(reader)
    (count,) = reader.unpack("<I")
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        if rank != 4:
            raise WeightFormatError(f"tensor {name!r} has rank {rank}; expected 4")
        dims = reader.unpack("<4I")
        n_vals = int(np.prod(dims))
        raw = reader.take(4 * n_vals)
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if version == VERSION_WEIGHTS:
        if not reader.done():
            raise WeightFormatError("trailing bytes after tensor data")
        return cfg, params, None
    return cfg, params, reader


def _apply_params(model: FDIWN, params: dict[str, np.ndarray]):
    own = model.state_dict()
    for name in params:
        if name not in own:
            raise WeightFormatError(f"file tensor {name!r} not present in model")
    for name, t in own.items():
        if name not in params:
            raise WeightFormatError(f"model tensor {name!r} missing from file")
        arr = params[name]
        if tuple(arr.shape) != t.shape:
            raise WeightFormatError(
                f"shape mismatch for {name!r}: file {tuple(arr.shape)} vs model {t.shape}"
            )
        t.data[...] = arr.astype(t.data.dtype)


def save_weights(model: FDIWN, path, train_state=None):
    with open(path, "wb") as fh:
        fh.write(serialize_params(model, train_state))


def load_weights(path) -> tuple[FDIWN, "_Reader | None"]:
    """Rebuild a model from a weight file; returns (model, trailing reader)."""
    with open(path, "rb") as fh:
        data = fh.read()
    cfg, params, trailer = deserialize_params(data)
    model = build_model(cfg, seed=0)
    _apply_params(model, params)
    return model, trailer
