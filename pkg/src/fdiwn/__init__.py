"""Lightweight single-image super-resolution on a self-contained numpy
tensor engine with tape-based reverse-mode differentiation."""

from .tensor import (
    Tensor, Tape, ShapeError, precision, backward,
    tensor, scalar, zeros, ones, zeros_like, ones_like, randn,
    add, mul, sub, neg, scalar_weight, tsum, tmean, tabs,
)
from .ops import (
    ConvParams, conv2d, relu, sigmoid, reshape,
    channel_split, concat_channels, channel_shuffle, pixel_shuffle,
    global_pool_stats, group_norm, bicubic_resize, bicubic_upsample,
)
from .nn import Module, ModuleList, Conv2d, Scale
from .attention import ShuffleAttention
from .blocks import (
    WideResidualUnit, BasicResBlock, CombinationGate, DistillGate,
    SelfCalibrationFusion, InteractionBlock,
)
from .network import (
    FdiwnConfig, ShuffleFusionGroup, FDIWN, config_preset, ablation_config,
    count_params, count_multi_adds, conv_macs,
    serialize_params, deserialize_params, save_weights, load_weights,
    build_model, WeightFormatError, CONFIG_PRESETS, ABLATION_VARIANTS,
)
from .metrics import rgb_to_y, psnr, ssim, EvalReport, evaluate_pairs
from .data import (
    ImagePair, PairedDataset, sample_batch, augment_pair,
    synthesize_image, make_synthetic_dataset, write_synthetic_pngs,
)
from .training import (
    TrainConfig, TrainState, TRAIN_PRESETS, train_preset,
    l1_loss, adam_step, train_loop, load_checkpoint,
)
from .pngio import ImageIOError, load_png, save_png

__version__ = "0.1.0"
