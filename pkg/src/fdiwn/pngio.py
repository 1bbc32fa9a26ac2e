"""PNG image I/O: 8- and 16-bit RGB/RGBA/grayscale in, 8-bit RGB out.

Loads map to float32 tensors in [0, 1] (alpha dropped, grayscale replicated
to three channels); saves clamp to [0, 1] and quantize with
round-half-away-from-zero, so an 8-bit image round-trips bit-exactly.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .tensor import ShapeError, Tensor

__all__ = ["ImageIOError", "load_png", "save_png"]


class ImageIOError(OSError):
    pass


def load_png(path) -> Tensor:
    path = Path(path)
    if not path.exists():
        raise ImageIOError(f"no such image file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageIOError(f"unreadable image file: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageIOError(f"{path}: unsupported sample type {raw.dtype}")
    data = raw.astype(np.float32) / scale
    if data.ndim == 2:  # grayscale: replicate
        data = np.stack([data] * 3, axis=-1)
    elif data.ndim == 3 and data.shape[2] == 4:  # BGRA: drop alpha
        data = data[:, :, :3]
    elif data.ndim != 3 or data.shape[2] != 3:
        raise ImageIOError(f"{path}: unsupported color layout {raw.shape}")
    rgb = data[:, :, ::-1]  # OpenCV loads BGR
    chw = np.ascontiguousarray(rgb.transpose(2, 0, 1))
    return Tensor(chw[None])


def save_png(img: Tensor, path):
    if img.shape[0] != 1 or img.shape[1] != 3:
        raise ShapeError(f"save_png expects a (1,3,h,w) tensor; got {img.shape}")
    data = np.clip(img.data[0], 0.0, 1.0).astype(np.float64)
    quantized = np.floor(data * 255.0 + 0.5).astype(np.uint8)  # half away from zero
    bgr = np.ascontiguousarray(quantized.transpose(1, 2, 0)[:, :, ::-1])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), bgr):
        raise ImageIOError(f"failed to write image: {path}")
