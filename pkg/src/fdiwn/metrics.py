"""Luma-channel image quality metrics and evaluation reports.

PSNR and SSIM are computed on the Y channel of the YCbCr space, after
cropping a border of ``scale`` pixels, in float64 regardless of tensor
storage precision.  SSIM follows the canonical single-scale definition:
11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor

__all__ = ["rgb_to_y", "psnr", "ssim", "EvalReport", "evaluate_pairs"]


def rgb_to_y(img: Tensor) -> Tensor:
    """BT.601 luma with studio swing: Y = (65.481 R + 128.553 G + 24.966 B + 16)/255."""
    if img.shape[1] != 3:
        raise ShapeError(f"expected 3 channels; got {img.shape[1]}")
    d = img.data.astype(np.float64)
    y = (65.481 * d[:, 0:1] + 128.553 * d[:, 1:2] + 24.966 * d[:, 2:3] + 16.0) / 255.0
    return Tensor(y.astype(img.data.dtype))


def _crop(a: np.ndarray, border: int) -> np.ndarray:
    if border == 0:
        return a
    if 2 * border >= a.shape[2] or 2 * border >= a.shape[3]:
        raise ShapeError(f"border {border} leaves no pixels on {a.shape}")
    return a[:, :, border:-border, border:-border]


def psnr(a: Tensor, b: Tensor, border: int = 0) -> float:
    """Peak signal-to-noise ratio in dB, MAX = 1; +inf for identical inputs."""
    if a.shape != b.shape:
        raise ShapeError(f"psnr inputs must match: {a.shape} vs {b.shape}")
    da = _crop(a.data, border).astype(np.float64)
    db = _crop(b.data, border).astype(np.float64)
    mse = np.mean(np.square(da - db))
    if mse == 0.0:
        return math.inf
    return float(10.0 * np.log10(1.0 / mse))


_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _gaussian_window() -> np.ndarray:
    x = np.arange(_SSIM_WINDOW, dtype=np.float64) - (_SSIM_WINDOW - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * _SSIM_SIGMA * _SSIM_SIGMA))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable Gaussian filtering of a 2-D image, valid region only."""
    out = sliding_window_view(img, _SSIM_WINDOW, axis=0) @ g
    out = sliding_window_view(out, _SSIM_WINDOW, axis=1) @ g
    return out


def ssim(a: Tensor, b: Tensor, border: int = 0) -> float:
    """Mean local structural similarity over the valid filter region."""
    if a.shape != b.shape:
        raise ShapeError(f"ssim inputs must match: {a.shape} vs {b.shape}")
    if a.shape[1] != 1:
        raise ShapeError(f"ssim expects a single channel; got {a.shape[1]}")
    da = _crop(a.data, border).astype(np.float64)
    db = _crop(b.data, border).astype(np.float64)
    if da.shape[2] < _SSIM_WINDOW or da.shape[3] < _SSIM_WINDOW:
        raise ShapeError(
            f"image {da.shape[2]}x{da.shape[3]} smaller than the {_SSIM_WINDOW}px window"
        )
    g = _gaussian_window()
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    values = []
    for n in range(da.shape[0]):
        x, y = da[n, 0], db[n, 0]
        mu_x = _filter_valid(x, g)
        mu_y = _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mu_x * mu_x
        syy = _filter_valid(y * y, g) - mu_y * mu_y
        sxy = _filter_valid(x * y, g) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
        values.append(np.mean(num / den))
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# reports

@dataclass
class EvalReport:
    scale: int
    border: int
    entries: list[tuple[str, float, float]] = field(default_factory=list)

    def add(self, name: str, psnr_db: float, ssim_value: float):
        self.entries.append((name, psnr_db, ssim_value))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([e[1] for e in self.entries])) if self.entries else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([e[2] for e in self.entries])) if self.entries else math.nan

    def to_text(self) -> str:
        lines = [f"scale x{self.scale}, border crop {self.border}px, Y channel"]
        for name, p, s in self.entries:
            lines.append(f"{name}  PSNR {p:.4f} dB  SSIM {s:.6f}")
        lines.append(f"mean  PSNR {self.mean_psnr:.4f} dB  SSIM {self.mean_ssim:.6f}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["filename,psnr_db,ssim"]
        for name, p, s in self.entries:
            lines.append(f"{name},{p:.6f},{s:.8f}")
        lines.append(f"mean,{self.mean_psnr:.6f},{self.mean_ssim:.8f}")
        return "\n".join(lines)


def evaluate_pairs(sr_fn, pairs, scale: int, border: int | None = None) -> EvalReport:
    """Run ``sr_fn`` (LR tensor -> SR tensor) over (name, lr, hr) tensor
    triples and collect Y-channel metrics with the standard border crop."""
    if border is None:
        border = scale
    report = EvalReport(scale=scale, border=border)
    for name, lr, hr in pairs:
        sr = sr_fn(lr)
        if sr.shape != hr.shape:
            raise ShapeError(f"{name}: SR shape {sr.shape} != HR shape {hr.shape}")
        sr_clamped = Tensor(np.clip(sr.data, 0.0, 1.0))
        y_sr = rgb_to_y(sr_clamped)
        y_hr = rgb_to_y(hr)
        report.add(name, psnr(y_sr, y_hr, border), ssim(y_sr, y_hr, border))
    return report
