"""Dataset handling: paired HR/LR images, patch sampling with augmentation,
and a deterministic synthetic-image generator for desk-scale experiments.

Images are float32 ``(3, h, w)`` arrays in [0, 1].  LR counterparts are
produced by anti-aliased bicubic downsampling and cached alongside the HR
data.  Augmentation is a horizontal flip (p = 0.5) plus a k*90-degree
rotation, applied identically to both members of a pair.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .ops import bicubic_resize
from .tensor import ShapeError, Tensor

__all__ = ["ImagePair", "PairedDataset", "sample_batch", "augment_pair",
           "synthesize_image", "make_synthetic_dataset", "write_synthetic_pngs"]


class ImagePair:
    """One HR image with its (possibly precomputed) LR counterpart."""

    def __init__(self, name: str, hr: np.ndarray, scale: int, lr: np.ndarray | None = None):
        if hr.ndim != 3 or hr.shape[0] != 3:
            raise ShapeError(f"{name}: HR image must be (3, h, w); got {hr.shape}")
        h, w = hr.shape[1:]
        hr = hr[:, :h - h % scale, :w - w % scale]
        self.name = name
        self.scale = scale
        self.hr = np.ascontiguousarray(hr, dtype=np.float32)
        if lr is None:
            lr = bicubic_resize(Tensor(self.hr[None]), scale).data[0]
        else:
            want = (3, self.hr.shape[1] // scale, self.hr.shape[2] // scale)
            if tuple(lr.shape) != want:
                raise ShapeError(f"{name}: LR shape {lr.shape} does not match HR/{scale} = {want}")
        self.lr = np.ascontiguousarray(np.clip(lr, 0.0, 1.0), dtype=np.float32)


class PairedDataset:
    def __init__(self, pairs: list[ImagePair], scale: int):
        if not pairs:
            raise ValueError("dataset is empty")
        self.pairs = pairs
        self.scale = scale

    def __len__(self):
        return len(self.pairs)

    @classmethod
    def from_dir(cls, hr_dir, scale: int, lr_dir=None) -> "PairedDataset":
        from .pngio import load_png
        hr_dir = Path(hr_dir)
        files = sorted(p for p in hr_dir.iterdir() if p.suffix.lower() == ".png")
        if not files:
            raise ValueError(f"no PNG images in {hr_dir}")
        pairs = []
        for f in files:
            hr = load_png(f).data[0]
            lr = None
            if lr_dir is not None:
                lr_path = Path(lr_dir) / f.name
                if not lr_path.exists():
                    raise FileNotFoundError(f"no LR counterpart for {f.name} in {lr_dir}")
                lr = load_png(lr_path).data[0]
            pairs.append(ImagePair(f.name, hr, scale, lr))
        return cls(pairs, scale)

    def as_tensor_pairs(self):
        """(name, lr, hr) tensor triples for evaluation."""
        for p in self.pairs:
            yield p.name, Tensor(p.lr[None]), Tensor(p.hr[None])


def augment_pair(lr: np.ndarray, hr: np.ndarray, rng: np.random.Generator):
    """Random flip + rotation, applied identically to the LR/HR pair."""
    if rng.random() < 0.5:
        lr = lr[:, :, ::-1]
        hr = hr[:, :, ::-1]
    k = int(rng.integers(0, 4))
    if k:
        lr = np.rot90(lr, k, axes=(1, 2))
        hr = np.rot90(hr, k, axes=(1, 2))
    return np.ascontiguousarray(lr), np.ascontiguousarray(hr)


def sample_batch(dataset: PairedDataset, batch_size: int, patch_size: int,
                 rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    """Aligned (LR, HR) patch batch; LR patches are ``patch_size`` square."""
    r = dataset.scale
    lrs, hrs = [], []
    for _ in range(batch_size):
        pair = dataset.pairs[int(rng.integers(0, len(dataset.pairs)))]
        lh, lw = pair.lr.shape[1:]
        if lh < patch_size or lw < patch_size:
            raise ShapeError(
                f"{pair.name}: LR {lh}x{lw} smaller than patch {patch_size}"
            )
        y = int(rng.integers(0, lh - patch_size + 1))
        x = int(rng.integers(0, lw - patch_size + 1))
        lr = pair.lr[:, y:y + patch_size, x:x + patch_size]
        hr = pair.hr[:, y * r:(y + patch_size) * r, x * r:(x + patch_size) * r]
        lr, hr = augment_pair(lr, hr, rng)
        lrs.append(lr)
        hrs.append(hr)
    return Tensor(np.stack(lrs)), Tensor(np.stack(hrs))


# ---------------------------------------------------------------------------
# synthetic images

def synthesize_image(rng: np.random.Generator, height: int = 128, width: int = 128) -> np.ndarray:
    """Deterministic synthetic photo stand-in: a smooth color gradient,
    sharp rectangles/ellipses, a few lines, and a faint sinusoidal texture."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= height
    xx /= width
    img = np.zeros((3, height, width))
    for ch in range(3):
        a, b, c = rng.uniform(-0.5, 0.5, size=3)
        img[ch] = 0.5 + a * (yy - 0.5) + b * (xx - 0.5) + c * (yy - 0.5) * (xx - 0.5)

    for _ in range(int(rng.integers(6, 12))):
        color = rng.uniform(0.05, 0.95, size=3)
        if rng.random() < 0.5:
            h0 = int(rng.integers(0, height - 8))
            w0 = int(rng.integers(0, width - 8))
            h1 = int(rng.integers(h0 + 4, min(h0 + height // 2, height)))
            w1 = int(rng.integers(w0 + 4, min(w0 + width // 2, width)))
            img[:, h0:h1, w0:w1] = color[:, None, None]
        else:
            cy, cx = rng.uniform(0.15, 0.85, size=2)
            ry = rng.uniform(0.05, 0.25)
            rx = rng.uniform(0.05, 0.25)
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
            img[:, mask] = color[:, None]

    for _ in range(int(rng.integers(2, 5))):
        color = rng.uniform(0.0, 1.0, size=3)
        if rng.random() < 0.5:
            row = int(rng.integers(0, height))
            img[:, row:row + 2, :] = color[:, None, None]
        else:
            col = int(rng.integers(0, width))
            img[:, :, col:col + 2] = color[:, None, None]

    freq = rng.uniform(2.0, 6.0)
    phase = rng.uniform(0, 2 * np.pi)
    texture = 0.04 * np.sin(2 * np.pi * freq * (xx + yy) + phase)
    img += texture[None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_synthetic_dataset(n_images: int, scale: int, seed: int,
                           height: int = 128, width: int = 128) -> PairedDataset:
    rng = np.random.default_rng(seed)
    pairs = [
        ImagePair(f"synth_{i:03d}.png", synthesize_image(rng, height, width), scale)
        for i in range(n_images)
    ]
    return PairedDataset(pairs, scale)


def write_synthetic_pngs(out_dir, n_images: int, seed: int,
                         height: int = 128, width: int = 128) -> list[Path]:
    from .pngio import save_png
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n_images):
        img = synthesize_image(rng, height, width)
        path = out_dir / f"synth_{i:03d}.png"
        save_png(Tensor(img[None]), path)
        paths.append(path)
    return paths
