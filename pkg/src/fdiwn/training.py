"""Desk-scale training: L1 loss, Adam with bias correction, a halving
learning-rate schedule, CSV loss logging, and resumable checkpoints.

Runs are deterministic for a fixed seed: the sampler consumes a dedicated
generator whose state is serialized into checkpoints, so a resumed run
continues bit-exactly.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import PairedDataset, sample_batch
from .network import FDIWN, FdiwnConfig, WeightFormatError, config_preset, save_weights
from .tensor import ShapeError, Tape, Tensor, sub, tabs, tmean

__all__ = [
    "TrainConfig",
    "TrainState",
    "TRAIN_PRESETS",
    "train_preset",
    "l1_loss",
    "adam_step",
    "train_loop",
    "load_checkpoint",
]


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    patch_size: int = 48
    learning_rate: float = 2e-4
    total_steps: int = 200_000
    lr_halve_steps: int = 40_000   # halving cadence, ~1/5 of the run
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    ckpt_every: int = 0            # 0 = final checkpoint only


# model + schedule bundles for the shipped desk-scale presets
TRAIN_PRESETS: dict[str, tuple[str, TrainConfig]] = {
    "smoke": ("smoke", TrainConfig(batch_size=8, patch_size=32, total_steps=200,
                                   lr_halve_steps=80, learning_rate=1e-3)),
    "overfit": ("smoke", TrainConfig(batch_size=8, patch_size=32, total_steps=500,
                                     lr_halve_steps=200, learning_rate=2e-3)),
    "tiny": ("tiny", TrainConfig(batch_size=16, patch_size=48, total_steps=3000,
                                 lr_halve_steps=1200, learning_rate=1e-3)),
    "paper": ("fdiwn", TrainConfig()),
}


def train_preset(name: str, scale: int | None = None) -> tuple[FdiwnConfig, TrainConfig]:
    if name not in TRAIN_PRESETS:
        raise KeyError(f"unknown training preset {name!r}; have {sorted(TRAIN_PRESETS)}")
    model_name, tc = TRAIN_PRESETS[name]
    return config_preset(model_name, scale=scale), tc


# ---------------------------------------------------------------------------
# loss

def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ShapeError(f"loss inputs must match: {pred.shape} vs {target.shape}")
    return tmean(tabs(sub(pred, target)))


# ---------------------------------------------------------------------------
# optimizer

class TrainState:
    """Step counter, Adam moments, learning rate, and sampler RNG state."""

    def __init__(self, params: dict[str, Tensor], learning_rate: float,
                 rng: np.random.Generator):
        self.step = 0
        self.learning_rate = learning_rate
        self.m = {name: np.zeros_like(t.data, dtype=np.float32) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data, dtype=np.float32) for name, t in params.items()}
        self.rng = rng

    # -- serialization (appended to the v2 weight stream) --------------------

    def encode(self, params: dict[str, Tensor]) -> bytes:
        out = bytearray()
        out += struct.pack("<Qd", self.step, self.learning_rate)
        for name in params:
            out += np.ascontiguousarray(self.m[name], dtype="<f4").tobytes()
            out += np.ascontiguousarray(self.v[name], dtype="<f4").tobytes()
        st = self.rng.bit_generator.state
        out += st["state"]["state"].to_bytes(16, "little")
        out += st["state"]["inc"].to_bytes(16, "little")
        out += struct.pack("<II", st["has_uint32"], st["uinteger"])
        return bytes(out)

    @classmethod
    def decode(cls, reader, params: dict[str, Tensor]) -> "TrainState":
        step, lr = reader.unpack("<Qd")
        state = cls(params, lr, np.random.default_rng(0))
        state.step = step
        for name, t in params.items():
            n = t.size
            state.m[name] = np.frombuffer(reader.take(4 * n), dtype="<f4").reshape(t.shape).copy()
            state.v[name] = np.frombuffer(reader.take(4 * n), dtype="<f4").reshape(t.shape).copy()
        pcg_state = int.from_bytes(reader.take(16), "little")
        pcg_inc = int.from_bytes(reader.take(16), "little")
        has_uint32, uinteger = reader.unpack("<II")
        if not reader.done():
            raise WeightFormatError("trailing bytes after training state")
        bg = np.random.PCG64()
        bg.state = {
            "bit_generator": "PCG64",
            "state": {"state": pcg_state, "inc": pcg_inc},
            "has_uint32": has_uint32,
            "uinteger": uinteger,
        }
        state.rng = np.random.Generator(bg)
        return state


def adam_step(params: dict[str, Tensor], state: TrainState, cfg: TrainConfig):
    """One Adam update with bias correction; parameters without a gradient
    buffer (disconnected from the loss) are left untouched."""
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    lr = state.learning_rate
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        m_hat = m / corr1
        v_hat = v / corr2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(p.data.dtype)


# ---------------------------------------------------------------------------
# training loop

def _schedule_lr(base_lr: float, step: int, halve_every: int) -> float:
    if halve_every <= 0:
        return base_lr
    return base_lr * (0.5 ** (step // halve_every))


def train_loop(model: FDIWN, dataset: PairedDataset, cfg: TrainConfig,
               out_dir=None, state: TrainState | None = None,
               log_every: int = 0, max_seconds: float | None = None,
               step_callback=None) -> list[tuple[int, float, float]]:
    """Optimize ``model`` on random augmented patches; returns the loss log
    as (step, loss, lr) rows.  Checkpoints go to ``out_dir`` when given."""
    params = model.state_dict()
    if state is None:
        state = TrainState(params, cfg.learning_rate, np.random.default_rng(cfg.seed))
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    history: list[tuple[int, float, float]] = []
    started = time.monotonic()

    while state.step < cfg.total_steps:
        state.learning_rate = _schedule_lr(cfg.learning_rate, state.step, cfg.lr_halve_steps)
        lr_batch, hr_batch = sample_batch(dataset, cfg.batch_size, cfg.patch_size, state.rng)
        model.zero_grads()
        with Tape() as tape:
            pred = model(lr_batch)
            loss = l1_loss(pred, hr_batch)
        tape.backward(loss)
        adam_step(params, state, cfg)
        for name, p in params.items():
            if not np.isfinite(p.data).all():
                raise FloatingPointError(f"parameter {name!r} went non-finite at step {state.step}")
        loss_value = loss.item()
        history.append((state.step, loss_value, state.learning_rate))
        if log_every and state.step % log_every == 0:
            print(f"step {state.step:6d}  loss {loss_value:.6f}  lr {state.learning_rate:.2e}")
        if out_path is not None and cfg.ckpt_every and state.step % cfg.ckpt_every == 0:
            save_weights(model, out_path / f"ckpt_step{state.step:06d}.fdwn", train_state=state)
        if step_callback is not None and step_callback(state.step, loss_value):
            break
        if max_seconds is not None and time.monotonic() - started > max_seconds:
            break

    if out_path is not None:
        save_weights(model, out_path / "ckpt_final.fdwn", train_state=state)
        write_loss_log(out_path / "loss_log.csv", history)
    return history


def write_loss_log(path, history: list[tuple[int, float, float]]):
    lines = ["step,loss,lr"]
    for step, loss, lr in history:
        lines.append(f"{step},{loss!r},{lr!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[FDIWN, TrainState]:
    from .network import load_weights
    model, trailer = load_weights(path)
    if trailer is None:
        raise WeightFormatError(f"{path} holds weights only, not a training checkpoint")
    state = TrainState.decode(trailer, model.state_dict())
    return model, state
