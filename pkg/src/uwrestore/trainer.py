"""Adam training loop with cosine-annealed learning rate and binary
checkpoints.

Training is a pure function of (model seed, dataset seed, step count): the
loss trace and final checkpoint are bit-identical across reruns. Checkpoints
always store 32-bit floats; the wider precision mode exists for numerical
checks, not for storage.
"""

import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import iter_batches, load_pairs
from .errors import CheckpointError, ConfigError, ContractError, ParameterError, StateError
from .fileio import atomic_write_bytes
from .losses import LossWeights, total_loss
from .network import (NAME_PATTERN, ModelConfig, ParamStore, build_model,
                      config_from_items, config_to_items, model_forward)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_MAGIC = b"DSEA"
CHECKPOINT_VERSION = 1


class TrainingAborted(StateError):
    """Raised when the loss goes non-finite; carries step/lr/batch context."""

    def __init__(self, step, lr, batch_names):
        super().__init__(
            f"non-finite loss at step {step} (lr {lr:.3e}, batch {batch_names})")
        self.step = step
        self.lr = lr
        self.batch_names = list(batch_names)


@dataclass
class LrSchedule:
    lr_max: float = 1e-4
    lr_min: float = 1e-6
    total_steps: int = 1000

    def validate(self):
        if not (self.lr_max > self.lr_min > 0.0):
            raise ConfigError(
                f"need lr_max > lr_min > 0, got {self.lr_max}, {self.lr_min}")
        if self.total_steps < 0:
            raise ConfigError(f"total_steps must be >= 0, got {self.total_steps}")
        return self


def cosine_lr(step, schedule):
    """Half-cosine decay from lr_max at step 0 to lr_min at total_steps.
    The endpoints are returned exactly; steps past the end clamp to lr_min."""
    if step < 0:
        raise ParameterError(f"step must be >= 0, got {step}")
    if step == 0:
        return schedule.lr_max
    if step >= schedule.total_steps:
        return schedule.lr_min
    span = schedule.lr_max - schedule.lr_min
    return schedule.lr_min + 0.5 * span * (1.0 + math.cos(math.pi * step / schedule.total_steps))


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def init_adam(params):
    state = AdamState()
    for name, p in params.items():
        state.m[name] = np.zeros(p.shape, dtype=np.float32)
        state.v[name] = np.zeros(p.shape, dtype=np.float32)
    return state


def adam_step(params, grads, state, lr):
    """Standard bias-corrected Adam update, in place; zeroes grads after."""
    for name, _ in params.items():
        if name not in grads or grads[name] is None:
            raise ContractError(f"missing gradient for parameter {name}")
    state.t += 1
    c1 = 1.0 - ADAM_BETA1 ** state.t
    c2 = 1.0 - ADAM_BETA2 ** state.t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float32)
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        p.data = (p.data - update).astype(p.data.dtype)
        p.grad = None


# --- checkpoint serialization ---------------------------------------------

def _encode_config(cfg):
    items = config_to_items(cfg)
    parts = [struct.pack("<I", len(items))]
    for key, value in items:
        kb, vb = key.encode("utf-8"), value.encode("utf-8")
        parts.append(struct.pack("<H", len(kb)) + kb)
        parts.append(struct.pack("<H", len(vb)) + vb)
    return b"".join(parts)


def checkpoint_bytes(params, cfg):
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION), _encode_config(cfg)]
    parts.append(struct.pack("<I", len(params)))
    for name, p in params.items():
        if not np.all(np.isfinite(p.data)):
            raise CheckpointError(f"non-finite values in parameter {name}")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<B", len(p.shape)))
        for dim in p.shape:
            parts.append(struct.pack("<I", dim))
        payload = np.ascontiguousarray(p.data, dtype="<f4")
        parts.append(payload.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(params, cfg, path):
    atomic_write_bytes(path, checkpoint_bytes(params, cfg))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"checkpoint truncated while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self, what):
        return struct.unpack("<B", self.take(1, what))[0]

    def u16(self, what):
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def text(self, what):
        return self.take(self.u16(what), what).decode("utf-8")


def load_checkpoint(path):
    """Read, CRC-verify, and name/shape-check a checkpoint; returns
    (ParamStore, ModelConfig). Never returns a partially filled store."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise CheckpointError(f"{path}: too short to be a checkpoint")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: CRC mismatch")
    r = _Reader(data[:-4])
    if r.take(4, "magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    version = r.u32("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unknown version {version}")
    items = [(r.text("config key"), r.text("config value"))
             for _ in range(r.u32("config count"))]
    try:
        cfg = config_from_items(items)
    except ConfigError as exc:
        raise CheckpointError(f"{path}: bad embedded config: {exc}") from None

    fresh = build_model(cfg)
    seen = set()
    count = r.u32("tensor count")
    if count != len(fresh):
        raise CheckpointError(
            f"{path}: {count} tensors stored, fresh build has {len(fresh)}")
    for _ in range(count):
        name = r.text("tensor name")
        if not NAME_PATTERN.match(name):
            raise CheckpointError(f"{path}: name violates grammar: {name}")
        if name not in fresh:
            raise CheckpointError(f"{path}: unexpected tensor {name}")
        if name in seen:
            raise CheckpointError(f"{path}: duplicate tensor {name}")
        seen.add(name)
        rank = r.u8(f"rank of {name}")
        dims = tuple(r.u32(f"dim of {name}") for _ in range(rank))
        expected = fresh[name].shape
        if dims != expected:
            raise CheckpointError(
                f"{path}: shape disagreement for {name}: stored {dims}, built {expected}")
        n = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = np.frombuffer(r.take(4 * n, f"payload of {name}"), dtype="<f4")
        fresh[name].data = payload.reshape(dims).astype(T.current_dtype())
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    return fresh, cfg


# --- training loop ---------------------------------------------------------

def _mean_loss(losses):
    total = losses[0]
    for extra in losses[1:]:
        total = T.add(total, extra)
    return T.mul(total, 1.0 / len(losses))


def train_on_pairs(cfg, pairs, steps, *, patch=64, flips=True, data_seed=0,
                   batch=4, weights=None, schedule=None, checkpoint_every=0,
                   out_path=None, log=None):
    """Core loop over in-memory pairs; returns (params, trace)."""
    cfg.validate()
    weights = (weights or LossWeights()).validate()
    schedule = (schedule or LrSchedule(total_steps=steps)).validate()
    if steps < 0:
        raise ParameterError(f"steps must be >= 0, got {steps}")
    if batch < 1:
        raise ParameterError(f"batch must be >= 1, got {batch}")
    if patch % 4 != 0 or patch < 16:
        raise ConfigError(f"patch must be a multiple of 4 and >= 16, got {patch}")
    if len(pairs) < batch:
        raise ConfigError(f"batch {batch} exceeds dataset size {len(pairs)}")

    params = build_model(cfg)
    state = init_adam(params)
    trace = []
    step = 0
    epoch = 0
    while step < steps:
        for items in iter_batches(pairs, patch, flips, batch,
                                  epoch_seed=[data_seed, epoch]):
            if step >= steps:
                break
            lr = cosine_lr(step, schedule)
            losses = []
            for inp, pyramid, _ in items:
                out = model_forward(params, cfg, T.constant(inp))
                losses.append(total_loss(out, pyramid, weights))
            loss = _mean_loss(losses)
            loss_value = float(loss.data)
            if not math.isfinite(loss_value):
                raise TrainingAborted(step, lr, [name for _, _, name in items])
            T.backward(loss)
            grads = {name: p.grad for name, p in params.items()}
            adam_step(params, grads, state, lr)
            trace.append((step, loss_value, lr))
            if log is not None:
                log(step, loss_value, lr)
            step += 1
            if out_path and checkpoint_every > 0 and step % checkpoint_every == 0:
                save_checkpoint(params, cfg, out_path)
        epoch += 1
    if out_path:
        save_checkpoint(params, cfg, out_path)
    return params, trace


def train(cfg, spec, steps, out_path, *, batch=4, weights=None, schedule=None,
          checkpoint_every=0, trace_path=None, log=None):
    """Optimise a fresh model for `steps` Adam steps on the paired dataset.

    Writes the checkpoint to out_path (and every checkpoint_every steps when
    positive) plus a `step loss lr` trace file. Returns (params, trace)."""
    pairs = load_pairs(spec)
    params, trace = train_on_pairs(
        cfg, pairs, steps, patch=spec.patch, flips=spec.flips,
        data_seed=spec.seed, batch=batch, weights=weights, schedule=schedule,
        checkpoint_every=checkpoint_every, out_path=out_path, log=log)
    if trace_path is not None:
        atomic_write_bytes(trace_path, format_trace(trace).encode("utf-8"))
    return params, trace


def format_trace(trace):
    return "".join(f"{step} {loss:.10e} {lr:.10e}\n" for step, loss, lr in trace)
