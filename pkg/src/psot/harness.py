"""Training, evaluation, ablation sweeps, map visualization, and checkpoints.

The optimizer is adaptive moment estimation with decoupled weight decay and a
step-decay learning-rate schedule. Everything here is deterministic given the
seeds: two identical runs produce bit-identical parameter stores, reports
(modulo wall time), and ablation tables.

Checkpoint container (little-endian, same conventions as the bundle format):
    magic  6 bytes  "PSOTW1"
    u32    version (=1), seed, config_len
    bytes  config JSON (UTF-8, the model configuration)
    u8     scalar_width (4 or 8)
    u32    parameter count
    per parameter: u32 name_len, name UTF-8, u32 ndim, u32 dims..., payload
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .data import (
    BadMagicError,
    FeatureBundle,
    FieldValueError,
    PayloadLengthError,
    VersionMismatchError,
    _Cursor,
    split_and_batch,
)
from .errors import ConfigError, TrainingDivergedError
from .model import ModelConfig, config_fingerprint, forward, init_parameters, loss
from .numerics import ParameterStore, Tensor, no_grad

CKPT_MAGIC = b"PSOTW1"
CKPT_VERSION = 1


@dataclass
class TrainConfig:
    """Optimization schedule: batch 16, 35 epochs, lr 1e-4 decaying by 0.1
    every 16 epochs, decoupled weight decay 0.01."""

    learning_rate: float = 1e-4
    decay_factor: float = 0.1
    decay_every_epochs: int = 16
    epochs: int = 35
    batch_size: int = 16
    weight_decay: float = 0.01
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    train_fraction: float = 0.8

    def validate(self) -> "TrainConfig":
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.decay_every_epochs < 1:
            raise ConfigError("epochs, batch_size, decay_every_epochs must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        return self

    def to_json_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_json_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown train config keys {sorted(unknown)}")
        return cls(**raw).validate()

    def rate_at(self, epoch: int) -> float:
        return self.learning_rate * self.decay_factor ** math.floor(epoch / self.decay_every_epochs)


@dataclass
class RunReport:
    """Per-epoch curves and the run's identity. `canonical_bytes` excludes the
    wall time so determinism can be asserted bit-for-bit."""

    epoch_losses: list = field(default_factory=list)
    epoch_accuracies: list = field(default_factory=list)
    epoch_learning_rates: list = field(default_factory=list)
    final_accuracy: float = 0.0
    fingerprint: str = ""
    wall_time_seconds: float = 0.0

    def canonical_bytes(self) -> bytes:
        payload = {
            "epoch_losses": [float(x) for x in self.epoch_losses],
            "epoch_accuracies": [float(x) for x in self.epoch_accuracies],
            "epoch_learning_rates": [float(x) for x in self.epoch_learning_rates],
            "final_accuracy": float(self.final_accuracy),
            "fingerprint": self.fingerprint,
        }
        return json.dumps(payload, sort_keys=True).encode()

    def to_json(self) -> str:
        payload = json.loads(self.canonical_bytes())
        payload["wall_time_seconds"] = self.wall_time_seconds
        return json.dumps(payload, indent=2, sort_keys=True)


class AdamW:
    """Adaptive moments with decoupled weight decay, bias-corrected."""

    def __init__(self, store: ParameterStore, cfg: TrainConfig):
        self.store = store
        self.cfg = cfg
        self.step_count = 0
        self._m = {p.name: np.zeros_like(p.value.data) for p in store}
        self._v = {p.name: np.zeros_like(p.value.data) for p in store}

    def step(self, lr: float) -> None:
        self.step_count += 1
        b1, b2 = self.cfg.beta1, self.cfg.beta2
        correction1 = 1.0 - b1 ** self.step_count
        correction2 = 1.0 - b2 ** self.step_count
        for p in self.store:
            g = p.grad
            if g is None:
                continue
            m = self._m[p.name] = b1 * self._m[p.name] + (1 - b1) * g
            v = self._v[p.name] = b2 * self._v[p.name] + (1 - b2) * (g * g)
            m_hat = m / correction1
            v_hat = v / correction2
            w = p.value.data
            w -= lr * m_hat / (np.sqrt(v_hat) + self.cfg.adam_eps)
            w -= lr * self.cfg.weight_decay * w


def evaluate(bundles, params: ParameterStore, cfg: ModelConfig) -> float:
    """Fraction of samples whose argmax probability (ties to the lowest class)
    matches the label."""
    if not bundles:
        return 0.0
    hits = 0
    with no_grad():
        for bundle in bundles:
            probs = forward(bundle, params, cfg).probs.data
            if int(np.argmax(probs)) == bundle.answer:
                hits += 1
    return hits / len(bundles)


def train(dataset, model_cfg: ModelConfig, train_cfg: TrainConfig):
    """Optimize on a seeded split of `dataset`; returns (params, report)."""
    model_cfg.validate()
    train_cfg.validate()
    if not dataset:
        raise ConfigError("empty dataset")
    started = time.perf_counter()
    batches, eval_set = split_and_batch(
        dataset, train_cfg.train_fraction, train_cfg.batch_size, seed=train_cfg.seed
    )
    params = init_parameters(model_cfg)
    optimizer = AdamW(params, train_cfg)
    report = RunReport(
        fingerprint=config_fingerprint(model_cfg, extra=train_cfg.to_json_dict())
    )
    n_train = sum(len(b) for b in batches)
    for epoch in range(train_cfg.epochs):
        lr = train_cfg.rate_at(epoch)
        epoch_loss = 0.0
        for batch_index, batch in enumerate(batches):
            params.zero_grads()
            total = None
            for bundle in batch:
                sample_loss = loss(forward(bundle, params, model_cfg), bundle.answer)
                total = sample_loss if total is None else total + sample_loss
            batch_loss = total * (1.0 / len(batch))
            value = float(batch_loss.data)
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, batch_index, value)
            batch_loss.backward()
            optimizer.step(lr)
            epoch_loss += value * len(batch)
        report.epoch_losses.append(epoch_loss / n_train)
        report.epoch_learning_rates.append(lr)
        report.epoch_accuracies.append(evaluate(eval_set, params, model_cfg))
    report.final_accuracy = report.epoch_accuracies[-1] if report.epoch_accuracies else 0.0
    report.wall_time_seconds = time.perf_counter() - started
    return params, report


# -- ablation sweeps ------------------------------------------------------------------

_CSV_FIELDS = [
    "name", "exec_mode", "enable_mkpt", "enable_skpt", "enable_qkpt",
    "adjacency_mode_m", "adjacency_mode_s", "lambda", "r",
    "layers_m", "layers_s", "layers_q",
    "mma_use_audio", "mma_use_patch_visual", "mma_use_segment_visual",
    "final_train_loss", "eval_accuracy", "error",
]


def run_ablations(dataset, configs, train_cfg: TrainConfig) -> str:
    """Train and evaluate each (name, config) row; emit one CSV row apiece.
    A row that fails keeps its error message and the sweep continues."""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=_CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for name, cfg in configs:
        row = {
            "name": name,
            "exec_mode": cfg.exec_mode,
            "enable_mkpt": cfg.enable_mkpt,
            "enable_skpt": cfg.enable_skpt,
            "enable_qkpt": cfg.enable_qkpt,
            "adjacency_mode_m": cfg.adjacency_mode_m,
            "adjacency_mode_s": cfg.adjacency_mode_s,
            "lambda": f"{cfg.lambda_:g}",
            "r": f"{cfg.r:g}",
            "layers_m": cfg.layers_m,
            "layers_s": cfg.layers_s,
            "layers_q": cfg.layers_q,
            "mma_use_audio": cfg.mma_use_audio,
            "mma_use_patch_visual": cfg.mma_use_patch_visual,
            "mma_use_segment_visual": cfg.mma_use_segment_visual,
            "final_train_loss": "",
            "eval_accuracy": "",
            "error": "",
        }
        try:
            _, report = train(dataset, cfg, train_cfg)
            row["final_train_loss"] = f"{report.epoch_losses[-1]:.6f}"
            row["eval_accuracy"] = f"{report.final_accuracy:.6f}"
        except Exception as exc:  # keep sweeping; the row records the failure
            row["error"] = f"{type(exc).__name__}: {exc}"
        writer.writerow(row)
    return buffer.getvalue()


# -- visualization ----------------------------------------------------------------------

VIZ_MAPS = ("motion", "sound", "mask", "adjacency_weight")


@dataclass
class MapImage:
    """An N x N map with its CSV text and 8-bit grayscale PGM rendering."""

    values: np.ndarray
    csv_text: str
    pgm_bytes: bytes


def _to_pgm(values: np.ndarray) -> bytes:
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-12:
        gray = np.full(values.shape, 128, dtype=np.uint8)
    else:
        gray = np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode()
    return header + gray.tobytes()


def _to_csv(values: np.ndarray) -> str:
    return "\n".join(",".join(f"{x:.8g}" for x in row) for row in values) + "\n"


def visualize(
    bundle: FeatureBundle,
    params: ParameterStore,
    cfg: ModelConfig,
    segment: int,
    which: str,
    adjacency_source: str = "motion",
) -> MapImage:
    """Render one per-segment map as an N x N grid.

    motion/sound/mask come from the forward trace; adjacency_weight sums, for
    each patch, the motion- or sound-driven edge weights to all other patches
    (self and audio edges excluded), a per-patch attention-mass summary
    suitable for dot-size overlays.
    """
    if which not in VIZ_MAPS:
        raise ConfigError(f"unknown map {which!r}; expected one of {VIZ_MAPS}")
    if not 0 <= segment < bundle.t_count:
        raise IndexError(f"segment {segment} out of range for T={bundle.t_count}")
    with no_grad():
        trace = forward(bundle, params, cfg)
        if which == "motion":
            flat = trace.motion.m.data[segment]
        elif which == "sound":
            flat = trace.sound.s.data[segment]
        elif which == "mask":
            flat = trace.mask.beta.data[segment]
        else:
            from . import graphs

            # the initial motion/sound-driven adjacency of this segment,
            # exactly as the first graph layer consumed it
            v = Tensor(bundle.visual[segment])
            a = Tensor(bundle.audio[segment])
            if adjacency_source == "motion":
                adj = graphs.build_motion_adjacency(v, a, trace.motion.m.detach()[segment])
            elif adjacency_source == "sound":
                adj = graphs.build_sound_adjacency(v, a, trace.sound.s.detach()[segment])
            else:
                raise ConfigError(f"adjacency_source must be 'motion' or 'sound', got {adjacency_source!r}")
            block = adj.data[: cfg.n_patches, : cfg.n_patches]
            flat = block.sum(axis=1) - np.diag(block)
    grid = np.asarray(flat, dtype=np.float64).reshape(cfg.N, cfg.N)
    return MapImage(values=grid, csv_text=_to_csv(grid), pgm_bytes=_to_pgm(grid))


# -- checkpoints -------------------------------------------------------------------------


def save_checkpoint(params: ParameterStore, model_cfg: ModelConfig, path) -> None:
    from pathlib import Path

    blob = [CKPT_MAGIC]
    config_bytes = json.dumps(model_cfg.to_json_dict(), sort_keys=True).encode()
    blob.append(struct.pack("<III", CKPT_VERSION, params.seed, len(config_bytes)))
    blob.append(config_bytes)
    names = params.names()
    widths = {params[n].value.data.dtype.itemsize for n in names}
    if len(widths) != 1 or widths & {4, 8} != widths:
        raise FieldValueError("scalar_width", f"parameters must share one float width, got {widths}")
    width = widths.pop()
    blob.append(struct.pack("<B", width))
    blob.append(struct.pack("<I", len(names)))
    for name in names:
        value = params[name].value.data
        encoded = name.encode("utf-8")
        blob.append(struct.pack("<I", len(encoded)))
        blob.append(encoded)
        blob.append(struct.pack("<I", value.ndim))
        blob.append(struct.pack("<" + "I" * value.ndim, *value.shape))
        blob.append(np.ascontiguousarray(value, dtype=f"<f{width}").tobytes())
    Path(path).write_bytes(b"".join(blob))


def load_checkpoint(path):
    """Read a checkpoint; returns (ParameterStore, ModelConfig)."""
    from pathlib import Path

    cur = _Cursor(Path(path).read_bytes())
    if cur.take(len(CKPT_MAGIC), "magic") != CKPT_MAGIC:
        raise BadMagicError("magic", "not a PSOTW1 checkpoint")
    version = cur.u32("version")
    if version != CKPT_VERSION:
        raise VersionMismatchError("version", f"got {version}, reader supports {CKPT_VERSION}")
    seed = cur.u32("seed")
    config_len = cur.u32("config_len")
    try:
        cfg = ModelConfig.from_json_dict(json.loads(cur.take(config_len, "config").decode("utf-8")))
    except (ValueError, UnicodeDecodeError) as exc:
        raise FieldValueError("config", f"invalid JSON ({exc})") from None
    width = struct.unpack("<B", cur.take(1, "scalar_width"))[0]
    if width not in (4, 8):
        raise FieldValueError("scalar_width", f"must be 4 or 8, got {width}")
    count = cur.u32("parameter_count")
    store = ParameterStore(seed=seed)
    dtype = np.dtype(f"<f{width}")
    for _ in range(count):
        name_len = cur.u32("name_len")
        name = cur.take(name_len, "name").decode("utf-8")
        ndim = cur.u32("ndim")
        shape = tuple(cur.u32("dims") for _ in range(ndim))
        n_bytes = math.prod(shape) * width
        raw = cur.take(n_bytes, name)
        store.add_existing(name, np.frombuffer(raw, dtype=dtype).reshape(shape).copy())
    if cur.pos != len(cur.blob):
        raise PayloadLengthError("payload", f"{len(cur.blob) - cur.pos} trailing bytes")
    return store, cfg
