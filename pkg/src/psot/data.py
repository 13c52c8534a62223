"""Feature bundles: the on-disk container, a synthetic labeled generator, and batching.

Container layout (all integers little-endian):
    magic  6 bytes   50 53 4F 54 31 00  ("PSOT1\\0")
    u32    version (=1), T, N2, d, K, C, answer, sample_id_len
    bytes  sample_id (UTF-8)
    u8     scalar_width (4 or 8)
    floats audio (T*d), visual (T*N2*d), question (K*d), row-major,
           little-endian IEEE of scalar_width bytes

A dataset is a directory of ``*.psot`` files plus a ``manifest.txt`` listing
relative paths one per line.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, PsotError

MAGIC = b"PSOT1\x00"
VERSION = 1
TASKS = ("which_moves", "which_sounds", "which_sounds_first", "count_sounding")

# scene constants: rotation between consecutive frames of a moving patch
# (a full flip for the motion-only task, a partial swing elsewhere), and the
# weight of the class prototype mixed into audio-aligned patches
SWING = 1.2
SWING_MOVES = math.pi
PROTO_WEIGHT = 1.5


class BundleFormatError(PsotError):
    """Base class for container parse failures; `field` names the offender."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class BadMagicError(BundleFormatError):
    pass


class VersionMismatchError(BundleFormatError):
    pass


class TruncatedFileError(BundleFormatError):
    pass


class FieldValueError(BundleFormatError):
    pass


class PayloadLengthError(BundleFormatError):
    pass


@dataclass
class FeatureBundle:
    """One sample: per-segment audio, patch-grid visual, word-level question, label."""

    audio: np.ndarray     # T x d
    visual: np.ndarray    # T x N2 x d
    question: np.ndarray  # K x d
    answer: int
    classes: int
    sample_id: str = ""

    @property
    def t_count(self) -> int:
        return self.audio.shape[0]

    @property
    def n_patches(self) -> int:
        return self.visual.shape[1]

    @property
    def dim(self) -> int:
        return self.audio.shape[1]

    @property
    def words(self) -> int:
        return self.question.shape[0]

    def validate(self) -> "FeatureBundle":
        if self.visual.shape[0] != self.t_count or self.visual.shape[2] != self.dim:
            raise FieldValueError("visual", f"shape {self.visual.shape} inconsistent with audio {self.audio.shape}")
        if self.question.shape[1] != self.dim:
            raise FieldValueError("question", f"dim {self.question.shape[1]} != {self.dim}")
        if not 0 <= self.answer < self.classes:
            raise FieldValueError("answer", f"{self.answer} out of range for {self.classes} classes")
        for name, arr in [("audio", self.audio), ("visual", self.visual), ("question", self.question)]:
            if not np.isfinite(arr).all():
                raise FieldValueError(name, "contains non-finite values")
        return self


@dataclass
class SyntheticSpec:
    """Recipe for a deterministic labeled scene set."""

    seed: int = 0
    T: int = 4
    N: int = 4
    d: int = 32
    K: int = 6
    C: int = 8
    task: str = "which_sounds_first"
    noise_sigma: float = 0.0


def _unit(x: np.ndarray) -> np.ndarray:
    return x / max(float(np.linalg.norm(x)), 1e-12)


def _noisy_unit(base: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma > 0:
        base = base + sigma * rng.standard_normal(base.shape)
    return _unit(base)


def _orthonormal(rng: np.random.Generator, d: int, count: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((d, count)))
    return q.T  # count x d rows


def generate_synthetic(spec: SyntheticSpec, count: int) -> list[FeatureBundle]:
    """Deterministic labeled scenes whose answers are recoverable by construction.

    Classes get orthonormal prototype directions. The target patch sits at
    patch index == label, so the motion/sound maps can be checked against the
    label directly:
      which_moves        - the target patch's feature rotates between frames
      which_sounds       - the audio aligns exactly with the target patch
      which_sounds_first - two patches align with the audio; only the target
                           also moves, during the early segments
      count_sounding     - the label is the number of audio-aligned patches
    """
    if spec.task not in TASKS:
        raise ConfigError(f"unknown task {spec.task!r}; expected one of {TASKS}")
    n2 = spec.N * spec.N
    if spec.task == "count_sounding":
        if spec.C - 1 > n2:
            raise ConfigError(f"count task needs C-1 <= N^2, got C={spec.C}, N^2={n2}")
    elif spec.C > n2:
        raise ConfigError(f"{spec.task} needs C <= N^2, got C={spec.C}, N^2={n2}")
    if spec.task == "which_sounds_first" and spec.C < 2:
        raise ConfigError("which_sounds_first needs at least two classes")
    if spec.d < spec.C + 1:
        raise ConfigError(f"need d >= C+1 for {spec.C} prototypes plus a motion axis, got d={spec.d}")
    if spec.T < 2:
        raise ConfigError(f"need T >= 2 segments, got T={spec.T}")
    if spec.noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {spec.noise_sigma}")

    rng = np.random.default_rng(spec.seed)
    basis = _orthonormal(rng, spec.d, spec.C + 1)
    prototypes, motion_axis = basis[: spec.C], basis[spec.C]
    task_direction = _unit(rng.standard_normal(spec.d))
    sigma = spec.noise_sigma

    def rotated(base: np.ndarray, angle: float) -> np.ndarray:
        return math.cos(angle) * base + math.sin(angle) * motion_axis

    bundles = []
    for index in range(count):
        visual = np.empty((spec.T, n2, spec.d))
        static = rng.standard_normal((n2, spec.d))
        for i in range(n2):
            static[i] = _unit(static[i])

        if spec.task == "count_sounding":
            label = int(rng.integers(0, spec.C))
            sounding = rng.choice(n2, size=label, replace=False) if label else np.array([], dtype=int)
            audio_dir = _unit(rng.standard_normal(spec.d))
            for i in sounding:
                static[i] = audio_dir
            for t in range(spec.T):
                for i in range(n2):
                    visual[t, i] = _noisy_unit(static[i], sigma, rng)
        else:
            label = int(rng.integers(0, spec.C))
            target = label
            if spec.task == "which_moves":
                audio_dir = _unit(rng.standard_normal(spec.d))
                base = prototypes[label]
                # every class prototype is on display; only the target's moves,
                # so the answer is decodable through motion alone
                for c in range(spec.C):
                    static[c] = prototypes[c]
            elif spec.task == "which_sounds":
                audio_dir = prototypes[label]
                base = prototypes[label]
            else:  # which_sounds_first
                decoy_label = int(rng.integers(0, spec.C - 1))
                if decoy_label >= label:
                    decoy_label += 1
                audio_dir = _unit(prototypes[label] + prototypes[decoy_label])
                base = _unit(audio_dir + PROTO_WEIGHT * prototypes[label])
                static[decoy_label] = _unit(audio_dir + PROTO_WEIGHT * prototypes[decoy_label])
            moves = spec.task in ("which_moves", "which_sounds_first")
            early = spec.T if spec.task == "which_moves" else math.ceil(spec.T / 2)
            swing = SWING_MOVES if spec.task == "which_moves" else SWING
            for t in range(spec.T):
                for i in range(n2):
                    if i == target:
                        angle = swing * (t % 2) if moves and t < early else 0.0
                        feat = rotated(base, angle)
                    else:
                        feat = static[i]
                    visual[t, i] = _noisy_unit(feat, sigma, rng)

        audio = np.stack([_noisy_unit(audio_dir, sigma, rng) for _ in range(spec.T)])
        question = np.stack([_noisy_unit(task_direction, sigma, rng) for _ in range(spec.K)])
        bundles.append(
            FeatureBundle(
                audio=audio.astype(np.float32),
                visual=visual.astype(np.float32),
                question=question.astype(np.float32),
                answer=label,
                classes=spec.C,
                sample_id=f"{spec.task}-{spec.seed}-{index:05d}",
            ).validate()
        )
    return bundles


# -- container I/O ---------------------------------------------------------------


def _pack_u32(*values: int) -> bytes:
    return struct.pack("<" + "I" * len(values), *values)


def bundle_to_bytes(bundle: FeatureBundle) -> bytes:
    """Serialize at the bundle's own scalar width (float32 or float64)."""
    bundle.validate()
    width = bundle.audio.dtype.itemsize
    if width not in (4, 8) or bundle.visual.dtype != bundle.audio.dtype or bundle.question.dtype != bundle.audio.dtype:
        raise FieldValueError("scalar_width", f"tensors must share one float32/float64 dtype, got {bundle.audio.dtype}")
    sid = bundle.sample_id.encode("utf-8")
    float_fmt = f"<f{width}"
    out = [
        MAGIC,
        _pack_u32(VERSION, bundle.t_count, bundle.n_patches, bundle.dim, bundle.words,
                  bundle.classes, bundle.answer, len(sid)),
        sid,
        struct.pack("<B", width),
        np.ascontiguousarray(bundle.audio, dtype=float_fmt).tobytes(),
        np.ascontiguousarray(bundle.visual, dtype=float_fmt).tobytes(),
        np.ascontiguousarray(bundle.question, dtype=float_fmt).tobytes(),
    ]
    return b"".join(out)


class _Cursor:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, field: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedFileError(field, f"needs {n} bytes at offset {self.pos}, file has {len(self.blob)}")
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, field: str) -> int:
        return struct.unpack("<I", self.take(4, field))[0]


def bundle_from_bytes(blob: bytes, strict: bool = True) -> FeatureBundle:
    cur = _Cursor(blob)
    if cur.take(len(MAGIC), "magic") != MAGIC:
        raise BadMagicError("magic", "not a PSOT1 bundle")
    version = cur.u32("version")
    if version != VERSION:
        raise VersionMismatchError("version", f"got {version}, reader supports {VERSION}")
    t_count = cur.u32("T")
    n2 = cur.u32("N2")
    d = cur.u32("d")
    k = cur.u32("K")
    classes = cur.u32("C")
    answer = cur.u32("answer")
    sid_len = cur.u32("sample_id_len")
    for name, value in [("T", t_count), ("N2", n2), ("d", d), ("K", k), ("C", classes)]:
        if value == 0:
            raise FieldValueError(name, "must be positive")
    if answer >= classes:
        raise FieldValueError("answer", f"{answer} out of range for {classes} classes")
    try:
        sample_id = cur.take(sid_len, "sample_id").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FieldValueError("sample_id", f"invalid UTF-8 ({exc})") from None
    width = struct.unpack("<B", cur.take(1, "scalar_width"))[0]
    if width not in (4, 8):
        raise FieldValueError("scalar_width", f"must be 4 or 8, got {width}")

    dtype = np.dtype(f"<f{width}")
    sections = [("audio", (t_count, d)), ("visual", (t_count, n2, d)), ("question", (k, d))]
    arrays = {}
    for name, shape in sections:
        n_bytes = math.prod(shape) * width  # python ints: immune to crafted-header overflow
        raw = cur.take(n_bytes, name)
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    if cur.pos != len(blob):
        raise PayloadLengthError("payload", f"{len(blob) - cur.pos} trailing bytes after question payload")
    bundle = FeatureBundle(
        audio=arrays["audio"], visual=arrays["visual"], question=arrays["question"],
        answer=answer, classes=classes, sample_id=sample_id,
    )
    if strict:
        bundle.validate()
    return bundle


def write_bundle(bundle: FeatureBundle, path) -> None:
    Path(path).write_bytes(bundle_to_bytes(bundle))


def read_bundle(path, strict: bool = True) -> FeatureBundle:
    return bundle_from_bytes(Path(path).read_bytes(), strict=strict)


def write_dataset(bundles, directory) -> Path:
    """Write one .psot per bundle plus a manifest listing them in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, bundle in enumerate(bundles):
        name = f"{bundle.sample_id or f'sample-{i:05d}'}.psot"
        write_bundle(bundle, directory / name)
        names.append(name)
    (directory / "manifest.txt").write_text("".join(n + "\n" for n in names))
    return directory


def read_dataset(directory, strict: bool = True) -> list[FeatureBundle]:
    directory = Path(directory)
    manifest = directory / "manifest.txt"
    if not manifest.exists():
        raise ConfigError(f"no manifest.txt in {directory}")
    bundles = []
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if line:
            bundles.append(read_bundle(directory / line, strict=strict))
    return bundles


# -- batching ---------------------------------------------------------------------


def split_and_batch(bundles, train_fraction: float, batch_size: int, seed: int):
    """Seeded shuffle, floor-sized train split, fixed-order batches (last kept partial)."""
    if not bundles:
        raise ConfigError("empty bundle list")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng(seed).permutation(len(bundles))
    shuffled = [bundles[i] for i in order]
    n_train = math.floor(len(bundles) * train_fraction)
    train, evaluation = shuffled[:n_train], shuffled[n_train:]
    batches = [train[i : i + batch_size] for i in range(0, len(train), batch_size)]
    return batches, evaluation
