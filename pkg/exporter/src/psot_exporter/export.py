"""The export pipeline: media in, one .psot bundle out.

Per segment: one frame, encoded on a 2N x 2N patch grid and average-pooled
2x2 down to N x N; one 1-second audio window; plus the word-level question
features. Each modality is then brought to the common width `dim` by a fixed
seeded random projection (recorded in the sample-id metadata so the mapping
is reproducible), and every feature vector is L2-normalized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import encoders, media
from .container import write_bundle_file
from .errors import ExportError, MediaError


@dataclass
class ExportSpec:
    """Everything one export needs; defaults follow the 60s/6s, 8x8 setup."""

    video: str
    question: str
    out: str
    segment_seconds: float = 6.0
    grid: int = 8
    dim: int = 512
    label: int | None = None
    classes: int | None = None
    visual_encoder: str = "cell-stats"
    audio_encoder: str = "spectral"
    text_encoder: str = "hashed-word"
    projection_seed: int = 7

    def validate(self) -> "ExportSpec":
        if self.grid < 1:
            raise ExportError(f"grid must be >= 1, got {self.grid}")
        if self.dim < 1:
            raise ExportError(f"dim must be >= 1, got {self.dim}")
        if self.segment_seconds <= 0:
            raise ExportError(f"segment_seconds must be positive, got {self.segment_seconds}")
        if self.label is not None and self.label < 0:
            raise ExportError(f"label must be >= 0, got {self.label}")
        if self.classes is not None and (self.label or 0) >= self.classes:
            raise ExportError(f"label {self.label} out of range for {self.classes} classes")
        return self


def pool_2x2(grid_features: np.ndarray) -> np.ndarray:
    """Average-pool a (G, G, D) feature grid to (G/2, G/2, D)."""
    g = grid_features.shape[0]
    if grid_features.shape[1] != g or g % 2 != 0:
        raise ExportError(f"pooling needs an even square grid, got {grid_features.shape}")
    half = g // 2
    return grid_features.reshape(half, 2, half, 2, -1).mean(axis=(1, 3))


def _project_rows(rows: np.ndarray, dst: int, seed: int, tag: str) -> np.ndarray:
    import hashlib

    src = rows.shape[-1]
    tag_seed = int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=4).digest(), "little")
    proj = np.random.default_rng((seed, tag_seed)).standard_normal((src, dst)) / np.sqrt(src)
    flat = rows.reshape(-1, src) @ proj
    norms = np.maximum(np.linalg.norm(flat, axis=-1, keepdims=True), 1e-12)
    return (flat / norms).reshape(*rows.shape[:-1], dst)


def export(spec: ExportSpec) -> Path:
    """Run the full pipeline and write the bundle; returns the output path."""
    spec.validate()
    video = Path(spec.video)
    if not video.exists():
        raise MediaError(f"video {video} not found")

    visual_enc = encoders.resolve(encoders.VISUAL_ENCODERS, spec.visual_encoder, "visual")
    audio_enc = encoders.resolve(encoders.AUDIO_ENCODERS, spec.audio_encoder, "audio")
    text_enc = encoders.resolve(encoders.TEXT_ENCODERS, spec.text_encoder, "text")

    frames, t_count = media.sample_frames(video, spec.segment_seconds)
    segments, rate = media.audio_segments(
        media.sidecar_audio_path(video), t_count, spec.segment_seconds
    )

    fine_grid = 2 * spec.grid
    visual = np.stack(
        [pool_2x2(visual_enc.encode(frame, fine_grid)) for frame in frames]
    )  # T x N x N x Dv
    visual = visual.reshape(t_count, spec.grid * spec.grid, -1)
    audio = np.stack([audio_enc.encode(chunk, rate) for chunk in segments])  # T x Da
    question = text_enc.encode(spec.question)  # K x Dt

    visual = _project_rows(visual, spec.dim, spec.projection_seed, "visual")
    audio = _project_rows(audio, spec.dim, spec.projection_seed, "audio")
    question = _project_rows(question, spec.dim, spec.projection_seed, "text")

    answer = spec.label if spec.label is not None else 0
    classes = spec.classes if spec.classes is not None else (answer + 1 if spec.label is not None else 1)
    sample_id = json.dumps(
        {
            "src": video.name,
            "enc": [spec.visual_encoder, spec.audio_encoder, spec.text_encoder],
            "proj_seed": spec.projection_seed,
            "labeled": spec.label is not None,
        },
        separators=(",", ":"), sort_keys=True,
    )
    return write_bundle_file(
        spec.out,
        audio=audio.astype(np.float32),
        visual=visual.astype(np.float32),
        question=question.astype(np.float32),
        answer=answer,
        classes=classes,
        sample_id=sample_id,
    )
