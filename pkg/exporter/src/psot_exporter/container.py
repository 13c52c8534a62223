"""Writer for the .psot feature-bundle container.

Independent implementation of the documented byte layout so the exporter
shares no code with the engine that reads these files: magic "PSOT1\\0",
little-endian u32 header fields (version=1, T, N2, d, K, C, answer,
sample_id_len), the UTF-8 sample id, one u8 scalar width, then the audio
(T*d), visual (T*N2*d), and question (K*d) payloads as row-major
little-endian IEEE floats.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ExportError

MAGIC = b"PSOT1\x00"
VERSION = 1


def encode_bundle(
    audio: np.ndarray,
    visual: np.ndarray,
    question: np.ndarray,
    answer: int,
    classes: int,
    sample_id: str,
    scalar_width: int = 4,
) -> bytes:
    if scalar_width not in (4, 8):
        raise ExportError(f"scalar width must be 4 or 8, got {scalar_width}")
    t_count, d = audio.shape
    if visual.shape[0] != t_count or visual.shape[2] != d or question.shape[1] != d:
        raise ExportError(
            f"inconsistent shapes: audio {audio.shape}, visual {visual.shape}, question {question.shape}"
        )
    if not 0 <= answer < classes:
        raise ExportError(f"answer {answer} out of range for {classes} classes")
    for name, arr in [("audio", audio), ("visual", visual), ("question", question)]:
        if not np.isfinite(arr).all():
            raise ExportError(f"{name} payload contains non-finite values")
    sid = sample_id.encode("utf-8")
    dtype = f"<f{scalar_width}"
    parts = [
        MAGIC,
        struct.pack(
            "<8I", VERSION, t_count, visual.shape[1], d, question.shape[0],
            classes, answer, len(sid),
        ),
        sid,
        struct.pack("<B", scalar_width),
        np.ascontiguousarray(audio, dtype=dtype).tobytes(),
        np.ascontiguousarray(visual, dtype=dtype).tobytes(),
        np.ascontiguousarray(question, dtype=dtype).tobytes(),
    ]
    return b"".join(parts)


def write_bundle_file(path, **kwargs) -> Path:
    path = Path(path)
    path.write_bytes(encode_bundle(**kwargs))
    return path
