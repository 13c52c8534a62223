"""Frame sampling and sidecar audio loading.

Video frames come from OpenCV. Audio comes from a PCM WAV sidecar next to the
video (`clip.avi` -> `clip.wav`): containers are not demuxed here, so the
audio track travels as its own file.
"""

from __future__ import annotations

import wave
from pathlib import Path

import cv2
import numpy as np

from .errors import MediaError


def video_duration_and_fps(path) -> tuple[float, float]:
    cap = cv2.VideoCapture(str(path))
    try:
        if not cap.isOpened():
            raise MediaError(f"cannot open video {path}")
        fps = cap.get(cv2.CAP_PROP_FPS)
        frames = cap.get(cv2.CAP_PROP_FRAME_COUNT)
        if fps <= 0 or frames <= 0:
            raise MediaError(f"video {path} reports no frames (fps={fps}, frames={frames})")
        return frames / fps, fps
    finally:
        cap.release()


def sample_frames(path, segment_seconds: float) -> tuple[list[np.ndarray], int]:
    """One BGR frame at the start of each whole segment; returns (frames, T)."""
    if segment_seconds <= 0:
        raise MediaError(f"segment length must be positive, got {segment_seconds}")
    duration, fps = video_duration_and_fps(path)
    t_count = int(duration // segment_seconds)
    if t_count < 1:
        raise MediaError(
            f"video {path} is shorter than one segment ({duration:.2f}s < {segment_seconds}s)"
        )
    cap = cv2.VideoCapture(str(path))
    try:
        frames = []
        for t in range(t_count):
            index = min(round(t * segment_seconds * fps), int(cap.get(cv2.CAP_PROP_FRAME_COUNT)) - 1)
            cap.set(cv2.CAP_PROP_POS_FRAMES, index)
            ok, frame = cap.read()
            if not ok or frame is None:
                raise MediaError(f"failed to decode frame {index} of {path}")
            frames.append(frame)
        return frames, t_count
    finally:
        cap.release()


def sidecar_audio_path(video_path) -> Path:
    return Path(video_path).with_suffix(".wav")


def load_wav_mono(path) -> tuple[np.ndarray, int]:
    """16-bit PCM WAV as float samples in [-1, 1], channels averaged."""
    path = Path(path)
    if not path.exists():
        raise MediaError(f"audio sidecar {path} not found (expected next to the video)")
    try:
        with wave.open(str(path), "rb") as handle:
            width = handle.getsampwidth()
            if width != 2:
                raise MediaError(f"audio sidecar {path} must be 16-bit PCM, got width {width}")
            rate = handle.getframerate()
            channels = handle.getnchannels()
            raw = handle.readframes(handle.getnframes())
    except wave.Error as exc:
        raise MediaError(f"cannot parse audio sidecar {path}: {exc}") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def audio_segments(path, t_count: int, segment_seconds: float, window_seconds: float = 1.0):
    """A window_seconds slice of audio starting at each segment boundary."""
    samples, rate = load_wav_mono(path)
    window = int(round(window_seconds * rate))
    segments = []
    for t in range(t_count):
        start = int(round(t * segment_seconds * rate))
        chunk = samples[start : start + window]
        if chunk.size < window:
            raise MediaError(
                f"audio sidecar {path} too short: segment {t} needs samples up to "
                f"{(start + window) / rate:.2f}s, file has {samples.size / rate:.2f}s"
            )
        segments.append(chunk)
    return segments, rate
