import math
import wave

import cv2
import numpy as np
import pytest

VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


def synthesize_clip(directory, name="clip", seconds=60, fps=10, size=96, sample_rate=8000):
    """A deterministic test clip: a bright square orbiting a dark background,
    with sine-burst audio whose pitch steps every few seconds."""
    video_path = directory / f"{name}.avi"
    writer = cv2.VideoWriter(
        str(video_path), cv2.VideoWriter_fourcc(*"MJPG"), float(fps), (size, size)
    )
    assert writer.isOpened()
    total = seconds * fps
    for i in range(total):
        frame = np.full((size, size, 3), 30, np.uint8)
        angle = 2 * math.pi * i / total
        cx = int(size / 2 + size / 3 * math.cos(angle))
        cy = int(size / 2 + size / 3 * math.sin(angle))
        cv2.rectangle(frame, (cx - 8, cy - 8), (cx + 8, cy + 8), (40, 200, 240), -1)
        writer.write(frame)
    writer.release()

    audio_path = directory / f"{name}.wav"
    t = np.arange(seconds * sample_rate) / sample_rate
    pitch = 220.0 * (1 + (t // 5) % 4)
    samples = (0.4 * np.sin(2 * math.pi * pitch * t) * 32767).astype("<i2")
    with wave.open(str(audio_path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(sample_rate)
        handle.writeframes(samples.tobytes())
    return video_path


@pytest.fixture(scope="session")
def clip_60s(tmp_path_factory):
    return synthesize_clip(tmp_path_factory.mktemp("media"))


@pytest.fixture(scope="session")
def clip_3s(tmp_path_factory):
    return synthesize_clip(tmp_path_factory.mktemp("short"), name="short", seconds=3)
