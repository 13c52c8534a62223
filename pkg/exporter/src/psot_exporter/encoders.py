"""Pluggable feature encoders, looked up by identifier.

The built-in encoders are deterministic and fully offline: hand-made cell
statistics, spectra, and hashed word vectors, each lifted to its conventional
embedding width by a fixed seeded random projection. Identifiers for
pretrained hub models (CLIP / CLAP) resolve lazily and raise EncoderLoadError
when the backing libraries or weights are unavailable; their internals are
out of scope here and they are treated as black boxes.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from .errors import EncoderLoadError

VISUAL_DIM = 1024
AUDIO_DIM = 512
TEXT_DIM = 768


def _projection(seed_tag: str, src: int, dst: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.blake2b(seed_tag.encode(), digest_size=4).digest(), "little")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((src, dst)) / np.sqrt(src)


def _token_vector(token: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.blake2b(token.encode(), digest_size=4).digest(), "little")
    v = np.random.default_rng(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


class CellStatsVisualEncoder:
    """Per-cell color/gradient statistics projected to the visual width.

    Produces a grid x grid x 1024 feature map from one BGR frame.
    """

    dim = VISUAL_DIM

    def __init__(self):
        self._proj = _projection("cell-stats", 8, self.dim)

    def encode(self, frame: np.ndarray, grid: int) -> np.ndarray:
        img = frame.astype(np.float64) / 255.0
        gray = img.mean(axis=2)
        gx = np.abs(np.diff(gray, axis=1, append=gray[:, -1:]))
        gy = np.abs(np.diff(gray, axis=0, append=gray[-1:, :]))
        h, w = gray.shape
        ys = np.linspace(0, h, grid + 1).astype(int)
        xs = np.linspace(0, w, grid + 1).astype(int)
        stats = np.zeros((grid, grid, 8))
        for i in range(grid):
            for j in range(grid):
                cell = img[ys[i] : ys[i + 1], xs[j] : xs[j + 1]]
                gcell = gray[ys[i] : ys[i + 1], xs[j] : xs[j + 1]]
                stats[i, j] = [
                    cell[..., 0].mean(),
                    cell[..., 1].mean(),
                    cell[..., 2].mean(),
                    gcell.std(),
                    gx[ys[i] : ys[i + 1], xs[j] : xs[j + 1]].mean(),
                    gy[ys[i] : ys[i + 1], xs[j] : xs[j + 1]].mean(),
                    gcell.min(),
                    gcell.max(),
                ]
        return stats @ self._proj


class SpectralAudioEncoder:
    """Log-band FFT magnitudes projected to the audio width."""

    dim = AUDIO_DIM
    bands = 64

    def __init__(self):
        self._proj = _projection("spectral", self.bands, self.dim)

    def encode(self, samples: np.ndarray, rate: int) -> np.ndarray:
        spectrum = np.abs(np.fft.rfft(samples))
        edges = np.unique(
            np.geomspace(1, spectrum.size - 1, self.bands + 1).astype(int)
        )
        energies = np.zeros(self.bands)
        for b in range(min(self.bands, edges.size - 1)):
            energies[b] = np.log1p(spectrum[edges[b] : edges[b + 1]].sum())
        return energies @ self._proj


class HashedWordTextEncoder:
    """One deterministic unit vector per lowercased token."""

    dim = TEXT_DIM

    def encode(self, text: str) -> np.ndarray:
        tokens = re.findall(r"[a-z0-9']+", text.lower())
        if not tokens:
            raise EncoderLoadError(f"question text {text!r} has no tokens")
        return np.stack([_token_vector(tok, self.dim) for tok in tokens])


def _load_clip_visual():
    raise EncoderLoadError(
        "clip-vit-l/14 needs pretrained weights and a hub adapter; register one "
        "in VISUAL_ENCODERS or use the built-in 'cell-stats' encoder offline"
    )


def _load_clap_audio():
    raise EncoderLoadError(
        "clap needs pretrained weights and a hub adapter; register one in "
        "AUDIO_ENCODERS or use the built-in 'spectral' encoder offline"
    )


VISUAL_ENCODERS = {"cell-stats": CellStatsVisualEncoder, "clip-vit-l/14": _load_clip_visual}
AUDIO_ENCODERS = {"spectral": SpectralAudioEncoder, "clap": _load_clap_audio}
TEXT_ENCODERS = {"hashed-word": HashedWordTextEncoder}


def resolve(registry: dict, identifier: str, kind: str):
    try:
        factory = registry[identifier]
    except KeyError:
        raise EncoderLoadError(
            f"unknown {kind} encoder {identifier!r}; available: {sorted(registry)}"
        ) from None
    return factory()
