"""Activation and selection maps driving the graph stages.

Motion intensity (one minus the patch-wise cosine between adjacent frames),
its local/global blend, the audio-to-patch sound activation, the word-averaged
question-to-patch similarity, and the top-r retention mask. All map builders
accept stacked leading axes and stay on the gradient tape; only the retention
mask is a hard selection and is therefore constant under differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import Tensor, concat

EPS = 1e-8


@dataclass
class MotionMaps:
    """Per-segment motion intensity, its temporal mean, and their blend."""

    rho: Tensor      # T x N2, entries in [0, 2]
    mu_bar: Tensor   # N2
    m: Tensor        # T x N2, (1 - lam) * rho + lam * mu_bar
    lam: float


@dataclass
class SoundMaps:
    """Audio-to-patch cosine activation per segment."""

    s: Tensor  # T x N2, entries in [-1, 1]


@dataclass
class RetentionMask:
    """Question similarity per patch and the binary keep/drop decision."""

    alpha: Tensor  # T x N2
    beta: Tensor   # T x N2, entries in {0, 1}
    r: float


def _clamped_norm(x: Tensor, axis: int = -1) -> Tensor:
    return (x * x).sum(axis=axis, keepdims=True).sqrt().clamp_min(EPS)


def rowwise_cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine along the last axis with broadcasting over leading axes."""
    dot = (a * b).sum(axis=-1, keepdims=True)
    out = dot / (_clamped_norm(a) * _clamped_norm(b))
    return out[..., 0]


def compute_local_motion(v: Tensor) -> Tensor:
    """Patch-wise motion intensity 1 - cos(v_t, v_{t+1}); the last segment
    replicates its predecessor so the map keeps shape T x N2."""
    if v.ndim != 3:
        raise ConfigError(f"expected visual features of shape T x N2 x d, got {v.shape}")
    t = v.shape[0]
    if t < 2:
        raise ConfigError(f"motion is undefined for a single segment (T={t})")
    rho = 1.0 - rowwise_cosine(v[:-1], v[1:])
    return concat([rho, rho[t - 2 : t - 1]], axis=0)


def combine_motion(rho: Tensor, lam: float) -> MotionMaps:
    """Blend local motion with its temporal mean: (1 - lam) * rho + lam * mean_t(rho)."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"motion blend weight must lie in [0, 1], got {lam}")
    mu_bar = rho.mean(axis=0)
    m = (1.0 - lam) * rho + lam * mu_bar
    return MotionMaps(rho=rho, mu_bar=mu_bar, m=m, lam=float(lam))


def compute_sound_activation(a: Tensor, v: Tensor) -> Tensor:
    """Cosine of the segment audio feature against every patch feature."""
    return rowwise_cosine(v, a.reshape(*a.shape[:-1], 1, a.shape[-1]))


def compute_question_similarity(q: Tensor, v: Tensor) -> Tensor:
    """Mean over words of the word/patch cosine: q is K x d, v is ... x N2 x d."""
    qn = q / _clamped_norm(q)
    vn = v / _clamped_norm(v)
    cos = qn @ vn.mT  # ... x K x N2
    return cos.mean(axis=-2)


def retained_count(n_patches: int, r: float) -> int:
    if not 0.0 < r <= 1.0:
        raise ConfigError(f"retention ratio must lie in (0, 1], got {r}")
    return math.ceil(n_patches * r)


def topr_mask(alpha: Tensor, r: float) -> Tensor:
    """Binary mask keeping the ceil(N2 * r) largest entries per row; ties keep
    the lower patch index. The mask is a constant (no gradient path)."""
    values = np.asarray(alpha.data)
    n = values.shape[-1]
    k = retained_count(n, r)
    flat = values.reshape(-1, n)
    mask = np.zeros_like(flat)
    for row, m_row in zip(flat, mask):
        order = np.argsort(-row, kind="stable")
        m_row[order[:k]] = 1.0
    return Tensor(mask.reshape(values.shape))


def retention_mask(q: Tensor, v: Tensor, r: float) -> RetentionMask:
    """Question-to-patch similarity plus its top-r keep/drop mask."""
    alpha = compute_question_similarity(q, v)
    beta = topr_mask(alpha, r)
    return RetentionMask(alpha=alpha, beta=beta, r=float(r))
