"""Adjacency construction and shared-weight graph propagation.

Every adjacency is the Gram matrix of (optionally activation-enhanced) node
features: patches scaled by a motion or sound map with the audio row left
unmodified, or raw patch/word features for the question graph. Propagation is
x -> ReLU(A x W) per layer with the adjacency held fixed; all functions accept
stacked leading axes so the per-segment graphs of one sample run as a single
batched product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numerics import Parameter, Tensor, concat, row_softmax


@dataclass
class GraphSpec:
    """One graph instance: node features, Gram adjacency, per-layer weights."""

    nodes: Tensor              # n x d
    adjacency: Tensor          # n x n, symmetric
    weights: list[Parameter]   # L entries, each d x d

    def __post_init__(self):
        n = self.nodes.shape[-2]
        if self.adjacency.shape[-2:] != (n, n):
            raise ShapeError(
                f"adjacency {self.adjacency.shape} does not match {n} nodes"
            )
        a = self.adjacency.data
        if not np.allclose(a, np.swapaxes(a, -1, -2), atol=1e-5):
            raise ShapeError("adjacency must be symmetric (a Gram matrix)")

    @property
    def layer_count(self) -> int:
        return len(self.weights)


def _with_audio_row(v: Tensor, a: Tensor) -> Tensor:
    """Stack patch rows and the audio feature as one node matrix."""
    audio_row = a.reshape(*a.shape[:-1], 1, a.shape[-1])
    return concat([v, audio_row], axis=-2)


def stack_audio_visual_nodes(v: Tensor, a: Tensor) -> Tensor:
    """[v_t; a_t]: the (N2+1) x d basic node matrix of one segment."""
    return _with_audio_row(v, a)


def build_motion_adjacency(v: Tensor, a: Tensor, m: Tensor) -> Tensor:
    """Gram matrix of [m * v; a]; the audio row uses the unmodified feature."""
    scaled = m.reshape(*m.shape, 1) * v
    x = _with_audio_row(scaled, a)
    return x @ x.mT


def build_sound_adjacency(v: Tensor, a: Tensor, s: Tensor) -> Tensor:
    """Gram matrix of [s * v; a], the sound-enhanced counterpart."""
    return build_motion_adjacency(v, a, s)


def build_vanilla_adjacency(v: Tensor, a: Tensor) -> Tensor:
    """Gram matrix of the raw [v; a] nodes (the unenhanced ablation variant)."""
    x = _with_audio_row(v, a)
    return x @ x.mT


def build_question_adjacency(v: Tensor, q: Tensor) -> Tensor:
    """Gram matrix of [v; q]: patch rows first, word rows appended."""
    if v.ndim > 2 and q.ndim == 2:
        q = q.broadcast_to(v.shape[:-2] + q.shape)
    x = concat([v, q], axis=-2)
    return x @ x.mT


def propagate(adjacency: Tensor, nodes: Tensor, weights, *, normalize_rows: bool = False) -> Tensor:
    """Run x -> ReLU(A x W) for each layer weight, adjacency fixed throughout."""
    x = nodes
    a = row_softmax(adjacency) if normalize_rows else adjacency
    for w in weights:
        value = w.value if isinstance(w, Parameter) else w
        x = (a @ x @ value).relu()
    return x


def graph_forward(g: GraphSpec) -> Tensor:
    """Propagate a single graph through all of its layers."""
    return propagate(g.adjacency, g.nodes, g.weights)


def fuse_parallel(nodes_m: Tensor, nodes_s: Tensor, fusion_weights: Parameter) -> Tensor:
    """Concatenate two branch outputs on the feature axis and map 2d -> d linearly."""
    if nodes_m.shape != nodes_s.shape:
        raise ShapeError(f"branch shapes differ: {nodes_m.shape} vs {nodes_s.shape}")
    w = fusion_weights.value if isinstance(fusion_weights, Parameter) else fusion_weights
    d = nodes_m.shape[-1]
    if w.shape != (2 * d, d):
        raise ShapeError(f"fusion weights must be {(2 * d, d)}, got {w.shape}")
    both = concat([nodes_m, nodes_s], axis=-1)
    return both @ w
