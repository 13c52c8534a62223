"""The full answer-prediction pipeline and its ablation grids.

Per segment, motion-driven and sound-driven graph branches run over the shared
audio-visual nodes (in parallel with a linear fusion, or serially), the
question stage drops low-relevance patches and propagates a patch-word graph,
and the aggregation stage runs three question-conditioned graphs whose
question-node outputs are summed, pooled over words, and mapped to answer
probabilities. Every supported ablation (module on/off, adjacency variant,
execution order, blend weight, retention ratio, depth, aggregation inputs) is
a configuration switch of this one function.

Stages are segment-stacked: the T per-segment graphs of one sample execute as
a single batched matrix product, which is numerically identical to a
per-segment loop (see tests).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from . import activations, graphs
from .activations import MotionMaps, RetentionMask, SoundMaps
from .data import FeatureBundle
from .errors import ConfigError
from .numerics import ParameterStore, Tensor, concat, cross_entropy, no_grad, row_softmax

EXEC_MODES = ("parallel", "m_then_s", "s_then_m")
ADJACENCY_MODES = ("driven", "vanilla")


@dataclass
class ModelConfig:
    """Shapes, hyperparameters, and every ablation switch.

    The hyperparameter defaults are the reference configuration: blend
    weight 0.2, retention ratio 0.8, and 3/3/2 graph layers for the motion,
    sound, and question stages. `lambda_` serializes as the JSON key "lambda".
    """

    T: int = 10
    N: int = 8
    d: int = 512
    K: int = 8
    C: int = 8
    lambda_: float = 0.2
    r: float = 0.8
    layers_m: int = 3
    layers_s: int = 3
    layers_q: int = 2
    layers_mma: int = 1
    exec_mode: str = "parallel"
    enable_mkpt: bool = True
    enable_skpt: bool = True
    enable_qkpt: bool = True
    adjacency_mode_m: str = "driven"
    adjacency_mode_s: str = "driven"
    mma_use_audio: bool = True
    mma_use_patch_visual: bool = True
    mma_use_segment_visual: bool = True
    qkpt_recompute_mask: bool = False
    # rebuilding raw Gram adjacencies from updated nodes compounds feature
    # magnitudes each layer; pair with adjacency_row_softmax to keep it bounded
    recompute_adjacency_per_layer: bool = False
    adjacency_row_softmax: bool = False
    mma_patch_graph_per_segment: bool = False
    seed: int = 0

    _JSON_ALIASES = {"lambda": "lambda_"}

    @property
    def n_patches(self) -> int:
        return self.N * self.N

    def validate(self) -> "ModelConfig":
        for name in ("T", "N", "d", "K", "C"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.T < 2:
            raise ConfigError("need at least two segments for motion")
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lambda_}")
        if not 0.0 < self.r <= 1.0:
            raise ConfigError(f"r must lie in (0, 1], got {self.r}")
        for name in ("layers_m", "layers_s", "layers_q", "layers_mma"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.exec_mode not in EXEC_MODES:
            raise ConfigError(f"exec_mode must be one of {EXEC_MODES}, got {self.exec_mode!r}")
        for name in ("adjacency_mode_m", "adjacency_mode_s"):
            if getattr(self, name) not in ADJACENCY_MODES:
                raise ConfigError(f"{name} must be one of {ADJACENCY_MODES}")
        if not (self.mma_use_audio or self.mma_use_patch_visual or self.mma_use_segment_visual):
            raise ConfigError("all aggregation inputs disabled: no evidence path to the answer")
        return self

    def to_json_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name.startswith("_"):
                continue
            key = "lambda" if f.name == "lambda_" else f.name
            out[key] = getattr(self, f.name)
        return out

    @classmethod
    def from_json_dict(cls, raw: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            name = cls._JSON_ALIASES.get(key, key)
            if name not in known or name.startswith("_"):
                raise ConfigError(f"unknown model config key {key!r}")
            kwargs[name] = value
        return cls(**kwargs).validate()

    def for_bundle(self, bundle: FeatureBundle) -> "ModelConfig":
        """Copy with the shape fields taken from a sample."""
        n = int(round(bundle.n_patches ** 0.5))
        if n * n != bundle.n_patches:
            raise ConfigError(f"bundle patch count {bundle.n_patches} is not a square grid")
        return dataclasses.replace(
            self, T=bundle.t_count, N=n, d=bundle.dim, K=bundle.words, C=bundle.classes
        )

    def check_bundle(self, bundle: FeatureBundle) -> None:
        got = (bundle.t_count, bundle.n_patches, bundle.dim, bundle.words)
        want = (self.T, self.n_patches, self.d, self.K)
        if got != want:
            raise ConfigError(f"bundle shapes (T, N2, d, K)={got} do not match config {want}")
        if bundle.classes != self.C:
            raise ConfigError(f"bundle has {bundle.classes} classes, config expects {self.C}")


@dataclass
class ForwardTrace:
    """Every intermediate a forward pass commits to: activation maps, the
    retention decision, updated features at each stage, and the probabilities."""

    motion: MotionMaps
    sound: SoundMaps
    mask: RetentionMask
    a_prime: Tensor   # T x d
    v_prime: Tensor   # T x N2 x d
    v_hat: Tensor     # T x N2 x d
    v_bar: Tensor     # T x d
    q_bar: Tensor     # K x d
    probs: Tensor     # C


def init_parameters(cfg: ModelConfig) -> ParameterStore:
    """Create every learnable weight, in a fixed order independent of the
    enable switches, so ablations share parameter counts and RNG streams."""
    cfg.validate()
    store = ParameterStore(seed=cfg.seed)
    bound = 1.0 / np.sqrt(cfg.d)
    for i in range(cfg.layers_m):
        store.add_uniform(f"mkpt.layer{i}", (cfg.d, cfg.d), bound)
    for i in range(cfg.layers_s):
        store.add_uniform(f"skpt.layer{i}", (cfg.d, cfg.d), bound)
    store.add_uniform("fusion.weight", (2 * cfg.d, cfg.d), bound)
    for i in range(cfg.layers_q):
        store.add_uniform(f"qkpt.layer{i}", (cfg.d, cfg.d), bound)
    for name in ("audio", "patch", "segment"):
        for i in range(cfg.layers_mma):
            store.add_uniform(f"mma.{name}.layer{i}", (cfg.d, cfg.d), bound)
    store.add_uniform("head.weight", (cfg.d, cfg.C), bound)
    store.add_zeros("head.bias", (cfg.C,))
    return store


def _layer_weights(params: ParameterStore, prefix: str, count: int) -> list:
    names = [f"{prefix}.layer{i}" for i in range(count)]
    missing = [n for n in names if n not in params]
    if missing:
        raise ConfigError(f"parameter store lacks {missing}; config and checkpoint disagree")
    return [params[n] for n in names]


def _propagate_av(cfg: ModelConfig, nodes, weights, build_adjacency):
    """Audio-visual branch propagation; optionally rebuilds the adjacency from
    the updated nodes before each layer."""
    if not cfg.recompute_adjacency_per_layer:
        return graphs.propagate(build_adjacency(nodes), nodes, weights,
                                normalize_rows=cfg.adjacency_row_softmax)
    x = nodes
    for w in weights:
        x = graphs.propagate(build_adjacency(x), x, [w],
                             normalize_rows=cfg.adjacency_row_softmax)
    return x


def _split_av(nodes, n2: int):
    return nodes[:, :n2, :], nodes[:, n2, :]


def _motion_branch(cfg: ModelConfig, v, a, params, maps: MotionMaps):
    weights = _layer_weights(params, "mkpt", cfg.layers_m)

    def build(nodes_in):
        nv, na = _split_av(nodes_in, cfg.n_patches)
        if cfg.adjacency_mode_m == "vanilla":
            return graphs.build_vanilla_adjacency(nv, na)
        local = activations.compute_local_motion(nv)
        m = activations.combine_motion(local, cfg.lambda_).m
        return graphs.build_motion_adjacency(nv, na, m)

    nodes = graphs.stack_audio_visual_nodes(v, a)

    # the fixed adjacency uses the precomputed maps so trace and edges agree
    def build_first(nodes_in):
        nv, na = _split_av(nodes_in, cfg.n_patches)
        if cfg.adjacency_mode_m == "vanilla":
            return graphs.build_vanilla_adjacency(nv, na)
        return graphs.build_motion_adjacency(nv, na, maps.m)

    builder = build_first if not cfg.recompute_adjacency_per_layer else build
    return _propagate_av(cfg, nodes, weights, builder)


def _sound_branch(cfg: ModelConfig, v, a, params, smaps: SoundMaps):
    weights = _layer_weights(params, "skpt", cfg.layers_s)

    def build(nodes_in):
        nv, na = _split_av(nodes_in, cfg.n_patches)
        if cfg.adjacency_mode_s == "vanilla":
            return graphs.build_vanilla_adjacency(nv, na)
        s = activations.compute_sound_activation(na, nv)
        return graphs.build_sound_adjacency(nv, na, s)

    def build_first(nodes_in):
        nv, na = _split_av(nodes_in, cfg.n_patches)
        if cfg.adjacency_mode_s == "vanilla":
            return graphs.build_vanilla_adjacency(nv, na)
        return graphs.build_sound_adjacency(nv, na, smaps.s)

    nodes = graphs.stack_audio_visual_nodes(v, a)
    builder = build_first if not cfg.recompute_adjacency_per_layer else build
    return _propagate_av(cfg, nodes, weights, builder)


def _audio_visual_stage(cfg: ModelConfig, v, a, params, maps, smaps):
    """M/S branches under the configured execution mode. Disabled stages are
    identity pass-throughs; fusion applies only when both parallel branches ran."""
    n2 = cfg.n_patches
    if cfg.exec_mode == "parallel" or not (cfg.enable_mkpt and cfg.enable_skpt):
        out_m = _motion_branch(cfg, v, a, params, maps) if cfg.enable_mkpt else None
        out_s = _sound_branch(cfg, v, a, params, smaps) if cfg.enable_skpt else None
        if out_m is not None and out_s is not None:
            fused = graphs.fuse_parallel(out_m, out_s, params["fusion.weight"])
        else:
            fused = out_m if out_m is not None else out_s
        if fused is None:
            return v, a
        return _split_av(fused, n2)

    if cfg.exec_mode == "m_then_s":
        first = _motion_branch(cfg, v, a, params, maps)
        v1, a1 = _split_av(first, n2)
        # the second module rebuilds its activation map from the updated features
        s1 = activations.compute_sound_activation(a1, v1)
        second = _sound_branch(cfg, v1, a1, params, SoundMaps(s=s1))
        return _split_av(second, n2)

    first = _sound_branch(cfg, v, a, params, smaps)
    v1, a1 = _split_av(first, n2)
    local1 = activations.compute_local_motion(v1)
    maps1 = activations.combine_motion(local1, cfg.lambda_)
    second = _motion_branch(cfg, v1, a1, params, maps1)
    return _split_av(second, n2)


def _question_stage(cfg: ModelConfig, v_prime, q, params):
    """Retention masking plus the patch-word graph. Dropped patch rows are
    re-zeroed after every layer so they stay exactly zero and carry no gradient."""
    with no_grad():
        alpha = activations.compute_question_similarity(q.detach(), v_prime.detach())
    if not cfg.enable_qkpt:
        mask = RetentionMask(alpha=alpha, beta=Tensor(np.ones(alpha.shape)), r=1.0)
        return v_prime, mask
    beta = activations.topr_mask(alpha, cfg.r)
    keep = beta.data[..., None]
    word_keep = np.ones((cfg.T, cfg.K, 1), dtype=keep.dtype)
    full_keep = Tensor(np.concatenate([keep, word_keep], axis=1))

    masked_v = Tensor(keep) * v_prime
    q_rows = q.broadcast_to((cfg.T, cfg.K, cfg.d))
    x = concat([masked_v, q_rows], axis=1)
    adjacency = graphs.build_question_adjacency(masked_v, q)
    weights = _layer_weights(params, "qkpt", cfg.layers_q)
    for w in weights:
        if cfg.recompute_adjacency_per_layer:
            adjacency = x @ x.mT
        a = row_softmax(adjacency) if cfg.adjacency_row_softmax else adjacency
        x = (a @ x @ w.value).relu() * full_keep
        if cfg.qkpt_recompute_mask:
            with no_grad():
                alpha = activations.compute_question_similarity(
                    Tensor(x.data[:, cfg.n_patches :, :]), Tensor(x.data[:, : cfg.n_patches, :])
                )
            beta = activations.topr_mask(alpha, cfg.r)
            keep = beta.data[..., None]
            full_keep = Tensor(np.concatenate([keep, word_keep], axis=1))
            x = x * full_keep
    v_hat = x[:, : cfg.n_patches, :]
    return v_hat, RetentionMask(alpha=alpha, beta=beta, r=cfg.r)


def _mma_graph(cfg: ModelConfig, q, context, params, name: str):
    """One question-conditioned aggregation graph; returns the K question rows."""
    weights = _layer_weights(params, f"mma.{name}", cfg.layers_mma)
    if context.ndim == 2:
        nodes = concat([q, context], axis=0)
        adjacency = nodes @ nodes.mT
        out = graphs.propagate(adjacency, nodes, weights, normalize_rows=cfg.adjacency_row_softmax)
        return out[: cfg.K, :]
    # stacked per-segment variant: shared weights, question rows averaged over segments
    q_rows = q.broadcast_to((context.shape[0], cfg.K, cfg.d))
    nodes = concat([q_rows, context], axis=1)
    adjacency = nodes @ nodes.mT
    out = graphs.propagate(adjacency, nodes, weights, normalize_rows=cfg.adjacency_row_softmax)
    return out[:, : cfg.K, :].mean(axis=0)


def forward(bundle: FeatureBundle, params: ParameterStore, cfg: ModelConfig) -> ForwardTrace:
    """Run the whole pipeline on one sample and return every intermediate."""
    cfg.validate()
    cfg.check_bundle(bundle)
    v = Tensor(bundle.visual)
    a = Tensor(bundle.audio)
    q = Tensor(bundle.question)

    maps = activations.combine_motion(activations.compute_local_motion(v), cfg.lambda_)
    smaps = SoundMaps(s=activations.compute_sound_activation(a, v))

    v_prime, a_prime = _audio_visual_stage(cfg, v, a, params, maps, smaps)
    v_hat, mask = _question_stage(cfg, v_prime, q, params)
    v_bar = v_hat.mean(axis=1)

    blocks = []
    if cfg.mma_use_audio:
        blocks.append(_mma_graph(cfg, q, a_prime, params, "audio"))
    if cfg.mma_use_patch_visual:
        patch_context = v_hat if cfg.mma_patch_graph_per_segment else v_hat.reshape(
            cfg.T * cfg.n_patches, cfg.d
        )
        blocks.append(_mma_graph(cfg, q, patch_context, params, "patch"))
    if cfg.mma_use_segment_visual:
        blocks.append(_mma_graph(cfg, q, v_bar, params, "segment"))
    if not blocks:
        raise ConfigError("all aggregation inputs disabled: no evidence path to the answer")

    q_bar = blocks[0]
    for block in blocks[1:]:
        q_bar = q_bar + block
    pooled = q_bar.mean(axis=0).reshape(1, cfg.d)
    logits = pooled @ params["head.weight"].value + params["head.bias"].value
    probs = row_softmax(logits).reshape(cfg.C)

    return ForwardTrace(
        motion=maps, sound=smaps, mask=mask,
        a_prime=a_prime, v_prime=v_prime, v_hat=v_hat, v_bar=v_bar,
        q_bar=q_bar, probs=probs,
    )


def loss(trace: ForwardTrace, label: int) -> Tensor:
    """Cross-entropy of the predicted probabilities against the label."""
    return cross_entropy(trace.probs, label)


# -- ablation grids -----------------------------------------------------------------


def ablation_grids(base: ModelConfig) -> dict[str, list[tuple[str, ModelConfig]]]:
    """The standard ablation grids, keyed by sweep name."""

    def variant(**overrides) -> ModelConfig:
        return dataclasses.replace(base, **overrides).validate()

    grids: dict[str, list[tuple[str, ModelConfig]]] = {}
    grids["modules"] = [
        ("a_full", variant()),
        ("b_no_mkpt", variant(enable_mkpt=False)),
        ("c_no_skpt", variant(enable_skpt=False)),
        ("d_no_qkpt", variant(enable_qkpt=False)),
        ("e_no_mkpt_skpt", variant(enable_mkpt=False, enable_skpt=False)),
        ("f_aggregation_only", variant(enable_mkpt=False, enable_skpt=False, enable_qkpt=False)),
    ]
    grids["adjacency"] = [
        ("a_both_driven", variant()),
        ("b_vanilla_motion", variant(adjacency_mode_m="vanilla")),
        ("c_vanilla_sound", variant(adjacency_mode_s="vanilla")),
        ("d_both_vanilla", variant(adjacency_mode_m="vanilla", adjacency_mode_s="vanilla")),
    ]
    grids["exec"] = [
        ("a_m_then_s", variant(exec_mode="m_then_s")),
        ("b_s_then_m", variant(exec_mode="s_then_m")),
        ("c_parallel", variant(exec_mode="parallel")),
    ]
    grids["lambda"] = [
        (f"{chr(ord('a') + i)}_lambda_{value:g}", variant(lambda_=value))
        for i, value in enumerate([0.0, 0.2, 0.4, 0.8, 1.0])
    ]
    grids["r"] = [
        (f"{chr(ord('a') + i)}_r_{value:g}", variant(r=value))
        for i, value in enumerate([1.0, 0.8, 0.6, 0.4, 0.2])
    ]
    layers = []
    for which in ("m", "s", "q"):
        for depth in range(1, 6):
            layers.append((f"{which}_layers_{depth}", variant(**{f"layers_{which}": depth})))
    grids["layers"] = layers
    grids["mma"] = [
        ("a_full", variant()),
        ("b_no_audio", variant(mma_use_audio=False)),
        ("c_no_segment_visual", variant(mma_use_segment_visual=False)),
        ("d_no_patch_visual", variant(mma_use_patch_visual=False)),
    ]
    return grids


def ablation_matrix(base: ModelConfig) -> list[tuple[str, ModelConfig]]:
    """All grids flattened to (grid/name, config) rows."""
    rows = []
    for grid, entries in ablation_grids(base).items():
        for name, cfg in entries:
            rows.append((f"{grid}/{name}", cfg))
    return rows


def config_fingerprint(cfg: ModelConfig, extra: dict | None = None) -> str:
    """Stable hash of a configuration (plus optional training constants)."""
    import hashlib

    payload = {"model": cfg.to_json_dict()}
    if extra:
        payload["extra"] = extra
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
