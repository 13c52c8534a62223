"""Patch-level sounding-object tracking for audio-visual question answering.

A numpy-backed engine with hand-verified reverse-mode gradients: motion-,
sound-, and question-driven key-patch graph stages feeding a multimodal
aggregation head, plus a synthetic scene generator, binary feature-bundle
container, training harness, and visualization tools.
"""

from .activations import (
    MotionMaps,
    RetentionMask,
    SoundMaps,
    combine_motion,
    compute_local_motion,
    compute_question_similarity,
    compute_sound_activation,
    topr_mask,
)
from .data import (
    FeatureBundle,
    SyntheticSpec,
    generate_synthetic,
    read_bundle,
    read_dataset,
    split_and_batch,
    write_bundle,
    write_dataset,
)
from .errors import ConfigError, PsotError, ShapeError, TrainingDivergedError
from .graphs import (
    GraphSpec,
    build_motion_adjacency,
    build_question_adjacency,
    build_sound_adjacency,
    build_vanilla_adjacency,
    fuse_parallel,
    graph_forward,
)
from .harness import (
    RunReport,
    TrainConfig,
    evaluate,
    load_checkpoint,
    run_ablations,
    save_checkpoint,
    train,
    visualize,
)
from .model import (
    ForwardTrace,
    ModelConfig,
    ablation_grids,
    ablation_matrix,
    forward,
    init_parameters,
    loss,
)
from .numerics import (
    Parameter,
    ParameterStore,
    Tensor,
    cosine_similarity,
    cross_entropy,
    gradient_check,
    matmul,
    no_grad,
    precision,
    relu,
    row_softmax,
)

__version__ = "0.1.0"
