"""Walk through the three activation maps on a synthetic scene.

A scene where patch #answer moves while everything else stays still: the
motion map lights up exactly there, the sound map lights up on audio-aligned
patches, and the question-similarity mask keeps the most relevant patches.
"""

import numpy as np

from psot import (
    SyntheticSpec,
    Tensor,
    combine_motion,
    compute_local_motion,
    compute_sound_activation,
    generate_synthetic,
    topr_mask,
)

spec = SyntheticSpec(seed=3, T=4, N=4, d=32, K=6, C=8, task="which_moves", noise_sigma=0.0)
bundle = generate_synthetic(spec, 1)[0]
print(f"sample {bundle.sample_id}: the moving patch is #{bundle.answer}")

# local motion (one minus the cosine between the same patch in adjacent frames)
rho = compute_local_motion(Tensor(bundle.visual))
maps = combine_motion(rho, 0.2)
print("\nper-patch mean motion intensity (4x4 grid):")
print(maps.m.data.mean(axis=0).reshape(4, 4).round(3))
print(f"argmax = patch #{int(np.argmax(maps.m.data.mean(axis=0)))}")

# sound activation of the first segment: cosine of audio against every patch
s = compute_sound_activation(Tensor(bundle.audio[0]), Tensor(bundle.visual[0]))
print("\nsound activation, segment 0 (4x4 grid):")
print(s.data.reshape(4, 4).round(3))

# retention: keep the top 50% of patches by (here: synthetic) relevance scores
alpha = np.linspace(1.0, 0.0, 16)
beta = topr_mask(Tensor(alpha), 0.5)
print("\ntop-50% retention of a descending relevance ramp:")
print(beta.data.reshape(4, 4))
