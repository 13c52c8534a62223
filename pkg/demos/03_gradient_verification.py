"""Verify the whole model's gradients against central finite differences.

Every learnable weight of the full pipeline is perturbed entry by entry in
64-bit mode and compared with the tape gradient. Runs in a few seconds.
"""

import numpy as np

from psot import (
    ModelConfig,
    SyntheticSpec,
    forward,
    generate_synthetic,
    gradient_check,
    init_parameters,
    loss,
    precision,
)

cfg = ModelConfig(T=2, N=2, d=8, K=3, C=4, seed=17).validate()

with precision("high"):
    spec = SyntheticSpec(seed=43, T=2, N=2, d=8, K=3, C=4,
                         task="which_sounds_first", noise_sigma=0.1)
    bundle = generate_synthetic(spec, 1)[0]
    bundle.audio = bundle.audio.astype(np.float64)
    bundle.visual = bundle.visual.astype(np.float64)
    bundle.question = bundle.question.astype(np.float64)

    params = init_parameters(cfg)
    print(f"checking {params.total_size()} parameter entries "
          f"across {len(params.names())} weight tensors...")
    report = gradient_check(
        lambda: loss(forward(bundle, params, cfg), bundle.answer),
        params, eps=1e-5, tol=1e-4,
    )

print(report)
print("\nworst entry per tensor:")
for name, err in sorted(report.per_param.items(), key=lambda kv: -kv[1])[:5]:
    print(f"  {name:24s} {err:.2e}")
