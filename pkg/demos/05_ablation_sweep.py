"""Sweep the module on/off grid on a small dataset and print the table.

Rows disable the motion, sound, and
question stages in turn, down to aggregation-only.
"""

from psot import ModelConfig, SyntheticSpec, TrainConfig, generate_synthetic, run_ablations
from psot.model import ablation_grids

spec = SyntheticSpec(seed=11, T=4, N=3, d=24, K=4, C=6,
                     task="which_sounds_first", noise_sigma=0.05)
bundles = generate_synthetic(spec, 128)
base = ModelConfig(T=4, N=3, d=24, K=4, C=6, seed=11).validate()
train_cfg = TrainConfig(seed=11, epochs=12, batch_size=16,
                        learning_rate=3e-3, decay_every_epochs=25).validate()

configs = [(name, cfg) for name, cfg in ablation_grids(base)["modules"]]
table = run_ablations(bundles, configs, train_cfg)

for line in table.splitlines():
    cells = line.split(",")
    print(f"{cells[0]:22s} {cells[-2]:>14s}")
