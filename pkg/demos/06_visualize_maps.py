"""Render per-segment heat maps (CSV + PGM) for qualitative inspection.

Writes motion, sound, retention-mask, and adjacency-weight maps for one
segment of a synthetic scene into ./maps_out/.
"""

from pathlib import Path

from psot import ModelConfig, SyntheticSpec, generate_synthetic, init_parameters, visualize

spec = SyntheticSpec(seed=21, T=4, N=4, d=32, K=6, C=8,
                     task="which_sounds_first", noise_sigma=0.02)
bundle = generate_synthetic(spec, 1)[0]
cfg = ModelConfig(T=4, N=4, d=32, K=6, C=8, seed=21).validate()
params = init_parameters(cfg)

out = Path("maps_out")
out.mkdir(exist_ok=True)
for which in ("motion", "sound", "mask", "adjacency_weight"):
    image = visualize(bundle, params, cfg, segment=1, which=which)
    (out / f"{which}.csv").write_text(image.csv_text)
    (out / f"{which}.pgm").write_bytes(image.pgm_bytes)
    print(f"{which:17s} min={image.values.min():+.3f} max={image.values.max():+.3f}")
print(f"\nanswer patch is #{bundle.answer}; maps written to {out}/")
