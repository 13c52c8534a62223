"""Command-line entry points: gen, train, eval, ablate, viz, gradcheck.

Model and train configs are JSON files whose keys are the configuration field
names (all optional; `lambda` maps to the blend weight). Shape fields omitted
from a model config are filled in from the dataset being processed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, model
from .data import SyntheticSpec, generate_synthetic, read_bundle, read_dataset, write_dataset
from .errors import ConfigError, PsotError
from .model import ModelConfig, ablation_grids
from .numerics import gradient_check, precision


def _load_json(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _model_config(path, dataset=None) -> ModelConfig:
    raw = _load_json(path)
    shape_keys = {"T", "N", "d", "K", "C"}
    cfg = ModelConfig.from_json_dict(raw) if raw else ModelConfig()
    if dataset and not shape_keys & set(raw):
        cfg = cfg.for_bundle(dataset[0])
    cfg.validate()
    if dataset:
        cfg.check_bundle(dataset[0])
    return cfg


def _train_config(path) -> harness.TrainConfig:
    raw = _load_json(path)
    return harness.TrainConfig.from_json_dict(raw) if raw else harness.TrainConfig()


def cmd_gen(args) -> int:
    raw = _load_json(args.spec)
    known = {f.name for f in dataclasses.fields(SyntheticSpec)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown synthetic spec keys {sorted(unknown)}")
    spec = SyntheticSpec(**raw)
    bundles = generate_synthetic(spec, args.count)
    out = write_dataset(bundles, args.out)
    print(f"wrote {len(bundles)} bundles to {out}")
    return 0


def cmd_train(args) -> int:
    dataset = read_dataset(args.data)
    cfg = _model_config(args.model_config, dataset)
    train_cfg = _train_config(args.train_config)
    params, report = harness.train(dataset, cfg, train_cfg)
    harness.save_checkpoint(params, cfg, args.out)
    report_path = Path(args.out).with_suffix(Path(args.out).suffix + ".report.json")
    report_path.write_text(report.to_json() + "\n")
    print(f"final eval accuracy: {report.final_accuracy:.4f}")
    print(f"checkpoint: {args.out}")
    print(f"report: {report_path}")
    return 0


def cmd_eval(args) -> int:
    dataset = read_dataset(args.data)
    params, cfg = harness.load_checkpoint(args.ckpt)
    if args.model_config:
        cfg = _model_config(args.model_config, dataset)
    cfg.check_bundle(dataset[0])
    accuracy = harness.evaluate(dataset, params, cfg)
    print(f"accuracy: {accuracy:.4f} ({len(dataset)} samples)")
    return 0


def cmd_ablate(args) -> int:
    dataset = read_dataset(args.data)
    base = _model_config(args.model_config, dataset)
    train_cfg = _train_config(args.train_config)
    grids = ablation_grids(base)
    if args.grid not in grids:
        raise ConfigError(f"unknown grid {args.grid!r}; expected one of {sorted(grids)}")
    configs = [(f"{args.grid}/{name}", cfg) for name, cfg in grids[args.grid]]
    table = harness.run_ablations(dataset, configs, train_cfg)
    Path(args.out).write_text(table)
    print(f"wrote {len(configs)} rows to {args.out}")
    return 0


def cmd_viz(args) -> int:
    bundle = read_bundle(args.bundle)
    params, cfg = harness.load_checkpoint(args.ckpt)
    cfg.check_bundle(bundle)
    image = harness.visualize(
        bundle, params, cfg, args.segment, args.map, adjacency_source=args.adjacency_source
    )
    csv_path = Path(f"{args.out}.csv")
    pgm_path = Path(f"{args.out}.pgm")
    csv_path.write_text(image.csv_text)
    pgm_path.write_bytes(image.pgm_bytes)
    print(f"wrote {csv_path} and {pgm_path}")
    return 0


def cmd_gradcheck(args) -> int:
    shapes = dict(T=2, N=2, d=8, K=3, C=4) if args.tiny else dict(T=3, N=3, d=16, K=4, C=6)
    cfg = ModelConfig(**shapes, seed=17).validate()
    with precision("high"):
        spec = SyntheticSpec(
            seed=43, T=cfg.T, N=cfg.N, d=cfg.d, K=cfg.K, C=cfg.C,
            task="which_sounds_first", noise_sigma=0.1,
        )
        bundle = generate_synthetic(spec, 1)[0]
        bundle.audio = bundle.audio.astype(np.float64)
        bundle.visual = bundle.visual.astype(np.float64)
        bundle.question = bundle.question.astype(np.float64)
        params = model.init_parameters(cfg)
        report = gradient_check(
            lambda: model.loss(model.forward(bundle, params, cfg), bundle.answer),
            params, eps=1e-5, tol=1e-4,
        )
    print(report)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="JSON file of SyntheticSpec fields")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", required=True, type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--model-config", default=None)
    p.add_argument("--train-config", default=None)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--model-config", default=None, help="override the checkpoint's embedded config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train/evaluate one ablation configuration grid")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", required=True,
                   choices=["modules", "adjacency", "lambda", "r", "layers", "mma", "exec"])
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--model-config", default=None)
    p.add_argument("--train-config", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("viz", help="render a per-segment map as CSV + PGM")
    p.add_argument("--bundle", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--segment", required=True, type=int)
    p.add_argument("--map", required=True, choices=list(harness.VIZ_MAPS))
    p.add_argument("--adjacency-source", default="motion", choices=["motion", "sound"])
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("gradcheck", help="verify model gradients against finite differences")
    p.add_argument("--tiny", action="store_true", help="smallest verification shapes")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PsotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
