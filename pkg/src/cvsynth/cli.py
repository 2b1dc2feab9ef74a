"""Command-line entry point.

Subcommands: dump-kernel, dump-views, dump-tokens, gradcheck, train-toy,
eval, ablate. Every run writes its outputs plus the exact effective
config under --out, so the same argv and seed reproduce the same bytes.
Exit codes: 0 success, 1 validation failure, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import ModelConfig, load_config, save_config
from .errors import ConfigError, CvsynthError, DimensionError, ParameterError
from .fusion import encode_view, make_token_set
from .geometry import kernel_table, rotated_kernels
from .metrics import MetricReport, evaluate_labels
from .pipeline import CompletionModel, ablate, evaluate, train_toy
from .scenes import (
    SceneSample,
    dump_label_grid,
    generate_scene,
    load_scene,
    save_scene,
)
from .synthesis import FeatureVolume, synth_forward
from .tensor import Tensor
from .tensorfile import load_tensor, save_tensor

_VALIDATION_ERRORS = (ConfigError, ParameterError, DimensionError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_deg(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--deg expects 'x,y,z' degrees, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"--deg expects numbers, got {text!r}") from exc


def _effective_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CVS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"CVS_SEED={env!r} is not an integer") from exc
    return 0


def _effective_config(args) -> ModelConfig:
    config = load_config(args.config) if args.config else ModelConfig()
    overrides = list(args.set or [])
    overrides.append(f"seed={_effective_seed(args)}")
    if getattr(args, "fusion", None):
        overrides.append(f"fusion={args.fusion}")
    if getattr(args, "aggregate", None):
        overrides.append(f"aggregate={args.aggregate}")
    if getattr(args, "no_attn_scale", False):
        overrides.append("attn_scale=false")
    return config.with_overrides(overrides)


def _out_dir(args, default: str) -> Path:
    out = Path(args.out if args.out else default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_metrics(out: Path, report: MetricReport) -> None:
    _write_json(out / "metrics.json", report.to_dict())
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        classes = sorted(report.class_iou)
        writer.writerow(["sc_precision", "sc_recall", "sc_iou", "ssc_miou"]
                        + [f"iou_class_{c}" for c in classes])
        writer.writerow([f"{report.sc_precision:.6f}", f"{report.sc_recall:.6f}",
                         f"{report.sc_iou:.6f}", f"{report.mean_iou:.6f}"]
                        + [f"{report.class_iou[c]:.6f}" for c in classes])


def _scene_for(config: ModelConfig, seed: int, boxes: int) -> SceneSample:
    return generate_scene(seed, config.volume_shape,
                          num_classes=config.num_classes, box_count=boxes)


# -- subcommands -------------------------------------------------------------

def _cmd_dump_kernel(args) -> int:
    degs = [_parse_deg(d) for d in args.deg] if args.deg else [(0.0, 0.0, 0.0)]
    kernels = rotated_kernels(args.K, degs)
    table = kernel_table(kernels)
    out = _out_dir(args, "out/dump-kernel")
    (out / "kernel.txt").write_text(table)
    _write_json(out / "config.json", {"K": args.K, "deg": [list(d) for d in degs],
                                      "seed": _effective_seed(args)})
    sys.stdout.write(table)
    return 0


def _build_feature_volume(config: ModelConfig, model: CompletionModel,
                          sample: SceneSample) -> np.ndarray:
    x = model.sem_proj.forward(sample.semantics.data) + \
        model.geo_proj.forward(sample.geometry.data)
    for block in model.down:
        x = block.forward(x)
    return x


def _cmd_dump_views(args) -> int:
    config = _effective_config(args)
    out = _out_dir(args, "out/dump-views")
    save_config(out / "config.json", config)
    model = CompletionModel(config)
    sample = _scene_for(config, args.scene_seed, args.boxes)
    feats = _build_feature_volume(config, model, sample)
    volume = FeatureVolume(Tensor(feats, check=False), role="original")
    for r, view in enumerate(synth_forward(volume, model.synth)):
        save_tensor(out / f"view_{r}.cvst", view.tensor)
        spec = model.synth.kernels[r].spec
        _write_json(out / f"view_{r}.json", {
            "view": r,
            "degrees": [spec.theta_x, spec.theta_y, spec.theta_z],
            "lattice_exact": model.synth.kernels[r].lattice_exact,
        })
    print(f"wrote {model.synth.num_views} synthetic-view maps to {out}")
    return 0


def _cmd_dump_tokens(args) -> int:
    config = _effective_config(args)
    if config.fusion != "all-for-one-tokens":
        raise ConfigError(
            f"dump-tokens requires the token fusion scheme, config has {config.fusion!r}"
        )
    out = _out_dir(args, "out/dump-tokens")
    save_config(out / "config.json", config)
    model = CompletionModel(config)
    sample = _scene_for(config, args.scene_seed, args.boxes)
    feats = _build_feature_volume(config, model, sample)
    volume = FeatureVolume(Tensor(feats, check=False), role="original")
    views = synth_forward(volume, model.synth)
    tokens = [encode_view(v, enc) for v, enc in zip(views, model.cvtr.encoders)]
    token_set = make_token_set(tokens)
    for r, token in enumerate(token_set.tokens):
        save_tensor(out / f"token_{r}.cvst", token)
        spec = model.synth.kernels[r].spec
        _write_json(out / f"token_{r}.json", {
            "view": r,
            "degrees": [spec.theta_x, spec.theta_y, spec.theta_z],
            "token_size": config.token_size,
        })
    save_tensor(out / "tokens_concat.cvst", token_set.concatenated)
    print(f"wrote {len(tokens)} view tokens to {out}")
    return 0


def _gradcheck_battery(config: ModelConfig, module: str, seed: int):
    from . import gradcheck_suites

    return gradcheck_suites.run(config, module, seed)


def _cmd_gradcheck(args) -> int:
    config = _effective_config(args)
    out = _out_dir(args, "out/gradcheck")
    save_config(out / "config.json", config)
    reports = _gradcheck_battery(config, args.module, config.seed)
    lines = []
    all_passed = True
    for report in reports:
        line = str(report)
        print(line)
        lines.append(line)
        all_passed &= report.passed
    (out / "gradcheck.txt").write_text("\n".join(lines) + "\n")
    if not all_passed:
        print("gradient check FAILED", file=sys.stderr)
        return 2
    return 0


def _save_params(out: Path, model: CompletionModel) -> None:
    pdir = out / "params"
    pdir.mkdir(parents=True, exist_ok=True)
    names = []
    for name, tensor in model.params():
        fname = name.replace("/", "_") + ".cvst"
        save_tensor(pdir / fname, tensor)
        names.append(name)
    _write_json(pdir / "manifest.json", {"params": names})


def _load_params(params_dir: Path, model: CompletionModel) -> None:
    manifest = json.loads((params_dir / "manifest.json").read_text())
    stored = manifest["params"]
    expected = [name for name, _ in model.params()]
    if stored != expected:
        raise ConfigError("stored parameters do not match the model configuration")
    for name, tensor in model.params():
        data = load_tensor(params_dir / (name.replace("/", "_") + ".cvst")).data
        if data.shape != tensor.data.shape:
            raise DimensionError(f"parameter {name}: stored {data.shape}, "
                                 f"model {tensor.data.shape}")
        tensor.data[...] = data


def _cmd_train_toy(args) -> int:
    config = _effective_config(args)
    out = _out_dir(args, "out/train-toy")
    save_config(out / "config.json", config)
    scenes = [_scene_for(config, args.scene_seed + i, args.boxes)
              for i in range(args.scenes)]
    result = train_toy(scenes, config, steps=args.steps, lr=args.lr,
                       momentum=args.momentum, weight_decay=args.weight_decay,
                       poly_power=args.poly_power)
    with open(out / "train_log.jsonl", "w") as fh:
        for entry in result.log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    _write_metrics(out, result.report)
    _save_params(out, result.model)
    for i, scene in enumerate(scenes):
        save_scene(out / f"scene_{i}", scene)
    print(f"final loss {result.final_loss:.6f}, "
          f"SC-IoU {result.report.sc_iou:.4f}, SSC-mIoU {result.report.mean_iou:.4f}")
    return 0


def _cmd_eval(args) -> int:
    out = _out_dir(args, "out/eval")
    if args.pred:
        if not args.labels:
            raise ConfigError("--pred requires --labels")
        pred = load_tensor(args.pred).data.astype(np.int64)
        labels = load_tensor(args.labels).data.astype(np.int64)
        num_classes = int(max(pred.max(), labels.max())) + 1
        ignore = (load_tensor(args.ignore).data.astype(bool)
                  if args.ignore else np.zeros(labels.shape, dtype=bool))
        occluded = (load_tensor(args.occluded).data.astype(bool)
                    if args.occluded else np.ones(labels.shape, dtype=bool))
        sample = SceneSample(
            semantics=Tensor(np.zeros(labels.shape + (num_classes,))),
            geometry=Tensor(np.zeros(labels.shape + (1,))),
            labels=labels, ignore=ignore, occluded=occluded,
            num_classes=num_classes, seed=0,
        )
        report = evaluate_labels(pred, sample)
        _write_json(out / "config.json", {"pred": args.pred, "labels": args.labels})
    else:
        if not args.run:
            raise ConfigError("eval needs either --pred/--labels or --run")
        run_dir = Path(args.run)
        config = load_config(run_dir / "config.json")
        save_config(out / "config.json", config)
        model = CompletionModel(config)
        _load_params(run_dir / "params", model)
        if args.scene:
            scenes = [load_scene(args.scene)]
        else:
            seed = args.scene_seed if args.scene_seed is not None else config.seed
            scenes = [_scene_for(config, seed, args.boxes)]
        report = evaluate(model, scenes)
        for i, scene in enumerate(scenes):
            pred = model.predict(scene)
            save_tensor(out / f"pred_{i}.cvst", pred.astype(np.float64))
            dump_label_grid(out / f"pred_{i}.csv", pred)
    _write_metrics(out, report)
    print(f"SC-IoU {report.sc_iou:.4f}, SSC-mIoU {report.mean_iou:.4f}")
    return 0


def _cmd_ablate(args) -> int:
    config = _effective_config(args)
    out = _out_dir(args, "out/ablate")
    save_config(out / "config.json", config)
    train_scenes = [_scene_for(config, args.scene_seed + i, args.boxes)
                    for i in range(args.train_scenes)]
    eval_scenes = [_scene_for(config, args.scene_seed + 1000 + i, args.boxes)
                   for i in range(args.eval_scenes)]
    grids = tuple(args.grids.split(",")) if args.grids else ("components", "views", "fusion")
    for grid in grids:
        if grid not in ("components", "views", "fusion"):
            raise ConfigError(f"unknown ablation grid {grid!r}")
    rows = ablate(config, train_scenes, eval_scenes, steps=args.steps,
                  lr=args.lr, momentum=args.momentum, grids=grids,
                  keep_predictions=args.dump_volumes)
    classes = list(range(1, config.num_classes))
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "sc_iou", "ssc_miou"]
                        + [f"iou_class_{c}" for c in classes])
        for row in rows:
            writer.writerow(
                [row.variant, f"{row.report.sc_iou:.6f}", f"{row.report.mean_iou:.6f}"]
                + [f"{row.report.class_iou.get(c, 0.0):.6f}" for c in classes]
            )
    if args.dump_volumes:
        for i, scene in enumerate(eval_scenes):
            save_scene(out / f"eval_scene_{i}", scene)
        for row in rows:
            vdir = out / "volumes" / row.variant.replace("/", "_")
            vdir.mkdir(parents=True, exist_ok=True)
            for i, pred in enumerate(row.predictions):
                save_tensor(vdir / f"pred_{i}.cvst", pred.astype(np.float64))
    print(f"wrote {len(rows)} ablation rows to {out / 'report.csv'}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cvsynth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override (repeatable)")
        p.add_argument("--seed", type=int, default=None,
                       help="seed (falls back to CVS_SEED, then 0)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--fusion", choices=["all", "all-for-one-features",
                                            "all-for-one-tokens"],
                       help="cross-view fusion scheme")
        p.add_argument("--aggregate", choices=["sum", "concat"],
                       help="how augmented maps enter the decoder")
        p.add_argument("--no-attn-scale", action="store_true",
                       help="drop the 1/sqrt(C) attention logit scaling")

    p = sub.add_parser("dump-kernel", help="tabulate rotated kernel points")
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--deg", action="append", metavar="X,Y,Z",
                   help="rotation degrees (repeatable, one per view)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_dump_kernel)

    p = sub.add_parser("dump-views", help="dump synthetic-view feature maps")
    common(p)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--boxes", type=int, default=2)
    p.set_defaults(func=_cmd_dump_views)

    p = sub.add_parser("dump-tokens", help="dump view tokens and their concatenation")
    common(p)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--boxes", type=int, default=2)
    p.set_defaults(func=_cmd_dump_tokens)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)
    p.add_argument("--module", choices=["all", "mvfs", "cvtr", "pipeline"],
                   default="all")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("train-toy", help="memorize synthetic scenes with SGD")
    common(p)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--poly-power", type=float, default=0.0)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--boxes", type=int, default=2)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("eval", help="evaluate predictions or a trained run")
    common(p)
    p.add_argument("--run", help="train-toy output directory")
    p.add_argument("--scene", help="scene directory (from a previous run)")
    p.add_argument("--scene-seed", type=int, default=None)
    p.add_argument("--boxes", type=int, default=2)
    p.add_argument("--pred", help="predicted-labels tensor file")
    p.add_argument("--labels", help="ground-truth labels tensor file")
    p.add_argument("--ignore", help="ignore-mask tensor file")
    p.add_argument("--occluded", help="occluded-mask tensor file")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="component / view-count / fusion grids")
    common(p)
    p.add_argument("--steps", type=int, default=150)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--train-scenes", type=int, default=3)
    p.add_argument("--eval-scenes", type=int, default=2)
    p.add_argument("--boxes", type=int, default=2)
    p.add_argument("--grids", help="comma list: components,views,fusion")
    p.add_argument("--dump-volumes", action="store_true",
                   help="also dump per-variant predicted label volumes")
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CvsynthError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


run_cli = main


if __name__ == "__main__":
    sys.exit(main())
