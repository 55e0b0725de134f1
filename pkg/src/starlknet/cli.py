"""Command-line front end.

Subcommands bind the library into runnable experiments: train a model from
a run config, evaluate or sweep a saved checkpoint, export ROC and
activation-map artifacts, preview mixing masks, and generate the synthetic
dataset. Every command writes only under its output directory.
"""

import argparse
import dataclasses
import json
from pathlib import Path

import numpy as np

from .data import load_image, load_split_arrays, scan_dataset, write_pgm
from .engine import Tensor, no_grad, set_precision
from .engine.checkpoint import load_checkpoint, load_into_model
from .laknet import build_laknet, parse_model_config
from .metrics import (
    DEFAULT_RATIOS,
    PairPolicy,
    activation_map,
    embed,
    evaluate_top1,
    occlusion_sweep,
    save_eer_summary,
    save_heatmap,
    save_occlusion_csv,
    save_roc_csv,
    score_pairs,
    sweep_roc,
)
from .mixing import (
    MixParams,
    build_star_mask,
    export_mask_preview,
    mixup_pair,
    select_path,
    starmix_pair,
)
from .runconfig import RunConfig, load_config
from .synthetic import SyntheticVeinSpec, generate_synthetic
from .train import run_training


def _out_dir(args, default):
    out = Path(args.out) if args.out else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_model_from_checkpoint(path):
    """Rebuild the architecture recorded in a checkpoint and load it."""
    header, _ = load_checkpoint(path)
    extra = header.get("extra") or {}
    if "model_config" not in extra:
        raise ValueError(f"checkpoint {path} does not record a model config")
    model_cfg = parse_model_config(extra["model_config"])
    model = build_laknet(model_cfg, header.get("seed", 0))
    load_into_model(model, path)
    model.eval()
    return model, header


def _load_test_split(args, model):
    manifest = scan_dataset(Path(args.data), split=args.split,
                            seed=args.split_seed)
    if manifest.num_classes != model.config.num_classes:
        raise ValueError(
            f"num_classes mismatch: checkpoint model has "
            f"{model.config.num_classes}, dataset has {manifest.num_classes}"
        )
    return load_split_arrays(manifest, model.config.input_side, args.split_set)


def cmd_train(args):
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    if args.precision is not None:
        overrides["precision"] = args.precision
    if overrides:
        config = dataclasses.replace(config, **overrides)
    record = run_training(config)
    print(f"out_dir={record.out_dir}")
    print(f"epochs={len(record.history)}")
    print(f"final_top1={record.final_top1}")
    print(f"eer={record.eer}")
    print(f"checkpoint={record.checkpoint_path}")
    return 0


def cmd_eval(args):
    set_precision(args.precision or "test")
    model, _ = load_model_from_checkpoint(args.checkpoint)
    images, labels = _load_test_split(args, model)
    accuracy = evaluate_top1(model, images, labels)
    feats = embed(model, images)
    scores = score_pairs(feats, labels, PairPolicy(seed=args.seed or 0))
    curve = sweep_roc(scores)
    out = _out_dir(args, "runs/eval")
    payload = {
        "top1": accuracy,
        "eer": curve.eer,
        "num_images": int(len(images)),
        "num_genuine": int(scores.genuine.size),
        "num_impostor": int(scores.impostor.size),
    }
    (out / "metrics.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"top1={accuracy!r}")
    print(f"eer={curve.eer!r}")
    print(f"metrics={out / 'metrics.json'}")
    return 0


def cmd_roc(args):
    set_precision(args.precision or "test")
    model, _ = load_model_from_checkpoint(args.checkpoint)
    images, labels = _load_test_split(args, model)
    feats = embed(model, images)
    scores = score_pairs(feats, labels, PairPolicy(seed=args.seed or 0))
    curve = sweep_roc(scores)
    out = _out_dir(args, "runs/roc")
    save_roc_csv(curve, out / "roc.csv")
    save_eer_summary(curve, out / "eer.json")
    print(f"eer={curve.eer!r}")
    print(f"roc={out / 'roc.csv'}")
    print(f"summary={out / 'eer.json'}")
    return 0


def cmd_occlusion(args):
    set_precision(args.precision or "test")
    model, _ = load_model_from_checkpoint(args.checkpoint)
    images, labels = _load_test_split(args, model)
    ratios = [float(r) for r in args.ratios.split(",") if r.strip() != ""]
    report = occlusion_sweep(model, images, labels, ratios=ratios,
                             patch_side=args.patch_side, seed=args.seed or 0)
    out = _out_dir(args, "runs/occlusion")
    save_occlusion_csv(report, out / "occlusion.csv")
    for r, a in zip(report.ratios, report.accuracy):
        print(f"ratio={r!r} accuracy={a!r}")
    print(f"report={out / 'occlusion.csv'}")
    return 0


def cmd_cam(args):
    set_precision(args.precision or "test")
    model, _ = load_model_from_checkpoint(args.checkpoint)
    image = load_image(args.image, model.config.input_side)
    class_index = args.class_index
    if class_index is None:
        with no_grad():
            logits = model(Tensor(image[None])).data[0]
        class_index = int(np.argmax(logits))
    heat = activation_map(model, image, class_index, stage=args.stage)
    out = _out_dir(args, "runs/cam")
    path = save_heatmap(heat, out / "cam.pgm")
    print(f"class_index={class_index}")
    print(f"stage={args.stage}")
    print(f"heatmap={path}")
    return 0


def cmd_mix_preview(args):
    set_precision(args.precision or "test")
    params = MixParams(threshold_lo=args.threshold_lo,
                       threshold_hi=args.threshold_hi)
    out = _out_dir(args, "runs/preview")
    if (args.image_a is None) != (args.image_b is None):
        raise ValueError("blending needs both --image-a and --image-b")
    for lam in args.lam:
        mask = build_star_mask(lam, args.side, args.side)
        path = select_path(lam, params)
        tag = f"{lam:.4f}".replace(".", "p")
        pgm_path, _ = export_mask_preview(mask, params, out / f"mask_{tag}")
        print(f"lambda={lam!r} lambda_hat={mask.lam_hat!r} path={path}")
        print(f"mask={pgm_path}")
        if args.image_a is not None:
            xa = load_image(args.image_a, args.side)
            xb = load_image(args.image_b, args.side)
            ya = np.array([1.0, 0.0])
            yb = np.array([0.0, 1.0])
            if path == "star":
                blend, _ = starmix_pair(xa, ya, xb, yb, mask)
            else:
                blend, _ = mixup_pair(xa, ya, xb, yb, lam)
            blend_path = write_pgm(out / f"blend_{tag}.pgm", blend[0])
            print(f"blend={blend_path}")
    return 0


def cmd_gen_synthetic(args):
    spec = SyntheticVeinSpec(
        num_classes=args.classes,
        images_per_class=args.images,
        side=args.side,
        seed=args.seed if args.seed is not None else 7,
    )
    out = _out_dir(args, "runs/synthetic")
    root = generate_synthetic(spec, out / "data")
    total = spec.num_classes * spec.images_per_class
    print(f"root={root}")
    print(f"classes={spec.num_classes}")
    print(f"images={total}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config file (ini)")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--precision", choices=("train", "test"),
                        help="numeric mode: train=float32, test=float64")

    dataset = argparse.ArgumentParser(add_help=False)
    dataset.add_argument("--data", required=True,
                         help="dataset root (class/session tree)")
    dataset.add_argument("--split", default="auto",
                         choices=("auto", "session", "stratified"))
    dataset.add_argument("--split-seed", type=int, default=0)
    dataset.add_argument("--split-set", default="test",
                         choices=("train", "test"),
                         help="which split half to evaluate")

    parser = argparse.ArgumentParser(
        prog="starlknet",
        description="Train and probe gated large-kernel vein classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common],
                       help="run one training experiment")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", parents=[common, dataset],
                       help="top-1 and verification EER of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("roc", parents=[common, dataset],
                       help="export the FAR/FRR sweep of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_roc)

    p = sub.add_parser("occlusion", parents=[common, dataset],
                       help="accuracy under growing random occlusion")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ratios",
                   default=",".join(str(r) for r in DEFAULT_RATIOS),
                   help="comma-separated area ratios")
    p.add_argument("--patch-side", type=int, default=16)
    p.set_defaults(fn=cmd_occlusion)

    p = sub.add_parser("cam", parents=[common],
                       help="gradient-weighted activation heatmap")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="input image file")
    p.add_argument("--class-index", type=int,
                   help="target class (default: the model's prediction)")
    p.add_argument("--stage", type=int, default=4, choices=(1, 2, 3, 4))
    p.set_defaults(fn=cmd_cam)

    p = sub.add_parser("mix-preview", parents=[common],
                       help="write mask previews and optional blends")
    p.add_argument("--lam", type=float, nargs="+", required=True,
                   help="one or more mixing coefficients in (0, 1)")
    p.add_argument("--side", type=int, default=224)
    p.add_argument("--threshold-lo", type=float, default=0.3)
    p.add_argument("--threshold-hi", type=float, default=0.7)
    p.add_argument("--image-a", help="first image to blend")
    p.add_argument("--image-b", help="second image to blend")
    p.set_defaults(fn=cmd_mix_preview)

    p = sub.add_parser("gen-synthetic", parents=[common],
                       help="write the procedural vein dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--images", type=int, default=50)
    p.add_argument("--side", type=int, default=32)
    p.set_defaults(fn=cmd_gen_synthetic)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
