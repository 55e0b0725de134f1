"""End-to-end training driver built from the library pieces.

One run: resolve the dataset (generating the synthetic set when no root is
given), build the model and optimizer, loop epochs of augment/mix/step,
evaluate after every epoch, and persist history, checkpoints and a run
record under the output directory.

Random streams are derived per purpose and epoch from the run seed, so a
repeated run in 64-bit precision reproduces its artifacts byte for byte.
"""

import json
import time
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import (
    AugmentPolicy,
    augment,
    epoch_batches,
    load_split_arrays,
    one_hot,
    scan_dataset,
)
from .engine import (
    Adam,
    SGD,
    Tensor,
    cosine_lr,
    functional as F,
    save_checkpoint,
    set_precision,
)
from .laknet import (
    build_laknet,
    emit_model_config,
    full_config,
    parse_model_config,
    toy_config,
)
from .metrics import (
    EpochHistory,
    PairPolicy,
    embed,
    evaluate_top1,
    final_top1,
    score_pairs,
    sweep_roc,
)
from .mixing import MixParams, mix_batch
from .synthetic import SyntheticVeinSpec, generate_synthetic


@dataclass
class RunRecord:
    config: dict
    history: EpochHistory
    final_top1: float
    eer: float
    checkpoint_path: str
    best_checkpoint_path: str
    wall_clock_seconds: float
    out_dir: str


def resolve_dataset(config, out_dir):
    """Scan the configured root, or (re)generate the synthetic tree."""
    if config.data_root:
        root = Path(config.data_root)
    else:
        spec = SyntheticVeinSpec(
            num_classes=config.synthetic_classes,
            images_per_class=config.synthetic_images,
            side=config.side,
            seed=config.synthetic_seed,
        )
        root = generate_synthetic(spec, Path(out_dir) / "synthetic")
    return scan_dataset(root, split=config.split, seed=config.split_seed)


def resolve_model_config(config, num_classes):
    """Turn the config's model field into a concrete architecture config."""
    if config.model == "toy":
        return toy_config(num_classes, config.side)
    if config.model == "full":
        return full_config(num_classes, config.side)
    model_cfg = parse_model_config(Path(config.model).read_text(encoding="utf-8"))
    if model_cfg.num_classes != num_classes:
        raise ValueError(
            f"model config num_classes={model_cfg.num_classes} but the "
            f"dataset has {num_classes} classes"
        )
    if model_cfg.input_side != config.side:
        raise ValueError(
            f"model config input_side={model_cfg.input_side} but the run "
            f"config side is {config.side}"
        )
    return model_cfg


def build_optimizer(config, model):
    if config.optimizer == "sgd":
        return SGD(
            model.named_parameters(),
            lr=config.lr,
            momentum=config.momentum,
            weight_decay=config.weight_decay,
        )
    return Adam(model.named_parameters(), lr=config.lr,
                weight_decay=config.weight_decay)


def mix_params_for(config):
    """Mixing behavior per augmentation mode; None disables mixing."""
    if config.augmentation == "mixup":
        return MixParams(alpha=config.alpha, threshold_lo=0.0, threshold_hi=0.0)
    if config.augmentation == "starmix":
        # a band clamped at 1.0 is exact: the endpoint draw always routes
        # vanilla, so thresholds above 1 leave the star path unreachable
        return MixParams(
            alpha=config.alpha,
            threshold_lo=min(config.threshold_lo, 1.0),
            threshold_hi=min(config.threshold_hi, 1.0),
        )
    return None


def write_history_csv(history, path):
    lines = ["epoch,loss,top1,lr"]
    for e in range(len(history)):
        lines.append(
            f"{e},{history.loss[e]!r},{history.top1[e]!r},{history.lr[e]!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def compute_eer(model, images, labels, seed):
    """Cosine-score EER over a test split; None when pairs cannot form."""
    feats = embed(model, images)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            scores = score_pairs(feats, labels, PairPolicy(seed=seed))
    except ValueError:
        return None
    return sweep_roc(scores).eer


def run_training(config):
    """Execute one training run and return its RunRecord."""
    started = time.time()
    set_precision(config.precision)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = resolve_dataset(config, out_dir)
    train_images, train_labels = load_split_arrays(manifest, config.side, "train")
    test_images, test_labels = load_split_arrays(manifest, config.side, "test")
    num_classes = manifest.num_classes

    model_cfg = resolve_model_config(config, num_classes)
    model = build_laknet(model_cfg, config.seed)
    optimizer = build_optimizer(config, model)
    mix_params = mix_params_for(config)
    policy = AugmentPolicy()
    history = EpochHistory()

    best_top1 = -1.0
    best_path = out_dir / "checkpoint_best.ckpt"
    final_path = out_dir / "checkpoint_final.ckpt"
    extra_base = {"model_config": emit_model_config(model_cfg)}

    for epoch in range(config.epochs):
        lr = (
            cosine_lr(epoch, config.epochs, config.lr)
            if config.scheduler == "cosine"
            else config.lr
        )
        optimizer.lr = lr
        model.train()
        aug_rng = np.random.default_rng([config.seed, 2, epoch])
        mix_rng = np.random.default_rng([config.seed, 3, epoch])
        loss_sum = 0.0
        seen = 0

        for step, batch in enumerate(
            epoch_batches(len(train_images), config.batch_size, config.seed, epoch)
        ):
            if len(batch) < 2:
                # a singleton batch can neither pair-mix nor feed batch norm
                continue
            images = np.stack(
                [augment(train_images[i], policy, aug_rng) for i in batch]
            )
            labels = one_hot(train_labels[batch], num_classes)
            if mix_params is not None and len(batch) >= 2:
                mixed = mix_batch(images, labels, mix_params, mix_rng)
                images, labels = mixed.images, mixed.soft_labels
            logits = model(Tensor(images))
            loss = F.soft_cross_entropy(logits, Tensor(labels))
            if not np.isfinite(loss.data):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} step {step}; aborting"
                )
            model.zero_grad()
            loss.backward()
            optimizer.step()
            loss_sum += float(loss.data) * len(batch)
            seen += len(batch)

        if seen == 0:
            raise RuntimeError(
                f"epoch {epoch} had no batch with at least 2 samples; "
                f"grow the batch size or the training split"
            )
        model.eval()
        test_top1 = evaluate_top1(model, test_images, test_labels)
        history.append(loss_sum / seen, test_top1, lr)
        if test_top1 > best_top1:
            best_top1 = test_top1
            save_checkpoint(
                best_path, model, config.seed,
                extra={**extra_base, "epoch": epoch, "test_top1": test_top1},
            )

    model.eval()
    save_checkpoint(
        final_path, model, config.seed,
        extra={**extra_base, "epoch": config.epochs - 1, "test_top1": best_top1},
    )
    if best_top1 < 0:
        save_checkpoint(best_path, model, config.seed, extra=dict(extra_base))

    summary_top1 = None
    if len(history) > 0:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            summary_top1 = final_top1(history)
    eer = compute_eer(model, test_images, test_labels, config.seed)

    write_history_csv(history, out_dir / "history.csv")
    record = RunRecord(
        config=asdict(config),
        history=history,
        final_top1=summary_top1,
        eer=eer,
        checkpoint_path=str(final_path),
        best_checkpoint_path=str(best_path),
        wall_clock_seconds=time.time() - started,
        out_dir=str(out_dir),
    )
    payload = {
        "config": record.config,
        "classes": manifest.classes,
        "num_parameters": model.num_parameters(),
        "final_top1": record.final_top1,
        "eer": record.eer,
        "best_test_top1": None if best_top1 < 0 else best_top1,
        "checkpoint": record.checkpoint_path,
        "best_checkpoint": record.best_checkpoint_path,
        "wall_clock_seconds": record.wall_clock_seconds,
    }
    (out_dir / "run.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return record
