"""Verification metrics: top-1, FAR/FRR sweeps, EER, occlusion, heatmaps.

Scores for the verification protocol are cosine similarities between pooled
pre-head features. Genuine pairs are all same-class pairs of the evaluation
split (capped by sampling), impostor pairs are a seeded sample of cross-class
pairs at a configurable multiple of the genuine count.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import bilinear_resize, write_pgm
from .engine import Tensor, functional as F, no_grad

DEFAULT_RATIOS = (0.0, 0.02, 0.04, 0.06, 0.08, 0.10)


# ---------------------------------------------------------------------------
# accuracy


def top1(logits, labels):
    """Fraction of rows whose argmax (ties: lowest index) hits the label."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ValueError(
            f"logits {logits.shape} and labels {labels.shape} do not align"
        )
    if logits.shape[0] == 0:
        raise ValueError("top1 needs at least one row")
    return float((np.argmax(logits, axis=1) == labels).mean())


@dataclass
class EpochHistory:
    """Parallel per-epoch records written by the trainer."""

    loss: list = field(default_factory=list)
    top1: list = field(default_factory=list)
    lr: list = field(default_factory=list)

    def append(self, loss, top1_value, lr):
        self.loss.append(float(loss))
        self.top1.append(float(top1_value))
        self.lr.append(float(lr))

    def __len__(self):
        if not len(self.loss) == len(self.top1) == len(self.lr):
            raise RuntimeError("history columns diverged in length")
        return len(self.loss)


def final_top1(history):
    """Median of the last 10 test accuracies (all of them when fewer)."""
    values = history.top1 if isinstance(history, EpochHistory) else list(history)
    if len(values) == 0:
        raise ValueError("final_top1 needs a non-empty history")
    if len(values) < 10:
        warnings.warn(
            f"final_top1 over only {len(values)} epochs (fewer than 10)",
            stacklevel=2,
        )
    return float(np.median(values[-10:]))


# ---------------------------------------------------------------------------
# verification scores


@dataclass
class PairPolicy:
    impostor_ratio: int = 10
    max_genuine: int = 50000
    seed: int = 0

    def __post_init__(self):
        if self.impostor_ratio < 1:
            raise ValueError(f"impostor_ratio must be >= 1, got {self.impostor_ratio}")
        if self.max_genuine < 1:
            raise ValueError(f"max_genuine must be >= 1, got {self.max_genuine}")


@dataclass
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray
    tag: str = "cosine"

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64)
        self.impostor = np.asarray(self.impostor, dtype=np.float64)
        for name, arr in (("genuine", self.genuine), ("impostor", self.impostor)):
            if arr.ndim != 1:
                raise ValueError(f"{name} scores must be 1-d")
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} scores contain non-finite values")


def embed(model, images, batch_size=64):
    """Pooled pre-head features for an [N, C, S, S] array, batched."""
    feats = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            batch = Tensor(images[start : start + batch_size])
            feats.append(model.features(batch).data.copy())
    return np.concatenate(feats, axis=0)


def score_pairs(embeddings, labels, policy=None):
    """Cosine ScoreSet over all genuine and sampled impostor pairs."""
    policy = policy or PairPolicy()
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if emb.ndim != 2 or emb.shape[0] != labels.shape[0]:
        raise ValueError(f"embeddings {emb.shape} and labels {labels.shape} disagree")
    n = emb.shape[0]
    if n < 2:
        raise ValueError("need at least two embeddings to form pairs")
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    unit = emb / np.maximum(norms, 1e-12)
    sims = unit @ unit.T

    ii, jj = np.triu_indices(n, k=1)
    same = labels[ii] == labels[jj]
    genuine_pos = np.flatnonzero(same)
    impostor_pos = np.flatnonzero(~same)

    counts = np.bincount(labels)
    singles = int((counts == 1).sum())
    if singles:
        warnings.warn(
            f"{singles} classes have a single image and contribute no "
            "genuine pairs",
            stacklevel=2,
        )
    if genuine_pos.size == 0:
        raise ValueError("no genuine pairs: every class has a single image")

    rng = np.random.default_rng(policy.seed)
    if genuine_pos.size > policy.max_genuine:
        genuine_pos = np.sort(
            rng.choice(genuine_pos, size=policy.max_genuine, replace=False)
        )
    want = min(policy.impostor_ratio * genuine_pos.size, impostor_pos.size)
    if want == 0:
        raise ValueError("no impostor pairs: only one class present")
    if want < impostor_pos.size:
        impostor_pos = np.sort(rng.choice(impostor_pos, size=want, replace=False))

    return ScoreSet(
        genuine=sims[ii[genuine_pos], jj[genuine_pos]],
        impostor=sims[ii[impostor_pos], jj[impostor_pos]],
    )


# ---------------------------------------------------------------------------
# ROC / EER


@dataclass
class RocCurve:
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float
    eer_threshold: float


def sweep_roc(scores, num_thresholds=512):
    """FAR/FRR over a threshold sweep plus the interpolated EER.

    FAR(t) is the impostor fraction scoring >= t, FRR(t) the genuine
    fraction scoring < t. The sweep spans the score range uniformly and
    additionally visits every distinct score when there are at most 10k.
    """
    if num_thresholds < 2:
        raise ValueError(f"num_thresholds must be >= 2, got {num_thresholds}")
    genuine = np.sort(scores.genuine)
    impostor = np.sort(scores.impostor)
    if genuine.size == 0 or impostor.size == 0:
        raise ValueError("sweep_roc needs non-empty genuine and impostor scores")

    lo = min(genuine[0], impostor[0])
    hi = max(genuine[-1], impostor[-1])
    grid = np.linspace(lo, hi, num_thresholds)
    distinct = np.unique(np.concatenate([genuine, impostor]))
    if distinct.size <= 10000:
        grid = np.concatenate([grid, distinct])
    thresholds = np.unique(grid)

    far = (impostor.size - np.searchsorted(impostor, thresholds, side="left"))
    far = far / impostor.size
    frr = np.searchsorted(genuine, thresholds, side="left") / genuine.size

    diff = far - frr  # monotone non-increasing in the threshold
    best = int(np.argmin(np.abs(diff)))
    eer = (far[best] + frr[best]) / 2.0
    eer_threshold = float(thresholds[best])
    crossings = np.flatnonzero((diff[:-1] > 0) & (diff[1:] <= 0))
    if crossings.size:
        i = int(crossings[0])
        span = diff[i] - diff[i + 1]
        fraction = diff[i] / span if span > 0 else 0.0
        far_star = far[i] + fraction * (far[i + 1] - far[i])
        frr_star = frr[i] + fraction * (frr[i + 1] - frr[i])
        interpolated = (far_star + frr_star) / 2.0
        if abs(far_star - frr_star) <= abs(far[best] - frr[best]):
            eer = interpolated
            eer_threshold = float(
                thresholds[i] + fraction * (thresholds[i + 1] - thresholds[i])
            )
    return RocCurve(thresholds, far, frr, float(eer), eer_threshold)


def save_roc_csv(curve, path):
    lines = ["threshold,far,frr"]
    for t, fa, fr in zip(curve.thresholds, curve.far, curve.frr):
        lines.append(f"{float(t)!r},{float(fa)!r},{float(fr)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def save_eer_summary(curve, path):
    payload = {
        "eer": curve.eer,
        "eer_threshold": curve.eer_threshold,
        "num_thresholds": int(curve.thresholds.size),
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return Path(path)


# ---------------------------------------------------------------------------
# occlusion robustness


def patch_count(ratio, side, patch_side):
    """Number of occluders covering ``ratio`` of the area, nearest-rounded."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"occlusion ratio must lie in [0, 1], got {ratio}")
    return int(np.floor(ratio * side * side / (patch_side * patch_side) + 0.5))


def occlude_image(image, count, patch_side, rng):
    """Zero out ``count`` random square patches, preferring no overlap."""
    if count == 0:
        return image
    out = image.copy()
    side_y, side_x = image.shape[-2], image.shape[-1]
    placed = []
    for _ in range(count):
        for attempt in range(10):
            y = int(rng.integers(0, side_y - patch_side + 1))
            x = int(rng.integers(0, side_x - patch_side + 1))
            clear = all(
                y + patch_side <= py or py + patch_side <= y
                or x + patch_side <= px or px + patch_side <= x
                for py, px in placed
            )
            if clear:
                break
        placed.append((y, x))
        out[..., y : y + patch_side, x : x + patch_side] = 0.0
    return out


@dataclass
class OcclusionReport:
    ratios: list
    accuracy: list
    patch_side: int
    seed: int


def evaluate_top1(model, images, labels, batch_size=64):
    """Eval-mode accuracy of a model over plain arrays."""
    correct = 0
    with no_grad():
        for start in range(0, len(images), batch_size):
            logits = model(Tensor(images[start : start + batch_size])).data
            correct += int(
                (np.argmax(logits, axis=1) == labels[start : start + batch_size]).sum()
            )
    return correct / len(images)


def occlusion_sweep(model, images, labels, ratios=DEFAULT_RATIOS,
                    patch_side=16, seed=0):
    """Accuracy under growing random-patch occlusion of the inputs."""
    side = images.shape[-1]
    if patch_side > side:
        raise ValueError(f"patch side {patch_side} exceeds image side {side}")
    accuracies = []
    for ri, ratio in enumerate(ratios):
        count = patch_count(ratio, side, patch_side)
        if count == 0:
            batch = images
        else:
            batch = np.stack([
                occlude_image(
                    images[i], count, patch_side,
                    np.random.default_rng([seed, ri, i]),
                )
                for i in range(len(images))
            ])
        accuracies.append(evaluate_top1(model, batch, labels))
    return OcclusionReport(list(ratios), accuracies, patch_side, seed)


def save_occlusion_csv(report, path):
    lines = ["ratio,accuracy"]
    for r, a in zip(report.ratios, report.accuracy):
        lines.append(f"{float(r)!r},{float(a)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


# ---------------------------------------------------------------------------
# activation maps


def activation_map(model, image, class_index, stage=4):
    """Gradient-weighted class activation heatmap in [0, 1].

    Channel weights are the spatial means of the class logit's gradient at
    the chosen stage output; the weighted, ReLU-clamped activation sum is
    upsampled to the input size and min-max normalized.
    """
    if image.ndim == 3:
        image = image[None]
    if image.ndim != 4 or image.shape[0] != 1:
        raise ValueError(f"activation_map expects one image, got {image.shape}")
    if not 1 <= stage <= 4:
        raise ValueError(f"stage must be 1..4, got {stage}")
    num_classes = model.config.num_classes
    if not 0 <= class_index < num_classes:
        raise ValueError(
            f"class index {class_index} outside [0, {num_classes})"
        )
    x = Tensor(image, requires_grad=True)
    stages = model.forward_stages(x)
    target = stages[stage - 1]
    logits = model.fc(F.global_avg_pool(stages[-1]))
    onehot = np.zeros((1, num_classes))
    onehot[0, class_index] = 1.0
    (logits * Tensor(onehot)).sum().backward()
    if target.grad is None:
        raise RuntimeError("stage output received no gradient")
    weights = target.grad[0].mean(axis=(1, 2))
    heat = np.maximum((weights[:, None, None] * target.data[0]).sum(axis=0), 0.0)
    side = image.shape[-1]
    heat = bilinear_resize(heat, side, side)
    span = heat.max() - heat.min()
    if span > 0:
        return (heat - heat.min()) / span
    return np.zeros_like(heat)


def save_heatmap(heat, path):
    return write_pgm(path, heat)
