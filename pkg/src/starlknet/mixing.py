"""Pairwise batch mixing: plain Mixup and the Gaussian-mask StarMix variant.

StarMix replaces Mixup's single scalar blend with a fixed spatial mask G
built from three stacked Gaussian profiles.  The field stack M is squashed
through a logistic scaled by the drawn coefficient lambda, so every mask
entry lies in (lambda/2, lambda * logistic(1)].  The mask mean becomes the
*effective* label-mixing weight.  Draws of lambda outside the configured
threshold band use the vanilla path instead.

All functions are pure given their inputs and an explicit numpy Generator;
one lambda draw and one mask serve an entire batch.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .data import write_pgm

#: Upper bound of the scaled logistic: logistic(1).
LOGISTIC_AT_ONE = 1.0 / (1.0 + math.exp(-1.0))


@dataclass(frozen=True)
class MixParams:
    """Configuration for batch mixing.

    ``threshold_lo``/``threshold_hi`` bound the closed band of lambda values
    routed to the star path.  An empty band (lo == hi == 0) reproduces plain
    Mixup for every positive draw.
    """

    alpha: float = 1.0
    threshold_lo: float = 0.3
    threshold_hi: float = 0.7
    mask_side: int = 224
    rng_seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.threshold_lo <= self.threshold_hi <= 1.0:
            raise ValueError(
                "thresholds must satisfy 0 <= lo <= hi <= 1, got "
                f"({self.threshold_lo}, {self.threshold_hi})"
            )
        if self.mask_side < 2:
            raise ValueError(f"mask_side must be >= 2, got {self.mask_side}")


@dataclass(frozen=True)
class GaussianSpec:
    """A 1-d Gaussian profile of nominal length k evaluated on a grid.

    The profile is centered at k/2; with k equal to twice the grid length the
    center sits past the edge and the field glows toward the far corner.
    """

    k: float
    sigma: float
    grid: int

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.grid < 1:
            raise ValueError(f"grid must be >= 1, got {self.grid}")
        if self.k <= 0:
            raise ValueError(f"k must be positive, got {self.k}")


def gaussian_field(spec):
    """Separable 2-d field: outer product of the 1-d profile with itself."""
    t = np.arange(spec.grid, dtype=np.float64)
    profile = np.exp(-((t - spec.k / 2.0) ** 2) / (2.0 * spec.sigma**2))
    return np.outer(profile, profile)


@dataclass(frozen=True)
class StarMask:
    """A blending mask plus the statistics derived from it.

    ``g`` carries the per-pixel weights in (lam/2, lam * logistic(1)];
    ``m`` is the underlying field stack in (0, 1]; ``lam_hat`` is the mean of
    ``g`` and is the weight actually applied to the labels.
    """

    g: np.ndarray
    m: np.ndarray
    lam: float
    lam_hat: float

    @property
    def side(self):
        return self.g.shape[0]


def build_star_mask(lam, width, height):
    """Construct the mask for a square width x height image.

    The field stack averages three Gaussian fields: a center bump of width
    lam*h, a center bump of width (1-lam)*h, and a double-length profile
    whose center lies past the grid edge.  The stack is then folded with its
    horizontal and vertical mirror images, which makes the mask exactly flip
    symmetric and spreads the off-grid component to all four corners,
    producing the star-shaped bright periphery around the central bump.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie strictly inside (0, 1), got {lam}")
    if width != height:
        raise ValueError(
            f"star masks require square images, got {width} x {height}"
        )
    h = int(height)
    if h < 2:
        raise ValueError(f"mask side must be >= 2, got {h}")
    center_narrow = gaussian_field(GaussianSpec(k=h, sigma=lam * h, grid=h))
    center_wide = gaussian_field(GaussianSpec(k=h, sigma=(1.0 - lam) * h, grid=h))
    periphery = gaussian_field(GaussianSpec(k=2 * h, sigma=lam * h, grid=h))
    m = (center_narrow + center_wide + periphery) / 3.0
    m = (m + m[::-1] + m[:, ::-1] + m[::-1, ::-1]) / 4.0
    g = lam / (1.0 + np.exp(-m))
    return StarMask(g=g, m=m, lam=float(lam), lam_hat=effective_lambda(g))


def effective_lambda(mask_values):
    """Mean of the mask entries; the label-side mixing weight."""
    arr = np.asarray(mask_values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty mask")
    if not np.isfinite(arr).all():
        raise ValueError("mask contains non-finite entries")
    return float(arr.mean())


def sample_lambda(params, rng):
    """One Beta(alpha, alpha) draw."""
    return float(rng.beta(params.alpha, params.alpha))


def select_path(lam, params):
    """Route a draw: "star" inside the closed threshold band, else "vanilla".

    The exact endpoints 0 and 1 always take the vanilla path because a star
    mask is undefined there (and they reduce to identity blends anyway).
    """
    if params.threshold_lo <= lam <= params.threshold_hi and 0.0 < lam < 1.0:
        return "star"
    return "vanilla"


def _check_pair_shapes(x_i, x_j, y_i, y_j):
    if x_i.shape != x_j.shape:
        raise ValueError(f"image shape mismatch: {x_i.shape} vs {x_j.shape}")
    if y_i.shape != y_j.shape:
        raise ValueError(f"label shape mismatch: {y_i.shape} vs {y_j.shape}")


def mixup_pair(x_i, y_i, x_j, y_j, lam):
    """Convex combination of two samples: lam of the first, rest the second.

    lam == 1 and lam == 0 return bit-exact copies of the surviving sample.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    _check_pair_shapes(x_i, x_j, y_i, y_j)
    if lam == 1.0:
        return x_i.copy(), y_i.copy()
    if lam == 0.0:
        return x_j.copy(), y_j.copy()
    mixed_x = lam * x_i + (1.0 - lam) * x_j
    mixed_y = lam * y_i + (1.0 - lam) * y_j
    return mixed_x, mixed_y


def starmix_pair(x_i, y_i, x_j, y_j, mask):
    """Blend two samples through a spatial mask.

    Images mix per pixel with the mask (broadcast across channels); labels
    mix with the scalar mask mean.
    """
    _check_pair_shapes(x_i, x_j, y_i, y_j)
    g = mask.g
    if x_i.shape[-2:] != g.shape:
        raise ValueError(
            f"mask side {g.shape} does not match image spatial dims "
            f"{x_i.shape[-2:]}"
        )
    mixed_x = g * x_i + (1.0 - g) * x_j
    mixed_y = mask.lam_hat * y_i + (1.0 - mask.lam_hat) * y_j
    return mixed_x, mixed_y


@lru_cache(maxsize=32)
def _cached_star_mask(lam_q, side):
    return build_star_mask(lam_q, side, side)


def quantize_lambda(lam):
    """Snap lambda to the 1e-4 memoization grid, staying inside (0, 1)."""
    return min(max(round(lam, 4), 0.0001), 0.9999)


@dataclass
class MixedBatch:
    images: np.ndarray
    soft_labels: np.ndarray
    path: str
    lambda_raw: float
    lambda_effective: float
    permutation: np.ndarray


def mix_batch(images, soft_labels, params, rng):
    """Mix a whole batch against a random permutation of itself.

    One lambda draw decides the path for the entire batch; the star path
    additionally builds (or reuses, masks are memoized on the quantized
    lambda and the image side) a single mask shared by every pair.
    """
    if images.ndim < 3:
        raise ValueError(
            f"mix_batch expects batched images [B, ..., H, W], got {images.shape}"
        )
    batch = images.shape[0]
    if batch < 2:
        raise ValueError(f"mix_batch needs a batch of >= 2, got {batch}")
    if soft_labels.ndim != 2 or soft_labels.shape[0] != batch:
        raise ValueError(
            f"soft_labels must be [B, num_classes] with B={batch}, "
            f"got {soft_labels.shape}"
        )
    lam = sample_lambda(params, rng)
    perm = rng.permutation(batch)
    path = select_path(lam, params)
    partner_x = images[perm]
    partner_y = soft_labels[perm]
    if path == "star":
        h, w = images.shape[-2:]
        if h != w:
            raise ValueError(
                f"non-square images ({h} x {w}) cannot take the star path"
            )
        mask = _cached_star_mask(quantize_lambda(lam), h)
        mixed_x, mixed_y = starmix_pair(images, soft_labels, partner_x, partner_y, mask)
        lam_eff = mask.lam_hat
    else:
        mixed_x, mixed_y = mixup_pair(images, soft_labels, partner_x, partner_y, lam)
        lam_eff = lam
    return MixedBatch(
        images=mixed_x,
        soft_labels=mixed_y,
        path=path,
        lambda_raw=lam,
        lambda_effective=lam_eff,
        permutation=perm,
    )


def export_mask_preview(mask, params, base_path):
    """Write the mask as an 8-bit PGM plus a text sidecar with its stats.

    The image stores G / lambda so the full [0, 255] range is meaningful
    regardless of the drawn coefficient.  Returns (pgm_path, sidecar_path).
    """
    base = str(base_path)
    pgm_path = base + ".pgm"
    txt_path = base + ".txt"
    write_pgm(pgm_path, mask.g / mask.lam)
    lines = [
        f"lambda={mask.lam!r}",
        f"lambda_hat={mask.lam_hat!r}",
        f"threshold_lo={params.threshold_lo!r}",
        f"threshold_hi={params.threshold_hi!r}",
        f"path={select_path(mask.lam, params)}",
        f"side={mask.side}",
    ]
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return pgm_path, txt_path
