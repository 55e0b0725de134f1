"""Synthetic vein-image generator for desk-scale experiments.

Each class owns a fixed template: a handful of smooth dark curves on a bright
background, thickened and lightly blurred.  Every image of the class is the
template under a small random translation, contrast jitter and pixel noise,
so intra-class images stay strongly correlated while templates differ.

Generation is fully determined by the spec seed: rerunning produces a
byte-identical tree of binary PGM files plus a manifest cache.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import save_manifest, scan_dataset, translate_bilinear, write_pgm


@dataclass
class SyntheticVeinSpec:
    num_classes: int = 10
    images_per_class: int = 50
    side: int = 32
    vein_count_min: int = 3
    vein_count_max: int = 6
    thickness_min: float = 1.0
    thickness_max: float = 2.0
    contrast: float = 0.15
    noise: float = 0.04
    seed: int = 7

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.images_per_class < 1:
            raise ValueError(
                f"images_per_class must be >= 1, got {self.images_per_class}"
            )
        if self.side < 8:
            raise ValueError(f"side must be >= 8, got {self.side}")
        if not 1 <= self.vein_count_min <= self.vein_count_max:
            raise ValueError("vein count range must satisfy 1 <= min <= max")
        if not 0 < self.thickness_min <= self.thickness_max:
            raise ValueError("thickness range must satisfy 0 < min <= max")
        if self.contrast < 0 or self.noise < 0:
            raise ValueError("contrast and noise must be non-negative")


def _bezier_points(p0, p1, p2, count):
    t = np.linspace(0.0, 1.0, count)[:, None]
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t**2 * p2


def _blur(img, sigma=0.7, radius=2):
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(taps**2) / (2 * sigma**2))
    kernel /= kernel.sum()
    padded = np.pad(img, ((radius, radius), (0, 0)), mode="edge")
    rows = sum(kernel[i] * padded[i : i + img.shape[0], :] for i in range(len(kernel)))
    padded = np.pad(rows, ((0, 0), (radius, radius)), mode="edge")
    return sum(kernel[i] * padded[:, i : i + img.shape[1]] for i in range(len(kernel)))


def class_template(spec, class_index):
    """Render the noiseless vein pattern shared by one class."""
    rng = np.random.default_rng([spec.seed, 1, class_index])
    side = spec.side
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    ridges = np.zeros((side, side))
    n_veins = int(rng.integers(spec.vein_count_min, spec.vein_count_max + 1))
    for _ in range(n_veins):
        vertical = rng.random() < 0.5
        a, b, mid1, mid2 = rng.uniform(0, side - 1, size=4)
        if vertical:
            p0 = np.array([0.0, a])
            p2 = np.array([side - 1.0, b])
        else:
            p0 = np.array([a, 0.0])
            p2 = np.array([b, side - 1.0])
        p1 = np.array([mid1, mid2])
        pts = _bezier_points(p0, p1, p2, count=4 * side)
        thickness = rng.uniform(spec.thickness_min, spec.thickness_max)
        d2 = (yy[:, :, None] - pts[:, 0]) ** 2 + (xx[:, :, None] - pts[:, 1]) ** 2
        ridges += np.exp(-d2.min(axis=2) / (thickness**2))
    veins = np.clip(ridges, 0.0, 1.0)
    return np.clip(_blur(0.9 - 0.65 * veins), 0.0, 1.0)


def render_image(spec, template, class_index, image_index):
    """One sampled image: jittered, contrast-scaled, noised template."""
    rng = np.random.default_rng([spec.seed, 2, class_index, image_index])
    dy, dx = rng.uniform(-2.0, 2.0, size=2)
    img = translate_bilinear(template, dy, dx)
    factor = 1.0 + rng.uniform(-spec.contrast, spec.contrast)
    img = (img - 0.5) * factor + 0.5
    img = img + rng.normal(0.0, spec.noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_synthetic(spec, out_root):
    """Write the dataset tree and manifest cache; returns the root path.

    Images split into two pseudo-sessions: the first ceil(n/2) images of each
    class land in session_1, the rest in session_2.
    """
    root = Path(out_root)
    root.mkdir(parents=True, exist_ok=True)
    half = math.ceil(spec.images_per_class / 2)
    for ci in range(spec.num_classes):
        template = class_template(spec, ci)
        cname = f"class_{ci:03d}"
        for ii in range(spec.images_per_class):
            session = "session_1" if ii < half else "session_2"
            directory = root / cname / session
            directory.mkdir(parents=True, exist_ok=True)
            img = render_image(spec, template, ci, ii)
            write_pgm(directory / f"img_{ii:03d}.pgm", img)
    manifest = scan_dataset(root, split="auto") if spec.images_per_class > 1 else None
    if manifest is None:
        # single-image classes cannot split; record entries without one
        from .data import DatasetManifest, _collect_entries

        classes, entries = _collect_entries(root)
        manifest = DatasetManifest(root, classes, entries)
    save_manifest(manifest, root / "manifest.txt")
    return root
