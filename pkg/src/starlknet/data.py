"""Dataset ingestion: folder scanning, session/stratified splits, image IO,
and the basic flip/pad-crop augmentation.

Expected tree layout::

    root/<class>/<session>/<image>     (session directories optional)

Classes and entries are ordered lexicographically so a rescan of the same
tree always produces the same manifest.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".pgm"}


# ---------------------------------------------------------------------------
# image primitives


def _gather_bilinear(img, ys, xs):
    """Sample ``img`` at float row/column coordinates (outer product grid).

    Uses pixel-center alignment with edge clamping; ys and xs are 1-d.
    """
    in_h, in_w = img.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    y0c = np.clip(y0, 0, in_h - 1)
    y1c = np.clip(y0 + 1, 0, in_h - 1)
    x0c = np.clip(x0, 0, in_w - 1)
    x1c = np.clip(x0 + 1, 0, in_w - 1)
    top = img[y0c[:, None], x0c[None, :]] * (1 - fx) + img[y0c[:, None], x1c[None, :]] * fx
    bottom = img[y1c[:, None], x0c[None, :]] * (1 - fx) + img[y1c[:, None], x1c[None, :]] * fx
    return top * (1 - fy) + bottom * fy


def bilinear_resize(img, out_h, out_w):
    """Bilinear resampling of a 2-d array to (out_h, out_w)."""
    if img.ndim != 2:
        raise ValueError(f"bilinear_resize expects a 2-d array, got shape {img.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got ({out_h}, {out_w})")
    in_h, in_w = img.shape
    if (in_h, in_w) == (out_h, out_w):
        return img.astype(np.float64, copy=True)
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    return _gather_bilinear(img.astype(np.float64, copy=False), ys, xs)


def translate_bilinear(img, dy, dx):
    """Shift a 2-d array by a subpixel offset, clamping at the edges."""
    ys = np.arange(img.shape[0], dtype=np.float64) - dy
    xs = np.arange(img.shape[1], dtype=np.float64) - dx
    return _gather_bilinear(img.astype(np.float64, copy=False), ys, xs)


def load_image(path, side):
    """Decode an image to a [1, side, side] float array in [0, 1].

    Color inputs are reduced to luminance; the spatial resize is bilinear.
    """
    if side < 1:
        raise ValueError(f"side must be positive, got {side}")
    try:
        with Image.open(path) as im:
            gray = im.convert("L")
            arr = np.asarray(gray, dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot read image file: {path}") from exc
    if arr.shape != (side, side):
        arr = bilinear_resize(arr, side, side)
    return arr[None]


def write_pgm(path, values):
    """Write a [0, 1] 2-d array as an 8-bit binary PGM file."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"write_pgm expects a 2-d array, got shape {arr.shape}")
    u8 = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = u8.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(u8.tobytes())
    return Path(path)


# ---------------------------------------------------------------------------
# augmentation


@dataclass
class AugmentPolicy:
    """Basic training-time augmentation: random flip, then pad-and-crop."""

    flip_prob: float = 0.5
    crop_pad: int = 3
    flip: bool = True
    crop: bool = True

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")
        if self.crop_pad < 0:
            raise ValueError(f"crop_pad must be >= 0, got {self.crop_pad}")


def pad_crop(image, pad, offset_y, offset_x):
    """Zero-pad a [C, H, W] image by ``pad`` and crop back at the offset.

    Offset (pad, pad) reproduces the input exactly.
    """
    c, h, w = image.shape
    if not (0 <= offset_y <= 2 * pad and 0 <= offset_x <= 2 * pad):
        raise ValueError(f"crop offset ({offset_y}, {offset_x}) outside [0, {2 * pad}]")
    padded = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=image.dtype)
    padded[:, pad : pad + h, pad : pad + w] = image
    return padded[:, offset_y : offset_y + h, offset_x : offset_x + w].copy()


def augment(image, policy, rng):
    """Apply the flip/pad-crop policy to one [C, H, W] image."""
    if image.ndim != 3:
        raise ValueError(f"augment expects a [C, H, W] image, got shape {image.shape}")
    out = image
    if policy.flip and rng.random() < policy.flip_prob:
        out = out[:, :, ::-1]
    if policy.crop and policy.crop_pad > 0:
        oy, ox = rng.integers(0, 2 * policy.crop_pad + 1, size=2)
        out = pad_crop(np.ascontiguousarray(out), policy.crop_pad, int(oy), int(ox))
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# manifests and splits


@dataclass
class Entry:
    rel_path: str
    class_index: int
    session: str


@dataclass
class DatasetManifest:
    root: Path
    classes: list
    entries: list
    train_indices: list = field(default_factory=list)
    test_indices: list = field(default_factory=list)

    @property
    def num_classes(self):
        return len(self.classes)


def _collect_entries(root):
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"dataset root is not a directory: {root}")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise ValueError(f"dataset root has no class directories: {root}")
    classes = [d.name for d in class_dirs]
    entries = []
    for idx, cdir in enumerate(class_dirs):
        session_dirs = sorted(d for d in cdir.iterdir() if d.is_dir())
        found = 0
        if session_dirs:
            for sdir in session_dirs:
                for f in sorted(sdir.iterdir()):
                    if f.suffix.lower() in IMAGE_EXTENSIONS:
                        entries.append(
                            Entry(str(f.relative_to(root)), idx, sdir.name)
                        )
                        found += 1
        for f in sorted(cdir.iterdir()):
            if f.is_file() and f.suffix.lower() in IMAGE_EXTENSIONS:
                entries.append(Entry(str(f.relative_to(root)), idx, ""))
                found += 1
        if found == 0:
            raise ValueError(f"class directory contains no images: {cdir}")
    return classes, entries


def _split_entries(classes, entries, split, seed):
    by_class = {i: [] for i in range(len(classes))}
    for pos, entry in enumerate(entries):
        by_class[entry.class_index].append(pos)

    if split == "auto":
        sessions_everywhere = all(
            len({entries[p].session for p in ps if entries[p].session}) >= 2
            for ps in by_class.values()
        )
        split = "session" if sessions_everywhere else "stratified"

    train, test = [], []
    if split == "session":
        for ci, positions in by_class.items():
            tags = sorted({entries[p].session for p in positions})
            if len(tags) < 2:
                raise ValueError(
                    f"class '{classes[ci]}' lacks a second session; "
                    "cannot apply the session split"
                )
            first = tags[0]
            for p in positions:
                (train if entries[p].session == first else test).append(p)
    elif split == "stratified":
        rng = np.random.default_rng(seed)
        for ci in range(len(classes)):
            positions = list(by_class[ci])
            rng.shuffle(positions)
            take = (len(positions) + 1) // 2
            train.extend(sorted(positions[:take]))
            test.extend(sorted(positions[take:]))
    else:
        raise ValueError(f"unknown split rule {split!r}")

    train_set = set(train)
    for ci, positions in by_class.items():
        n_train = sum(1 for p in positions if p in train_set)
        if n_train == 0 or n_train == len(positions):
            raise ValueError(
                f"class '{classes[ci]}' needs at least one train and one test "
                f"entry after splitting"
            )
    return sorted(train), sorted(test), split


def scan_dataset(root, split="auto", seed=0):
    """Walk a dataset tree and build a split manifest.

    ``split`` is "session" (first session tag trains, the rest test),
    "stratified" (seeded 50/50 per class) or "auto" (session rule whenever
    every class carries two or more session directories).
    """
    classes, entries = _collect_entries(root)
    train, test, _ = _split_entries(classes, entries, split, seed)
    return DatasetManifest(Path(root), classes, entries, train, test)


def save_manifest(manifest, path):
    """Write the entry table as text: relative path, class name, session."""
    lines = []
    for e in manifest.entries:
        lines.append(f"{e.rel_path}\t{manifest.classes[e.class_index]}\t{e.session}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def load_manifest(root, path, split="auto", seed=0):
    """Rebuild a manifest from a cache file written by ``save_manifest``."""
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{ln}: expected 3 tab-separated fields")
        rows.append(parts)
    if not rows:
        raise ValueError(f"{path}: empty manifest")
    classes = sorted({r[1] for r in rows})
    index = {name: i for i, name in enumerate(classes)}
    entries = [Entry(r[0], index[r[1]], r[2]) for r in rows]
    train, test, _ = _split_entries(classes, entries, split, seed)
    return DatasetManifest(Path(root), classes, entries, train, test)


# ---------------------------------------------------------------------------
# batch iteration


def load_split_arrays(manifest, side, split="train"):
    """Decode every entry of one split into ([N, 1, side, side], [N]) arrays."""
    indices = manifest.train_indices if split == "train" else manifest.test_indices
    if not indices:
        raise ValueError(f"manifest has no '{split}' entries")
    images = np.stack(
        [load_image(manifest.root / manifest.entries[i].rel_path, side) for i in indices]
    )
    labels = np.array([manifest.entries[i].class_index for i in indices], dtype=np.int64)
    return images, labels


def epoch_batches(num_items, batch_size, base_seed, epoch):
    """Yield index batches for one epoch under a (seed, epoch)-derived shuffle.

    Every item appears exactly once; a partial final batch is kept.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    perm = np.random.default_rng([base_seed, epoch]).permutation(num_items)
    for start in range(0, num_items, batch_size):
        yield perm[start : start + batch_size]


def one_hot(labels, num_classes):
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(
            f"label outside [0, {num_classes}): {labels.min()}..{labels.max()}"
        )
    return np.eye(num_classes, dtype=np.float64)[labels]
