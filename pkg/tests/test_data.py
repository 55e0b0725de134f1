"""Image IO, augmentation, dataset manifests and the synthetic generator."""

import numpy as np
import pytest

from starlknet.data import (
    AugmentPolicy,
    DatasetManifest,
    augment,
    bilinear_resize,
    epoch_batches,
    load_image,
    load_manifest,
    load_split_arrays,
    one_hot,
    pad_crop,
    save_manifest,
    scan_dataset,
    translate_bilinear,
    write_pgm,
)
from starlknet.synthetic import SyntheticVeinSpec, class_template, generate_synthetic

from oracles import bilinear_resize_oracle


class TestBilinear:
    def test_matches_oracle_on_checkerboard_upsample(self):
        img = np.indices((6, 6)).sum(axis=0) % 2 * 1.0
        got = bilinear_resize(img, 12, 12)
        ref = bilinear_resize_oracle(img, 12, 12)
        assert np.abs(got - ref).max() < 1e-6

    def test_matches_oracle_on_random_downsample(self):
        img = np.random.default_rng(0).random((15, 11))
        got = bilinear_resize(img, 7, 9)
        ref = bilinear_resize_oracle(img, 7, 9)
        assert np.abs(got - ref).max() < 1e-6

    def test_same_size_is_exact_copy(self):
        img = np.random.default_rng(1).random((8, 8))
        out = bilinear_resize(img, 8, 8)
        assert np.array_equal(out, img)
        assert out is not img

    def test_constant_image_stays_constant(self):
        out = bilinear_resize(np.full((5, 5), 0.4), 13, 3)
        assert np.allclose(out, 0.4, atol=1e-12)

    def test_bad_target_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            bilinear_resize(np.zeros((4, 4)), 0, 4)

    def test_translate_zero_is_identity(self):
        img = np.random.default_rng(2).random((9, 9))
        assert np.allclose(translate_bilinear(img, 0.0, 0.0), img, atol=1e-12)

    def test_translate_integer_shift(self):
        img = np.random.default_rng(3).random((6, 6))
        out = translate_bilinear(img, 1.0, 0.0)
        assert np.allclose(out[1:], img[:-1], atol=1e-12)
        assert np.allclose(out[0], img[0], atol=1e-12)  # edge clamp


class TestImageFiles:
    def test_pgm_round_trip(self, tmp_path):
        img = np.linspace(0, 1, 64).reshape(8, 8)
        path = write_pgm(tmp_path / "a.pgm", img)
        back = load_image(path, 8)
        assert back.shape == (1, 8, 8)
        assert np.abs(back[0] - img).max() <= 0.5 / 255 + 1e-12

    def test_load_resizes_to_requested_side(self, tmp_path):
        path = write_pgm(tmp_path / "b.pgm", np.random.default_rng(0).random((16, 16)))
        arr = load_image(path, 8)
        assert arr.shape == (1, 8, 8)
        assert arr.min() >= 0.0 and arr.max() <= 1.0

    def test_missing_file_raises_filenotfound(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.pgm", 8)

    def test_corrupt_file_raises_valueerror(self, tmp_path):
        bad = tmp_path / "bad.pgm"
        bad.write_bytes(b"not an image")
        with pytest.raises(ValueError, match="cannot read image file"):
            load_image(bad, 8)


class TestAugment:
    def test_pad_crop_center_offset_is_identity(self):
        img = np.random.default_rng(0).random((1, 8, 8))
        assert np.array_equal(pad_crop(img, 3, 3, 3), img)

    def test_pad_crop_shifts_content(self):
        img = np.arange(16.0).reshape(1, 4, 4)
        out = pad_crop(img, 1, 0, 0)  # content moves down-right by one
        assert out[0, 0, 0] == 0.0  # zero padding enters at the border
        assert np.array_equal(out[0, 1:, 1:], img[0, :-1, :-1])

    def test_pad_crop_offset_bounds(self):
        img = np.zeros((1, 4, 4))
        with pytest.raises(ValueError, match="offset"):
            pad_crop(img, 2, 5, 0)

    def test_deterministic_under_seeded_rng(self):
        img = np.random.default_rng(1).random((1, 12, 12))
        policy = AugmentPolicy()
        a = augment(img, policy, np.random.default_rng(9))
        b = augment(img, policy, np.random.default_rng(9))
        assert np.array_equal(a, b)
        assert a.shape == img.shape
        assert a.flags["C_CONTIGUOUS"]

    def test_flip_probability_zero_and_one(self):
        img = np.random.default_rng(2).random((1, 6, 6))
        never = AugmentPolicy(flip_prob=0.0, crop=False)
        always = AugmentPolicy(flip_prob=1.0, crop=False)
        rng = np.random.default_rng(0)
        assert np.array_equal(augment(img, never, rng), img)
        assert np.array_equal(augment(img, always, rng), img[:, :, ::-1])

    def test_invalid_policy_rejected(self):
        with pytest.raises(ValueError, match="flip_prob"):
            AugmentPolicy(flip_prob=1.5)
        with pytest.raises(ValueError, match="crop_pad"):
            AugmentPolicy(crop_pad=-1)


def _make_tree(root, classes=3, sessions=2, per_session=4, side=8):
    rng = np.random.default_rng(0)
    for ci in range(classes):
        for si in range(sessions):
            d = root / f"c{ci}" / f"s{si}"
            d.mkdir(parents=True)
            for ii in range(per_session):
                write_pgm(d / f"i{ii}.pgm", rng.random((side, side)))


class TestManifest:
    def test_session_split_uses_first_tag_for_train(self, tmp_path):
        _make_tree(tmp_path, classes=3, sessions=2, per_session=4)
        manifest = scan_dataset(tmp_path, split="session")
        assert manifest.classes == ["c0", "c1", "c2"]
        assert len(manifest.train_indices) == len(manifest.test_indices) == 12
        for i in manifest.train_indices:
            assert manifest.entries[i].session == "s0"
        for i in manifest.test_indices:
            assert manifest.entries[i].session == "s1"

    def test_auto_prefers_session_when_available(self, tmp_path):
        _make_tree(tmp_path, classes=2, sessions=2, per_session=5)
        manifest = scan_dataset(tmp_path, split="auto")
        assert all(manifest.entries[i].session == "s0" for i in manifest.train_indices)

    def test_session_split_equal_counts_ten_by_ten(self, tmp_path):
        _make_tree(tmp_path, classes=10, sessions=2, per_session=10)
        manifest = scan_dataset(tmp_path, split="session")
        assert len(manifest.train_indices) == 100
        assert len(manifest.test_indices) == 100

    def test_missing_second_session_rejected(self, tmp_path):
        _make_tree(tmp_path, classes=2, sessions=1, per_session=4)
        with pytest.raises(ValueError, match="second session"):
            scan_dataset(tmp_path, split="session")

    def test_stratified_split_ceils_to_train(self, tmp_path):
        _make_tree(tmp_path, classes=2, sessions=1, per_session=5)
        manifest = scan_dataset(tmp_path, split="stratified", seed=3)
        per_class = {ci: [0, 0] for ci in range(2)}
        for i in manifest.train_indices:
            per_class[manifest.entries[i].class_index][0] += 1
        for i in manifest.test_indices:
            per_class[manifest.entries[i].class_index][1] += 1
        assert all(v == [3, 2] for v in per_class.values())

    def test_stratified_split_seed_sensitivity(self, tmp_path):
        _make_tree(tmp_path, classes=1, sessions=1, per_session=12)
        a = scan_dataset(tmp_path, split="stratified", seed=0).train_indices
        b = scan_dataset(tmp_path, split="stratified", seed=0).train_indices
        assert a == b
        picks = {
            tuple(scan_dataset(tmp_path, split="stratified", seed=s).train_indices)
            for s in range(6)
        }
        assert len(picks) > 1

    def test_empty_class_dir_rejected(self, tmp_path):
        (tmp_path / "c0").mkdir()
        with pytest.raises(ValueError, match="no images"):
            scan_dataset(tmp_path)

    def test_entries_ordered_lexicographically(self, tmp_path):
        _make_tree(tmp_path, classes=2, sessions=2, per_session=2)
        manifest = scan_dataset(tmp_path)
        rels = [e.rel_path for e in manifest.entries]
        assert rels == sorted(rels)

    def test_manifest_file_round_trip(self, tmp_path):
        _make_tree(tmp_path, classes=3, sessions=2, per_session=3)
        manifest = scan_dataset(tmp_path, split="session")
        cache = tmp_path / "manifest.txt"
        save_manifest(manifest, cache)
        again = load_manifest(tmp_path, cache, split="session")
        assert again.classes == manifest.classes
        assert [e.rel_path for e in again.entries] == [
            e.rel_path for e in manifest.entries
        ]
        assert again.train_indices == manifest.train_indices
        assert again.test_indices == manifest.test_indices

    def test_load_split_arrays_shapes_and_labels(self, tmp_path):
        _make_tree(tmp_path, classes=3, sessions=2, per_session=2)
        manifest = scan_dataset(tmp_path, split="session")
        images, labels = load_split_arrays(manifest, 8, "train")
        assert images.shape == (6, 1, 8, 8)
        assert labels.dtype == np.int64
        assert sorted(set(labels.tolist())) == [0, 1, 2]
        assert images.min() >= 0.0 and images.max() <= 1.0


class TestBatches:
    def test_every_item_appears_once(self):
        seen = np.concatenate(list(epoch_batches(10, 3, 0, 0)))
        assert sorted(seen.tolist()) == list(range(10))

    def test_partial_final_batch_kept(self):
        sizes = [len(b) for b in epoch_batches(10, 4, 0, 0)]
        assert sizes == [4, 4, 2]

    def test_deterministic_per_epoch_and_seed(self):
        a = [b.tolist() for b in epoch_batches(12, 5, 42, 3)]
        b = [b.tolist() for b in epoch_batches(12, 5, 42, 3)]
        c = [b.tolist() for b in epoch_batches(12, 5, 42, 4)]
        assert a == b
        assert a != c

    def test_one_hot(self):
        oh = one_hot([0, 2], 3)
        assert np.array_equal(oh, [[1, 0, 0], [0, 0, 1]])
        with pytest.raises(ValueError, match="label outside"):
            one_hot([3], 3)


class TestSynthetic:
    def test_generation_is_byte_deterministic(self, tmp_path):
        spec = SyntheticVeinSpec(num_classes=3, images_per_class=4, side=16)
        a = generate_synthetic(spec, tmp_path / "a")
        b = generate_synthetic(spec, tmp_path / "b")
        rel_a = sorted(p.relative_to(a) for p in a.rglob("*.pgm"))
        rel_b = sorted(p.relative_to(b) for p in b.rglob("*.pgm"))
        assert rel_a == rel_b and len(rel_a) == 12
        for rel in rel_a:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()
        assert (a / "manifest.txt").read_text() == (b / "manifest.txt").read_text()

    def test_sessions_split_half_and_half(self, tmp_path):
        spec = SyntheticVeinSpec(num_classes=2, images_per_class=5, side=16)
        root = generate_synthetic(spec, tmp_path / "d")
        manifest = scan_dataset(root, split="session")
        assert len(manifest.train_indices) == 6  # ceil(5/2) per class
        assert len(manifest.test_indices) == 4

    def test_intra_class_images_more_alike_than_inter(self, tmp_path):
        spec = SyntheticVeinSpec(num_classes=4, images_per_class=4, side=24)
        root = generate_synthetic(spec, tmp_path / "d")
        manifest = scan_dataset(root, split="session")
        arrays, labels = load_split_arrays(manifest, 24, "train")
        flat = arrays.reshape(len(arrays), -1)
        flat = flat - flat.mean(axis=1, keepdims=True)
        flat /= np.linalg.norm(flat, axis=1, keepdims=True)
        sims = flat @ flat.T
        same, diff = [], []
        for i in range(len(flat)):
            for j in range(i + 1, len(flat)):
                (same if labels[i] == labels[j] else diff).append(sims[i, j])
        assert np.mean(same) > np.mean(diff) + 0.2

    def test_templates_differ_between_classes(self):
        spec = SyntheticVeinSpec(num_classes=2, images_per_class=1, side=24)
        t0 = class_template(spec, 0)
        t1 = class_template(spec, 1)
        assert np.abs(t0 - t1).max() > 0.1
        for t in (t0, t1):
            assert t.min() >= 0.0 and t.max() <= 1.0

    def test_single_image_classes_get_unsplit_manifest(self, tmp_path):
        spec = SyntheticVeinSpec(num_classes=2, images_per_class=1, side=16)
        root = generate_synthetic(spec, tmp_path / "d")
        assert (root / "manifest.txt").exists()
        assert len(list(root.rglob("*.pgm"))) == 2

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError, match="side"):
            SyntheticVeinSpec(side=4)
        with pytest.raises(ValueError, match="images_per_class"):
            SyntheticVeinSpec(images_per_class=0)
