import numpy as np
import pytest

from gaitlab.container import (DatasetManifest, load_all, load_sequence,
                               manifest_path_for, pack_dataset, write_container,
                               write_image_store)
from gaitlab.errors import DuplicateSequence, EmptyManifest
from gaitlab.silhouette import GaitSequence

from conftest import make_sequence


def write_png_tree(root, layout_entries):
    """layout_entries: list of (relative_dir, frames array)."""
    import cv2
    for rel, frames in layout_entries:
        d = root / rel
        d.mkdir(parents=True, exist_ok=True)
        for i, f in enumerate(frames):
            cv2.imwrite(str(d / f"{i:03d}.png"), f.astype(np.uint8) * 255)


def random_frames(rng, t=5, h=48, w=32):
    return (rng.random((t, h, w)) < 0.4).astype(np.uint8)


class TestPackedRoundTrip:
    def test_bit_exact(self, tmp_path, rng):
        seqs = [GaitSequence(random_frames(rng, t=3 + i), f"seq{i}",
                             subject_id=f"s{i}") for i in range(4)]
        container = tmp_path / "data.gssb"
        manifest = write_container(seqs, container)
        for seq in seqs:
            loaded = load_sequence(manifest, seq.sequence_id, tmp_path)
            assert np.array_equal(loaded.frames, seq.frames)
            assert loaded.subject_id == seq.subject_id

    def test_manifest_reload(self, tmp_path, rng):
        seqs = [GaitSequence(random_frames(rng), "a", "s0", "090", "NM", 1)]
        container = tmp_path / "data.gssb"
        write_container(seqs, container)
        manifest = DatasetManifest.load(manifest_path_for(container))
        loaded = load_sequence(manifest, "a", tmp_path)
        assert np.array_equal(loaded.frames, seqs[0].frames)
        entry = manifest.entries["a"]
        assert (entry.subject_id, entry.view, entry.condition, entry.seq_index) == \
            ("s0", "090", "NM", 1)

    def test_header_magic_and_version(self, tmp_path, rng):
        container = tmp_path / "data.gssb"
        write_container([GaitSequence(random_frames(rng), "a")], container)
        head = container.read_bytes()[:16]
        assert head[:4] == b"GSSB"
        assert int.from_bytes(head[4:8], "little") == 1   # format_version u32
        assert int.from_bytes(head[8:16], "little") == 1  # entry count u64

    def test_duplicate_ids_rejected(self, tmp_path, rng):
        seqs = [GaitSequence(random_frames(rng), "dup"),
                GaitSequence(random_frames(rng), "dup")]
        with pytest.raises(DuplicateSequence):
            write_container(seqs, tmp_path / "data.gssb")


class TestImageStore:
    def test_round_trip(self, tmp_path, rng):
        seqs = [GaitSequence(random_frames(rng), f"seq{i}") for i in range(2)]
        manifest = write_image_store(seqs, tmp_path / "store")
        for seq in seqs:
            loaded = load_sequence(manifest, seq.sequence_id)
            assert np.array_equal(loaded.frames, seq.frames)


class TestPackDataset:
    def test_casia_layout_metadata(self, tmp_path, rng):
        entries = []
        for subj in ("001", "002"):
            for cond in ("nm-01", "nm-02", "bg-01"):
                for view in ("000", "090"):
                    entries.append((f"tree/{subj}/{cond}/{view}",
                                    random_frames(rng, t=4)))
        write_png_tree(tmp_path, entries)
        manifest = pack_dataset(tmp_path / "tree", tmp_path / "out.gssb",
                                layout="casia")
        assert len(manifest.entries) == 12
        e = manifest.entries["001-nm-02-090"]
        assert e.subject_id == "001"
        assert e.condition == "NM"
        assert e.seq_index == 2
        assert e.view == "090"
        loaded = load_all(manifest, tmp_path)
        assert all(s.frames.shape[0] == 4 for s in loaded.values())

    def test_flat_layout(self, tmp_path, rng):
        write_png_tree(tmp_path, [("flat/walk_a", random_frames(rng)),
                                  ("flat/walk_b", random_frames(rng))])
        manifest = pack_dataset(tmp_path / "flat", tmp_path / "out.gssb",
                                layout="flat")
        assert sorted(manifest.sequence_ids) == ["walk_a", "walk_b"]
        assert manifest.entries["walk_a"].subject_id is None

    def test_empty_directory_skipped_with_warning(self, tmp_path, rng):
        write_png_tree(tmp_path, [("flat/good", random_frames(rng))])
        (tmp_path / "flat" / "empty").mkdir()
        manifest = pack_dataset(tmp_path / "flat", tmp_path / "out.gssb",
                                layout="flat")
        assert manifest.sequence_ids == ["good"]
        assert any(w["sequence_id"] == "empty" for w in manifest.warnings)
        reloaded = DatasetManifest.load(manifest_path_for(tmp_path / "out.gssb"))
        assert any(w["sequence_id"] == "empty" for w in reloaded.warnings)

    def test_all_empty_raises(self, tmp_path):
        (tmp_path / "flat" / "empty").mkdir(parents=True)
        with pytest.raises(EmptyManifest):
            pack_dataset(tmp_path / "flat", tmp_path / "out.gssb", layout="flat")

    def test_normalize_option(self, tmp_path, rng):
        frames = np.zeros((3, 100, 60), dtype=np.uint8)
        frames[:, 10:90, 20:40] = 1
        write_png_tree(tmp_path, [("flat/seq", frames)])
        manifest = pack_dataset(tmp_path / "flat", tmp_path / "out.gssb",
                                layout="flat", normalize=True)
        seq = load_sequence(manifest, "seq", tmp_path)
        assert seq.frames.shape == (3, 64, 44)

    def test_images_storage(self, tmp_path, rng):
        frames = random_frames(rng)
        write_png_tree(tmp_path, [("flat/seq", frames)])
        manifest = pack_dataset(tmp_path / "flat", tmp_path / "imgstore",
                                layout="flat", storage="images")
        seq = load_sequence(manifest, "seq")
        assert np.array_equal(seq.frames, frames)


def test_round_trip_binary_property(tmp_path):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        frames = (rng.random((4, 17, 23)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
        seq = GaitSequence(frames, f"s{seed}")
        manifest = write_container([seq], tmp_path / f"c{seed}.gssb")
        loaded = load_sequence(manifest, f"s{seed}", tmp_path)
        assert np.array_equal(loaded.frames, frames)
