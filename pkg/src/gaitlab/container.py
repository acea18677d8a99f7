"""Packed silhouette containers and dataset manifests.

Container layout (single file):
    magic "GSSB" | format_version u32 | entry count u64
    per sequence:
        id length u16 | id bytes (utf-8)
        metadata length u32 | metadata bytes (utf-8 JSON)
        H u16 | W u16 | T u32
        bit-packed frames, row-major, T * ceil(H*W/8) bytes

The manifest is a separate line-delimited JSON file (one record per line,
first line is a versioned header) that records per-sequence metadata and
the byte offset of each block, so sequences can be loaded individually.
All integers are little-endian.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import (CorruptFrame, DuplicateSequence, EmptyManifest,
                     ShapeMismatch)
from .silhouette import GaitSequence, size_normalize

log = logging.getLogger(__name__)

MAGIC = b"GSSB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")

IMAGE_EXTENSIONS = (".png", ".bmp", ".pgm", ".jpg", ".jpeg")


@dataclass
class ManifestEntry:
    sequence_id: str
    frame_count: int
    height: int
    width: int
    subject_id: str | None = None
    view: str | None = None
    condition: str | None = None
    seq_index: int | None = None
    offset: int | None = None      # byte offset into the container
    path: str | None = None        # image directory, when stored as images

    def to_record(self) -> dict:
        rec = {"record": "sequence", "sequence_id": self.sequence_id,
               "frame_count": self.frame_count, "height": self.height,
               "width": self.width}
        for k in ("subject_id", "view", "condition", "seq_index", "offset", "path"):
            v = getattr(self, k)
            if v is not None:
                rec[k] = v
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "ManifestEntry":
        return cls(sequence_id=rec["sequence_id"], frame_count=rec["frame_count"],
                   height=rec["height"], width=rec["width"],
                   subject_id=rec.get("subject_id"), view=rec.get("view"),
                   condition=rec.get("condition"), seq_index=rec.get("seq_index"),
                   offset=rec.get("offset"), path=rec.get("path"))


@dataclass
class DatasetManifest:
    format_version: int = FORMAT_VERSION
    container: str | None = None
    entries: dict[str, ManifestEntry] = field(default_factory=dict)
    warnings: list[dict] = field(default_factory=list)

    def add(self, entry: ManifestEntry):
        if entry.sequence_id in self.entries:
            raise DuplicateSequence(f"duplicate sequence id {entry.sequence_id!r}")
        self.entries[entry.sequence_id] = entry

    @property
    def sequence_ids(self) -> list[str]:
        return list(self.entries)

    def subjects(self) -> list[str]:
        return sorted({e.subject_id for e in self.entries.values()
                       if e.subject_id is not None})

    def save(self, path):
        lines = [json.dumps({"record": "header",
                             "format_version": self.format_version,
                             "container": self.container}, sort_keys=True)]
        for w in self.warnings:
            lines.append(json.dumps({"record": "warning", **w}, sort_keys=True))
        for e in self.entries.values():
            lines.append(json.dumps(e.to_record(), sort_keys=True))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        manifest = cls()
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                kind = rec.get("record")
                if kind == "header":
                    manifest.format_version = rec["format_version"]
                    manifest.container = rec.get("container")
                elif kind == "warning":
                    manifest.warnings.append(
                        {k: v for k, v in rec.items() if k != "record"})
                elif kind == "sequence":
                    manifest.add(ManifestEntry.from_record(rec))
        return manifest


def manifest_path_for(container_path) -> Path:
    return Path(str(container_path) + ".manifest")


def _pack_frames(frames: np.ndarray) -> bytes:
    t = frames.shape[0]
    return np.packbits(frames.reshape(t, -1), axis=1).tobytes()


def _unpack_frames(buf: bytes, t: int, h: int, w: int) -> np.ndarray:
    per = (h * w + 7) // 8
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8).reshape(t, per),
                         axis=1)[:, :h * w]
    return bits.reshape(t, h, w).astype(np.uint8)


def write_container(sequences, container_path, manifest_path=None) -> DatasetManifest:
    """Write an iterable of GaitSequence into a packed container + manifest."""
    container_path = Path(container_path)
    manifest = DatasetManifest(container=container_path.name)
    with open(container_path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, 0))
        count = 0
        for seq in sequences:
            offset = fh.tell()
            meta = {k: v for k, v in (("subject_id", seq.subject_id),
                                      ("view", seq.view),
                                      ("condition", seq.condition),
                                      ("seq_index", seq.seq_index)) if v is not None}
            idb = seq.sequence_id.encode()
            metab = json.dumps(meta, sort_keys=True).encode()
            t, h, w = seq.frames.shape
            fh.write(struct.pack("<H", len(idb)))
            fh.write(idb)
            fh.write(struct.pack("<I", len(metab)))
            fh.write(metab)
            fh.write(struct.pack("<HHI", h, w, t))
            fh.write(_pack_frames(seq.frames))
            manifest.add(ManifestEntry(seq.sequence_id, t, h, w, seq.subject_id,
                                       seq.view, seq.condition, seq.seq_index,
                                       offset=offset))
            count += 1
        fh.seek(0)
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, count))
    manifest.save(manifest_path or manifest_path_for(container_path))
    return manifest


def write_image_store(sequences, out_dir, manifest_path=None) -> DatasetManifest:
    """Store sequences as per-sequence directories of 0/255 PNG frames."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(container=None)
    for seq in sequences:
        seq_dir = out_dir / seq.sequence_id
        seq_dir.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(seq.frames):
            cv2.imwrite(str(seq_dir / f"{i:05d}.png"), frame * 255)
        t, h, w = seq.frames.shape
        manifest.add(ManifestEntry(seq.sequence_id, t, h, w, seq.subject_id,
                                   seq.view, seq.condition, seq.seq_index,
                                   path=str(seq_dir)))
    manifest.save(manifest_path or (out_dir / "manifest.jsonl"))
    return manifest


def _read_block(fh) -> GaitSequence:
    (id_len,) = struct.unpack("<H", fh.read(2))
    sequence_id = fh.read(id_len).decode()
    (meta_len,) = struct.unpack("<I", fh.read(4))
    meta = json.loads(fh.read(meta_len).decode()) if meta_len else {}
    h, w, t = struct.unpack("<HHI", fh.read(8))
    buf = fh.read(t * ((h * w + 7) // 8))
    frames = _unpack_frames(buf, t, h, w)
    return GaitSequence(frames, sequence_id, meta.get("subject_id"),
                        meta.get("view"), meta.get("condition"),
                        meta.get("seq_index"))


def load_sequence(manifest: DatasetManifest, sequence_id: str,
                  root: str | Path = ".") -> GaitSequence:
    """Load one sequence through its manifest entry (packed or image dir)."""
    if sequence_id not in manifest.entries:
        raise KeyError(f"unknown sequence id {sequence_id!r}")
    entry = manifest.entries[sequence_id]
    if entry.offset is not None:
        if manifest.container is None:
            raise ShapeMismatch("manifest has offsets but no container name")
        with open(Path(root) / manifest.container, "rb") as fh:
            magic, version, _ = _HEADER.unpack(fh.read(_HEADER.size))
            if magic != MAGIC:
                raise CorruptFrame("bad container magic")
            if version != FORMAT_VERSION:
                raise CorruptFrame(f"unsupported container version {version}")
            fh.seek(entry.offset)
            return _read_block(fh)
    frames = _read_image_dir(Path(entry.path))
    return GaitSequence(frames, sequence_id, entry.subject_id, entry.view,
                        entry.condition, entry.seq_index)


def iter_sequences(manifest: DatasetManifest, root: str | Path = "."):
    for sid in manifest.sequence_ids:
        yield load_sequence(manifest, sid, root)


def load_all(manifest: DatasetManifest, root: str | Path = ".") -> dict[str, GaitSequence]:
    """Read the whole container into memory (desk-scale corpora only)."""
    return {seq.sequence_id: seq for seq in iter_sequences(manifest, root)}


def _read_image_dir(directory: Path) -> np.ndarray:
    paths = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in IMAGE_EXTENSIONS)
    frames = []
    for p in paths:
        img = cv2.imread(str(p), cv2.IMREAD_GRAYSCALE)
        if img is None:
            raise CorruptFrame(f"unreadable frame image {p}")
        frames.append((img >= 128).astype(np.uint8))
    if not frames:
        return np.zeros((0, 0, 0), dtype=np.uint8)
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise ShapeMismatch(f"frames in {directory} differ in size: {shapes}")
    return np.stack(frames)


def _scan_casia_tree(root: Path):
    """Yield (sequence_id, metadata, frame_dir) from a subject/condition/view tree."""
    for subj in sorted(p for p in root.iterdir() if p.is_dir()):
        for cond in sorted(p for p in subj.iterdir() if p.is_dir()):
            cond_name = cond.name
            condition, seq_index = cond_name, None
            if "-" in cond_name:
                head, _, tail = cond_name.partition("-")
                condition = head.upper()
                if tail.isdigit():
                    seq_index = int(tail)
            for view in sorted(p for p in cond.iterdir() if p.is_dir()):
                sid = f"{subj.name}-{cond_name}-{view.name}"
                meta = {"subject_id": subj.name, "view": view.name,
                        "condition": condition, "seq_index": seq_index}
                yield sid, meta, view


def _scan_flat_tree(root: Path):
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        yield d.name, {}, d


def pack_dataset(root_dir, container_out, layout: str = "casia",
                 normalize: bool = False, storage: str = "packed",
                 manifest_out=None) -> DatasetManifest:
    """Pack a directory tree of frame images into a dataset container.

    ``layout="casia"`` expects root/<subject>/<condition>/<view>/<frame>.png
    and parses the path segments into metadata; ``layout="flat"`` expects
    root/<sequence_id>/<frame>.png with no metadata. Directories with zero
    readable frames are skipped and recorded as manifest warnings. With
    ``normalize=True`` every frame is size-normalized to 64x44 first;
    otherwise the stored bits round-trip exactly. ``storage`` selects the
    1-bit packed blob ("packed") or a tree of lossless single-channel
    images ("images", `container_out` then names a directory).
    """
    root = Path(root_dir)
    if layout == "casia":
        scan = _scan_casia_tree(root)
    elif layout == "flat":
        scan = _scan_flat_tree(root)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    if storage not in ("packed", "images"):
        raise ValueError(f"unknown storage {storage!r}")

    skipped = []

    def sequences():
        for sid, meta, frame_dir in scan:
            frames = _read_image_dir(frame_dir)
            if frames.shape[0] == 0:
                log.warning("skipping %s: no readable frames", frame_dir)
                skipped.append({"sequence_id": sid, "reason": "no frames",
                                "path": str(frame_dir)})
                continue
            if normalize:
                frames = np.stack([size_normalize(f) for f in frames])
            yield GaitSequence(frames, sid, **meta)

    if storage == "packed":
        manifest = write_container(sequences(), container_out, manifest_out)
        default_manifest = manifest_path_for(container_out)
    else:
        manifest = write_image_store(sequences(), container_out, manifest_out)
        default_manifest = Path(container_out) / "manifest.jsonl"
    manifest.warnings.extend(skipped)
    if skipped:
        manifest.save(manifest_out or default_manifest)
    if not manifest.entries:
        raise EmptyManifest(f"no sequences found under {root}")
    return manifest
