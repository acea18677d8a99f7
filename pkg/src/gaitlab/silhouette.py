"""Silhouette frames, sequences, clips: normalization and clip sampling.

A silhouette frame is a 2-D ``uint8`` array with values in {0, 1}.
Normalized frames are 64x44: the body spans the full height and its
horizontal center of mass sits at column 22.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBody, EmptySilhouette, ShapeMismatch

FRAME_H = 64
FRAME_W = 44
CENTER_COL = 22


def as_binary(mask) -> np.ndarray:
    """Coerce an array-like mask to a contiguous uint8 {0,1} array."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D mask, got shape {arr.shape}")
    return np.ascontiguousarray((arr > 0).astype(np.uint8))


def is_binary(frames: np.ndarray) -> bool:
    return bool(np.isin(frames, (0, 1)).all())


@dataclass
class GaitSequence:
    """Ordered silhouette frames of one walking pass.

    frames: (T, H, W) uint8 array with values in {0, 1}, T >= 1.
    Metadata fields are optional; ``seq_index`` is the 1-based run number
    within (subject, condition) when the source layout provides one.
    """

    frames: np.ndarray
    sequence_id: str
    subject_id: str | None = None
    view: str | None = None
    condition: str | None = None
    seq_index: int | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.uint8)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise ShapeMismatch(
                f"sequence frames must be (T>=1, H, W), got {self.frames.shape}")
        if not is_binary(self.frames):
            raise ShapeMismatch("sequence frames must be binary {0,1}")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


@dataclass
class Clip:
    """Fixed-length frame window sampled from a sequence.

    ``frame_indices`` are indices into the source sequence; they follow
    source order and wrap cyclically when the sequence was shorter than
    the requested length.
    """

    frames: np.ndarray
    source_id: str
    frame_indices: np.ndarray = field(default=None)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.uint8)
        if self.frames.ndim != 3:
            raise ShapeMismatch(f"clip frames must be (L, H, W), got {self.frames.shape}")
        if self.frame_indices is None:
            self.frame_indices = np.arange(self.frames.shape[0])
        self.frame_indices = np.asarray(self.frame_indices, dtype=np.int64)
        if self.frame_indices.shape != (self.frames.shape[0],):
            raise ShapeMismatch("frame_indices length must equal clip length")

    def __len__(self) -> int:
        return self.frames.shape[0]


def size_normalize(raw_mask, target_h: int = FRAME_H, target_w: int = FRAME_W) -> np.ndarray:
    """Normalize a raw binary mask to the standard frame geometry.

    Crops to the foreground's row extent, rescales the crop so its height
    fills ``target_h`` (aspect preserved, nearest-neighbor sampling), then
    places the horizontal center of mass at the canvas center column and
    crops/zero-pads to ``target_w``.

    Raises EmptySilhouette when the mask has no foreground pixel and
    DegenerateBody when the foreground is under 2 px tall. Idempotent on
    its own output.
    """
    mask = as_binary(raw_mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise EmptySilhouette("mask has no foreground pixel")
    top, bottom = int(rows[0]), int(rows[-1])
    crop_h = bottom - top + 1
    if crop_h < 2:
        raise DegenerateBody(f"foreground height {crop_h} px is below 2 px")
    crop = mask[top:bottom + 1]

    src_w = crop.shape[1]
    dst_w = max(1, int(round(src_w * target_h / crop_h)))
    row_idx = (np.arange(target_h) * crop_h) // target_h
    # floor sampling can skip the last source row when downscaling; pin it
    # so the foreground always spans the full output height
    row_idx[-1] = crop_h - 1
    col_idx = (np.arange(dst_w) * src_w) // dst_w
    scaled = crop[row_idx][:, col_idx]

    total = scaled.sum()
    if total == 0:  # cannot happen: crop rows each hold >= 1 px
        raise EmptySilhouette("mask lost its foreground during scaling")
    com = float((scaled.sum(axis=0) * np.arange(dst_w)).sum()) / float(total)
    center = target_w // 2
    offset = int(np.round(com)) - center

    out = np.zeros((target_h, target_w), dtype=np.uint8)
    src_lo = max(0, offset)
    src_hi = min(dst_w, offset + target_w)
    if src_lo < src_hi:
        out[:, src_lo - offset:src_hi - offset] = scaled[:, src_lo:src_hi]
    return out


def normalize_sequence(seq: GaitSequence, target_h: int = FRAME_H,
                       target_w: int = FRAME_W) -> GaitSequence:
    """Size-normalize every frame of a sequence."""
    frames = np.stack([size_normalize(f, target_h, target_w) for f in seq.frames])
    return GaitSequence(frames, seq.sequence_id, seq.subject_id, seq.view,
                        seq.condition, seq.seq_index)


def _cyclic_take(seq: GaitSequence, indices: np.ndarray) -> Clip:
    src = np.mod(indices, seq.frame_count)
    return Clip(seq.frames[src], seq.sequence_id, src)


def sample_clip(seq: GaitSequence, length: int, rng: np.random.Generator) -> Clip:
    """Draw a clip of exactly ``length`` frames.

    Sequences with at least ``length`` frames yield a uniformly random
    contiguous window; shorter sequences are extended by cyclic repetition
    starting at frame 0.
    """
    if length < 1:
        raise ValueError("clip length must be >= 1")
    t = seq.frame_count
    if t >= length:
        start = int(rng.integers(0, t - length + 1))
        idx = np.arange(start, start + length)
        return Clip(seq.frames[idx], seq.sequence_id, idx)
    return _cyclic_take(seq, np.arange(length))


def sample_disjoint_clip_pair(seq: GaitSequence, length: int,
                              rng: np.random.Generator) -> tuple[Clip, Clip]:
    """Draw two non-overlapping clips of ``length`` frames each.

    With ``frame_count >= 2*length`` both clips are contiguous windows with
    disjoint index sets and randomized order. Shorter sequences are first
    cyclically extended to exactly ``2*length`` frames (random rotation
    start) and then split in half; disjointness then holds on the extended
    index axis.
    """
    if length < 1:
        raise ValueError("clip length must be >= 1")
    t = seq.frame_count
    if t >= 2 * length:
        s1 = int(rng.integers(0, t - 2 * length + 1))
        s2 = int(rng.integers(s1 + length, t - length + 1))
        a = Clip(seq.frames[s1:s1 + length], seq.sequence_id,
                 np.arange(s1, s1 + length))
        b = Clip(seq.frames[s2:s2 + length], seq.sequence_id,
                 np.arange(s2, s2 + length))
    else:
        rot = int(rng.integers(0, t))
        ext = rot + np.arange(2 * length)
        a = _cyclic_take(seq, ext[:length])
        b = _cyclic_take(seq, ext[length:])
    if rng.random() < 0.5:
        a, b = b, a
    return a, b
