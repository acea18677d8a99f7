"""Spatial silhouette augmentation: flip, affine, perspective, dilation.

Each transform is gated independently (probability 0.5 by default) and its
parameters are sampled once per clip, then applied identically to every
frame so temporal coherence survives. Geometric warps use bilinear
interpolation re-binarized at 0.5; out-of-canvas pixels are dropped.
Composition order is fixed: flip -> affine -> perspective -> dilation.
"""
from __future__ import annotations


from dataclasses import dataclass

import cv2
import numpy as np

from .silhouette import Clip

_KERNEL_SHAPES = {"rectangle": cv2.MORPH_RECT, "cross": cv2.MORPH_CROSS,
                  "ellipse": cv2.MORPH_ELLIPSE}


@dataclass
class SpatialAugConfig:
    """Gating probabilities and parameter ranges for the spatial transforms.

    Defaults: every transform fires with probability 0.5; rotation angle
    uniform in [-10, +10] degrees; shear level uniform in [-5e-3, +5e-3];
    perspective corner skew within 10 px per axis; dilation uses a
    rectangle/cross/ellipse structuring element of size 3 or 5 on a row
    band covering 10-50% of the body height.
    """

    p_flip: float = 0.5
    p_affine: float = 0.5
    p_perspective: float = 0.5
    p_dilation: float = 0.5
    rotation_deg: float = 10.0
    shear_max: float = 5e-3
    perspective_max_px: float = 10.0
    dilation_kernel_sizes: tuple[int, ...] = (3, 5)
    dilation_kernel_shapes: tuple[str, ...] = ("rectangle", "cross", "ellipse")
    band_frac_min: float = 0.1
    band_frac_max: float = 0.5

    def __post_init__(self):
        for name in ("p_flip", "p_affine", "p_perspective", "p_dilation"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0,1], got {p}")
        if self.rotation_deg < 0 or self.shear_max < 0 or self.perspective_max_px < 0:
            raise ValueError("parameter ranges must be symmetric about 0 (non-negative half-width)")
        if not 0.0 <= self.band_frac_min <= self.band_frac_max <= 1.0:
            raise ValueError("band fractions must satisfy 0 <= min <= max <= 1")
        for s in self.dilation_kernel_shapes:
            if s not in _KERNEL_SHAPES:
                raise ValueError(f"unknown structuring element {s!r}")


@dataclass
class AugRecord:
    """What fired for one clip, with the sampled parameters (one set per clip)."""

    flipped: bool = False
    affine: tuple[float, float] | None = None          # (angle_deg, shear)
    perspective: np.ndarray | None = None              # (4, 2) corner offsets, px
    dilation: tuple[str, int, int, int] | None = None  # (shape, size, row0, row1)

    def applied(self) -> list[str]:
        out = []
        if self.flipped:
            out.append("flip")
        if self.affine is not None:
            out.append("affine")
        if self.perspective is not None:
            out.append("perspective")
        if self.dilation is not None:
            out.append("dilation")
        return out


def _rebinarize(img: np.ndarray) -> np.ndarray:
    return (img >= 0.5).astype(np.uint8)


def _warp_frames(frames: np.ndarray, warp) -> np.ndarray:
    return np.stack([_rebinarize(warp(f.astype(np.float32))) for f in frames])


def horizontal_flip(clip: Clip) -> Clip:
    """Mirror every frame about its vertical axis (column c -> W-1-c)."""
    return Clip(clip.frames[:, :, ::-1], clip.source_id, clip.frame_indices)


def affine_matrix(angle_deg: float, shear: float, h: int, w: int) -> np.ndarray:
    """2x3 matrix rotating by ``angle_deg`` about the frame center, then
    shearing x by ``shear * y`` (center-pivoted)."""
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    rot = cv2.getRotationMatrix2D((cx, cy), angle_deg, 1.0)
    sh = np.array([[1.0, shear, -shear * cy], [0.0, 1.0, 0.0]], dtype=np.float64)
    # compose: first rotate, then shear
    m = sh @ np.vstack([rot, [0.0, 0.0, 1.0]])
    return m[:2]


def apply_affine(clip: Clip, angle_deg: float, shear: float) -> Clip:
    h, w = clip.frames.shape[1:]
    if angle_deg == 0.0 and shear == 0.0:
        return Clip(clip.frames.copy(), clip.source_id, clip.frame_indices)
    m = affine_matrix(angle_deg, shear, h, w)
    frames = _warp_frames(clip.frames,
                          lambda f: cv2.warpAffine(f, m, (w, h),
                                                   flags=cv2.INTER_LINEAR,
                                                   borderValue=0.0))
    return Clip(frames, clip.source_id, clip.frame_indices)


def random_affine(clip: Clip, cfg: SpatialAugConfig,
                  rng: np.random.Generator) -> tuple[Clip, AugRecord]:
    angle = float(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
    shear = float(rng.uniform(-cfg.shear_max, cfg.shear_max))
    return apply_affine(clip, angle, shear), AugRecord(affine=(angle, shear))


def frame_corners(h: int, w: int) -> np.ndarray:
    return np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]],
                    dtype=np.float32)


def apply_perspective(clip: Clip, corner_offsets: np.ndarray) -> Clip:
    h, w = clip.frames.shape[1:]
    offsets = np.asarray(corner_offsets, dtype=np.float32)
    if not offsets.any():
        return Clip(clip.frames.copy(), clip.source_id, clip.frame_indices)
    src = frame_corners(h, w)
    dst = src + offsets
    hom = cv2.getPerspectiveTransform(src, dst)
    frames = _warp_frames(clip.frames,
                          lambda f: cv2.warpPerspective(f, hom, (w, h),
                                                        flags=cv2.INTER_LINEAR,
                                                        borderValue=0.0))
    return Clip(frames, clip.source_id, clip.frame_indices)


def random_perspective(clip: Clip, cfg: SpatialAugConfig,
                       rng: np.random.Generator) -> tuple[Clip, AugRecord]:
    offsets = rng.uniform(-cfg.perspective_max_px, cfg.perspective_max_px,
                          size=(4, 2))
    return apply_perspective(clip, offsets), AugRecord(perspective=offsets)


def apply_body_dilation(clip: Clip, shape: str, size: int,
                        row0: int, row1: int) -> Clip:
    """Dilate the rows [row0, row1) of every frame; identity when empty."""
    if row1 <= row0:
        return Clip(clip.frames.copy(), clip.source_id, clip.frame_indices)
    kernel = cv2.getStructuringElement(_KERNEL_SHAPES[shape], (size, size))
    out = clip.frames.copy()
    for i, frame in enumerate(clip.frames):
        dil = cv2.dilate(frame, kernel)
        out[i, row0:row1] = dil[row0:row1]
    return Clip(out, clip.source_id, clip.frame_indices)


def random_body_dilation(clip: Clip, cfg: SpatialAugConfig,
                         rng: np.random.Generator) -> tuple[Clip, AugRecord]:
    """Dilate a random contiguous row band of the body, one band per clip.

    The band height is uniform in [band_frac_min, band_frac_max] of the
    body's row extent (union over frames); the structuring element shape
    and size are drawn from the configured sets.
    """
    shape = str(rng.choice(list(cfg.dilation_kernel_shapes)))
    size = int(rng.choice(list(cfg.dilation_kernel_sizes)))
    body_rows = np.flatnonzero(clip.frames.any(axis=(0, 2)))
    if body_rows.size == 0:
        rec = AugRecord(dilation=(shape, size, 0, 0))
        return Clip(clip.frames.copy(), clip.source_id, clip.frame_indices), rec
    top, bottom = int(body_rows[0]), int(body_rows[-1])
    body_h = bottom - top + 1
    frac = float(rng.uniform(cfg.band_frac_min, cfg.band_frac_max))
    band_h = int(round(frac * body_h))
    row0 = top + int(rng.integers(0, body_h - band_h + 1)) if band_h < body_h else top
    row1 = row0 + band_h
    rec = AugRecord(dilation=(shape, size, row0, row1))
    return apply_body_dilation(clip, shape, size, row0, row1), rec


def apply_record(clip: Clip, record: AugRecord) -> Clip:
    """Replay a recorded parameter set on a clip (deterministic)."""
    out = clip
    if record.flipped:
        out = horizontal_flip(out)
    if record.affine is not None:
        out = apply_affine(out, *record.affine)
    if record.perspective is not None:
        out = apply_perspective(out, record.perspective)
    if record.dilation is not None:
        out = apply_body_dilation(out, *record.dilation)
    return out


def apply_sao_spatial(clip: Clip, cfg: SpatialAugConfig,
                      rng: np.random.Generator) -> tuple[Clip, AugRecord]:
    """Gate and compose the four spatial transforms on one clip."""
    record = AugRecord()
    out = clip
    if rng.random() < cfg.p_flip:
        record.flipped = True
        out = horizontal_flip(out)
    if rng.random() < cfg.p_affine:
        out, r = random_affine(out, cfg, rng)
        record.affine = r.affine
    if rng.random() < cfg.p_perspective:
        out, r = random_perspective(out, cfg, rng)
        record.perspective = r.perspective
    if rng.random() < cfg.p_dilation:
        out, r = random_body_dilation(out, cfg, rng)
        record.dilation = r.dilation
    return out, record
