"""Procedural stick-body silhouette sequences with controllable factors.

The generator draws an articulated 2-segment-limb walker on a 64x44 binary
canvas. Identity lives in the body proportions and stride parameters, the
camera view scales the projected limb swing (profile widest, frontal
narrowest), and walking conditions add a carried blob (BG) or a dilated
torso band (CL). Everything is deterministic given the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

from .container import DatasetManifest, write_container
from .errors import ParamOutOfRange
from .silhouette import FRAME_H, FRAME_W, GaitSequence

VIEWS_DEG = tuple(range(0, 181, 15))
CONDITIONS = ("NM", "BG", "CL")

# documented parameter ranges (ratios are fractions of body height)
RANGES = {
    "head_r": (0.055, 0.095),
    "torso_w": (0.085, 0.165),
    "hip_frac": (0.44, 0.54),
    "shoulder_frac": (0.70, 0.80),
    "leg_amp": (0.28, 0.60),
    "arm_amp": (0.15, 0.42),
    "limb_w": (0.030, 0.060),
    "period": (6, 16),
    "stride_amp": (0.25, 0.60),
}

_BODY_TOP = 2
_BODY_BOTTOM = FRAME_H - 2
_BODY_H = _BODY_BOTTOM - _BODY_TOP


@dataclass
class SyntheticIdentity:
    """Body proportions and gait parameters of one synthetic walker."""

    head_r: float
    torso_w: float
    hip_frac: float
    shoulder_frac: float
    leg_amp: float
    arm_amp: float
    limb_w: float
    period: int
    stride_amp: float

    def __post_init__(self):
        for name, (lo, hi) in RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ParamOutOfRange(f"{name}={v} outside [{lo}, {hi}]")
        if self.period < 4:
            raise ParamOutOfRange("period must be >= 4 frames")


def sample_identities(n_ids: int, rng: np.random.Generator) -> list[SyntheticIdentity]:
    """Draw ``n_ids`` identities with enforced parameter spacing.

    Every ratio parameter is laid out on a shuffled lattice over its range
    with sub-cell jitter, so no two identities share a value in any
    parameter.
    """
    cols = {}
    for name, (lo, hi) in RANGES.items():
        grid = np.linspace(0.0, 1.0, n_ids, endpoint=False)
        jitter = rng.uniform(0.05, 0.95, n_ids) / n_ids
        vals = lo + (grid[rng.permutation(n_ids)] + jitter) * (hi - lo)
        if name == "period":
            # keep periods integral and >= 4 but preserve distinctness order
            vals = np.round(vals).astype(int)
        cols[name] = vals
    out = []
    for i in range(n_ids):
        params = {k: (int(v[i]) if k == "period" else float(v[i]))
                  for k, v in cols.items()}
        params["period"] = max(4, params["period"])
        out.append(SyntheticIdentity(**params))
    return out


def _capsule(canvas, p0, p1, thickness):
    cv2.line(canvas, (int(round(p0[0])), int(round(p0[1]))),
             (int(round(p1[0])), int(round(p1[1]))), 1,
             thickness=max(1, int(round(thickness))), lineType=cv2.LINE_8)


def _render_frame(ident: SyntheticIdentity, view_scale: float, width_scale: float,
                  phase: float, lean: float) -> np.ndarray:
    canvas = np.zeros((FRAME_H, FRAME_W), dtype=np.uint8)
    cx = FRAME_W / 2.0
    hip_y = _BODY_BOTTOM - ident.hip_frac * _BODY_H
    shoulder_y = _BODY_BOTTOM - ident.shoulder_frac * _BODY_H
    head_r = ident.head_r * _BODY_H
    head_cy = _BODY_TOP + head_r
    torso_hw = ident.torso_w * _BODY_H * width_scale
    limb_t = ident.limb_w * _BODY_H * 2.0

    # torso: filled quadrilateral, slightly narrower at the hip
    quad = np.array([[cx - torso_hw, shoulder_y],
                     [cx + torso_hw, shoulder_y],
                     [cx + 0.8 * torso_hw + lean, hip_y],
                     [cx - 0.8 * torso_hw + lean, hip_y]], dtype=np.float64)
    cv2.fillPoly(canvas, [np.round(quad).astype(np.int32)], 1)
    cv2.circle(canvas, (int(round(cx)), int(round(head_cy))),
               max(1, int(round(head_r))), 1, -1)
    _capsule(canvas, (cx, head_cy), (cx, shoulder_y), limb_t)

    leg_len = (_BODY_BOTTOM - hip_y)
    thigh, shin = 0.52 * leg_len, 0.50 * leg_len
    arm_len = (hip_y - shoulder_y) * 0.95
    hip_dx = 0.35 * torso_hw

    for side, sgn in ((+1, +1.0), (-1, -1.0)):
        swing = ident.leg_amp * view_scale * math.sin(phase + (0.0 if side > 0 else math.pi))
        hip = (cx + sgn * hip_dx + lean, hip_y)
        knee = (hip[0] + thigh * math.sin(swing), hip[1] + thigh * math.cos(swing))
        ankle_ang = swing * 0.55
        foot = (knee[0] + shin * math.sin(ankle_ang), knee[1] + shin * math.cos(ankle_ang))
        _capsule(canvas, hip, knee, limb_t)
        _capsule(canvas, knee, foot, limb_t * 0.9)

        arm_sw = ident.arm_amp * view_scale * math.sin(phase + (math.pi if side > 0 else 0.0))
        sh = (cx + sgn * torso_hw * 0.9, shoulder_y + 1.0)
        elbow = (sh[0] + 0.55 * arm_len * math.sin(arm_sw), sh[1] + 0.55 * arm_len * math.cos(arm_sw))
        hand = (elbow[0] + 0.45 * arm_len * math.sin(arm_sw * 0.8),
                elbow[1] + 0.45 * arm_len * math.cos(arm_sw * 0.8))
        _capsule(canvas, sh, elbow, limb_t * 0.8)
        _capsule(canvas, elbow, hand, limb_t * 0.7)
    return canvas


def _apply_condition(frame: np.ndarray, ident: SyntheticIdentity,
                     condition: str, width_scale: float) -> np.ndarray:
    if condition == "NM":
        return frame
    hip_row = int(round(_BODY_BOTTOM - ident.hip_frac * _BODY_H))
    shoulder_row = int(round(_BODY_BOTTOM - ident.shoulder_frac * _BODY_H))
    if condition == "BG":
        # carried blob at hand height, fixed beside the torso
        x = int(round(FRAME_W / 2.0 + ident.torso_w * _BODY_H * width_scale + 3))
        y = hip_row - 1
        out = frame.copy()
        cv2.circle(out, (min(x, FRAME_W - 2), y), 3, 1, -1)
        return out
    if condition == "CL":
        # widen the torso band, horizontal-only growth keeps the diff in-band
        out = frame.copy()
        band = slice(shoulder_row + 1, hip_row - 1)
        kernel = np.ones((1, 5), dtype=np.uint8)
        out[band] = cv2.dilate(frame[band], kernel)
        return out
    raise ParamOutOfRange(f"unknown condition {condition!r}")


def _apply_noise(frame: np.ndarray, noise_level: float,
                 rng: np.random.Generator) -> np.ndarray:
    kernel = np.ones((3, 3), dtype=np.uint8)
    inner = frame & (1 - cv2.erode(frame, kernel))
    outer = cv2.dilate(frame, kernel) & (1 - frame)
    flips = rng.random(frame.shape) < noise_level
    out = frame.copy()
    out[(inner == 1) & flips] = 0
    out[(outer == 1) & flips] = 1
    return out


def render_sequence(ident: SyntheticIdentity, view_deg: int, n_frames: int,
                    condition: str = "NM", noise_level: float = 0.0,
                    rng: np.random.Generator | None = None,
                    sequence_id: str = "synthetic", subject_id: str | None = None,
                    seq_index: int | None = None,
                    phase_offset: float = 0.0) -> GaitSequence:
    """Render one walking sequence for an identity at a camera view.

    ``view_deg`` must be a multiple of 15 in [0, 180]; the projected limb
    swing scales with sin(view) and the torso width with |cos(view)|, so 0
    and 180 degrees look alike (they merge into one view class). The period
    is exact: frame t equals frame t+period at noise 0.
    """
    if view_deg not in VIEWS_DEG:
        raise ParamOutOfRange(f"view_deg must be one of {VIEWS_DEG}, got {view_deg}")
    if condition not in CONDITIONS:
        raise ParamOutOfRange(f"condition must be one of {CONDITIONS}")
    if n_frames < 1:
        raise ParamOutOfRange("n_frames must be >= 1")
    if not 0.0 <= noise_level <= 0.25:
        raise ParamOutOfRange("noise_level must lie in [0, 0.25]")
    if noise_level > 0.0 and rng is None:
        raise ParamOutOfRange("noise_level > 0 requires an rng")

    theta = math.radians(view_deg)
    view_scale = 0.12 + 0.88 * abs(math.sin(theta))
    width_scale = 0.55 + 0.45 * abs(math.cos(theta))
    frames = []
    for t in range(n_frames):
        # integer wrap keeps the phase bit-exactly periodic
        phase = 2.0 * math.pi * ((t % ident.period) / ident.period) + phase_offset
        lean = 0.10 * ident.stride_amp * _BODY_H * view_scale * math.sin(phase) * 0.15
        frame = _render_frame(ident, view_scale * (0.7 + 0.3 * ident.stride_amp),
                              width_scale, phase, lean)
        frame = _apply_condition(frame, ident, condition, width_scale)
        if noise_level > 0.0:
            frame = _apply_noise(frame, noise_level, rng)
        frames.append(frame)
    view_tag = f"{view_deg:03d}"
    return GaitSequence(np.stack(frames), sequence_id, subject_id, view_tag,
                        condition, seq_index)


def build_corpus(container_out, n_ids: int, views=VIEWS_DEG,
                 conditions=("NM",), seqs_per_cell: int = 1,
                 n_frames: int = 40, seed: int = 0, noise_level: float = 0.0,
                 manifest_out=None) -> DatasetManifest:
    """Generate a labelled corpus and pack it into a container.

    One sequence is rendered per (identity, view, condition, k) cell, with
    per-sequence stride phase so repeats of a cell differ. ``conditions``
    maps condition tag to per-cell count when given as a dict, e.g.
    ``{"NM": 6, "BG": 2, "CL": 2}`` builds a CASIA-style corpus.
    """
    if n_ids < 2:
        raise ParamOutOfRange("a corpus needs at least 2 identities")
    if isinstance(conditions, dict):
        cond_counts = dict(conditions)
    else:
        cond_counts = {c: seqs_per_cell for c in conditions}
    root = np.random.default_rng(seed)
    idents = sample_identities(n_ids, root)

    def sequences():
        for i, ident in enumerate(idents):
            subject = f"s{i:03d}"
            for view in views:
                for cond, count in cond_counts.items():
                    for k in range(1, count + 1):
                        ss = np.random.SeedSequence([seed, i, int(view),
                                                     CONDITIONS.index(cond), k])
                        cell_rng = np.random.default_rng(ss)
                        phase = float(cell_rng.uniform(0.0, 2.0 * math.pi))
                        sid = f"{subject}-{cond}-{k:02d}-{view:03d}"
                        yield render_sequence(ident, view, n_frames, cond,
                                              noise_level, cell_rng, sid,
                                              subject, k, phase)

    return write_container(sequences(), container_out, manifest_out)
