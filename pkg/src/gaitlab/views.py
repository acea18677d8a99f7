"""View classification and view-variance-biased sequence sampling.

A small MLP predicts one of 7 merged view classes from the flattened
temporal-average silhouette of a clip. Per-sequence view statistics (mean
class and (m-1)-normalized variance) feed the biased sampler: sequences
with variance at or below the threshold carry almost no view transition
("dumb") and are drawn with a small probability during pre-training.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import EmptyManifest, MissingClass, UnknownViewAngle
from .silhouette import FRAME_H, FRAME_W, Clip

N_VIEW_CLASSES = 7
VIEW_INPUT_DIM = FRAME_H * FRAME_W
HIDDEN_WIDTHS = (1024, 512, 256, 128)


def merged_view_class(angle_deg: int | str) -> int:
    """Map a camera angle to its merged view class (0..6).

    Angles 180 degrees apart share a class (000/180 -> #0, 015/195 -> #1,
    ... 090/270 -> #6). Angles between 105 and 165 degrees fold onto their
    appearance-symmetric counterpart (e.g. 105 -> #5). The angle must be a
    multiple of 15.
    """
    angle = int(angle_deg)
    if angle % 15 != 0:
        raise UnknownViewAngle(f"angle {angle} is not a multiple of 15 degrees")
    folded = angle % 180
    cls = min(folded, 180 - folded) // 15
    return int(cls)


def build_view_input(clip: Clip | np.ndarray) -> np.ndarray:
    """Flattened temporal-average silhouette of a clip, values in [0, 1]."""
    frames = clip.frames if isinstance(clip, Clip) else np.asarray(clip)
    if frames.ndim != 3 or frames.shape[0] < 1:
        raise ValueError(f"expected (T>=1, H, W) frames, got {frames.shape}")
    return frames.astype(np.float32).mean(axis=0).reshape(-1)


class ViewClassifier(nn.Module):
    """Four BN+ReLU fully-connected layers plus a classification layer."""

    def __init__(self, input_dim: int = VIEW_INPUT_DIM,
                 hidden: tuple[int, ...] = HIDDEN_WIDTHS,
                 n_classes: int = N_VIEW_CLASSES):
        super().__init__()
        layers = []
        d = input_dim
        for width in hidden:
            layers += [nn.Linear(d, width), nn.BatchNorm1d(width), nn.ReLU()]
            d = width
        self.hidden = nn.Sequential(*layers)
        self.classify = nn.Linear(d, n_classes)
        self.n_classes = n_classes

    def forward(self, x):
        return self.classify(self.hidden(x))

    @torch.no_grad()
    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        self.eval()
        logits = self(torch.as_tensor(np.atleast_2d(x), dtype=torch.float32))
        return torch.softmax(logits, dim=1).numpy()

    @torch.no_grad()
    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)


def train_view_classifier(examples, epsilon: float = 0.1, epochs: int = 60,
                          lr: float = 1e-3, batch_size: int = 32,
                          seed: int = 0) -> ViewClassifier:
    """Fit the view classifier with label-smoothed softmax loss.

    ``examples`` is a list of (clip, class_index) pairs; every one of the 7
    classes must be present. Training is deterministic given the seed.
    """
    inputs = np.stack([build_view_input(c) for c, _ in examples])
    labels = np.array([int(y) for _, y in examples], dtype=np.int64)
    present = set(labels.tolist())
    missing = sorted(set(range(N_VIEW_CLASSES)) - present)
    if missing:
        raise MissingClass(f"no examples for view classes {missing}")

    torch.manual_seed(seed)
    model = ViewClassifier(input_dim=inputs.shape[1])
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss(label_smoothing=epsilon)
    x = torch.as_tensor(inputs, dtype=torch.float32)
    y = torch.as_tensor(labels)
    rng = np.random.default_rng(seed)
    model.train()
    for _ in range(epochs):
        order = rng.permutation(len(labels))
        for lo in range(0, len(order), batch_size):
            idx = order[lo:lo + batch_size]
            if len(idx) < 2:  # BatchNorm needs more than one sample
                continue
            opt.zero_grad()
            loss = loss_fn(model(x[idx]), y[idx])
            loss.backward()
            opt.step()
    model.eval()
    return model


def smoothed_cross_entropy(logits: torch.Tensor, targets: torch.Tensor,
                           epsilon: float) -> torch.Tensor:
    """Label-smoothed cross-entropy, target mass (1-eps) + eps/K uniform."""
    return nn.functional.cross_entropy(logits, targets, label_smoothing=epsilon)


@dataclass
class SequenceViewStats:
    """Mean predicted view class and its (m-1)-normalized variance."""

    v_bar: float
    sigma_sq: float
    m: int


def sequence_view_stats(predicted_views) -> SequenceViewStats:
    views = np.asarray(list(predicted_views), dtype=np.float64)
    if views.size == 0:
        raise ValueError("need at least one predicted view")
    m = int(views.size)
    v_bar = float(views.mean())
    sigma_sq = 0.0 if m < 2 else float(((views - v_bar) ** 2).sum() / (m - 1))
    return SequenceViewStats(v_bar, sigma_sq, m)


@dataclass
class SamplerConfig:
    dumb_prob: float = 0.1
    dumb_threshold: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.dumb_prob <= 1.0:
            raise ValueError("dumb_prob must lie in [0,1]")


def is_dumb(stats: SequenceViewStats, cfg: SamplerConfig | None = None) -> bool:
    """A sequence with variance at or below the threshold shows (almost) no
    view transition; variance 0 counts as dumb."""
    threshold = (cfg or SamplerConfig()).dumb_threshold
    return stats.sigma_sq <= threshold


def classify_sequence_views(classifier: ViewClassifier, frames: np.ndarray,
                            clip_len: int = 16) -> list[int]:
    """Predict a view class per non-overlapping window of a sequence.

    The tail window keeps whatever frames remain (>= 1).
    """
    t = frames.shape[0]
    inputs = []
    for lo in range(0, t, clip_len):
        inputs.append(build_view_input(frames[lo:lo + clip_len]))
    return [int(c) for c in classifier.predict(np.stack(inputs))]


def compute_view_stats_table(classifier: ViewClassifier, sequences,
                             clip_len: int = 16) -> dict[str, SequenceViewStats]:
    table = {}
    for seq in sequences:
        preds = classify_sequence_views(classifier, seq.frames, clip_len)
        table[seq.sequence_id] = sequence_view_stats(preds)
    return table


def save_view_stats(path, table: dict[str, SequenceViewStats]):
    with open(path, "w") as fh:
        for sid in sorted(table):
            s = table[sid]
            fh.write(f"{sid}\t{s.v_bar!r}\t{s.sigma_sq!r}\t{s.m}\n")


def load_view_stats(path) -> dict[str, SequenceViewStats]:
    table = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            sid, v_bar, sigma_sq, m = line.split("\t")
            table[sid] = SequenceViewStats(float(v_bar), float(sigma_sq), int(m))
    return table


def biased_sampler(sequence_ids, stats_table: dict[str, SequenceViewStats],
                   cfg: SamplerConfig, rng: np.random.Generator):
    """Infinite stream of sequence ids, dumb pool drawn with ``dumb_prob``.

    Within a pool the draw is uniform. When one pool is empty the other is
    used exclusively. Sequences without stats fall in the non-dumb pool.
    """
    ids = list(sequence_ids)
    if not ids:
        raise EmptyManifest("no sequences to sample from")
    dumb, other = [], []
    for sid in ids:
        stats = stats_table.get(sid)
        if stats is not None and is_dumb(stats, cfg):
            dumb.append(sid)
        else:
            other.append(sid)
    while True:
        if dumb and other:
            pool = dumb if rng.random() < cfg.dumb_prob else other
        else:
            pool = dumb or other
        yield pool[int(rng.integers(0, len(pool)))]
