"""Part-based gait feature encoder and predictor head.

The encoder turns a binary silhouette clip into 16 parallel part vectors:
a shallow residual backbone maps each frame to a feature map, elementwise
temporal max pooling collapses the frame axis, horizontal pooling slices
the map into equal-height strips (global average + max pooling per strip,
combined by addition), and a per-part projection head (two separate FC
layers, BN+ReLU after the first) produces the embedding. The predictor has
the same separate-FC structure and maps one view's embedding toward its
positive counterpart. Every conv/FC layer except final outputs carries
batch normalization and ReLU.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import IndivisibleHeight, ShapeMismatch


@dataclass
class EncoderConfig:
    """Architecture hyper-parameters.

    Defaults give the full-size encoder: 3x3 stem with 64 channels, four
    basic residual blocks with channels (64, 128, 256, 512) and strides
    (2, 2, 1, 1), 16 parts, 512-dim part embeddings. A 64x44 input reaches
    horizontal pooling as a 512 x 16 x 11 map.
    """

    in_channels: int = 1
    stem_channels: int = 64
    block_channels: tuple[int, ...] = (64, 128, 256, 512)
    block_strides: tuple[int, ...] = (2, 2, 1, 1)
    parts: int = 16
    input_size: tuple[int, int] = (64, 44)
    combine: str = "add"  # "add" or "cat" for GAP+GMP combination

    def __post_init__(self):
        if len(self.block_channels) != len(self.block_strides):
            raise ValueError("block_channels and block_strides must align")
        if self.combine not in ("add", "cat"):
            raise ValueError("combine must be 'add' or 'cat'")

    @property
    def embed_dim(self) -> int:
        return self.block_channels[-1]

    @property
    def feature_hw(self) -> tuple[int, int]:
        h, w = self.input_size
        for s in self.block_strides:
            if s == 2:
                h, w = (h + 1) // 2, (w + 1) // 2
        return h, w

    def small(self) -> "EncoderConfig":
        """Reduced-width preset for desk-scale CPU experiments."""
        return EncoderConfig(block_channels=(4, 8, 16, 32), stem_channels=4,
                             parts=self.parts, input_size=self.input_size,
                             combine=self.combine)


class ConvBN(nn.Module):
    def __init__(self, c_in, c_out, kernel=3, stride=1, relu=True):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, kernel, stride, kernel // 2, bias=False)
        self.bn = nn.BatchNorm2d(c_out)
        self.relu = nn.ReLU(inplace=True) if relu else None

    def forward(self, x):
        x = self.bn(self.conv(x))
        return self.relu(x) if self.relu is not None else x


class BasicBlock(nn.Module):
    """Two 3x3 convolutions with a 1x1 shortcut when shape changes."""

    def __init__(self, c_in, c_out, stride):
        super().__init__()
        self.conv1 = ConvBN(c_in, c_out, stride=stride)
        self.conv2 = ConvBN(c_in=c_out, c_out=c_out, relu=False)
        if stride != 1 or c_in != c_out:
            self.down = ConvBN(c_in, c_out, kernel=1, stride=stride, relu=False)
        else:
            self.down = None
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        residual = x if self.down is None else self.down(x)
        return self.relu(self.conv2(self.conv1(x)) + residual)


class Backbone(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.stem = ConvBN(cfg.in_channels, cfg.stem_channels)
        c = cfg.stem_channels
        for i, (cc, s) in enumerate(zip(cfg.block_channels, cfg.block_strides), 1):
            setattr(self, f"rb{i}", BasicBlock(c, cc, s))
            c = cc
        self.n_blocks = len(cfg.block_channels)

    def forward(self, x):
        x = self.stem(x)
        for i in range(1, self.n_blocks + 1):
            x = getattr(self, f"rb{i}")(x)
        return x


class SeparateFC(nn.Module):
    """One independent linear map per part; no cross-part weights."""

    def __init__(self, parts, d_in, d_out):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(parts, d_in, d_out))
        nn.init.normal_(self.weight, std=math.sqrt(2.0 / d_in))

    def forward(self, x):  # (N, P, d_in) -> (N, P, d_out)
        return torch.einsum("npi,pio->npo", x, self.weight)


class PartMLP(nn.Module):
    """Two separate FC layers per part, BN+ReLU after the first only."""

    def __init__(self, parts, d_in, d_mid, d_out):
        super().__init__()
        self.parts = parts
        self.fc0 = SeparateFC(parts, d_in, d_mid)
        self.bn0 = nn.BatchNorm1d(parts * d_mid)
        self.relu = nn.ReLU(inplace=True)
        self.fc1 = SeparateFC(parts, d_mid, d_out)

    def forward(self, x):
        n = x.shape[0]
        h = self.fc0(x)
        h = self.bn0(h.reshape(n, -1)).reshape(n, self.parts, -1)
        return self.fc1(self.relu(h))


def temporal_pool(frame_maps: torch.Tensor) -> torch.Tensor:
    """Elementwise max over the frame axis: (N, T, C, h, w) -> (N, C, h, w)."""
    if frame_maps.shape[1] < 1:
        raise ShapeMismatch("temporal pooling needs at least one frame")
    return frame_maps.max(dim=1).values


def horizontal_pool(clip_map: torch.Tensor, parts: int = 16,
                    combine: str = "add") -> torch.Tensor:
    """Slice (N, C, h, w) into ``parts`` equal strips, pool each to a vector.

    Per strip the vector is mean-pool + max-pool over the strip's spatial
    positions (summed, or concatenated with ``combine='cat'``).
    """
    n, c, h, w = clip_map.shape
    if h % parts != 0:
        raise IndivisibleHeight(f"map height {h} not divisible by {parts} parts")
    strips = clip_map.reshape(n, c, parts, (h // parts) * w)
    mean = strips.mean(dim=3)
    amax = strips.max(dim=3).values
    combined = mean + amax if combine == "add" else torch.cat([mean, amax], dim=1)
    return combined.permute(0, 2, 1)  # (N, P, C) with C doubled for "cat"


class GaitEncoder(nn.Module):
    """backbone -> temporal pool -> horizontal pool -> per-part projection."""

    def __init__(self, cfg: EncoderConfig | None = None):
        super().__init__()
        self.cfg = cfg or EncoderConfig()
        self.backbone = Backbone(self.cfg)
        d = self.cfg.embed_dim
        d_in = d if self.cfg.combine == "add" else 2 * d
        self.head = PartMLP(self.cfg.parts, d_in, d, d)
        self.reset_parameters()

    def reset_parameters(self):
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            elif isinstance(m, (nn.BatchNorm2d, nn.BatchNorm1d)):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def _check_input(self, clip: torch.Tensor):
        h, w = self.cfg.input_size
        if clip.ndim != 4 or clip.shape[2] != h or clip.shape[3] != w:
            raise ShapeMismatch(
                f"expected clips of shape (N, T, {h}, {w}), got {tuple(clip.shape)}")

    def forward_backbone(self, clip: torch.Tensor) -> torch.Tensor:
        """(N, T, H, W) binary/float -> per-frame maps (N, T, C, h, w)."""
        self._check_input(clip)
        n, t, h, w = clip.shape
        x = clip.reshape(n * t, 1, h, w).float()
        maps = self.backbone(x)
        return maps.reshape(n, t, *maps.shape[1:])

    def pool(self, frame_maps: torch.Tensor) -> torch.Tensor:
        clip_map = temporal_pool(frame_maps)
        return horizontal_pool(clip_map, self.cfg.parts, self.cfg.combine)

    def project(self, part_vectors: torch.Tensor) -> torch.Tensor:
        return self.head(part_vectors)

    def forward(self, clip: torch.Tensor) -> torch.Tensor:
        """(N, T, H, W) -> part embeddings (N, parts, embed_dim)."""
        return self.project(self.pool(self.forward_backbone(clip)))


class Predictor(nn.Module):
    """Per-part two-layer head mapping an embedding toward its positive."""

    def __init__(self, parts: int = 16, dim: int = 512):
        super().__init__()
        mlp = PartMLP(parts, dim, dim, dim)
        self.fc0, self.bn0, self.relu, self.fc1 = mlp.fc0, mlp.bn0, mlp.relu, mlp.fc1
        self.parts = parts

    def forward(self, x):
        n = x.shape[0]
        h = self.fc0(x)
        h = self.bn0(h.reshape(n, -1)).reshape(n, self.parts, -1)
        return self.fc1(self.relu(h))


@torch.no_grad()
def encode_clip(encoder: GaitEncoder, frames: np.ndarray) -> np.ndarray:
    """Convenience: encode one (T, H, W) uint8 clip to (parts, dim) float32."""
    encoder.eval()
    x = torch.as_tensor(np.asarray(frames)[None], dtype=torch.float32)
    return encoder(x)[0].numpy()


def backbone_parameter_count(cfg: EncoderConfig) -> int:
    """Closed-form parameter count of the backbone (regression anchor)."""
    def conv(cin, cout, k):
        return cin * cout * k * k

    def bn(c):
        return 2 * c

    total = conv(cfg.in_channels, cfg.stem_channels, 3) + bn(cfg.stem_channels)
    c = cfg.stem_channels
    for cc, s in zip(cfg.block_channels, cfg.block_strides):
        total += conv(c, cc, 3) + bn(cc) + conv(cc, cc, 3) + bn(cc)
        if s != 1 or c != cc:
            total += conv(c, cc, 1) + bn(cc)
        c = cc
    return total
