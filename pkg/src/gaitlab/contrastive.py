"""Self-supervised pre-training: symmetrized InfoNCE with stop-gradient.

For each sequence in a batch two non-overlapping clips are drawn, spatially
augmented independently, and encoded into part embeddings k_i / k_i+. The
predictor maps one side to q; the loss on a query is the temperature-scaled
softmax cross-entropy over cosine similarities against all keys of the
batch, with the matching key as the target (keys are treated as constants:
stop-gradient). The two directions are averaged, per part, then over parts
and over the batch. The temperature divides the similarity (tau = 16 by
default); ``tau_mode="multiply"`` switches to the similarity * scale
convention.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .augment import SpatialAugConfig, apply_sao_spatial
from .checkpoint import save_checkpoint
from .container import DatasetManifest
from .encoder import EncoderConfig, GaitEncoder, Predictor
from .errors import ConfigConflict, ZeroNormVector
from .silhouette import Clip, GaitSequence, sample_clip, sample_disjoint_clip_pair
from .views import SamplerConfig, biased_sampler


@dataclass
class PretrainConfig:
    """Pre-training hyper-parameters (defaults match the full-scale recipe:
    512-sequence batches, 16-frame clips, temperature 16, SGD at 0.1 with
    momentum 0.9, learning-rate drops x0.1 at 80K/120K of 150K steps)."""

    batch_size: int = 512              # sequences per step (= positive pairs)
    clip_len: int = 16
    tau: float = 16.0
    tau_mode: str = "divide"           # "divide" (as defined) or "multiply"
    lr: float = 0.1
    momentum: float = 0.9
    milestones: tuple[int, ...] = (80_000, 120_000)
    total_steps: int = 150_000
    lr_decay: float = 0.1
    weight_decay: float = 0.0
    use_spatial: bool = True
    use_intraseq: bool = True
    use_sampling: bool = True
    use_negatives: bool = True
    subset_frac: float = 1.0
    log_every: int = 50
    ckpt_every: int = 0                # 0: only the final checkpoint
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.tau_mode not in ("divide", "multiply"):
            raise ValueError("tau_mode must be 'divide' or 'multiply'")
        ms = tuple(self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])) or any(m >= self.total_steps for m in ms):
            raise ValueError("milestones must be strictly increasing and < total_steps")
        if not 0.0 < self.subset_frac <= 1.0:
            raise ValueError("subset_frac must lie in (0, 1]")
        self.milestones = ms


def _scaled_logits(sim: torch.Tensor, tau: float, tau_mode: str) -> torch.Tensor:
    return sim / tau if tau_mode == "divide" else sim * tau


def _safe_normalize(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    norms = x.norm(dim=dim)
    if (norms == 0).any():
        raise ZeroNormVector("cosine similarity undefined for a zero-norm vector")
    return x / norms.unsqueeze(dim)


def info_nce(query: torch.Tensor, keys: torch.Tensor, positive_index: int,
             tau: float = 16.0, tau_mode: str = "divide") -> torch.Tensor:
    """Loss of one query against a key set with one marked positive.

    query: (D,) vector; keys: (n, D). Equals the cross-entropy of the
    softmax over temperature-scaled cosine similarities with the positive
    as the target class.
    """
    query = torch.as_tensor(query, dtype=torch.get_default_dtype()) \
        if not torch.is_tensor(query) else query
    keys = torch.as_tensor(keys, dtype=query.dtype) if not torch.is_tensor(keys) else keys
    if keys.ndim != 2 or not 0 <= positive_index < keys.shape[0]:
        raise ValueError("keys must be (n, D) with a valid positive index")
    q = _safe_normalize(query.reshape(-1), dim=0)
    k = _safe_normalize(keys, dim=1)
    logits = _scaled_logits(k @ q, tau, tau_mode)
    target = torch.tensor(positive_index)
    return F.cross_entropy(logits.unsqueeze(0), target.unsqueeze(0))


def directional_loss(q: torch.Tensor, k: torch.Tensor, tau: float,
                      tau_mode: str, use_negatives: bool) -> torch.Tensor:
    """One direction of the symmetrized loss: queries q (n, P, D) against
    constant keys k (n, P, D); keys are detached (stop-gradient)."""
    k = k.detach()  # stop-gradient: keys are constants
    qn = _safe_normalize(q)
    kn = _safe_normalize(k)
    if not use_negatives:
        # cosine-similarity loss: attract positives, ignore negatives
        return -(qn * kn).sum(dim=-1).mean()
    sim = torch.einsum("ipd,jpd->pij", qn, kn)          # (P, n, n)
    logits = _scaled_logits(sim, tau, tau_mode)
    n = q.shape[0]
    target = torch.arange(n, device=q.device)
    return torch.stack([F.cross_entropy(logits[p], target)
                        for p in range(logits.shape[0])]).mean()


def symmetrized_batch_loss(k_a: torch.Tensor, k_b: torch.Tensor,
                           predictor: torch.nn.Module, tau: float = 16.0,
                           tau_mode: str = "divide",
                           use_negatives: bool = True) -> torch.Tensor:
    """Symmetrized contrastive loss over a batch of embedding pairs.

    k_a, k_b: (n, parts, dim) embeddings of the two clips per sequence.
    Returns 1/2 L(H(k_a), sg(k_b)) + 1/2 L(H(k_b), sg(k_a)), InfoNCE per
    part (negatives are the other pairs' keys), averaged over parts and
    batch. Gradients flow only through the predictor branches.
    """
    if k_a.shape != k_b.shape or k_a.ndim != 3:
        raise ValueError(f"expected matching (n, P, D) embeddings, got {k_a.shape} / {k_b.shape}")
    q_a = predictor(k_a)
    q_b = predictor(k_b)
    loss_ab = directional_loss(q_a, k_b, tau, tau_mode, use_negatives)
    loss_ba = directional_loss(q_b, k_a, tau, tau_mode, use_negatives)
    return 0.5 * loss_ab + 0.5 * loss_ba


def lr_schedule(step: int, cfg: PretrainConfig) -> float:
    """Multi-step schedule: lr0 * decay^(number of milestones passed)."""
    if step < 0:
        raise ValueError("step must be >= 0")
    passed = sum(1 for m in cfg.milestones if step >= m)
    return cfg.lr * cfg.lr_decay ** passed


def embedding_std(k: torch.Tensor) -> float:
    """Collapse monitor: mean per-dimension std of L2-normalized embeddings."""
    kn = F.normalize(k.detach(), dim=-1)
    return float(kn.std(dim=0).mean())


def assemble_pretrain_batch(sequences: list[GaitSequence], cfg: PretrainConfig,
                            aug_cfg: SpatialAugConfig,
                            rng: np.random.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    """Clip pairs -> independent spatial augmentation -> float tensors.

    With intra-sequence augmentation disabled the pair is the same clip
    twice (two independently augmented copies).
    """
    side_a, side_b = [], []
    for seq in sequences:
        if cfg.use_intraseq:
            clip_a, clip_b = sample_disjoint_clip_pair(seq, cfg.clip_len, rng)
        else:
            clip_a = sample_clip(seq, cfg.clip_len, rng)
            clip_b = Clip(clip_a.frames.copy(), clip_a.source_id, clip_a.frame_indices)
        if cfg.use_spatial:
            clip_a, _ = apply_sao_spatial(clip_a, aug_cfg, rng)
            clip_b, _ = apply_sao_spatial(clip_b, aug_cfg, rng)
        side_a.append(clip_a.frames)
        side_b.append(clip_b.frames)
    to_tensor = lambda side: torch.as_tensor(np.stack(side), dtype=torch.float32)
    return to_tensor(side_a), to_tensor(side_b)


@dataclass
class TrainState:
    """Mutable training state owned by the pre-training loop."""

    encoder: GaitEncoder
    predictor: Predictor
    optimizer: torch.optim.Optimizer
    cfg: PretrainConfig
    step: int = 0

    @property
    def lr(self) -> float:
        return lr_schedule(self.step, self.cfg)


def make_train_state(cfg: PretrainConfig, encoder_cfg: EncoderConfig | None = None) -> TrainState:
    torch.manual_seed(cfg.seed)
    encoder = GaitEncoder(encoder_cfg)
    predictor = Predictor(encoder.cfg.parts, encoder.cfg.embed_dim)
    params = list(encoder.parameters()) + list(predictor.parameters())
    optimizer = torch.optim.SGD(params, lr=cfg.lr, momentum=cfg.momentum,
                                weight_decay=cfg.weight_decay)
    return TrainState(encoder, predictor, optimizer, cfg)


def pretrain_step(state: TrainState, batch_a: torch.Tensor,
                  batch_b: torch.Tensor) -> dict:
    """One optimization step on an assembled batch; returns metrics."""
    cfg = state.cfg
    lr = lr_schedule(state.step, cfg)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.encoder.train()
    state.predictor.train()
    k_a = state.encoder(batch_a)
    k_b = state.encoder(batch_b)
    loss = symmetrized_batch_loss(k_a, k_b, state.predictor, cfg.tau,
                                  cfg.tau_mode, cfg.use_negatives)
    state.optimizer.zero_grad()
    loss.backward()
    state.optimizer.step()
    metrics = {"step": state.step, "loss": float(loss.detach()), "lr": lr,
               "emb_std": embedding_std(torch.cat([k_a, k_b], dim=0))}
    state.step += 1
    return metrics


def select_subset(sequence_ids: list[str], frac: float,
                  rng: np.random.Generator) -> list[str]:
    """Seeded random subset of the corpus (pre-training-scale ablation)."""
    if frac >= 1.0:
        return list(sequence_ids)
    ids = list(sequence_ids)
    n = max(1, int(round(frac * len(ids))))
    picked = rng.permutation(len(ids))[:n]
    return [ids[i] for i in sorted(picked)]


def run_pretraining(cfg: PretrainConfig, manifest: DatasetManifest,
                    sequences: dict[str, GaitSequence], out_dir,
                    stats_table=None, encoder_cfg: EncoderConfig | None = None,
                    aug_cfg: SpatialAugConfig | None = None,
                    sampler_cfg: SamplerConfig | None = None) -> dict:
    """Run the pre-training loop; writes metrics.jsonl and checkpoints.

    ``sequences`` maps sequence_id to preloaded GaitSequence (desk-scale
    corpora fit in memory). Honors the four ablation toggles; sampling
    augmentation requires a view-stats table.
    """
    if cfg.use_sampling and stats_table is None:
        raise ConfigConflict("sampling augmentation enabled but no stats_table given")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    aug_cfg = aug_cfg or SpatialAugConfig()
    rng = np.random.default_rng(cfg.seed)
    ids = select_subset(manifest.sequence_ids, cfg.subset_frac, rng)

    if cfg.use_sampling:
        stream = biased_sampler(ids, stats_table, sampler_cfg or SamplerConfig(), rng)
        draw = lambda: [next(stream) for _ in range(cfg.batch_size)]
    else:
        draw = lambda: [ids[int(i)] for i in rng.integers(0, len(ids), cfg.batch_size)]

    state = make_train_state(cfg, encoder_cfg)
    metrics_path = out_dir / "metrics.jsonl"
    final_path = out_dir / "final.gsck"
    with open(metrics_path, "w") as log:
        while state.step < cfg.total_steps:
            batch_ids = draw()
            batch_a, batch_b = assemble_pretrain_batch(
                [sequences[sid] for sid in batch_ids], cfg, aug_cfg, rng)
            metrics = pretrain_step(state, batch_a, batch_b)
            if metrics["step"] % cfg.log_every == 0 or metrics["step"] == cfg.total_steps - 1:
                log.write(json.dumps(metrics, sort_keys=True) + "\n")
            if cfg.ckpt_every and state.step % cfg.ckpt_every == 0:
                _save_state(out_dir / f"step{state.step:08d}.gsck", state)
    _save_state(final_path, state)
    return {"checkpoint": str(final_path), "metrics": str(metrics_path),
            "steps": state.step}


def _save_state(path, state: TrainState):
    meta = {"step": state.step, "phase": "pretrain",
            "encoder": {"block_channels": list(state.encoder.cfg.block_channels),
                        "stem_channels": state.encoder.cfg.stem_channels,
                        "parts": state.encoder.cfg.parts,
                        "combine": state.encoder.cfg.combine}}
    save_checkpoint(path, {"": state.encoder, "predictor": state.predictor}, meta)


def encoder_config_from_meta(meta: dict) -> EncoderConfig:
    enc = meta.get("encoder", {})
    return EncoderConfig(stem_channels=enc.get("stem_channels", 64),
                         block_channels=tuple(enc.get("block_channels", (64, 128, 256, 512))),
                         parts=enc.get("parts", 16),
                         combine=enc.get("combine", "add"))
