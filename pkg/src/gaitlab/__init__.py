"""gaitlab: self-supervised gait representation learning on silhouettes.

Library layout:
    silhouette   frame/sequence/clip model, size normalization, clip sampling
    container    packed dataset format and manifests
    augment      spatial silhouette augmentation (flip/affine/perspective/dilation)
    views        view classifier, per-sequence view variance, biased sampler
    encoder      part-based encoder (backbone, temporal/horizontal pooling) + predictor
    contrastive  symmetrized InfoNCE pre-training with stop-gradient
    transfer     triplet-loss fine-tuning and training from scratch
    evaluate     embedding extraction and retrieval protocols
    bounds       numerical probe of the intra/inter-class distance bounds
    synthetic    procedural silhouette corpus generator
    cli          command-line entry point (``gaitlab <subcommand>``)
"""

__version__ = "0.1.0"

from .silhouette import (FRAME_H, FRAME_W, Clip, GaitSequence, sample_clip,
                         sample_disjoint_clip_pair, size_normalize)
from .augment import AugRecord, SpatialAugConfig, apply_sao_spatial, horizontal_flip
from .container import DatasetManifest, load_sequence, pack_dataset, write_container
from .encoder import EncoderConfig, GaitEncoder, Predictor
from .contrastive import (PretrainConfig, info_nce, lr_schedule, run_pretraining,
                          symmetrized_batch_loss)
from .views import (SamplerConfig, SequenceViewStats, ViewClassifier,
                    biased_sampler, build_view_input, is_dumb, merged_view_class,
                    sequence_view_stats, train_view_classifier)
from .synthetic import SyntheticIdentity, build_corpus, render_sequence
