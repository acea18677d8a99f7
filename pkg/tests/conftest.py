import numpy as np
import pytest
import torch

from gaitlab.silhouette import Clip, GaitSequence
from gaitlab.synthetic import sample_identities, render_sequence


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_sequence(n_frames=30, h=64, w=44, seed=0, sequence_id="seq", **meta):
    """Random-blob binary sequence for plumbing tests."""
    r = np.random.default_rng(seed)
    frames = np.zeros((n_frames, h, w), dtype=np.uint8)
    for t in range(n_frames):
        cy, cx = int(r.integers(10, h - 10)), int(r.integers(8, w - 8))
        frames[t, cy - 8:cy + 8, cx - 5:cx + 5] = 1
    return GaitSequence(frames, sequence_id, **meta)


def walker_clip(n_frames=8, view=90, seed=0):
    ident = sample_identities(4, np.random.default_rng(seed))[2]
    seq = render_sequence(ident, view, n_frames)
    return Clip(seq.frames, seq.sequence_id, np.arange(n_frames))


@pytest.fixture
def blob_sequence():
    return make_sequence()
