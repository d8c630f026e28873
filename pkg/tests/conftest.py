import os

import numpy as np
import pytest
import torch

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CHECKPOINT_DIR = os.path.join(REPO_ROOT, "checkpoints")
TOY_CHECKPOINT = os.path.join(CHECKPOINT_DIR, "toy.pt")
ABLATED_CHECKPOINT = os.path.join(CHECKPOINT_DIR, "toy_ablated.pt")
GOLDEN_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden")


@pytest.fixture(autouse=True)
def _seeded():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture(scope="session")
def tiny_codec_config():
    from hbvc.codec import CodecConfig
    return CodecConfig(
        filters=16, latent_ch=8, hyper_ch=8, motion_filters=16,
        motion_latent_ch=8, intra_filters=16, intra_latent_ch=8,
        menet_filters=8, mpnet_filters=8)


@pytest.fixture(scope="session")
def tiny_clip():
    """Five 64x48 frames with real motion, as Frame420."""
    from hbvc.dataset import SyntheticDataset
    ds = SyntheticDataset(num_clips=1, width=64, height=48, seed=123)
    return ds.full_clip_420(0)


def require_checkpoint(path):
    if not os.path.exists(path):
        pytest.fail(f"required toy checkpoint missing: {path} "
                    f"(run scripts/train_toy.py)")
    return path
