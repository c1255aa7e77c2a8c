"""Shared helpers for the test suite."""

import numpy as np
import pytest

from depthpolyp import autodiff as ad
from depthpolyp.data import synth_dataset


def jitter_params(module, seed, scale=0.25):
    """Move every parameter off its init point, deterministically."""
    rng = np.random.default_rng(seed)
    for _, p in module.named_parameters():
        p.data = p.data + rng.uniform(-scale, scale, size=p.data.shape)


def margin_safe_params(module, seed):
    """Generic evaluation point with every ReLU input bounded away from zero.

    Every ReLU in these networks sits directly behind a BN affine, so a
    small |gamma| and a comfortably positive beta keep the normalized
    activations clear of the kink. Finite differences with h = 1e-3 then
    see a smooth function; nothing about the chain rule is simplified
    (all paths stay active and every parameter still moves the loss).
    """
    rng = np.random.default_rng(seed)
    for name, p in module.named_parameters():
        if name.endswith("gamma"):
            sign = np.where(rng.uniform(size=p.data.shape) < 0.5, -1.0, 1.0)
            p.data = sign * rng.uniform(0.05, 0.15, size=p.data.shape)
        elif name.endswith("beta"):
            p.data = rng.uniform(0.7, 1.0, size=p.data.shape)
        else:
            p.data = p.data + rng.uniform(-0.25, 0.25, size=p.data.shape)


@pytest.fixture(autouse=True)
def fresh_tape():
    ad.clear_tape()
    yield
    ad.clear_tape()


@pytest.fixture(scope="session")
def tiny_corpus():
    """Eight 32x32 samples shared by training-path tests."""
    return synth_dataset(8, 32, seed=21)
