"""Shared helpers: seeded Brownian drivers and small random integrands."""

import numpy as np
import pytest

from roughmanifold.stochastic import sample_bm, lift


def bm_rough(seed, d=2, coarse=48, ratio=64, T=1.0, rule="ito", p=2.0):
    fine_t, fine_x = sample_bm(d, T, coarse * ratio, seed)
    return lift(fine_t, fine_x, coarse, rule, p)


def bm_fine(seed, d=2, fine_n=4096, T=1.0):
    return sample_bm(d, T, fine_n, seed)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
