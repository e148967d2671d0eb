"""Shared helpers: small/fast scenario and random-matrix builders."""

import numpy as np
import pytest

from sibf.stft import StftConfig
from sibf.synth import ScenarioSpec, generate_scenario


FAST_STFT = StftConfig(fft_size=256, hop_size=64)


def random_hermitian_pd(rng, n, dof=None, scale=1.0):
    """Wishart-style Hermitian positive definite matrix."""
    dof = dof or 4 * n
    g = (rng.standard_normal((n, dof)) + 1j * rng.standard_normal((n, dof)))
    return scale * (g @ g.conj().T) / dof


def random_filter(rng, n):
    w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return w / np.linalg.norm(w)


def fast_scenario(seed=0, **kw):
    """Small 8 kHz scenario that keeps per-frame tests quick."""
    params = dict(n_mics=4, n_sources=2, duration=1.5, sample_rate=8000,
                  snr_db=5.0, seed=seed)
    params.update(kw)
    return generate_scenario(ScenarioSpec(**params), FAST_STFT)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
