"""MMSE beamformer and the frame-coupled variant."""

import numpy as np
import pytest

from sibf.baselines import (ive_constrained_extract, mmse_extract_batch,
                            mmse_extract_online, mmse_filter_batch)
from sibf.core import SibfConfig, extract_batch
from sibf.covariance import init_weighted_sum
from sibf.models import SourceModel
from sibf.scaling import least_squares_factor
from sibf.stft import combine_magnitude_phase
from conftest import fast_scenario
from test_per_frame import stationary_bundle


def complex_noise(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


class TestMmseBatch:
    def test_recovers_exact_linear_image(self, rng):
        n, t = 4, 200
        x = complex_noise(rng, (n, t))
        w0 = complex_noise(rng, n)
        q = np.conj(w0) @ x
        w = mmse_filter_batch(x, q, delta_rel=0.0)
        np.testing.assert_allclose(w, w0, atol=1e-8)

    def test_zero_target_zero_filter(self, rng):
        x = complex_noise(rng, (3, 50))
        w = mmse_filter_batch(x, np.zeros(50, dtype=complex))
        np.testing.assert_allclose(w, 0.0, atol=1e-12)

    def test_single_channel_scalar_wiener(self, rng):
        x = complex_noise(rng, (1, 100))
        q = complex_noise(rng, 100)
        w = mmse_filter_batch(x, q, delta_rel=0.0)
        expect = np.sum(x[0] * np.conj(q)) / np.sum(np.abs(x[0]) ** 2)
        assert w[0] == pytest.approx(expect, rel=1e-10)

    def test_residual_orthogonal_to_rows(self, rng):
        x = complex_noise(rng, (3, 300))
        q = complex_noise(rng, 300)
        w = mmse_filter_batch(x, q, delta_rel=0.0)
        resid = q - np.conj(w) @ x
        inner = x @ np.conj(resid)
        scale = np.linalg.norm(x, axis=1) * np.linalg.norm(resid)
        assert np.all(np.abs(inner) < 1e-8 * scale)

    def test_built_in_scaling(self):
        bundle = fast_scenario(seed=30, snr_db=0.0)
        y, _ = mmse_extract_batch(bundle.x, bundle.reference, ref_mic=0,
                                  delta_rel=0.0)
        q = combine_magnitude_phase(bundle.reference, bundle.x[0])
        gamma = least_squares_factor(q, y)
        energetic = np.sum(np.abs(y) ** 2, axis=1) > 1e-10
        np.testing.assert_allclose(gamma[energetic], 1.0, atol=1e-8)


class TestMmseOnline:
    def test_converges_to_batch_on_stationary_input(self):
        # the exponentially weighted estimate fluctuates around the batch
        # solution; the error must shrink as the effective window grows
        bundle = stationary_bundle(seed=40, t=6000, n_bins=7)
        _, w_batch = mmse_extract_batch(bundle.x, bundle.reference, ref_mic=0,
                                        delta_rel=0.0)
        errs = {}
        for g in (0.99, 0.999):
            _, w_on = mmse_extract_online(bundle.x, bundle.reference,
                                          ref_mic=0, g=g, t_b=200, delta_rel=0.0)
            errs[g] = (np.linalg.norm(w_on[-1] - w_batch)
                       / np.linalg.norm(w_batch))
        assert errs[0.999] < errs[0.99]
        assert errs[0.999] < 0.3

    def test_zero_target_decays(self, rng):
        x = complex_noise(rng, (3, 9, 400))
        r = np.zeros((9, 400))
        y, w = mmse_extract_online(x, r, g=0.95, t_b=50)
        assert np.linalg.norm(w[-1]) < 1e-6
        assert np.linalg.norm(y[:, -1]) < 1e-6

    def test_mil_inverse_matches_direct_inversion(self, rng):
        # drive the same recursion with a fresh direct inverse every frame
        t, n, f_bins = 2000, 3, 4
        x = complex_noise(rng, (n, f_bins, t))
        r = np.abs(complex_noise(rng, (f_bins, t)))
        g, t_b = 0.99, 100
        y_on, w_on = mmse_extract_online(x, r, ref_mic=0, g=g, t_b=t_b,
                                         delta_rel=0.0)
        frames = np.ascontiguousarray(x.transpose(2, 1, 0))
        q = combine_magnitude_phase(r, x[0]).T
        xb = frames[:t_b]
        phi_x = init_weighted_sum(xb[:, :, :, None] * np.conj(xb[:, :, None, :]), g)
        phi_q = init_weighted_sum(xb * np.conj(q[:t_b])[:, :, None], g)
        for ti in range(t):
            phi_q = g * phi_q + (1 - g) * frames[ti] * np.conj(q[ti])[:, None]
            phi_x = g * phi_x + (1 - g) * (frames[ti][:, :, None]
                                           * np.conj(frames[ti][:, None, :]))
        w_direct = np.einsum("fnm,fm->fn",
                             np.linalg.inv(phi_x), phi_q)
        rel = (np.linalg.norm(w_on[-1] - w_direct)
               / np.linalg.norm(w_direct))
        assert rel < 1e-6


class TestIveConstrained:
    def test_single_bin_collapses_to_plain_laplacian(self):
        # with one frequency bin, the frame norms reduce to per-bin values
        # and the shared weight differs from the plain Laplacian weight by
        # a per-bin constant, which the eigenvector solve ignores
        bundle = stationary_bundle(seed=41, t=400, n_bins=1)
        x, r = bundle.x, bundle.reference
        y_ive = ive_constrained_extract(x, r, mode="batch", beta=0.25)
        cfg = SibfConfig(mode="batch", model=SourceModel.tv_laplacian(beta=0.25),
                         scaling="swf")
        y_plain = extract_batch(x, r, cfg).y_scaled
        rel = np.linalg.norm(y_ive - y_plain) / np.linalg.norm(y_plain)
        assert rel < 1e-6

    def test_batch_runs_on_mixture(self):
        bundle = fast_scenario(seed=42, snr_db=0.0)
        y = ive_constrained_extract(bundle.x, bundle.reference, mode="batch")
        assert y.shape == bundle.reference.shape
        assert np.all(np.isfinite(y))

    def test_zero_reference_column_no_nan(self):
        bundle = fast_scenario(seed=43, duration=1.0)
        r = bundle.reference.copy()
        r[:, 10] = 0.0
        y = ive_constrained_extract(bundle.x, r, mode="batch")
        assert np.all(np.isfinite(y))

    def test_rls_mode_runs(self):
        bundle = fast_scenario(seed=44, duration=1.2)
        y = ive_constrained_extract(bundle.x, bundle.reference, mode="rls",
                                    t_b=40)
        assert np.all(np.isfinite(y))

    def test_rejects_fifo(self):
        bundle = fast_scenario(seed=45, duration=1.0)
        with pytest.raises(ValueError):
            ive_constrained_extract(bundle.x, bundle.reference, mode="fifo")
