"""Scenario generation: oracle decomposition, seeding, SNR control."""

import numpy as np
import pytest

from sibf.metrics import si_sdr
from sibf.stft import combine_magnitude_phase, istft
from sibf.synth import ScenarioSpec, generate_scenario, make_reference
from conftest import FAST_STFT, fast_scenario


class TestGeneration:
    def test_exact_decomposition(self):
        bundle = fast_scenario(seed=50)
        np.testing.assert_array_equal(bundle.x_tgt + bundle.x_itf, bundle.x)

    def test_seed_determinism(self):
        a = fast_scenario(seed=51)
        b = fast_scenario(seed=51)
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.reference, b.reference)
        assert np.array_equal(a.obs_time, b.obs_time)

    def test_different_seeds_differ(self):
        a = fast_scenario(seed=52)
        b = fast_scenario(seed=53)
        assert not np.array_equal(a.x, b.x)

    def test_single_source_no_noise(self):
        bundle = fast_scenario(seed=54, n_sources=1, diffuse_level_db=None)
        assert np.all(bundle.x_itf == 0)
        np.testing.assert_array_equal(bundle.x, bundle.x_tgt)

    def test_snr_pinned(self):
        for snr in (-4.0, 0.0, 5.0):
            bundle = fast_scenario(seed=55, snr_db=snr)
            assert bundle.snr_measured_db() == pytest.approx(snr, abs=0.1)

    def test_multiplier_spacing_six_db(self):
        snrs = []
        for mult in (0.25, 0.5, 1.0, 2.0):
            bundle = fast_scenario(seed=56, snr_db=5.0, bg_multiplier=mult)
            snrs.append(bundle.snr_measured_db())
        gaps = -np.diff(snrs)
        np.testing.assert_allclose(gaps, 6.02, atol=0.3)

    def test_coincident_azimuths_rejected(self):
        spec = ScenarioSpec(n_sources=2, azimuths_deg=(10.0, 10.0))
        with pytest.raises(ValueError):
            generate_scenario(spec, FAST_STFT)

    def test_mixing_condition_reported(self):
        bundle = fast_scenario(seed=57, mixing="random")
        assert np.isfinite(bundle.mixing_condition)
        assert bundle.mixing_condition >= 1.0

    def test_source_band_zeroes_oracle(self):
        bundle = fast_scenario(seed=58, source_band=(300.0, 3000.0),
                               diffuse_level_db=None)
        centers = np.arange(FAST_STFT.n_bins) * 8000 / FAST_STFT.fft_size
        dead = (centers < 300.0) | (centers > 3000.0)
        assert np.all(bundle.x_tgt[:, dead, :] == 0)

    def test_time_domain_oracle_consistency(self):
        bundle = fast_scenario(seed=59)
        # time-domain observation equals the sum of the rendered images
        direct = istft(bundle.x[0], bundle.stft_config,
                       length=bundle.obs_time.shape[1])
        np.testing.assert_allclose(bundle.obs_time[0], direct, atol=1e-12)


class TestMakeReference:
    def test_clean_passthrough(self, rng):
        mag = np.abs(rng.standard_normal((16, 20)))
        np.testing.assert_array_equal(make_reference(mag, None), mag)

    def test_silent_noise_level_is_identity(self, rng):
        mag = np.abs(rng.standard_normal((16, 20)))
        out = make_reference(mag, ("mag_noise", -np.inf), rng)
        np.testing.assert_array_equal(out, mag)

    def test_noise_level_scales_energy(self, rng):
        mag = np.abs(rng.standard_normal((64, 200)))
        out = make_reference(mag, ("mag_noise", 0.0), np.random.default_rng(0))
        added = out - mag
        ratio = np.mean(added ** 2) / np.mean(mag ** 2)
        assert ratio == pytest.approx(1.0, rel=0.1)
        assert np.all(out >= 0)

    def test_blur_smooths(self, rng):
        mag = np.zeros((9, 9))
        mag[4, 4] = 1.0
        out = make_reference(mag, ("blur", 3))
        assert out[4, 4] == pytest.approx(1.0 / 9.0)
        assert np.all(out >= 0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            make_reference(np.ones((2, 2)), ("sparkle", 1))

    def test_degraded_reference_scores_below_clean(self):
        bundle = fast_scenario(seed=60, snr_db=0.0)
        m = bundle.spec.ref_mic
        n = bundle.obs_time.shape[1]
        clean_wave = istft(combine_magnitude_phase(bundle.reference_clean,
                                                   bundle.x[m]),
                           bundle.stft_config, length=n)
        noisy_ref = make_reference(bundle.reference_clean, ("mag_noise", 0.0),
                                   np.random.default_rng(1))
        noisy_wave = istft(combine_magnitude_phase(noisy_ref, bundle.x[m]),
                           bundle.stft_config, length=n)
        clean_score = si_sdr(clean_wave, bundle.target_time)
        noisy_score = si_sdr(noisy_wave, bundle.target_time)
        assert noisy_score < clean_score - 3.0
