"""SDR metrics and the latency model."""

import csv
import time

import numpy as np
import pytest

from sibf.metrics import (LatencyReport, MetricReport, latency_model,
                          measure_rtf, projection_sdr, si_sdr, write_report)


class TestSiSdr:
    def test_perfect_match_caps(self, rng):
        x = rng.standard_normal(8000)
        assert si_sdr(x, x) == 60.0

    def test_scale_invariance_caps(self, rng):
        x = rng.standard_normal(8000)
        assert si_sdr(3.0 * x, x) == 60.0
        assert si_sdr(-0.01 * x, x) == 60.0

    def test_orthogonal_noise_energy_ratio(self, rng):
        ref = rng.standard_normal(16000)
        n = rng.standard_normal(16000)
        n -= (np.dot(n, ref) / np.dot(ref, ref)) * ref   # exactly orthogonal
        n *= np.linalg.norm(ref) / (10.0 * np.linalg.norm(n))
        assert si_sdr(ref + n, ref) == pytest.approx(20.0, abs=0.01)

    def test_zero_reference_rejected(self, rng):
        with pytest.raises(ValueError):
            si_sdr(rng.standard_normal(100), np.zeros(100))

    def test_scale_invariance_property(self, rng):
        ref = rng.standard_normal(4000)
        est = ref + 0.1 * rng.standard_normal(4000)
        base = si_sdr(est, ref)
        for a in (0.1, 2.0, -5.0):
            assert si_sdr(a * est, ref) == pytest.approx(base, abs=1e-9)


class TestProjectionSdr:
    def test_single_tap_reduces_to_si_sdr(self, rng):
        ref = rng.standard_normal(4000)
        est = ref + 0.2 * rng.standard_normal(4000)
        assert projection_sdr(est, ref, filter_len=1) == pytest.approx(
            si_sdr(est, ref), abs=1e-9)

    def test_delay_absorbed(self, rng):
        ref = rng.standard_normal(8000)
        k = 17
        est = np.concatenate([np.zeros(k), ref[:-k]])
        assert projection_sdr(est, ref, filter_len=64) == 60.0

    def test_independent_noise_matches_subspace_fraction(self, rng):
        # the least-squares FIR captures about L/T of the energy of an
        # unrelated signal, so the expected score is 10 log10(L / (T - L))
        t, taps = 16000, 512
        ref = rng.standard_normal(t)
        est = rng.standard_normal(t)
        got = projection_sdr(est, ref, filter_len=taps)
        expect = 10.0 * np.log10(taps / (t - taps))
        assert got == pytest.approx(expect, abs=2.0)
        assert got < -10.0

    def test_invalid_filter_len(self, rng):
        with pytest.raises(ValueError):
            projection_sdr(rng.standard_normal(100), rng.standard_normal(100), 0)


class TestLatencyModel:
    def test_per_frame_reference_point(self):
        rep = latency_model(t_b=2.0, t_init=0.08, f_rtf=0.072, t_seg=6.36)
        assert rep.l_begin == pytest.approx(2.08, abs=0.005)
        assert rep.l_end == 0.0

    def test_short_segment_branch(self):
        rep = latency_model(t_b=2.0, t_init=0.08, f_rtf=0.072, t_seg=1.0)
        assert rep.l_begin == pytest.approx(1.08)

    def test_no_realtime_margin(self):
        rep = latency_model(t_b=1.0, t_init=0.0, f_rtf=1.0, t_seg=5.0)
        assert rep.l_end == pytest.approx(rep.l_begin)

    def test_batch_mode_relationship(self):
        rep = latency_model(t_b=0.0, t_init=0.0, f_rtf=0.058, t_seg=6.36, mode="batch")
        assert rep.l_end == pytest.approx(0.058 * 6.36)
        assert rep.l_begin == pytest.approx(rep.t_seg + rep.l_end)

    def test_monotonicity(self):
        ends = [latency_model(2.0, 0.1, f, 6.0).l_end for f in (0.1, 0.5, 0.9)]
        assert ends == sorted(ends)
        begins = [latency_model(tb, 0.1, 0.1, 6.0).l_begin for tb in (1.0, 2.0, 4.0)]
        assert begins == sorted(begins)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            latency_model(-1.0, 0.0, 0.1, 5.0)


class TestMeasureRtf:
    def test_instantaneous_stub(self):
        rtf, out = measure_rtf(lambda: "done", t_seg=10.0)
        assert out == "done"
        assert rtf < 0.05

    def test_sleep_stub(self):
        rtf, _ = measure_rtf(lambda: time.sleep(0.1), t_seg=0.2)
        assert rtf == pytest.approx(0.5, abs=0.2)

    def test_zero_segment_rejected(self):
        with pytest.raises(ValueError):
            measure_rtf(lambda: None, 0.0)


class TestReport:
    def test_delta_sdr_consistency(self):
        rep = MetricReport(utterance_id="u0", method="sibf", model="tv_gg",
                           mode="rls", scaling="swf", sdr_obs=3.0, sdr_out=10.5)
        assert rep.delta_sdr == pytest.approx(7.5)

    def test_csv_round_trip(self, tmp_path):
        rep = MetricReport(utterance_id="u0", method="sibf", model="tv_gg",
                           mode="rls", scaling="swf", sdr_obs=3.0, sdr_out=10.5,
                           rtf=0.1, l_begin=2.08, l_end=0.0)
        path = tmp_path / "report.csv"
        write_report(path, [rep])
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert float(rows[0]["delta_sdr"]) == pytest.approx(7.5)
        assert rows[0]["method"] == "sibf"
