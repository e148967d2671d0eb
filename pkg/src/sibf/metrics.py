"""Extraction-accuracy metrics and the latency model."""

import csv
import time
from dataclasses import dataclass, asdict

import numpy as np
import scipy.linalg
from numpy.lib.stride_tricks import sliding_window_view

SDR_CAP_DB = 60.0

REPORT_FIELDS = ("utterance_id", "method", "model", "mode", "scaling",
                 "sdr_obs", "sdr_out", "delta_sdr", "rtf", "l_begin", "l_end")


def _common(est, ref):
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    n = min(est.size, ref.size)
    est, ref = est[:n], ref[:n]
    if not np.any(ref):
        raise ValueError("reference signal is zero")
    return est, ref


def si_sdr(est, ref):
    """Scale-invariant SDR in dB, capped at +60.

    est is projected onto ref; the ratio of projected to residual energy
    is reported, so any nonzero rescaling of est gives the same value.
    """
    est, ref = _common(est, ref)
    s = (np.dot(est, ref) / np.dot(ref, ref)) * ref
    e = est - s
    num = float(np.dot(s, s))
    den = float(np.dot(e, e))
    if den <= num * 10.0 ** (-SDR_CAP_DB / 10.0):
        return SDR_CAP_DB
    return min(10.0 * np.log10(num / den), SDR_CAP_DB)


def projection_sdr(est, ref, filter_len=512):
    """SDR after allowing a causal least-squares FIR from ref to est.

    filter_len = 1 reduces to the scale-invariant projection.  Absorbs
    filtering/delay differences (up to filter_len taps) that si_sdr would
    count as error.  The fit and the energy ratio are evaluated on the
    region where all filter taps see real data, so a pure delay scores
    the cap exactly.
    """
    if filter_len < 1:
        raise ValueError("filter_len must be >= 1")
    est, ref = _common(est, ref)
    if filter_len == 1:
        return si_sdr(est, ref)
    n = est.size
    if n < 4 * filter_len:
        raise ValueError("signal too short for the requested filter length")
    rows = sliding_window_view(ref, filter_len)        # (n - L + 1, L), a view
    target = est[filter_len - 1:]
    gram = np.zeros((filter_len, filter_len))
    rhs = np.zeros(filter_len)
    block = max(1, (1 << 22) // filter_len)
    for start in range(0, rows.shape[0], block):
        hb = rows[start:start + block]
        gram += hb.T @ hb
        rhs += hb.T @ target[start:start + block]
    ridge = 1e-12 * np.trace(gram) / filter_len
    h = scipy.linalg.solve(gram + ridge * np.eye(filter_len), rhs,
                           assume_a="pos")
    s = np.empty_like(target)
    for start in range(0, rows.shape[0], block):
        s[start:start + block] = rows[start:start + block] @ h
    e = target - s
    num = float(np.dot(s, s))
    den = float(np.dot(e, e))
    if num == 0.0:
        return -SDR_CAP_DB
    if den <= num * 10.0 ** (-SDR_CAP_DB / 10.0):
        return SDR_CAP_DB
    return min(10.0 * np.log10(num / den), SDR_CAP_DB)


@dataclass
class MetricReport:
    utterance_id: str
    method: str
    model: str
    mode: str
    scaling: str
    sdr_obs: float
    sdr_out: float
    rtf: float = 0.0
    l_begin: float = 0.0
    l_end: float = 0.0

    @property
    def delta_sdr(self):
        return self.sdr_out - self.sdr_obs

    def row(self):
        d = asdict(self)
        d["delta_sdr"] = self.delta_sdr
        return {k: d[k] for k in REPORT_FIELDS}


def write_report(path, reports):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for rep in reports:
            writer.writerow(rep.row() if isinstance(rep, MetricReport) else rep)


@dataclass
class LatencyReport:
    mode: str
    t_b: float
    t_init: float
    f_rtf: float
    t_seg: float
    l_begin: float
    l_end: float


def latency_model(t_b, t_init, f_rtf, t_seg, mode="rls"):
    """Beginning/end-side latencies for one segment, all arguments in seconds.

    Per-frame modes: the first output appears after the initial window is
    buffered and processed; the last output trails the segment end by
    whatever processing time the real-time margin could not absorb.  Batch
    mode: processing starts at segment end and takes f_rtf * t_seg.
    """
    if min(t_b or 0, t_init, f_rtf, t_seg) < 0:
        raise ValueError("latency parameters must be nonnegative")
    if mode == "batch":
        l_end = f_rtf * t_seg
        l_begin = t_seg + l_end
    else:
        l_begin = min(t_b, t_seg) + t_init
        l_end = max(l_begin - (1.0 - f_rtf) * t_seg, 0.0)
    return LatencyReport(mode=mode, t_b=t_b, t_init=t_init, f_rtf=f_rtf,
                         t_seg=t_seg, l_begin=l_begin, l_end=l_end)


def measure_rtf(run_fn, t_seg):
    """Wall-clock real-time factor of run_fn over a t_seg-second segment."""
    if t_seg <= 0:
        raise ValueError("t_seg must be positive")
    start = time.perf_counter()
    result = run_fn()
    elapsed = time.perf_counter() - start
    return elapsed / t_seg, result
