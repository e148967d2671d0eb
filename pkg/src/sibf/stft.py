"""Short-time Fourier analysis/synthesis and band limiting.

Conventions: spectrograms are complex (F, T) with F = fft_size/2 + 1;
multichannel banks are (N, F, T).  Frames are centered (the signal is
reflect-padded by fft_size/2 on both sides) and the frame count is
ceil(len / hop), so analysis and synthesis of a given config always agree
on shapes.  The default window pair is square-root Hann on both sides,
which satisfies constant overlap-add at hop = fft_size/4.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 1024
    hop_size: int = 256
    window: str = "sqrt_hann"

    def __post_init__(self):
        n, h = self.fft_size, self.hop_size
        if n <= 0 or (n & (n - 1)) != 0:
            raise ValueError("fft_size must be a positive power of two")
        if h <= 0 or h > n or n % h != 0:
            raise ValueError("hop_size must divide fft_size")
        if self.window != "sqrt_hann":
            raise ValueError(f"unsupported window: {self.window!r}")

    @property
    def n_bins(self):
        return self.fft_size // 2 + 1

    def analysis_window(self):
        return np.sqrt(_periodic_hann(self.fft_size))

    def synthesis_window(self):
        return np.sqrt(_periodic_hann(self.fft_size))

    def cola_residual(self):
        """Max deviation of the overlapped window product from its level.

        Evaluated over one interior period; below 1e-10 for the supported
        window pair whenever fft_size/hop_size >= 3.
        """
        prod = self.analysis_window() * self.synthesis_window()
        n, h = self.fft_size, self.hop_size
        acc = np.zeros(2 * n)
        for k in range(0, 2 * n - n + 1, h):
            acc[k:k + n] += prod
        interior = acc[n - h:n + h]
        level = np.median(interior)
        return float(np.max(np.abs(interior - level)) / level)

    def cola_level(self):
        prod = self.analysis_window() * self.synthesis_window()
        n, h = self.fft_size, self.hop_size
        acc = np.zeros(2 * n)
        for k in range(0, 2 * n - n + 1, h):
            acc[k:k + n] += prod
        return float(np.median(acc[n - h:n + h]))


def _periodic_hann(n):
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def _check_signal(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("signal must be a nonempty 1-D array")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains NaN or Inf")
    return x


def stft(signal, config):
    """Analyze a mono signal into a complex (F, T) spectrogram.

    T = ceil(len / hop); frame t is centered at t * hop.  Signals shorter
    than one FFT frame are zero-padded up to fft_size first.
    """
    x = _check_signal(signal)
    n, h = config.fft_size, config.hop_size
    if x.size < n:
        x = np.concatenate([x, np.zeros(n - x.size)])
    t_frames = -(-x.size // h)
    pad = n // 2
    xp = np.pad(x, pad, mode="reflect")
    need = (t_frames - 1) * h + n
    if need > xp.size:
        xp = np.concatenate([xp, np.zeros(need - xp.size)])
    win = config.analysis_window()
    idx = np.arange(n)[None, :] + h * np.arange(t_frames)[:, None]
    frames = xp[idx] * win
    return np.fft.rfft(frames, axis=1).T.copy()


def istft(spec, config, length=None):
    """Overlap-add synthesis; inverse of stft for the same config.

    length trims/limits the output (default: T * hop, the analysis cover).
    """
    spec = np.asarray(spec)
    n, h = config.fft_size, config.hop_size
    if spec.ndim != 2 or spec.shape[0] != config.n_bins:
        raise ValueError(f"spectrogram has {spec.shape[0]} bins, "
                         f"config expects {config.n_bins}")
    t_frames = spec.shape[1]
    frames = np.fft.irfft(spec.T, n=n, axis=1) * config.synthesis_window()
    total = (t_frames - 1) * h + n
    acc = np.zeros(total)
    wsum = np.zeros(total)
    prod = config.analysis_window() * config.synthesis_window()
    for t in range(t_frames):
        acc[t * h:t * h + n] += frames[t]
        wsum[t * h:t * h + n] += prod
    good = wsum > 1e-12
    acc[good] /= wsum[good]
    pad = n // 2
    out = acc[pad:pad + t_frames * h]
    if length is not None:
        if length > out.size:
            out = np.concatenate([out, np.zeros(length - out.size)])
        else:
            out = out[:length]
    return out


def stft_multi(signals, config):
    """Stack per-channel analyses into an (N, F, T) bank."""
    specs = [stft(s, config) for s in signals]
    shapes = {s.shape for s in specs}
    if len(shapes) != 1:
        raise ValueError("channels have differing lengths")
    return np.stack(specs)


def band_limit(spec, lo_hz, hi_hz, sample_rate, fft_size=None):
    """Zero bins whose center frequency lies outside [lo_hz, hi_hz].

    Bin k is centered at k * sample_rate / fft_size; boundary bins are
    kept.  Idempotent, and a projection on the spectrogram.
    """
    spec = np.asarray(spec)
    if not 0 <= lo_hz < hi_hz <= sample_rate / 2:
        raise ValueError("need 0 <= lo_hz < hi_hz <= Nyquist")
    n_bins = spec.shape[-2]
    if fft_size is None:
        fft_size = 2 * (n_bins - 1)
    centers = np.arange(n_bins) * (sample_rate / fft_size)
    keep = (centers >= lo_hz) & (centers <= hi_hz)
    out = spec.copy()
    out[..., ~keep, :] = 0.0
    return out


def combine_magnitude_phase(mag, phase_src):
    """mag * phase_src / |phase_src|, with unit phase where phase_src is zero."""
    mag = np.asarray(mag, dtype=np.float64)
    if np.any(mag < 0):
        raise ValueError("magnitude must be nonnegative")
    phase_src = np.asarray(phase_src, dtype=np.complex128)
    absp = np.abs(phase_src)
    unit = np.where(absp > 0, phase_src / np.where(absp > 0, absp, 1.0), 1.0)
    return mag * unit
