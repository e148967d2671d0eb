"""File formats: WAV audio and the raw magnitude-spectrogram exchange format.

WAV support covers PCM 16-bit and IEEE float 32-bit, mono or multichannel.
Multichannel observations may alternatively be given as one mono file per
channel with identical length and rate.

The magnitude format lets externally generated references plug into the
pipeline: two little-endian uint32 (F, T) followed by F*T float32 values,
row-major (frequency bins are rows).
"""

import struct

import numpy as np
from scipy.io import wavfile

_PCM_SCALE = 32768.0


def read_wav(path):
    """Read a WAV file into (samples, sample_rate); samples (T,) or (T, C) float64 in [-1, 1]."""
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / _PCM_SCALE
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format: {data.dtype}")
    return data, int(rate)


def write_wav(path, samples, sample_rate, fmt="float32"):
    """Write mono (T,) or multichannel (T, C) samples."""
    samples = np.asarray(samples)
    if fmt == "float32":
        wavfile.write(path, sample_rate, samples.astype(np.float32))
    elif fmt == "pcm16":
        clipped = np.clip(samples, -1.0, 32767.0 / _PCM_SCALE)
        wavfile.write(path, sample_rate, np.round(clipped * _PCM_SCALE).astype(np.int16))
    else:
        raise ValueError(f"unsupported WAV output format: {fmt!r}")


def read_wav_channels(paths):
    """Read one mono WAV per channel; returns (channels, samples) float64 and the rate."""
    signals, rates = [], set()
    for p in paths:
        data, rate = read_wav(p)
        if data.ndim != 1:
            raise ValueError(f"{p}: expected a mono file")
        signals.append(data)
        rates.add(rate)
    if len(rates) != 1:
        raise ValueError(f"channel files disagree on sample rate: {sorted(rates)}")
    lengths = {len(s) for s in signals}
    if len(lengths) != 1:
        raise ValueError(f"channel files disagree on length: {sorted(lengths)}")
    return np.stack(signals), rates.pop()


def read_observation(paths):
    """Load a multichannel observation from one file or a list of mono files."""
    if isinstance(paths, (list, tuple)) and len(paths) > 1:
        return read_wav_channels(paths)
    path = paths[0] if isinstance(paths, (list, tuple)) else paths
    data, rate = read_wav(path)
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return data, rate


def write_magnitude(path, mag):
    """Write a nonnegative (F, T) magnitude array in the exchange format."""
    mag = np.asarray(mag, dtype=np.float32)
    if mag.ndim != 2:
        raise ValueError("magnitude must be a 2-D array")
    if np.any(mag < 0) or not np.all(np.isfinite(mag)):
        raise ValueError("magnitude must be finite and nonnegative")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", *mag.shape))
        fh.write(mag.tobytes(order="C"))


def read_magnitude(path):
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated magnitude header")
        f, t = struct.unpack("<II", header)
        data = np.frombuffer(fh.read(4 * f * t), dtype="<f4")
    if data.size != f * t:
        raise ValueError(f"{path}: truncated magnitude payload")
    return data.reshape(f, t).astype(np.float64)
