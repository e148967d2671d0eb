"""Synthetic scenarios: sources, mixing, oracle references, decompositions.

Mixing is instantaneous per frequency bin (anechoic far-field steering
vectors or seeded random matrices), which keeps the oracle decomposition
of the observation into target and interference images exact.  Source
material is seeded noise surrogates, so no speech corpus is needed.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.signal import lfilter

from .stft import StftConfig, istft, stft

SPEED_OF_SOUND = 343.0

NOISE_KINDS = ("white", "pink", "babble")
MIXINGS = ("anechoic", "random")


@dataclass(frozen=True)
class ScenarioSpec:
    n_mics: int = 4
    n_sources: int = 2
    duration: float = 3.0
    sample_rate: int = 16000
    snr_db: float = 5.0
    bg_multiplier: float = 1.0          # extra noise scaling on top of snr_db
    noise_kind: str = "white"
    diffuse_level_db: float = -20.0     # None: no diffuse floor (noiseless mixing)
    mixing: str = "anechoic"
    mic_spacing: float = 0.05
    azimuths_deg: tuple = None          # None: spread evenly in [-60, 60]
    ref_mic: int = 0
    source_band: tuple = None           # (lo_hz, hi_hz) band-limits point sources
    reference_degradation: tuple = None  # ('mag_noise', level_db) | ('blur', k)
    seed: int = 0

    def __post_init__(self):
        if self.n_mics < 1 or self.n_sources < 1:
            raise ValueError("need at least one microphone and one source")
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"noise_kind must be one of {NOISE_KINDS}")
        if self.mixing not in MIXINGS:
            raise ValueError(f"mixing must be one of {MIXINGS}")
        if not 0 <= self.ref_mic < self.n_mics:
            raise ValueError("ref_mic out of range")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")

    def resolved_azimuths(self):
        if self.azimuths_deg is not None:
            az = tuple(float(a) for a in self.azimuths_deg)
            if len(az) != self.n_sources:
                raise ValueError("need one azimuth per source")
        elif self.n_sources == 1:
            az = (0.0,)
        else:
            az = tuple(np.linspace(-60.0, 60.0, self.n_sources))
        if self.mixing == "anechoic" and len(set(az)) != len(az):
            raise ValueError("coincident source azimuths make the mixing degenerate")
        return az


@dataclass
class OracleBundle:
    spec: ScenarioSpec
    stft_config: StftConfig
    x: np.ndarray           # (N, F, T) observation
    x_tgt: np.ndarray       # (N, F, T) target image;  x = x_tgt + x_itf exactly
    x_itf: np.ndarray       # (N, F, T) everything else
    reference: np.ndarray   # (F, T) magnitude reference (possibly degraded)
    reference_clean: np.ndarray
    obs_time: np.ndarray    # (N, L)
    target_time: np.ndarray  # (L,) target image at ref_mic
    itf_time: np.ndarray    # (L,)
    mixing_condition: float
    extras: dict = field(default_factory=dict)

    @property
    def sample_rate(self):
        return self.spec.sample_rate

    def snr_measured_db(self):
        et = float(np.sum(self.target_time ** 2))
        ei = float(np.sum(self.itf_time ** 2))
        return 10.0 * math.log10(et / ei) if ei > 0 else math.inf


def _speech_surrogate(rng, n, sample_rate, f0=None):
    """AR-resonant noise with a slow random envelope, roughly speech shaped."""
    if f0 is None:
        f0 = rng.uniform(250.0, 700.0)
    radius = 0.96
    theta = 2.0 * math.pi * f0 / sample_rate
    a = [1.0, -2.0 * radius * math.cos(theta), radius * radius]
    x = lfilter([1.0], a, rng.standard_normal(n))
    x = x + 0.3 * rng.standard_normal(n)        # keep some broadband energy
    env_pts = np.abs(rng.standard_normal(max(4, int(n / sample_rate * 3) + 2))) + 0.05
    env = np.interp(np.linspace(0, env_pts.size - 1, n),
                    np.arange(env_pts.size), env_pts)
    x = x * env
    return x / (np.std(x) + 1e-12)


def _pink(rng, n):
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.maximum(np.fft.rfftfreq(n), 1.0 / n)
    spec /= np.sqrt(freqs / freqs[1])
    x = np.fft.irfft(spec, n=n)
    return x / (np.std(x) + 1e-12)


def _interferer(rng, n, sample_rate, kind):
    if kind == "white":
        return rng.standard_normal(n)
    if kind == "pink":
        return _pink(rng, n)
    parts = [_speech_surrogate(rng, n, sample_rate) for _ in range(4)]
    x = np.sum(parts, axis=0)
    return x / (np.std(x) + 1e-12)


def _steering_bank(spec, n_bins):
    """(F, N, M) anechoic far-field steering vectors for a linear array."""
    az = np.deg2rad(spec.resolved_azimuths())
    mics = np.arange(spec.n_mics) * spec.mic_spacing
    delays = mics[:, None] * np.sin(az)[None, :] / SPEED_OF_SOUND   # (N, M)
    fft_size = 2 * (n_bins - 1)
    freqs = np.arange(n_bins) * (spec.sample_rate / fft_size)
    return np.exp(-2j * np.pi * freqs[:, None, None] * delays[None, :, :])


def _random_bank(spec, n_bins, rng):
    shape = (n_bins, spec.n_mics, spec.n_sources)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return a / math.sqrt(2.0)


def make_reference(clean_magnitude, degradation=None, rng=None):
    """Oracle magnitude reference, optionally degraded to emulate a rough estimate.

    degradation: None, ('mag_noise', level_db) adding rectified noise at the
    given energy relative to the clean magnitude, or ('blur', k) smearing
    with a k x k mean filter.
    """
    mag = np.asarray(clean_magnitude, dtype=np.float64)
    if degradation is None:
        return mag.copy()
    kind = degradation[0]
    if kind == "mag_noise":
        level_db = float(degradation[1])
        if rng is None:
            rng = np.random.default_rng(0)
        scale = math.sqrt(float(np.mean(mag * mag))) * 10.0 ** (level_db / 20.0)
        noisy = mag + scale * np.abs(rng.standard_normal(mag.shape))
        return np.maximum(noisy, 0.0)
    if kind == "blur":
        k = int(degradation[1])
        return np.maximum(uniform_filter(mag, size=k, mode="nearest"), 0.0)
    raise ValueError(f"unknown reference degradation: {kind!r}")


def generate_scenario(spec, stft_config=None):
    """Build one deterministic scenario with its oracle decomposition."""
    if stft_config is None:
        stft_config = StftConfig()
    rng = np.random.default_rng(spec.seed)
    n_samples = int(round(spec.duration * spec.sample_rate))
    if n_samples < stft_config.fft_size:
        raise ValueError("scenario too short for one analysis frame")

    sources = [_speech_surrogate(rng, n_samples, spec.sample_rate)]
    for _ in range(spec.n_sources - 1):
        sources.append(_interferer(rng, n_samples, spec.sample_rate, spec.noise_kind))
    src_specs = np.stack([stft(s, stft_config) for s in sources])     # (M, F, T)
    n_bins = src_specs.shape[1]
    if spec.source_band is not None:
        lo, hi = spec.source_band
        centers = np.arange(n_bins) * (spec.sample_rate / stft_config.fft_size)
        keep = (centers >= lo) & (centers <= hi)
        src_specs[:, ~keep, :] = 0.0

    if spec.mixing == "anechoic":
        bank = _steering_bank(spec, n_bins)
    else:
        bank = _random_bank(spec, n_bins, rng)
    svals = np.linalg.svd(bank, compute_uv=False)
    cond = float(np.median(svals[:, 0] / np.maximum(svals[:, -1], 1e-300)))

    images = np.einsum("fnm,mft->nmft", bank, src_specs)              # (N, M, F, T)
    x_tgt = np.ascontiguousarray(images[:, 0])
    x_point = images[:, 1:].sum(axis=1)

    # diffuse floor: independent noise at each microphone
    m = spec.ref_mic
    if spec.diffuse_level_db is None:
        diffuse = np.zeros_like(x_point)
    else:
        diffuse_time = np.stack([
            _interferer(rng, n_samples, spec.sample_rate,
                        "pink" if spec.noise_kind == "pink" else "white")
            for _ in range(spec.n_mics)])
        diffuse = np.stack([stft(d, stft_config) for d in diffuse_time])
        e_point = float(np.sum(np.abs(x_point[m]) ** 2))
        e_diff = float(np.sum(np.abs(diffuse[m]) ** 2))
        if spec.n_sources > 1 and e_point > 0:
            diffuse *= math.sqrt(e_point / e_diff) * 10.0 ** (spec.diffuse_level_db / 20.0)
    x_itf = x_point + diffuse

    # pin the signal-to-interference ratio at the reference microphone
    e_tgt = float(np.sum(np.abs(x_tgt[m]) ** 2))
    e_itf = float(np.sum(np.abs(x_itf[m]) ** 2))
    if e_itf > 0:
        target_ratio = 10.0 ** (spec.snr_db / 10.0)
        x_itf = x_itf * (math.sqrt(e_tgt / (e_itf * target_ratio)) * spec.bg_multiplier)
    x = x_tgt + x_itf

    reference_clean = np.abs(x_tgt[m])
    reference = make_reference(reference_clean, spec.reference_degradation,
                               rng=np.random.default_rng(spec.seed + 104729))

    obs_time = np.stack([istft(x[k], stft_config, length=n_samples)
                         for k in range(spec.n_mics)])
    target_time = istft(x_tgt[m], stft_config, length=n_samples)
    itf_time = istft(x_itf[m], stft_config, length=n_samples)

    return OracleBundle(spec=spec, stft_config=stft_config, x=x, x_tgt=x_tgt,
                        x_itf=x_itf, reference=reference,
                        reference_clean=reference_clean, obs_time=obs_time,
                        target_time=target_time, itf_time=itf_time,
                        mixing_condition=cond)
