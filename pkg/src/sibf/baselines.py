"""Comparison methods sharing the magnitude reference.

The MMSE beamformer fits the observation to the complex scaling target by
least squares (its output therefore needs no separate scale restoration).
The frame-coupled variant of the main estimator shares one weight across
all bins of a frame; it reuses the core engine with the coupled model.
"""

import numpy as np

from . import _kernels as kern
from .core import SibfConfig, extract_batch, run_per_frame
from .covariance import V_REF_FLOOR, init_weighted_sum
from .linalg import diagonal_load, hermitize, inv_hermitian
from .models import SourceModel
from .stft import combine_magnitude_phase


def mmse_filter_batch(x, q, delta_rel=1e-6):
    """Least-squares filter w = Phi_x^{-1} phi_q for x (..., N, T), q (..., T).

    Minimizes sum_t |q(t) - w^H x(t)|^2 per bin.
    """
    x = np.asarray(x, dtype=np.complex128)
    q = np.asarray(q, dtype=np.complex128)
    t = x.shape[-1]
    phi_x = hermitize(np.einsum("...nt,...mt->...nm", x, np.conj(x)) / t)
    phi_q = np.einsum("...nt,...t->...n", x, np.conj(q)) / t
    phi_x = diagonal_load(phi_x, delta_rel)
    try:
        return np.linalg.solve(phi_x, phi_q[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"observation covariance is singular: {exc}") from exc


def mmse_extract_batch(x, r, ref_mic=0, delta_rel=1e-6):
    """Batch MMSE extraction using the reference-with-observation-phase target."""
    q = combine_magnitude_phase(r, x[ref_mic])
    xf = np.asarray(x).transpose(1, 0, 2)                    # (F, N, T)
    w = mmse_filter_batch(xf, q, delta_rel)
    y = np.einsum("fn,fnt->ft", np.conj(w), xf)
    return y, w


def mmse_extract_online(x, r, ref_mic=0, g=0.99, t_b=125, delta_rel=1e-6,
                        inverse_refresh=1000):
    """Per-frame MMSE extraction with rank-1 inverse maintenance.

    Initial statistics come from an exponentially weighted window over the
    first t_b frames (aliased as the missing past); afterwards
    w(t) = Phi_x(t)^{-1} phi_q(t) with both statistics updated per frame.
    The inverse is recomputed directly every inverse_refresh frames to
    bound floating-point drift of the rank-1 recursion.
    """
    x = np.asarray(x, dtype=np.complex128)
    r = np.asarray(r, dtype=np.float64)
    n, f_bins, t = x.shape
    t_b = min(t_b, t)
    frames = np.ascontiguousarray(x.transpose(2, 1, 0))      # (T, F, N)
    q_stream = np.ascontiguousarray(combine_magnitude_phase(r, x[ref_mic]).T)

    xb = frames[:t_b]
    qb = q_stream[:t_b]
    phi_x = np.empty((f_bins, n, n), dtype=np.complex128)
    kern.windowed_rank1_sum(xb, np.ones((t_b, f_bins)), g, phi_x)
    phi_q = init_weighted_sum(xb * np.conj(qb)[:, :, None], g)
    phi_x_inv = np.ascontiguousarray(inv_hermitian(phi_x, delta_rel))

    y = np.zeros((f_bins, t), dtype=np.complex128)
    w_bank = np.zeros((t, f_bins, n), dtype=np.complex128)
    ones = np.ones(f_bins)
    denom = np.empty(f_bins)
    d = (1.0 - g) * ones
    for ti in range(t):
        xt = frames[ti]
        kern.ewma_vec(phi_q, xt, q_stream[ti], g)
        kern.ewma_rank1(phi_x, xt, ones, g)
        if ti > 0 and ti % inverse_refresh == 0:
            phi_x_inv = np.ascontiguousarray(inv_hermitian(phi_x, delta_rel))
            denom[:] = np.inf
        else:
            phi_x_inv *= 1.0 / g
            kern.mil_rank1(phi_x_inv, xt, d, denom)
        w = np.einsum("fnm,fm->fn", phi_x_inv, phi_q)
        bad = np.abs(denom) < 1e-14
        w[bad] = 0.0
        y[:, ti] = np.einsum("fn,fn->f", np.conj(w), xt)
        w_bank[ti] = w
    return y, w_bank


def ive_constrained_config(mode="batch", beta=0.25, epsilon=1e-9, **kw):
    """Config for the frame-coupled (norm-constrained) variant."""
    model = SourceModel.ive_tv_laplacian(beta=beta, epsilon=epsilon)
    return SibfConfig(mode=mode, model=model, scaling="swf", **kw)


def ive_constrained_extract(x, r, mode="batch", beta=0.25, epsilon=1e-9, **kw):
    """Run the frame-coupled variant; returns the scaled output spectrogram.

    mode is 'batch' or 'rls'; extra keyword arguments go to SibfConfig.
    """
    cfg = ive_constrained_config(mode=mode, beta=beta, epsilon=epsilon, **kw)
    if mode == "batch":
        return extract_batch(x, r, cfg).y_scaled
    return run_per_frame(x, r, cfg).y_scaled
