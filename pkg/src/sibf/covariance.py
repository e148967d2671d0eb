"""Covariance statistics in batch, windowed, FIFO, and RLS forms.

Shapes follow the bank convention: an observation frame is (..., N), a
covariance (..., N, N), with any leading axes (usually the frequency bin)
broadcast elementwise.  All four estimators share the (1 - g) prefactor so
they estimate the same quantity and the windowed/FIFO forms agree exactly
for weight sequences that do not depend on the filter.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import hermitize

MODES = ("batch", "windowed", "fifo", "rls")
V_REF_FLOOR = 1e-20


def validate_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def batch_covariance(x, c=None):
    """(1/T) sum_t c(t) x(t) x(t)^H for x of shape (..., N, T).

    c has shape (..., T) or None for the unweighted observation covariance.
    """
    x = np.asarray(x)
    t = x.shape[-1]
    if t == 0:
        raise ValueError("batch covariance needs at least one frame")
    if c is None:
        out = np.einsum("...nt,...mt->...nm", x, np.conj(x)) / t
    else:
        out = np.einsum("...t,...nt,...mt->...nm", np.asarray(c), x, np.conj(x)) / t
    return hermitize(out)


def windowed_covariance(x_win, c_win, g):
    """Exponentially weighted sliding-window covariance.

    x_win is (Tw, ..., N) ordered oldest first, c_win (Tw, ...); the newest
    frame carries weight (1 - g), the oldest (1 - g) g^(Tw - 1).
    """
    x_win = np.asarray(x_win)
    tw = x_win.shape[0]
    if tw == 0:
        raise ValueError("empty window")
    decay = g ** np.arange(tw - 1, -1, -1, dtype=np.float64)
    shape = (tw,) + (1,) * (x_win.ndim - 2)
    wts = (1.0 - g) * decay.reshape(shape) * np.asarray(c_win)
    out = np.einsum("t...,t...n,t...m->...nm", wts, x_win, np.conj(x_win))
    return hermitize(out)


def fifo_update(phi_prev, x_new, c_new, x_old, c_old, g, t_b):
    """Slide the window one frame: add the newest term, subtract the departing one."""
    add = np.asarray(c_new)[..., None, None] * (
        x_new[..., :, None] * np.conj(x_new[..., None, :]))
    sub = (g ** t_b) * np.asarray(c_old)[..., None, None] * (
        x_old[..., :, None] * np.conj(x_old[..., None, :]))
    return g * phi_prev + (1.0 - g) * (add - sub)


def rls_update(phi_prev, x, c, g):
    """Exponentially forgetting recursion without subtraction."""
    add = np.asarray(c)[..., None, None] * (x[..., :, None] * np.conj(x[..., None, :]))
    return g * phi_prev + (1.0 - g) * add


def update_v_ref(v_prev, r, g):
    """Running square mean of the reference, floored away from zero."""
    return np.maximum(g * v_prev + (1.0 - g) * np.asarray(r) ** 2, V_REF_FLOOR)


def update_phi_q(phi_q_prev, x, q, g):
    """Running covariance vector between the observation and the scaling target."""
    return g * phi_q_prev + (1.0 - g) * x * np.conj(np.asarray(q))[..., None]


def init_weighted_sum(values, g):
    """(1 - g) sum_tau g^tau v(-tau) over a window ordered oldest first.

    Works for scalars per frame (v_ref, v_R) and for per-frame arrays
    (phi_q terms); the window axis is axis 0.
    """
    values = np.asarray(values)
    tw = values.shape[0]
    decay = g ** np.arange(tw - 1, -1, -1, dtype=np.float64)
    shape = (tw,) + (1,) * (values.ndim - 1)
    return (1.0 - g) * np.sum(decay.reshape(shape) * values, axis=0)


class FrameRing:
    """Fixed-length frame buffer for the windowed and FIFO paths.

    Stores, per buffered frame: the observation vectors (F, N), the raw and
    clipped-normalized references (F,), the scaling targets (F,), the final
    covariance weights (F,), and optionally the frames the scale statistics
    accumulate over when those differ from the observation (oracle scaling).
    Frames are kept oldest first.
    """

    def __init__(self, x_frames, r_raw, r_clip, q, c, qx=None):
        self.x = np.ascontiguousarray(x_frames, dtype=np.complex128)
        self.r_raw = np.ascontiguousarray(r_raw, dtype=np.float64)
        self.r_clip = np.ascontiguousarray(r_clip, dtype=np.float64)
        self.q = np.ascontiguousarray(q, dtype=np.complex128)
        self.c = np.ascontiguousarray(c, dtype=np.float64)
        self.qx = None if qx is None else np.ascontiguousarray(qx, dtype=np.complex128)
        self.t_b = self.x.shape[0]

    def scale_frames(self):
        return self.x if self.qx is None else self.qx

    def push(self, x, r_raw, r_clip, q, c, qx=None):
        """Append the newest frame; returns copies of the departing oldest one."""
        old = (self.x[0].copy(), self.r_raw[0].copy(), self.r_clip[0].copy(),
               self.q[0].copy(), self.c[0].copy(),
               self.x[0].copy() if self.qx is None else self.qx[0].copy())
        items = [(self.x, x), (self.r_raw, r_raw), (self.r_clip, r_clip),
                 (self.q, q), (self.c, c)]
        if self.qx is not None:
            items.append((self.qx, x if qx is None else qx))
        for buf, val in items:
            buf[:-1] = buf[1:]
            buf[-1] = val
        return old

    def set_newest_weights(self, c):
        self.c[-1] = c


@dataclass
class CovarianceState:
    """Banked per-bin second-order statistics for the streaming paths.

    Arrays are stacked over frequency bins: phi_x and phi_c are (F, N, N),
    phi_q (F, N), v_ref (F,).  phi_c_inv is maintained only on the RLS
    path.  ring is present for the windowed and FIFO paths.  Bins are
    independent; one writer updates a given state.
    """

    phi_x: np.ndarray
    phi_c: np.ndarray
    phi_q: np.ndarray
    v_ref: np.ndarray
    phi_c_inv: np.ndarray = None
    ring: FrameRing = None
    v_r: float = 0.0
    frames_seen: int = 0
    extras: dict = field(default_factory=dict)
