"""Pure-NumPy implementations of the per-frame update kernels.

All kernels operate on arrays banked over frequency bins:

    phi      (F, N, N) complex128, C-contiguous, Hermitian per bin
    x        (F, N)    complex128, one multichannel frame
    c        (F,)      float64, per-bin weights
    xbuf     (Tw, F, N) complex128, frame window ordered oldest first

Updates are in place where the signature says so; this is what the frame
loop relies on to avoid reallocating state every frame.
"""

import numpy as np

NAME = "purepy"


def ewma_rank1(phi, x, c, g):
    """phi <- g*phi + (1-g)*c * x x^H, in place."""
    np.multiply(phi, g, out=phi)
    phi += ((1.0 - g) * c)[:, None, None] * (x[:, :, None] * np.conj(x[:, None, :]))


def fifo_rank1(phi, x_new, c_new, x_old, c_old, g, g_tb):
    """phi <- g*phi + (1-g)*{c_new x_new x_new^H - g_tb*c_old x_old x_old^H}, in place."""
    np.multiply(phi, g, out=phi)
    phi += ((1.0 - g) * c_new)[:, None, None] * (x_new[:, :, None] * np.conj(x_new[:, None, :]))
    phi -= ((1.0 - g) * g_tb * c_old)[:, None, None] * (x_old[:, :, None] * np.conj(x_old[:, None, :]))


def ewma_vec(acc, x, q, g):
    """acc <- g*acc + (1-g) * x * conj(q), in place (acc, x: (F, N); q: (F,))."""
    np.multiply(acc, g, out=acc)
    acc += (1.0 - g) * x * np.conj(q)[:, None]


def windowed_rank1_sum(xbuf, cbuf, g, out):
    """out <- (1-g) * sum_i g^(Tw-1-i) cbuf[i] * xbuf[i] xbuf[i]^H.

    Window ordered oldest first, so the newest frame (i = Tw-1) carries
    weight (1-g).
    """
    tw = xbuf.shape[0]
    decay = g ** np.arange(tw - 1, -1, -1, dtype=np.float64)
    wts = (1.0 - g) * decay[:, None] * cbuf
    np.einsum("tf,tfn,tfm->fnm", wts, xbuf, np.conj(xbuf), out=out, optimize=True)


def window_outputs(xbuf, w, out):
    """out[i, f] <- w(f)^H xbuf[i, f] for every window frame."""
    np.einsum("fn,tfn->tf", np.conj(w), xbuf, out=out, optimize=True)


def mil_rank1(ainv, b, d, denom_out):
    """Rank-1 update of the inverse: ainv <- (A + d b b^H)^{-1} given ainv = A^{-1}.

    In place per bin.  denom_out[f] receives 1/d + b^H ainv b; bins where d == 0
    are left untouched (denom_out = inf) and bins where |denom| < 1e-14 are left
    untouched so the caller can flag them.
    """
    u = np.einsum("fnm,fm->fn", ainv, b, optimize=True)
    quad = np.einsum("fn,fn->f", np.conj(b), u, optimize=True).real
    active = d != 0.0
    denom = np.full(d.shape, np.inf)
    np.divide(1.0, d, out=denom, where=active)
    denom += quad
    denom_out[:] = denom
    ok = active & (np.abs(denom) >= 1e-14)
    upd = (u[:, :, None] * np.conj(u[:, None, :])) / np.where(ok, denom, 1.0)[:, None, None]
    ainv -= np.where(ok[:, None, None], upd, 0.0)


def pm_step(phi_c_inv, phi_x, w, s_out):
    """One power-method step: w <- Phi_c^{-1} Phi_x w, renormalized to w^H Phi_x w = 1.

    s_out[f] receives the pre-normalization quadratic form; bins with s <= 0
    keep their previous w so the caller can flag them.
    """
    t = np.einsum("fnm,fm->fn", phi_x, w, optimize=True)
    z = np.einsum("fnm,fm->fn", phi_c_inv, t, optimize=True)
    tz = np.einsum("fnm,fm->fn", phi_x, z, optimize=True)
    s = np.einsum("fn,fn->f", np.conj(z), tz, optimize=True).real
    s_out[:] = s
    ok = s > 0.0
    scale = np.where(ok, 1.0 / np.sqrt(np.where(ok, s, 1.0)), 1.0)
    w[:] = np.where(ok[:, None], z * scale[:, None], w)
