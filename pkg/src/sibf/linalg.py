"""Small-dimension complex Hermitian linear algebra.

Everything here works on a single (N, N) matrix or on a stack
(..., N, N); filters are (N,) or (..., N).  N is the channel count,
typically 2 to 16, so the solvers favour robustness over asymptotic
speed.
"""

import numpy as np

DEFAULT_LOADING = 1e-6
_EIG_TIE_REL = 1e-10


class IllConditionedError(np.linalg.LinAlgError):
    """Covariance too close to singular for the requested operation."""


def hermitize(a):
    """Return the Hermitian part (a + a^H)/2."""
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def diagonal_load(a, delta_rel):
    """Add delta_rel * (trace(a)/N) to the diagonal (delta_rel itself if trace is 0)."""
    if delta_rel < 0:
        raise ValueError("delta_rel must be >= 0")
    if delta_rel == 0:
        return a.copy()
    n = a.shape[-1]
    tr = np.einsum("...ii->...", a).real / n
    step = np.where(tr == 0.0, delta_rel, delta_rel * tr)
    out = a.copy()
    idx = np.arange(n)
    out[..., idx, idx] += step[..., None]
    return out


def _phase_fix(w):
    """Rotate each filter so its largest-magnitude component is real nonnegative."""
    single = w.ndim == 1
    if single:
        w = w[None]
    k = np.argmax(np.abs(w), axis=-1)
    pivot = np.take_along_axis(w, k[..., None], axis=-1)[..., 0]
    absp = np.abs(pivot)
    phase = np.where(absp > 0, np.conj(pivot) / np.where(absp > 0, absp, 1.0), 1.0)
    out = w * phase[..., None]
    return out[0] if single else out


def _lex_smaller(a, b):
    """True if vector a precedes b in (real, imag) lexicographic order."""
    ka = np.stack([a.real, a.imag], axis=-1).ravel()
    kb = np.stack([b.real, b.imag], axis=-1).ravel()
    for ea, eb in zip(ka, kb):
        if ea < eb:
            return True
        if ea > eb:
            return False
    return False


def gev_min(a, b, delta_rel=0.0):
    """Minimum-eigenvalue solution of the generalized problem A w = lambda B w.

    Parameters
    ----------
    a, b : array (..., N, N)
        Hermitian matrices; b must be positive definite (pass delta_rel > 0
        to load it first).
    delta_rel : float
        Optional diagonal loading applied to both matrices before solving.

    Returns
    -------
    w : array (..., N)
        Eigenvector of the smallest eigenvalue, normalized so that
        w^H B w = 1, with a deterministic phase (largest component real
        nonnegative).  Under a near-degenerate smallest eigenvalue the
        lexicographically smallest phase-fixed candidate is returned.
    lam : array (...)
        The smallest generalized eigenvalue.
    """
    a = hermitize(np.asarray(a, dtype=np.complex128))
    b = hermitize(np.asarray(b, dtype=np.complex128))
    if a.shape != b.shape or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if delta_rel:
        a = diagonal_load(a, delta_rel)
        b = diagonal_load(b, delta_rel)
    w, lam, ok = gev_min_masked(a, b)
    if not np.all(ok):
        raise IllConditionedError("B is numerically singular; covariance ill conditioned")
    resid = np.linalg.norm(
        np.einsum("...nm,...m->...n", a, w)
        - lam[..., None] * np.einsum("...nm,...m->...n", b, w), axis=-1)
    bound = 1e-6 * np.linalg.norm(np.einsum("...nm,...m->...n", a, w), axis=-1) + 1e-9
    if np.any(resid > bound):
        raise IllConditionedError("eigenpair residual too large; B is near singular")
    return w, lam


def gev_min_masked(a, b):
    """gev_min without exceptions: returns (w, lam, ok) with per-item validity.

    Inputs must already be Hermitian (and loaded if desired).  Failed items
    get w = 0 and lam = 0.  Used by the streaming paths where one bad bin
    must not abort the others.
    """
    single = a.ndim == 2
    if single:
        a = a[None]
        b = b[None]
    batch = a.shape[:-2]
    n = a.shape[-1]
    af = a.reshape((-1, n, n))
    bf = b.reshape((-1, n, n))
    w = np.zeros((af.shape[0], n), dtype=np.complex128)
    lam = np.zeros(af.shape[0])
    ok = np.zeros(af.shape[0], dtype=bool)

    def solve_block(ab, bb):
        # B = L L^H; C = L^{-1} A L^{-H}; eigh(C); w = L^{-H} v
        ell = np.linalg.cholesky(bb)
        tmp = np.linalg.solve(ell, ab)
        c = np.linalg.solve(ell, np.conj(np.swapaxes(tmp, -1, -2)))
        c = hermitize(c)
        evals, evecs = np.linalg.eigh(c)
        return ell, evals, evecs

    # a Cholesky of B needs a strictly positive diagonal; screening keeps
    # dead bins from forcing the per-item exception path below
    cand = np.nonzero(np.all(np.einsum("bii->bi", bf).real > 0, axis=1))[0]
    if cand.size:
        try:
            ell, evals, evecs = solve_block(af[cand], bf[cand])
            v = _pick_min_eigvec(evals, evecs)
            wv = np.linalg.solve(np.conj(np.swapaxes(ell, -1, -2)), v[..., None])[..., 0]
            w[cand] = wv
            lam[cand] = evals[:, 0]
            ok[cand] = np.isfinite(wv).all(axis=-1)
        except np.linalg.LinAlgError:
            for i in cand:
                try:
                    ell, evals, evecs = solve_block(af[i], bf[i])
                except np.linalg.LinAlgError:
                    continue
                v = _pick_min_eigvec(evals[None], evecs[None])[0]
                wi = np.linalg.solve(np.conj(ell.T), v)
                if np.isfinite(wi).all():
                    w[i] = wi
                    lam[i] = evals[0]
                    ok[i] = True

    # renormalize exactly against B and fix the phase
    quad = np.einsum("bn,bnm,bm->b", np.conj(w), bf, w).real
    good = ok & (quad > 0)
    w[good] /= np.sqrt(quad[good])[:, None]
    w = _phase_fix(w)
    w[~ok] = 0.0
    if single:
        return w[0], lam[0], ok[0]
    return w.reshape(batch + (n,)), lam.reshape(batch), ok.reshape(batch)


def _pick_min_eigvec(evals, evecs):
    """Select the minimum-eigenvalue eigenvector with deterministic tie-breaking."""
    v = evecs[:, :, 0].copy()
    spread = (np.abs(evals[:, -1] - evals[:, 0]) + np.finfo(float).tiny)[:, None]
    close = np.abs(evals - evals[:, :1]) <= _EIG_TIE_REL * np.maximum(spread, np.abs(evals[:, :1]))
    multi = np.nonzero(close.sum(axis=1) > 1)[0]
    for i in multi:
        best = _phase_fix(evecs[i, :, 0])
        for j in range(1, evals.shape[1]):
            if not close[i, j]:
                break
            cand = _phase_fix(evecs[i, :, j])
            if _lex_smaller(cand, best):
                best = cand
        v[i] = best
    return v


def power_method_step(phi_c_inv, phi_x, w):
    """One tracking step toward the gev_min eigenvector.

    w' = Phi_c^{-1} Phi_x w, renormalized so that w'^H Phi_x w' = 1.
    Raises IllConditionedError if the quadratic form is not positive.
    """
    w = np.asarray(w, dtype=np.complex128)
    z = np.einsum("...nm,...m->...n", phi_c_inv,
                  np.einsum("...nm,...m->...n", phi_x, w))
    s = np.einsum("...n,...nm,...m->...", np.conj(z), phi_x, z).real
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise IllConditionedError("Phi_x lost positive definiteness in power-method step")
    return z / np.sqrt(s)[..., None]


def mil_rank1_update(a_inv, b, d):
    """Inverse of (A + d b b^H) from A^{-1}, via the rank-1 inversion identity.

    d = 0 returns a copy of a_inv.  Raises IllConditionedError when the
    denominator 1/d + b^H A^{-1} b is smaller than 1e-14 in magnitude.
    """
    a_inv = np.asarray(a_inv, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if d == 0:
        return a_inv.copy()
    u = a_inv @ b
    denom = 1.0 / d + np.vdot(b, u).real
    if abs(denom) < 1e-14:
        raise IllConditionedError("rank-1 inverse update is singular")
    return hermitize(a_inv - np.outer(u, np.conj(u)) / denom)


def inv_hermitian(a, delta_rel=DEFAULT_LOADING):
    """Direct inverse of a Hermitian PD matrix (stack), with diagonal loading."""
    loaded = diagonal_load(hermitize(a), delta_rel)
    try:
        return hermitize(np.linalg.inv(loaded))
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(str(exc)) from exc
