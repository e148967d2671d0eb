"""Output-scale restoration.

The filter estimate carries a unit-variance constraint, so its scale (and
phase) is arbitrary; these factors restore it.  Batch factors work on the
trailing (time) axis and broadcast over any leading axes; the online
factor works from the running covariance vector.
"""

import numpy as np

METHODS = ("mdp", "swf", "ideal")


def mdp_factor_batch(x_m, y):
    """Least-squares projection of the reference microphone onto the output.

    gamma = sum x_m conj(y) / sum |y|^2; zero-energy outputs get gamma = 0.
    """
    num = np.sum(np.asarray(x_m) * np.conj(y), axis=-1)
    den = np.sum(np.abs(y) ** 2, axis=-1)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def least_squares_factor(target, y):
    """argmin_gamma sum |target - gamma y|^2; the general form behind mdp."""
    return mdp_factor_batch(target, y)


def swf_factor_batch(q, y):
    """Single-channel Wiener factor (1/T) sum q conj(y).

    Equals the least-squares factor when y has unit mean square, which the
    filter constraint guarantees for estimator outputs.
    """
    q = np.asarray(q)
    return np.mean(q * np.conj(y), axis=-1)


def ideal_factor(x_tgt_m, y_tgt):
    """Oracle factor from the true target image and the output's target part."""
    return np.mean(np.asarray(x_tgt_m) * np.conj(y_tgt), axis=-1)


def swf_factor_online(phi_q, w):
    """Per-frame factor phi_q^H w from the running covariance vector."""
    return np.einsum("...n,...n->...", np.conj(phi_q), w)


def apply_scale(gamma, y):
    """Scaled output gamma * y (shapes must broadcast)."""
    return np.asarray(gamma) * y
