"""Source models: per-frame weights c(f, t) and the matching objectives.

A source model is a joint density between the magnitude reference and the
estimated target.  Changing the model only changes the weight entering the
weighted covariance, so each model reduces to one weight formula here.
Weights are defined up to a positive per-bin constant; the minimum
generalized eigenvector is invariant to such factors.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

TV_GG = "tv_gg"
STUDENT_T = "student_t"
BS_LAPLACIAN = "bs_laplacian"
IVE_TV_LAPLACIAN = "ive_tv_laplacian"

DEFAULT_EPSILON = 1e-9
DEFAULT_Y_FLOOR = 1e-12
DEFAULT_BETA = 0.25


def clip_reference(r, epsilon):
    """max(r, epsilon); keeps reference-powered denominators away from zero."""
    return np.maximum(r, epsilon)


def weight_tv_gg(r_clipped, y_abs, beta, rho, y_floor=DEFAULT_Y_FLOOR):
    """Weight of the time-varying generalized Gaussian family.

    rho = 2 gives the Gaussian case 1 / r'^(2 beta), independent of y.
    rho < 2 gives 1 / (r'^(beta rho) |y|^(2 - rho)); rho = 1 is the
    Laplacian case and rho = 0 the pure 1/|y|^2 variance estimate.
    """
    r_clipped = np.asarray(r_clipped, dtype=np.float64)
    if rho == 2:
        return r_clipped ** (-2.0 * beta)
    y = np.maximum(np.asarray(y_abs, dtype=np.float64), y_floor)
    return 1.0 / (r_clipped ** (beta * rho) * y ** (2.0 - rho))


def weight_tv_student_t(r_clipped, y_abs, nu, beta=1.0, y_floor=DEFAULT_Y_FLOOR):
    """Student's t weight (2 + nu) / (nu r'^(2 beta) + 2 |y|^2).

    nu -> 0 recovers the 1/|y|^2 variance estimate; nu -> inf the Gaussian
    weight 1/r'^(2 beta).  beta != 1 substitutes a powered reference in the
    variance term; beta = 1 is the plain model.
    """
    r_clipped = np.asarray(r_clipped, dtype=np.float64)
    y = np.maximum(np.asarray(y_abs, dtype=np.float64), y_floor)
    return (2.0 + nu) / (nu * r_clipped ** (2.0 * beta) + 2.0 * y * y)


def weight_bs_laplacian(r_clipped, y_abs, alpha, y_floor=DEFAULT_Y_FLOOR):
    """Bivariate spherical Laplacian weight 1 / sqrt(alpha r'^2 + |y|^2)."""
    r_clipped = np.asarray(r_clipped, dtype=np.float64)
    y = np.maximum(np.asarray(y_abs, dtype=np.float64), y_floor)
    return 1.0 / np.sqrt(alpha * r_clipped * r_clipped + y * y)


def weight_ive_constrained(r_frame, y_scaled_frame, beta, epsilon, v_r,
                           y_floor=DEFAULT_Y_FLOOR):
    """Frame-shared weight coupling all bins through the frame norms.

    r_frame is the raw (unnormalized) reference column of one frame,
    y_scaled_frame the post-scaling output column, v_r the running mean of
    the squared reference-frame norm.  The same weight applies to every
    bin of the frame.
    """
    r_frame = np.asarray(r_frame, dtype=np.float64)
    r_norm2 = float(np.sum(r_frame * r_frame))
    v_r = max(float(v_r), 1e-20)
    r_normed = math.sqrt(r_norm2 / v_r)
    r_prime = max(r_normed, epsilon)
    y_norm = float(np.sqrt(np.sum(np.abs(y_scaled_frame) ** 2)))
    y_norm = max(y_norm, y_floor)
    return 1.0 / (r_prime ** beta * y_norm)


@dataclass(frozen=True)
class SourceModel:
    """Model family selection plus its hyperparameters.

    kind is one of tv_gg / student_t / bs_laplacian / ive_tv_laplacian.
    epsilon clips the (normalized) reference, y_floor keeps |y| out of
    denominators.
    """

    kind: str = TV_GG
    rho: float = 1.0
    beta: float = DEFAULT_BETA
    nu: float = 1.0
    alpha: float = 100.0
    epsilon: float = DEFAULT_EPSILON
    y_floor: float = DEFAULT_Y_FLOOR

    def __post_init__(self):
        if self.kind not in (TV_GG, STUDENT_T, BS_LAPLACIAN, IVE_TV_LAPLACIAN):
            raise ValueError(f"unknown source model kind: {self.kind!r}")
        if self.kind == TV_GG and not 0.0 <= self.rho <= 2.0:
            raise ValueError("rho must be in [0, 2]")
        if self.nu < 0 or self.alpha < 0:
            raise ValueError("nu and alpha must be nonnegative")
        if self.beta <= 0 or self.epsilon <= 0 or self.y_floor <= 0:
            raise ValueError("beta, epsilon, y_floor must be positive")

    # -- convenience constructors ------------------------------------
    @classmethod
    def tv_gaussian(cls, beta=DEFAULT_BETA, **kw):
        return cls(kind=TV_GG, rho=2.0, beta=beta, **kw)

    @classmethod
    def tv_laplacian(cls, beta=DEFAULT_BETA, **kw):
        return cls(kind=TV_GG, rho=1.0, beta=beta, **kw)

    @classmethod
    def tv_gg(cls, rho, beta=DEFAULT_BETA, **kw):
        return cls(kind=TV_GG, rho=rho, beta=beta, **kw)

    @classmethod
    def student_t(cls, nu=1.0, beta=1.0, **kw):
        return cls(kind=STUDENT_T, nu=nu, beta=beta, **kw)

    @classmethod
    def bs_laplacian(cls, alpha=100.0, **kw):
        return cls(kind=BS_LAPLACIAN, alpha=alpha, beta=DEFAULT_BETA, **kw)

    @classmethod
    def ive_tv_laplacian(cls, beta=DEFAULT_BETA, **kw):
        return cls(kind=IVE_TV_LAPLACIAN, beta=beta, **kw)

    # -- behaviour ----------------------------------------------------
    @property
    def is_gaussian(self):
        """True for the closed-form case that needs no iteration."""
        return self.kind == TV_GG and self.rho == 2.0

    @property
    def couples_bins(self):
        return self.kind == IVE_TV_LAPLACIAN

    @property
    def boost_beta(self):
        """Reference exponent of the Gaussian weight used for the first pass."""
        if self.kind == BS_LAPLACIAN:
            return DEFAULT_BETA
        return self.beta

    def weights(self, r_clipped, y_abs):
        """Per-bin weight c for clipped normalized reference and |y|."""
        if self.kind == TV_GG:
            return weight_tv_gg(r_clipped, y_abs, self.beta, self.rho, self.y_floor)
        if self.kind == STUDENT_T:
            return weight_tv_student_t(r_clipped, y_abs, self.nu, self.beta, self.y_floor)
        if self.kind == BS_LAPLACIAN:
            return weight_bs_laplacian(r_clipped, y_abs, self.alpha, self.y_floor)
        raise ValueError("frame-coupled models have no per-bin weight; "
                         "use weight_ive_constrained")

    def negloglik(self, r_clipped, y_abs):
        """Per-cell negative log density, model-constant terms dropped."""
        y = np.maximum(np.asarray(y_abs, dtype=np.float64), self.y_floor)
        r_clipped = np.asarray(r_clipped, dtype=np.float64)
        if self.kind == TV_GG:
            return (y / r_clipped ** self.beta) ** self.rho
        if self.kind == STUDENT_T:
            return 0.5 * (2.0 + self.nu) * np.log(
                self.nu * r_clipped ** (2.0 * self.beta) + 2.0 * y * y)
        if self.kind == BS_LAPLACIAN:
            return np.sqrt(self.alpha * r_clipped * r_clipped + y * y)
        raise ValueError("frame-coupled models have no per-bin objective")

    def with_params(self, **kw):
        return replace(self, **kw)
