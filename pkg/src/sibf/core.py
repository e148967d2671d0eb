"""Filter estimation and output generation.

Batch estimation solves the minimum generalized eigenvector of the
weighted/unweighted covariance pair, iterating weight and filter updates
for the non-Gaussian models (with the closed-form Gaussian solution as
the first pass).  The per-frame engine runs the same estimation every
frame in one of three forms: re-estimating over a sliding window
("windowed"), maintaining the window incrementally ("fifo"), or using an
exponentially forgetting recursion with power-method filter tracking and
rank-1 inverse updates ("rls").

Array conventions: observations X are (N, F, T), references R are (F, T),
filters are banked (F, N).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from . import scaling as scaling_mod
from .covariance import (CovarianceState, FrameRing, V_REF_FLOOR,
                         init_weighted_sum, validate_mode)
from .linalg import diagonal_load, gev_min_masked, hermitize, inv_hermitian
from .models import SourceModel, clip_reference, weight_ive_constrained
from .stft import combine_magnitude_phase

T_B_DEFAULT_WINDOWED = 312
T_B_DEFAULT_RLS = 125


@dataclass(frozen=True)
class SibfConfig:
    """Algorithm selection and hyperparameters for one extraction run."""

    mode: str = "batch"
    model: SourceModel = field(default_factory=SourceModel.tv_laplacian)
    k_aux: int = None          # None: 10 for batch, 1 for per-frame modes
    pm_iterations: int = 2
    scaling: str = "swf"
    ref_mic: int = 0
    g: float = 0.99
    t_b: int = None            # None: 312 windowed/fifo, 125 rls
    diag_load: float = 1e-6
    inverse_refresh: int = 1000

    def __post_init__(self):
        validate_mode(self.mode)
        if self.scaling not in scaling_mod.METHODS:
            raise ValueError(f"scaling must be one of {scaling_mod.METHODS}")
        if not 0.0 < self.g < 1.0:
            raise ValueError("forgetting factor g must be in (0, 1)")
        if self.pm_iterations < 1:
            raise ValueError("pm_iterations must be >= 1")
        if self.k_aux is not None and self.k_aux < 1:
            raise ValueError("k_aux must be >= 1")
        if self.t_b is not None and self.t_b < 1:
            raise ValueError("t_b must be >= 1")
        if self.model.couples_bins:
            if self.mode not in ("batch", "rls"):
                raise ValueError("the frame-coupled model supports batch and rls modes only")
            if self.scaling != "swf":
                raise ValueError("the frame-coupled model requires swf scaling")

    @property
    def resolved_k_aux(self):
        if self.model.is_gaussian:
            return 1
        if self.k_aux is not None:
            return self.k_aux
        return 10 if self.mode == "batch" else 1

    @property
    def resolved_t_b(self):
        if self.t_b is not None:
            return self.t_b
        return T_B_DEFAULT_RLS if self.mode == "rls" else T_B_DEFAULT_WINDOWED

    def check_channels(self, n):
        if not 0 <= self.ref_mic < n:
            raise ValueError(f"ref_mic {self.ref_mic} out of range for {n} channels")


def normalize_reference(r, v_ref):
    """Reference scaled to unit running square mean: r / sqrt(v_ref)."""
    return np.asarray(r) / np.sqrt(v_ref)


def apply_filter(w, x):
    """w^H x over the channel axis; w (..., N), x (..., N)."""
    return np.einsum("...n,...n->...", np.conj(w), x)


def evaluate_objective(y, r_norm, model):
    """Negative log likelihood of one bin's outputs, constants dropped.

    r_norm is the normalized reference exactly as fed to the weights;
    clipping is applied here.  Sums over the trailing (time) axis.
    """
    r_clip = clip_reference(np.asarray(r_norm, dtype=np.float64), model.epsilon)
    return np.sum(model.negloglik(r_clip, np.abs(y)), axis=-1)


@dataclass
class BatchFilterResult:
    w: np.ndarray              # (F, N) filters, unit variance per bin
    y: np.ndarray              # (F, T) unscaled outputs
    v_ref: np.ndarray          # (F,) reference square means
    r_clip: np.ndarray         # (F, T) clipped normalized reference
    objectives: np.ndarray     # (K, F) per-pass objective, or None
    n_failed: int


@dataclass
class BatchExtractResult:
    y_scaled: np.ndarray       # (F, T)
    gamma: np.ndarray          # (F,)
    filt: BatchFilterResult


def _check_inputs(x, r):
    x = np.asarray(x, dtype=np.complex128)
    r = np.asarray(r, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError("observation must have shape (channels, bins, frames)")
    if r.shape != x.shape[1:]:
        raise ValueError(f"reference shape {r.shape} does not match observation {x.shape[1:]}")
    if x.shape[2] < 1:
        raise ValueError("need at least one frame")
    if np.any(r < 0):
        raise ValueError("reference must be nonnegative")
    return x, r


def _solve_gev_bank(phi_c, phi_x, delta_rel):
    """GEV solve renormalized against the raw observation covariance.

    Solves without loading first so the auxiliary-function descent stays
    exact; only bins whose factorization fails are retried with diagonal
    loading.  Returns (w, ok) with w^H phi_x w = 1 exactly where ok.
    """
    w, _, ok = gev_min_masked(phi_c, phi_x)
    if not np.all(ok) and delta_rel > 0:
        retry = ~ok
        a = diagonal_load(phi_c[retry], delta_rel)
        b = diagonal_load(phi_x[retry], delta_rel)
        w_r, _, ok_r = gev_min_masked(a, b)
        w[retry] = w_r
        ok[retry] = ok_r
    s = np.einsum("...n,...nm,...m->...", np.conj(w), phi_x, w).real
    good = ok & (s > 0)
    w = np.where(good[..., None], w / np.sqrt(np.where(good, s, 1.0))[..., None], 0.0)
    return w, good


def estimate_filter_batch(x, r, config, track_objective=False):
    """Estimate per-bin extraction filters from a whole segment.

    The first pass always uses the closed-form Gaussian weight; for
    non-Gaussian models the remaining resolved_k_aux - 1 passes recompute
    the output, the model weight, the weighted covariance, and the filter.
    Bins whose covariance stays singular after loading emit zeros.
    """
    x, r = _check_inputs(x, r)
    config.check_channels(x.shape[0])
    if config.mode != "batch":
        raise ValueError("estimate_filter_batch requires mode='batch'")
    model = config.model
    xf = np.ascontiguousarray(x.transpose(1, 0, 2))      # (F, N, T)
    f_bins, _, t = xf.shape

    phi_x = hermitize(np.einsum("fnt,fmt->fnm", xf, np.conj(xf)) / t)
    v_ref = np.maximum(np.mean(r * r, axis=1), V_REF_FLOOR)
    r_clip = clip_reference(r / np.sqrt(v_ref)[:, None], model.epsilon)

    if model.couples_bins:
        v_r = max(float(np.mean(np.sum(r * r, axis=0))), V_REF_FLOOR)
        r_prime_frames = np.maximum(
            np.sqrt(np.sum(r * r, axis=0) / v_r), model.epsilon)   # (T,)
        q = combine_magnitude_phase(r, x[config.ref_mic])

    k_total = config.resolved_k_aux
    objectives = np.zeros((k_total, f_bins)) if track_objective else None
    n_failed = 0

    c = r_clip ** (-2.0 * model.boost_beta)
    w = np.zeros((f_bins, x.shape[0]), dtype=np.complex128)
    ok = np.zeros(f_bins, dtype=bool)
    for k in range(k_total):
        if k > 0:
            y = apply_filter(w[:, None, :], xf.transpose(0, 2, 1))   # (F, T)
            if model.couples_bins:
                gamma = scaling_mod.swf_factor_batch(q, y)
                y_norm = np.sqrt(np.sum(np.abs(gamma[:, None] * y) ** 2, axis=0))
                y_norm = np.maximum(y_norm, model.y_floor)
                c = np.broadcast_to(
                    1.0 / (r_prime_frames ** model.beta * y_norm), (f_bins, t)).copy()
            else:
                c = model.weights(r_clip, np.abs(y))
        phi_c = hermitize(np.einsum("ft,fnt,fmt->fnm", c, xf, np.conj(xf)) / t)
        w_new, good = _solve_gev_bank(phi_c, phi_x, config.diag_load)
        w = np.where(good[:, None], w_new, w)
        ok |= good
        n_failed += int(np.count_nonzero(~good))
        if track_objective:
            y_k = apply_filter(w[:, None, :], xf.transpose(0, 2, 1))
            if model.couples_bins:
                objectives[k] = np.nan
            else:
                objectives[k] = np.sum(model.negloglik(r_clip, np.abs(y_k)), axis=1)
    w[~ok] = 0.0
    y = apply_filter(w[:, None, :], xf.transpose(0, 2, 1))
    return BatchFilterResult(w=w, y=y, v_ref=v_ref, r_clip=r_clip,
                             objectives=objectives, n_failed=n_failed)


def extract_batch(x, r, config, oracle_target=None, track_objective=False):
    """Batch filter estimation followed by scale restoration."""
    x, r = _check_inputs(x, r)
    filt = estimate_filter_batch(x, r, config, track_objective=track_objective)
    y = filt.y
    m = config.ref_mic
    if config.scaling == "mdp":
        gamma = scaling_mod.mdp_factor_batch(x[m], y)
    elif config.scaling == "swf":
        q = combine_magnitude_phase(r, x[m])
        gamma = scaling_mod.swf_factor_batch(q, y)
    else:
        if oracle_target is None:
            raise ValueError("ideal scaling requires the oracle target decomposition")
        y_tgt = apply_filter(filt.w[:, None, :],
                             np.asarray(oracle_target).transpose(1, 2, 0))
        gamma = scaling_mod.ideal_factor(oracle_target[m], y_tgt)
    return BatchExtractResult(y_scaled=gamma[:, None] * y, gamma=gamma, filt=filt)


@dataclass
class PerFrameResult:
    y: np.ndarray              # (F, T) unscaled outputs
    y_scaled: np.ndarray       # (F, T)
    gamma: np.ndarray          # (F, T) per-frame scale factors
    filters: np.ndarray        # (T, F, N) when requested, else None
    t_b: int
    n_failed: int              # bin-frames that fell back to zero output
    init_seconds: float
    total_seconds: float


def run_per_frame(x, r, config, oracle_target=None, keep_filters=False):
    """Streaming extraction: one filter update and one scaled output per frame.

    The first t_b frames are buffered to compute the initial statistics
    (the buffered frames stand in for the missing past); afterwards each
    frame runs the configured per-frame update.  Outputs cover all T
    frames.  oracle_target (N, F, T) enables ideal scaling.
    """
    t_start = time.perf_counter()
    x, r = _check_inputs(x, r)
    config.check_channels(x.shape[0])
    if config.mode not in ("windowed", "fifo", "rls"):
        raise ValueError("run_per_frame requires a per-frame mode")
    if config.scaling == "ideal" and oracle_target is None:
        raise ValueError("ideal scaling requires the oracle target decomposition")

    engine = _PerFrameEngine(x, r, config, oracle_target, keep_filters)
    init_done = time.perf_counter()
    engine.run()
    total = time.perf_counter() - t_start
    return PerFrameResult(
        y=engine.out_y, y_scaled=engine.out_scaled, gamma=engine.out_gamma,
        filters=engine.out_filters, t_b=engine.t_b, n_failed=engine.n_failed,
        init_seconds=init_done - t_start, total_seconds=total)


class _PerFrameEngine:
    """State and frame loop shared by the windowed, fifo, and rls modes."""

    def __init__(self, x, r, config, oracle_target=None, keep_filters=False):
        self.config = config
        self.model = config.model
        self.mode = config.mode
        self.g = config.g
        n, f_bins, t = x.shape
        self.n, self.f_bins, self.t = n, f_bins, t
        self.t_b = min(config.resolved_t_b, t)
        self.g_tb = self.g ** self.t_b
        self.frames = np.ascontiguousarray(x.transpose(2, 1, 0))    # (T, F, N)
        self.r = r
        self.ones = np.ones(f_bins)
        self.keep_filters = keep_filters

        m = config.ref_mic
        if config.scaling == "mdp":
            self.q_stream = np.ascontiguousarray(x[m].T)            # (T, F)
            self.qx_frames = self.frames
        elif config.scaling == "swf":
            self.q_stream = np.ascontiguousarray(
                combine_magnitude_phase(r, x[m]).T)
            self.qx_frames = self.frames
        else:
            tgt = np.asarray(oracle_target, dtype=np.complex128)
            if tgt.shape != x.shape:
                raise ValueError("oracle target must match the observation shape")
            self.q_stream = np.ascontiguousarray(tgt[m].T)
            self.qx_frames = np.ascontiguousarray(tgt.transpose(2, 1, 0))

        self.out_y = np.zeros((f_bins, t), dtype=np.complex128)
        self.out_scaled = np.zeros((f_bins, t), dtype=np.complex128)
        self.out_gamma = np.zeros((f_bins, t), dtype=np.complex128)
        self.out_filters = (np.zeros((t, f_bins, n), dtype=np.complex128)
                            if keep_filters else None)
        self.n_failed = 0
        self._initialize()

    # -- initialization over the first t_b frames ---------------------
    def _initialize(self):
        g, t_b = self.g, self.t_b
        model = self.model
        xb = self.frames[:t_b].copy()
        rb = np.ascontiguousarray(self.r[:, :t_b].T)                  # (T_b, F)
        qb = self.q_stream[:t_b].copy()
        qxb = self.qx_frames[:t_b].copy()

        v_ref = np.maximum(init_weighted_sum(rb * rb, g), V_REF_FLOOR)
        phi_q = init_weighted_sum(qxb * np.conj(qb)[:, :, None], g)
        phi_x = np.empty((self.f_bins, self.n, self.n), dtype=np.complex128)
        ones_buf = np.ones((t_b, self.f_bins))
        kern.windowed_rank1_sum(xb, ones_buf, g, phi_x)

        rb_clip = clip_reference(rb / np.sqrt(v_ref)[None, :], model.epsilon)
        c_buf = np.ascontiguousarray(rb_clip ** (-2.0 * model.boost_beta))
        phi_c = np.empty_like(phi_x)
        kern.windowed_rank1_sum(xb, c_buf, g, phi_c)
        w, ok = _solve_gev_bank(phi_c, phi_x, self.config.diag_load)
        self.n_failed += int(np.count_nonzero(~ok))

        if model.couples_bins:
            self.v_r = max(float(init_weighted_sum(np.sum(rb * rb, axis=1), g)),
                           V_REF_FLOOR)

        if not model.is_gaussian:
            yb = np.empty((t_b, self.f_bins), dtype=np.complex128)
            kern.window_outputs(xb, w, yb)
            if model.couples_bins:
                gamma0 = scaling_mod.swf_factor_online(phi_q, w)
                c_buf = np.empty((t_b, self.f_bins))
                for tau in range(t_b):
                    c_buf[tau, :] = weight_ive_constrained(
                        rb[tau], gamma0 * yb[tau], model.beta, model.epsilon,
                        self.v_r, model.y_floor)
            else:
                c_buf = np.ascontiguousarray(model.weights(rb_clip, np.abs(yb)))
            kern.windowed_rank1_sum(xb, c_buf, g, phi_c)
            if self.mode != "rls":
                w, ok = _solve_gev_bank(phi_c, phi_x, self.config.diag_load)
                self.n_failed += int(np.count_nonzero(~ok))

        state = CovarianceState(phi_x=phi_x, phi_c=phi_c, phi_q=phi_q, v_ref=v_ref)
        if self.mode == "rls":
            state.phi_c_inv = np.ascontiguousarray(
                inv_hermitian(phi_c, self.config.diag_load))
        else:
            qx_ring = None if self.qx_frames is self.frames else qxb
            state.ring = FrameRing(xb, rb, rb_clip, qb, c_buf, qx=qx_ring)
        self.state = state
        self.w = np.ascontiguousarray(w)
        self._since_refresh = 0

    # -- main loop -----------------------------------------------------
    def run(self):
        for t in range(self.t):
            self._step(t)

    def _step(self, t):
        g, t_b, mode = self.g, self.t_b, self.mode
        st = self.state
        xt = self.frames[t]
        rt = self.r[:, t]
        qt = self.q_stream[t]
        qxt = self.qx_frames[t]
        failed = np.zeros(self.f_bins, dtype=bool)

        # slide the window and update the running statistics (current frame in)
        if mode in ("windowed", "fifo"):
            x_old, r_old, _, q_old, c_old, qx_old = st.ring.push(
                xt, rt, np.zeros_like(rt), qt, np.ones(self.f_bins), qxt)

        if mode == "rls":
            st.v_ref = np.maximum(g * st.v_ref + (1 - g) * rt * rt, V_REF_FLOOR)
            kern.ewma_vec(st.phi_q, qxt, qt, g)
            kern.ewma_rank1(st.phi_x, xt, self.ones, g)
            if self.model.couples_bins:
                self.v_r = max(g * self.v_r + (1 - g) * float(np.sum(rt * rt)),
                               V_REF_FLOOR)
        elif mode == "fifo":
            st.v_ref = np.maximum(
                g * st.v_ref + (1 - g) * (rt * rt - self.g_tb * r_old * r_old),
                V_REF_FLOOR)
            st.phi_q = (g * st.phi_q
                        + (1 - g) * (qxt * np.conj(qt)[:, None]
                                     - self.g_tb * qx_old * np.conj(q_old)[:, None]))
            kern.fifo_rank1(st.phi_x, xt, self.ones, x_old, self.ones, g, self.g_tb)
        else:  # windowed: recompute everything over the current window
            rb = st.ring.r_raw
            st.v_ref = np.maximum(init_weighted_sum(rb * rb, g), V_REF_FLOOR)
            st.phi_q = init_weighted_sum(
                st.ring.scale_frames() * np.conj(st.ring.q)[:, :, None], g)
            ones_buf = np.ones((t_b, self.f_bins))
            kern.windowed_rank1_sum(st.ring.x, ones_buf, g, st.phi_x)

        r_clip_t = clip_reference(rt / np.sqrt(st.v_ref), self.model.epsilon)
        if mode in ("windowed", "fifo"):
            st.ring.r_clip[-1] = r_clip_t

        # filter update (warm start from the previous frame's filter)
        if mode == "windowed":
            c_t = self._aux_loop_windowed(failed)
        elif mode == "fifo":
            c_t = self._aux_loop_fifo(xt, r_clip_t, x_old, c_old, failed)
        else:
            c_t = self._aux_loop_rls(xt, rt, r_clip_t, failed)

        if mode in ("windowed", "fifo"):
            st.ring.set_newest_weights(c_t)

        # outputs
        y_t = apply_filter(self.w, xt)
        gamma_t = scaling_mod.swf_factor_online(st.phi_q, self.w)
        y_t = np.where(failed, 0.0, y_t)
        gamma_t = np.where(failed, 0.0, gamma_t)
        self.out_y[:, t] = y_t
        self.out_gamma[:, t] = gamma_t
        self.out_scaled[:, t] = gamma_t * y_t
        if self.keep_filters:
            self.out_filters[t] = self.w
        self.n_failed += int(np.count_nonzero(failed))

    # -- per-mode auxiliary loops ---------------------------------------
    def _commit_filter(self, w_new, good, failed):
        self.w = np.ascontiguousarray(np.where(good[:, None], w_new, self.w))
        failed |= ~good

    def _aux_loop_windowed(self, failed):
        st, g = self.state, self.g
        model = self.model
        if model.is_gaussian:
            c_buf = np.ascontiguousarray(st.ring.r_clip ** (-2.0 * model.beta))
            kern.windowed_rank1_sum(st.ring.x, c_buf, g, st.phi_c)
            w_new, good = _solve_gev_bank(st.phi_c, st.phi_x, self.config.diag_load)
            self._commit_filter(w_new, good, failed)
            return c_buf[-1]
        y_buf = np.empty((self.t_b, self.f_bins), dtype=np.complex128)
        c_buf = None
        for _ in range(self.config.resolved_k_aux):
            kern.window_outputs(st.ring.x, self.w, y_buf)
            c_buf = np.ascontiguousarray(model.weights(st.ring.r_clip, np.abs(y_buf)))
            kern.windowed_rank1_sum(st.ring.x, c_buf, g, st.phi_c)
            w_new, good = _solve_gev_bank(st.phi_c, st.phi_x, self.config.diag_load)
            self._commit_filter(w_new, good, failed)
        return c_buf[-1]

    def _aux_loop_fifo(self, xt, r_clip_t, x_old, c_old, failed):
        st, g = self.state, self.g
        model = self.model
        base = st.phi_c.copy()
        if model.is_gaussian:
            c_t = r_clip_t ** (-2.0 * model.beta)
            kern.fifo_rank1(st.phi_c, xt, c_t, x_old, c_old, g, self.g_tb)
            w_new, good = _solve_gev_bank(st.phi_c, st.phi_x, self.config.diag_load)
            self._commit_filter(w_new, good, failed)
            return c_t
        c_t = None
        for _ in range(self.config.resolved_k_aux):
            y_t = apply_filter(self.w, xt)
            c_t = model.weights(r_clip_t, np.abs(y_t))
            st.phi_c[:] = base
            kern.fifo_rank1(st.phi_c, xt, c_t, x_old, c_old, g, self.g_tb)
            w_new, good = _solve_gev_bank(st.phi_c, st.phi_x, self.config.diag_load)
            self._commit_filter(w_new, good, failed)
        return c_t

    def _aux_loop_rls(self, xt, rt, r_clip_t, failed):
        st, g = self.state, self.g
        model = self.model
        base_mat = st.phi_c.copy()
        base_inv = st.phi_c_inv.copy()
        denom = np.empty(self.f_bins)
        s_out = np.empty(self.f_bins)
        c_t = None
        for _ in range(1 if model.is_gaussian else self.config.resolved_k_aux):
            if model.is_gaussian:
                c_t = r_clip_t ** (-2.0 * model.beta)
            elif model.couples_bins:
                y_t = apply_filter(self.w, xt)
                gamma_t = scaling_mod.swf_factor_online(st.phi_q, self.w)
                shared = weight_ive_constrained(rt, gamma_t * y_t, model.beta,
                                                model.epsilon, self.v_r, model.y_floor)
                c_t = np.full(self.f_bins, shared)
            else:
                y_t = apply_filter(self.w, xt)
                c_t = np.ascontiguousarray(model.weights(r_clip_t, np.abs(y_t)))
            st.phi_c[:] = base_mat
            kern.ewma_rank1(st.phi_c, xt, c_t, g)
            st.phi_c_inv[:] = base_inv
            st.phi_c_inv *= 1.0 / g
            kern.mil_rank1(st.phi_c_inv, xt, (1 - g) * c_t, denom)
            bad = np.abs(denom) < 1e-14
            for _ in range(self.config.pm_iterations):
                kern.pm_step(st.phi_c_inv, st.phi_x, self.w, s_out)
                bad |= ~(s_out > 0)
            failed |= bad
        self._since_refresh += 1
        if self._since_refresh >= self.config.inverse_refresh:
            st.phi_c_inv = np.ascontiguousarray(
                inv_hermitian(st.phi_c, self.config.diag_load))
            self._since_refresh = 0
        return c_t
