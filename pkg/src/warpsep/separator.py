"""Joint estimation of a time-varying unmixing matrix and per-source warps.

The outer loop alternates two steps. Each current source estimate goes
through :func:`warpest.jefas`, giving a warp path and a spectrum. Then
maximum likelihood fits an unmixing matrix at every knot, using the wavelet
columns of the observations.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, SingularMatrix
from .likelihood import CovarianceModel, grad_from_forms, nll_from_forms, quadratic_forms
from .metrics import sir
from .sobi import DEFAULT_LAGS, UnmixingPath, p_sobi
from .warpest import JefasConfig, jefas
from .wavelet import cwt

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeparatorConfig:
    """Outer-loop settings. `jefas` holds the wavelet and inner-loop settings."""

    delta_tau: int = 512
    Lambda: float = 25.0
    k_max: int = 10
    jefas: JefasConfig = field(default_factory=JefasConfig)
    grad_tol: float = 1e-6
    max_newton: int = 200
    armijo: float = 1e-4
    columns_per_knot: int = 1
    column_stride: int = 32
    init_window: int = 4096
    lags: tuple = DEFAULT_LAGS

    def __post_init__(self):
        if self.delta_tau < 64:
            raise InvalidParameter("delta_tau must be at least 64 samples")
        if self.k_max < 1:
            raise InvalidParameter("k_max must be at least 1")
        if not np.isfinite(self.Lambda):
            raise InvalidParameter("Lambda must be finite")
        if self.columns_per_knot < 1:
            raise InvalidParameter("columns_per_knot must be at least 1")


@dataclass
class BssResult:
    sources_hat: np.ndarray = field(repr=False)
    B_path: UnmixingPath = field(repr=False)
    theta_paths: list = field(repr=False)
    spectra: list = field(repr=False)
    outer_iterations: int = 0
    sir_updates: list = field(default_factory=list)
    converged: bool = False


@dataclass
class KnotFit:
    B: np.ndarray
    converged: bool
    iterations: int
    trace: list


def _normalize_rows(B):
    return B / np.linalg.norm(B, axis=1, keepdims=True)


def fit_B_tau(cs, logdet, n_cols, B_init, grad_tol=1e-6, max_iter=200, armijo=1e-4):
    """Quasi-Newton minimization of the per-knot NLL over B.

    `cs` holds the quadratic forms ``C_i`` of the observation columns, as
    returned by :func:`likelihood.quadratic_forms`. BFGS on ``vec(B)`` starts
    from the inverse of the block-diagonal quadratic part. Steps are halved
    until the sufficient-decrease condition holds, and steps that make B
    singular are rejected the same way.
    """
    B = np.array(B_init, dtype=float)
    n = B.shape[0]
    f = nll_from_forms(B, cs, logdet, n_cols)
    g = grad_from_forms(B, cs, n_cols).ravel()
    H = np.zeros((n * n, n * n))
    for i in range(n):
        blk = slice(i * n, (i + 1) * n)
        H[blk, blk] = np.linalg.inv(cs[i])
    trace = [f]
    tol = grad_tol * n_cols
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= tol:
            converged = True
            break
        d = -H @ g
        slope = g @ d
        if slope >= 0:
            # lost descent direction, restart from steepest descent
            H = np.eye(n * n)
            d, slope = -g, -(g @ g)
        step = 1.0
        while True:
            cand = B + step * d.reshape(n, n)
            try:
                fc = nll_from_forms(cand, cs, logdet, n_cols)
            except SingularMatrix:
                fc = np.inf
            if fc <= f + armijo * step * slope:
                break
            step *= 0.5
            if step < 1e-12:
                return KnotFit(_normalize_rows(B), False, it, trace)
        gc = grad_from_forms(cand, cs, n_cols).ravel()
        s, yv = step * d, gc - g
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            hy = H @ yv
            H = (H - rho * (np.outer(s, hy) + np.outer(hy, s))
                 + (rho**2 * (yv @ hy) + rho) * np.outer(s, s))
        B, f, g = cand, fc, gc
        trace.append(f)
    else:
        converged = np.max(np.abs(g)) <= tol
    return KnotFit(_normalize_rows(B), bool(converged), it, trace)


def estimate_B_tau(w_z_tau, theta, models, B_init, **opts):
    """ML unmixing matrix at one instant, rows normalized to unit norm.

    `w_z_tau` is the (N, M_s) stack of observation wavelet columns, or
    (N, M_s * n) when several columns are pooled.
    """
    w = np.atleast_2d(np.asarray(w_z_tau, dtype=complex))
    theta = np.atleast_1d(theta)
    n = w.shape[0]
    if len(models) != n or theta.shape != (n,) or np.shape(B_init) != (n, n):
        raise DimensionMismatch("inconsistent dimensions for the knot fit")
    sigmas = [m.sigma(t) if isinstance(m, CovarianceModel) else np.asarray(m)
              for m, t in zip(models, theta)]
    reps = w.shape[1] // sigmas[0].shape[0]
    cs, logdet = _pooled_forms(w, np.asarray(sigmas), reps)
    return fit_B_tau(cs, logdet * reps, w.shape[1], B_init, **opts).B


def _pooled_forms(w, sigmas, reps):
    # the covariance is shared by the `reps` column blocks, so the quadratic
    # forms add up
    m = sigmas.shape[1]
    blocks = [w[:, r * m:(r + 1) * m] for r in range(reps)]
    cs, logdet = quadratic_forms(blocks[0], sigmas)
    for b in blocks[1:]:
        cs = cs + quadratic_forms(b, sigmas)[0]
    return cs, logdet


def apply_unmixing(z, path):
    """``y[:, n] = B(knot(n)) z[:, n]`` with the piecewise-constant path."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[0] != path.n_channels:
        raise DimensionMismatch("path size does not match the number of channels")
    idx = path.knot_index(np.arange(z.shape[1]))
    out = np.empty_like(z)
    for k in np.unique(idx):
        sel = idx == k
        out[:, sel] = path.matrices[k] @ z[:, sel]
    return out


def stopping_sir(y_prev, y_curr):
    """Mean SIR of the previous iterate scored against the current one."""
    y_prev = np.atleast_2d(y_prev)
    y_curr = np.atleast_2d(y_curr)
    if y_prev.shape != y_curr.shape:
        raise DimensionMismatch("iterates differ in shape")
    return float(np.mean([sir(y_prev[i], y_curr, i) for i in range(len(y_curr))]))


def knot_grid(n_samples, delta_tau):
    """Interval centres tiling ``[0, n_samples)`` with spacing `delta_tau`."""
    count = max(1, int(np.ceil(n_samples / delta_tau)))
    starts = delta_tau * np.arange(count)
    # the last interval may be cut short by the signal end
    ends = np.minimum(starts + delta_tau, n_samples)
    return ((starts + ends) // 2).astype(int)


def _knot_columns(frames, knots, cfg):
    # (K, N, M_s * n_cols) observation columns around each knot
    n_t = frames.shape[2]
    offs = cfg.column_stride * (np.arange(cfg.columns_per_knot)
                                - (cfg.columns_per_knot - 1) / 2)
    cols = np.clip(knots[:, None] + offs.astype(int)[None, :], 0, n_t - 1)
    w = frames[:, :, cols]  # (N, M, K, C)
    return np.transpose(w, (2, 0, 3, 1)).reshape(len(knots), frames.shape[0], -1)


def _estimate_path(frames, knots, thetas, models, B_start, cfg):
    n_cols = cfg.columns_per_knot
    m = frames.shape[1]
    w = _knot_columns(frames, knots, cfg)
    theta_max = cfg.jefas.theta_max
    chol_sig = [mod.sigma(np.clip(th.at(knots), -theta_max, theta_max))
                for mod, th in zip(models, thetas)]
    mats = []
    B = B_start
    n_fail = 0
    for k in range(len(knots)):
        sig = np.stack([s[k] for s in chol_sig])
        cs = 0.0
        for c in range(n_cols):
            ck, logdet = quadratic_forms(w[k][:, c * m:(c + 1) * m], sig)
            cs = cs + ck
        fit = fit_B_tau(cs, n_cols * logdet, n_cols * m, B, cfg.grad_tol,
                        cfg.max_newton, cfg.armijo)
        n_fail += not fit.converged
        B = fit.B
        mats.append(B)
    if n_fail:
        log.info("%d of %d knot fits hit the iteration cap", n_fail, len(knots))
    return UnmixingPath(knots, np.asarray(mats), float(cfg.delta_tau))


def jefas_bss(z, fs, cfg=None):
    """Separate time-warped sources under a slowly varying mixture.

    Starts from piecewise SOBI. Each outer iteration then re-estimates the
    warp and spectrum of every current source and refits the unmixing matrix
    at every knot. Each knot fit is warm-started from the previous knot, and
    the first knot from the previous iteration. The loop stops once
    consecutive iterates agree to `cfg.Lambda` dB or after `cfg.k_max`
    iterations.
    """
    cfg = cfg or SeparatorConfig()
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n, n_t = z.shape
    if n < 2:
        raise InvalidParameter("need at least two channels")
    jc = cfg.jefas
    frames = np.stack([cwt(c, jc.grid, jc.params, fs, pad=jc.pad if jc.reflect else 0).coeffs
                       for c in z])
    knots = knot_grid(n_t, cfg.delta_tau)
    init = p_sobi(z, cfg.init_window, cfg.lags).row_normalized()
    y = apply_unmixing(z, init)
    B_first = init.at(knots[0])
    updates = []
    converged = False
    path, thetas, spectra = init, [], []
    for k in range(1, cfg.k_max + 1):
        est = [jefas(y[i], fs, jc) for i in range(n)]
        thetas = [e.theta for e in est]
        spectra = [e.spectrum for e in est]
        models = [CovarianceModel(jc.grid, jc.params, s, fs, jc.quad_points, jc.theta_max)
                  for s in spectra]
        path = _estimate_path(frames, knots, thetas, models, B_first, cfg)
        B_first = path.matrices[0]
        y_new = apply_unmixing(z, path)
        updates.append(stopping_sir(y, y_new))
        log.info("outer iteration %d: update SIR %.2f dB", k, updates[-1])
        y = y_new
        if updates[-1] > cfg.Lambda:
            converged = True
            break
    return BssResult(y, path, thetas, spectra, len(updates), updates, converged)
