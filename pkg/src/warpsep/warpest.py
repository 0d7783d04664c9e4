"""Single-source estimation of a time warp and the underlying spectrum.

Alternates a per-instant maximum-likelihood search for the warp exponent
with a Welch estimate of the spectrum of the unwarped signal.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_triangular
from scipy.signal import welch

from .errors import InvalidParameter
from .likelihood import CovarianceModel, cholesky_logdet, column_nll
from .synthgen import Spectrum, catmull_rom, fourier_upsample
from .wavelet import WaveletParams, boundary_width, cwt, default_scale_grid

GOLDEN = (np.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class ThetaPath:
    """Warp exponent ``log_q gamma'`` on a grid of sample indices."""

    tau_grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.tau_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise InvalidParameter("tau_grid and values must be matching 1-D arrays")
        if not np.all(np.isfinite(v)):
            raise InvalidParameter("theta values must be finite")
        object.__setattr__(self, "tau_grid", t)
        object.__setattr__(self, "values", v)

    def at(self, n):
        """Linear interpolation, held constant beyond the grid ends."""
        return np.interp(n, self.tau_grid, self.values)


@dataclass(frozen=True)
class WarpEstimate:
    theta: ThetaPath
    spectrum: Spectrum
    iterations: int
    converged: bool


@dataclass(frozen=True)
class JefasConfig:
    grid: object = field(default_factory=default_scale_grid)
    params: WaveletParams = field(default_factory=WaveletParams)
    tau_step: int = 256
    theta_max: float = 3.0
    coarse_step: float = 0.1
    theta_tol: float = 1e-3
    n_segments: int = 32
    n_freqs: int = 1025
    quad_points: int = 2048
    max_iter: int = 10
    change_tol: float = 0.02
    n_columns: int = 5
    column_stride: int = 32
    reflect: bool = True

    @property
    def pad(self):
        return boundary_width(self.grid, self.params)


def interior_grid(n_samples, step, margin):
    """Sample indices spaced by `step`, at least `margin` from both ends."""
    lo, hi = margin, n_samples - 1 - margin
    if hi < lo:
        raise InvalidParameter("signal too short for the requested margin")
    count = int((hi - lo) // step) + 1
    start = lo + ((hi - lo) - (count - 1) * step) // 2
    return start + step * np.arange(count)


def _golden_batch(fun, lo, hi, tol):
    # golden-section search run in lockstep over many independent brackets
    a, b = lo.copy(), hi.copy()
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while np.max(b - a) > tol:
        left = fc < fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        c, d = (np.where(left, b - GOLDEN * (b - a), d),
                np.where(left, c, a + GOLDEN * (b - a)))
        fp = fun(np.where(left, c, d))
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
    return 0.5 * (a + b)


def _column_offsets(n_columns, stride):
    return stride * (np.arange(n_columns) - (n_columns - 1) / 2)


def estimate_theta_path(frame, model, tau_grid, coarse_step=0.1, tol=1e-3,
                        n_columns=1, stride=32):
    """Per-instant ML warp exponent, mean-centred.

    A coarse scan over ``[-theta_max, theta_max]`` is refined by golden-section
    search within one coarse step of the best grid value. With
    ``n_columns > 1`` the criterion at ``tau`` sums the single-column NLL of
    `n_columns` frame columns spaced by `stride` around ``tau``.
    """
    tau = np.asarray(tau_grid, dtype=int)
    offs = _column_offsets(n_columns, stride).astype(int)
    cols = np.clip(tau[None, :] + offs[:, None], 0, frame.n_samples - 1)
    w = frame.coeffs[:, cols.ravel()]
    k = tau.size
    tmax = model.theta_max
    coarse = np.linspace(-tmax, tmax, int(round(2 * tmax / coarse_step)) + 1)
    chol, logdet = model.factor(coarse)
    nll = np.empty((coarse.size, k))
    for g in range(coarse.size):
        v = solve_triangular(chol[g], w, lower=True)
        sq = np.sum(np.abs(v) ** 2, axis=0).reshape(n_columns, k)
        nll[g] = 0.5 * n_columns * logdet[g] + 0.5 * sq.sum(axis=0)
    best = coarse[np.argmin(nll, axis=0)]
    lo = np.maximum(best - coarse_step, -tmax)
    hi = np.minimum(best + coarse_step, tmax)

    def fun(theta):
        ch, ld = model.factor(theta)
        ch = np.tile(ch, (n_columns, 1, 1))
        ld = np.tile(ld, n_columns)
        return column_nll(ch, ld, w).reshape(n_columns, k).sum(axis=0)

    theta = _golden_batch(fun, lo, hi, tol)
    return ThetaPath(tau.astype(float), theta - theta.mean())


def warp_from_path(theta, n_samples, q):
    """Sampled warp (in samples, starting at 0) and derivative from a path."""
    gp = q ** theta.at(np.arange(n_samples))
    return cumulative_trapezoid(gp, initial=0.0), gp


def unwarp(y, theta, q, oversample=4):
    """Invert the warp described by `theta`: ``x(t) = sqrt((g^-1)'(t)) y(g^-1(t))``.

    The output covers ``[0, gamma(T-1)]`` and may differ in length from `y`.
    `y` is read by cubic interpolation after Fourier oversampling.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    gamma, gp = warp_from_path(theta, n, q)
    t = np.arange(int(np.floor(gamma[-1])) + 1, dtype=float)
    pos = np.interp(t, gamma, np.arange(n, dtype=float))
    dinv = 1.0 / np.interp(pos, np.arange(n), gp)
    fine = fourier_upsample(y, oversample)
    return np.sqrt(dinv) * catmull_rom(fine, np.minimum(pos * oversample, fine.size - 1))


def estimate_spectrum(x_hat, fs, n_segments=32, n_freqs=1025):
    """Welch estimate (Hann, 50 % overlap) mapped onto a uniform 0..fs/2 grid."""
    x_hat = np.asarray(x_hat, dtype=float)
    if n_segments < 4:
        raise InvalidParameter("need at least 4 segments")
    nperseg = int(2 * x_hat.size // (n_segments + 1))
    if nperseg < 64:
        raise InvalidParameter("Welch segments shorter than 64 samples")
    f, p = welch(x_hat, fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2)
    # one-sided density -> two-sided (DC and Nyquist are not doubled by welch)
    p = p / 2
    p[0] *= 2
    if nperseg % 2 == 0:
        p[-1] *= 2
    grid = np.linspace(0.0, fs / 2, n_freqs)
    p[p < 1e-150 * p.max()] = 0.0
    return Spectrum(grid, np.interp(grid, f, p))


def jefas(y, fs, cfg=None):
    """Alternate warp and spectrum estimation for a single source signal."""
    cfg = cfg or JefasConfig()
    y = np.asarray(y, dtype=float)
    q = cfg.grid.q
    frame = cwt(y, cfg.grid, cfg.params, fs, pad=cfg.pad if cfg.reflect else 0)
    tau = interior_grid(y.size, cfg.tau_step, cfg.pad)
    spectrum = estimate_spectrum(y, fs, cfg.n_segments, cfg.n_freqs)
    prev = None
    converged = False
    for it in range(1, cfg.max_iter + 1):
        model = CovarianceModel(cfg.grid, cfg.params, spectrum, fs, cfg.quad_points,
                                cfg.theta_max)
        theta = estimate_theta_path(frame, model, tau, cfg.coarse_step, cfg.theta_tol,
                                    cfg.n_columns, cfg.column_stride)
        spectrum = estimate_spectrum(unwarp(y, theta, q), fs, cfg.n_segments, cfg.n_freqs)
        if prev is not None and np.max(np.abs(theta.values - prev.values)) < cfg.change_tol:
            converged = True
            break
        prev = theta
    return WarpEstimate(theta, spectrum, it, converged)
