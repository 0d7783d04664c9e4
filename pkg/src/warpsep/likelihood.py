"""Gaussian model of wavelet coefficients and the per-instant likelihood.

For a warped stationary source, the wavelet column at time ``tau`` is a
circular complex Gaussian vector whose covariance depends on the warp
exponent ``theta = log_q gamma'(tau)`` through a dilation of the spectrum.
Because the wavelet response is real, the covariance matrices are real
symmetric.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, InvalidParameter, NumericFailure, SingularMatrix
from .wavelet import cwt, psi_hat

RIDGE = 1e-8


@dataclass(frozen=True)
class CovarianceModel:
    """Covariance of one source's wavelet columns as a function of theta."""

    grid: object
    params: object
    spectrum: object
    fs: float
    quad_points: int = 2048
    theta_max: float = 3.0
    _nodes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.quad_points < 512:
            raise InvalidParameter("quad_points must be at least 512")
        f = np.linspace(0.0, self.fs / 2, int(self.quad_points))
        w = np.full(f.size, f[1] - f[0])
        w[[0, -1]] *= 0.5
        scales = self.grid.scales[:, None]
        psi = np.sqrt(scales) * psi_hat(scales * (2 * np.pi * f / self.fs), self.params)
        # products psi_k psi_l for k <= l, so a stack of covariances is one GEMM
        iu = np.triu_indices(psi.shape[0])
        pairs = psi[iu[0]] * psi[iu[1]]
        # flush subnormal tails, they make the product below crawl
        pairs[pairs < 1e-150 * pairs.max()] = 0.0
        object.__setattr__(self, "_nodes", (f, w, pairs, iu))

    @property
    def n_scales(self):
        return self.grid.n_scales

    def sigma(self, theta):
        """Covariance matrix for a scalar theta, or a stack for an array."""
        theta = np.asarray(theta, dtype=float)
        if np.any(np.abs(theta) > self.theta_max + 1e-12):
            raise InvalidParameter(f"|theta| exceeds theta_max={self.theta_max}")
        f, w, pairs, iu = self._nodes
        q = self.grid.q
        dens = self.spectrum(q ** (-theta.reshape(-1, 1)) * f) * w
        upper = dens @ pairs.T
        if not np.all(np.isfinite(upper)):
            raise NumericFailure("non-finite covariance quadrature")
        m = self.grid.n_scales
        mats = np.empty((dens.shape[0], m, m))
        mats[:, iu[0], iu[1]] = upper
        mats[:, iu[1], iu[0]] = upper
        ridge = RIDGE * np.trace(mats, axis1=1, axis2=2) / m
        mats = mats + ridge[:, None, None] * np.eye(m)
        return mats.reshape(theta.shape + (m, m))

    def factor(self, theta):
        """Cholesky factors and log-determinants for a stack of thetas."""
        mats = self.sigma(np.atleast_1d(theta))
        return cholesky_logdet(mats)


def cholesky_logdet(mats):
    try:
        chol = np.linalg.cholesky(mats)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("covariance is not positive definite") from exc
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return chol, logdet


def _whitened_sq(chol, w):
    # |L^{-1} w|^2 = w^H Sigma^{-1} w for each column of w
    v = solve_triangular(chol, w, lower=True)
    return np.sum(np.abs(v) ** 2, axis=0)


@dataclass
class LikelihoodPoint:
    """Stacked wavelet columns of the observations at one instant, an
    unmixing matrix and one warp exponent per source."""

    w_z_tau: np.ndarray
    B: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.w_z_tau = np.atleast_2d(np.asarray(self.w_z_tau, dtype=complex))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        n = self.w_z_tau.shape[0]
        if self.B.shape != (n, n) or self.theta.shape != (n,):
            raise DimensionMismatch("inconsistent dimensions in likelihood point")
        if not np.all(np.isfinite(self.B)):
            raise InvalidParameter("B must be finite")


def _sigma_of(model, theta):
    # a bare array is taken as a fixed covariance (handy for tests)
    if isinstance(model, np.ndarray):
        return np.atleast_2d(model)
    return model.sigma(theta)


def single_source_nll(theta, w_tau, model):
    """Half log-determinant plus half quadratic form for one source column."""
    sig = _sigma_of(model, theta)
    chol, logdet = cholesky_logdet(sig)
    w = np.asarray(w_tau, dtype=complex).reshape(-1, 1)
    return 0.5 * logdet + 0.5 * _whitened_sq(chol, w)[0]


def column_nll(chol, logdet, w):
    """Single-source NLL for many (factor, column) pairs at once.

    `chol` is (K, M, M), `logdet` (K,), `w` (M, K).
    """
    v = np.linalg.solve(chol, w.T[:, :, None])[:, :, 0]
    return 0.5 * logdet + 0.5 * np.sum(np.abs(v) ** 2, axis=1)


def _check_B(B):
    n = B.shape[0]
    scale = np.max(np.abs(B))
    det = np.linalg.det(B)
    if scale == 0 or abs(det) < 1e-12 * scale**n:
        raise SingularMatrix("unmixing matrix is singular")
    return det


def quadratic_forms(w, sigmas):
    """C_i = Re(w Sigma_i^{-1} w^H) for each source, shape (N, N, N).

    Returns the matrices and the log-determinants of the Sigma_i.
    """
    w = np.atleast_2d(np.asarray(w, dtype=complex))
    chol, logdet = cholesky_logdet(np.asarray(sigmas))
    cs = []
    for c in chol:
        v = solve_triangular(c, w.T, lower=True)
        cs.append(np.real(v.conj().T @ v))
    cs = np.asarray(cs)
    return 0.5 * (cs + np.swapaxes(cs, 1, 2)), logdet


def nll_from_forms(B, cs, logdet, n_cols):
    """Negative log-likelihood given precomputed quadratic forms.

    ``n_cols`` is the number of scale samples entering the determinant term
    (M_s for a single column).
    """
    det = _check_B(B)
    quad = np.einsum("ij,ijk,ik->", B, cs, B)
    return -n_cols * np.log(abs(det)) + 0.5 * np.sum(logdet) + 0.5 * quad


def grad_from_forms(B, cs, n_cols):
    _check_B(B)
    return -n_cols * np.linalg.inv(B).T + np.einsum("ij,ijk->ik", B, cs)


def _point_forms(point, models):
    sigmas = [_sigma_of(m, t) for m, t in zip(models, point.theta)]
    if len(sigmas) != point.B.shape[0]:
        raise DimensionMismatch("need one covariance model per source")
    return quadratic_forms(point.w_z_tau, sigmas)


def neg_log_likelihood(point, models):
    """Negative log-likelihood of the stacked columns (constant dropped)."""
    cs, logdet = _point_forms(point, models)
    return nll_from_forms(point.B, cs, logdet, point.w_z_tau.shape[1])


def nll_gradient_B(point, models):
    """Gradient of :func:`neg_log_likelihood` with respect to the entries of B."""
    cs, _ = _point_forms(point, models)
    return grad_from_forms(point.B, cs, point.w_z_tau.shape[1])


@dataclass(frozen=True)
class ErrorBound:
    sigma_X2: float
    k_psi: float
    A_prime_inf: np.ndarray
    gamma_prime_inf: np.ndarray
    scales: object

    def __post_init__(self):
        vals = [self.sigma_X2, self.k_psi, self.A_prime_inf, self.gamma_prime_inf]
        for v in vals:
            v = np.asarray(v, dtype=float)
            if not (np.all(np.isfinite(v)) and np.all(v >= 0)):
                raise InvalidParameter("error bound inputs must be finite and nonnegative")


def theorem1_bound(bound):
    """Entrywise bound on the variance of the wavelet-domain mixing error.

    ``sigma_X2 k_psi^2 (A'^2 gamma') (q^{3s})^T`` as an N x M_s matrix, with
    derivatives per sample and scales in samples.
    """
    a2 = np.asarray(bound.A_prime_inf, dtype=float) ** 2
    col = a2 @ np.asarray(bound.gamma_prime_inf, dtype=float)
    row = bound.scales.q ** (3 * bound.scales.s_values)
    return bound.sigma_X2 * bound.k_psi**2 * np.outer(col, row)


def empirical_epsilon(dataset, grid, params, tau_indices):
    """Wavelet-domain mixing error ``W_z(., tau) - A(tau) W_y(., tau)``.

    Returns an array of shape (len(tau_indices), N, M_s).
    """
    tau = np.asarray(tau_indices, dtype=int)
    wz = np.stack([cwt(c, grid, params).coeffs[:, tau] for c in dataset.observations])
    wy = np.stack([cwt(c, grid, params).coeffs[:, tau] for c in dataset.sources])
    a = dataset.mixing.at(tau)
    if a.shape[1] != wz.shape[0]:
        raise DimensionMismatch("mixing size does not match the dataset")
    return np.transpose(wz, (2, 0, 1)) - np.einsum("tij,jkt->tik", a, wy)
