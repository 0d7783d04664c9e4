"""Second-order blind identification, whole-signal and piecewise."""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, SingularMatrix

DEFAULT_LAGS = tuple(range(1, 11))


@dataclass(frozen=True)
class UnmixingPath:
    """Unmixing matrices held constant on ``[knot - delta/2, knot + delta/2)``.

    Samples before the first or after the last interval use the nearest knot.
    """

    knots: np.ndarray = field(repr=False)
    matrices: np.ndarray = field(repr=False)
    delta_tau: float

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        m = np.asarray(self.matrices, dtype=float)
        if m.ndim != 3 or m.shape[0] != k.size or m.shape[1] != m.shape[2]:
            raise DimensionMismatch("matrices must be (n_knots, N, N) matching knots")
        if k.size > 1 and np.any(np.diff(k) <= 0):
            raise InvalidParameter("knots must be ascending")
        if not np.all(np.isfinite(m)):
            raise InvalidParameter("unmixing matrices must be finite")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "matrices", m)

    @property
    def n_channels(self):
        return self.matrices.shape[1]

    def knot_index(self, n):
        edges = 0.5 * (self.knots[1:] + self.knots[:-1])
        return np.searchsorted(edges, np.asarray(n, dtype=float), side="right")

    def at(self, n):
        return self.matrices[self.knot_index(n)]

    def row_normalized(self):
        norms = np.linalg.norm(self.matrices, axis=2, keepdims=True)
        return UnmixingPath(self.knots, self.matrices / norms, self.delta_tau)


def lagged_covariances(z, lags):
    """Symmetrized lagged covariance matrices, one per lag."""
    z = np.asarray(z, dtype=float)
    n = z.shape[1]
    lags = list(lags)
    if not lags or min(lags) < 0 or max(lags) >= n / 4:
        raise InvalidParameter("lags must be nonnegative and below T/4")
    out = []
    for lag in lags:
        r = z[:, lag:] @ z[:, : n - lag].T / (n - lag)
        out.append(0.5 * (r + r.T))
    return out


def off_criterion(matrices, V=None):
    total = 0.0
    for m in matrices:
        if V is not None:
            m = V.T @ m @ V
        total += np.sum(m**2) - np.sum(np.diag(m) ** 2)
    return total


def joint_diagonalize(matrices, tol=1e-12, max_sweeps=100):
    """Orthogonal joint diagonalizer by Jacobi (Givens) rotations.

    Each rotation angle is the closed-form minimizer of the off-diagonal
    energy of the (p, q) block summed over all matrices. Sweeps stop when the
    relative improvement of the criterion drops below `tol`.

    Returns
    -------
    V : ndarray
        Orthogonal matrix such that ``V.T @ M @ V`` is nearly diagonal.
    converged : bool
    """
    mats = np.array([np.asarray(m, dtype=float) for m in matrices])
    if mats.ndim != 3 or mats.shape[0] < 1:
        raise InvalidParameter("need at least one square matrix")
    n = mats.shape[1]
    V = np.eye(n)
    scale = max(np.sum(mats**2), np.finfo(float).tiny)
    prev = off_criterion(mats)
    converged = False
    for _ in range(max_sweeps):
        for p in range(n - 1):
            for q in range(p + 1, n):
                g = np.stack([mats[:, p, p] - mats[:, q, q], mats[:, p, q] + mats[:, q, p]])
                gg = g @ g.T
                ton = gg[0, 0] - gg[1, 1]
                toff = gg[0, 1] + gg[1, 0]
                theta = 0.5 * np.arctan2(toff, ton + np.hypot(ton, toff))
                c, s = np.cos(theta), np.sin(theta)
                if abs(s) < 1e-15:
                    continue
                rot = np.array([[c, -s], [s, c]])
                idx = [p, q]
                V[:, idx] = V[:, idx] @ rot
                mats[:, :, idx] = mats[:, :, idx] @ rot
                mats[:, idx, :] = rot.T @ mats[:, idx, :]
        cur = off_criterion(mats)
        if prev - cur < tol * scale:
            converged = True
            break
        prev = cur
    return V, converged


def whitening_matrix(r0, floor=1e-10):
    vals, vecs = np.linalg.eigh(r0)
    if vals.max() <= 0:
        raise SingularMatrix("zero covariance")
    vals = np.maximum(vals, floor * vals.max())
    return (vecs / np.sqrt(vals)) @ vecs.T


def sobi_matrix(z, lags=DEFAULT_LAGS):
    """Unmixing matrix estimated by SOBI on the whole of `z`."""
    z = np.asarray(z, dtype=float)
    z = z - z.mean(axis=1, keepdims=True)
    r0 = lagged_covariances(z, [0])[0]
    if np.linalg.matrix_rank(r0) < z.shape[0]:
        raise SingularMatrix("observation covariance is singular")
    W = whitening_matrix(r0)
    V, _ = joint_diagonalize(lagged_covariances(W @ z, lags))
    return V.T @ W


def sobi(z, lags=DEFAULT_LAGS):
    """SOBI as a constant path with a single knot at the signal centre."""
    z = np.asarray(z, dtype=float)
    if z.shape[1] < 1024:
        raise InvalidParameter("SOBI needs at least 1024 samples")
    B = sobi_matrix(z, lags)
    n = z.shape[1]
    return UnmixingPath([0.5 * n], B[None], float(n))


def _row_cos(a, b):
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    b = b / np.linalg.norm(b, axis=1, keepdims=True)
    return a @ b.T


def align_rows(B, ref):
    """Permute and sign-flip the rows of `B` to best match those of `ref`.

    Maximizes the summed absolute row cosines by exhaustive search.
    """
    cos = _row_cos(B, ref)
    n = B.shape[0]
    best, best_perm = -np.inf, None
    for perm in itertools.permutations(range(n)):
        score = sum(abs(cos[perm[i], i]) for i in range(n))
        if score > best:
            best, best_perm = score, perm
    perm = np.asarray(best_perm)
    signs = np.sign(cos[perm, np.arange(n)])
    signs[signs == 0] = 1
    return B[perm] * signs[:, None]


def p_sobi(z, window=4096, lags=DEFAULT_LAGS):
    """SOBI on consecutive non-overlapping windows, rows aligned across windows.

    The signal is split into ``round(T / window)`` equal pieces (at least one).
    """
    z = np.asarray(z, dtype=float)
    if window < 1024:
        raise InvalidParameter("window must be at least 1024 samples")
    n = z.shape[1]
    n_win = max(1, int(round(n / window)))
    edges = np.linspace(0, n, n_win + 1).round().astype(int)
    mats = []
    for a, b in zip(edges[:-1], edges[1:]):
        B = sobi_matrix(z[:, a:b], lags)
        if mats:
            B = align_rows(B, mats[-1])
        mats.append(B)
    knots = 0.5 * (edges[:-1] + edges[1:])
    return UnmixingPath(knots, np.asarray(mats), float(n / n_win))
