"""Separation quality: projection SIR, normalized interference index, alignment."""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidParameter

DB_CAP = 300.0
# energy ratio below which interference is projection round-off (~263 dB)
ROUNDOFF = (1e3 * np.finfo(float).eps) ** 2


def _db(num, den):
    if den <= 0:
        return DB_CAP if num > 0 else -DB_CAP
    if num <= 0:
        return -DB_CAP
    return float(np.clip(10 * np.log10(num / den), -DB_CAP, DB_CAP))


@dataclass
class MetricReport:
    per_source_sir: list
    mean_sir: float
    rho_mean_db: float
    rho_std_db: float
    rho_trajectory: list = field(default_factory=list, repr=False)

    def to_dict(self):
        """Plain-JSON view; a missing rho (no paths given) becomes None."""
        def num(v):
            return None if np.isnan(v) else float(v)
        return {
            "per_source_sir": [float(v) for v in self.per_source_sir],
            "mean_sir": float(self.mean_sir),
            "rho_mean_db": num(self.rho_mean_db),
            "rho_std_db": num(self.rho_std_db),
        }


def align_sources(y_hat, y_true):
    """Permutation and signs matching estimated to true sources.

    Returns ``(perm, signs)`` such that ``signs[i] * y_hat[perm[i]]`` estimates
    ``y_true[i]``; the permutation maximizes the summed absolute correlations.
    """
    y_hat = np.atleast_2d(y_hat)
    y_true = np.atleast_2d(y_true)
    if y_hat.shape != y_true.shape:
        raise DimensionMismatch("estimated and true sources differ in shape")
    a = y_hat - y_hat.mean(axis=1, keepdims=True)
    b = y_true - y_true.mean(axis=1, keepdims=True)
    corr = (a @ b.T) / np.outer(np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1))
    n = corr.shape[0]
    best, best_perm = -np.inf, None
    for perm in itertools.permutations(range(n)):
        score = sum(abs(corr[perm[i], i]) for i in range(n))
        if score > best:
            best, best_perm = score, perm
    perm = np.asarray(best_perm)
    signs = np.sign(corr[perm, np.arange(n)])
    signs[signs == 0] = 1
    return perm, signs


def apply_alignment(y_hat, perm, signs):
    return np.asarray(y_hat)[perm] * np.asarray(signs)[:, None]


def sir(y_hat_i, y_true, i):
    """Source-to-interference ratio (dB) of one estimate against true source `i`.

    Target and interference are global orthogonal projections onto the true
    source `i` and onto the span of all true sources. Interference below the
    round-off level of those projections is reported as the +300 dB cap.
    """
    y_true = np.atleast_2d(np.asarray(y_true, dtype=float))
    est = np.asarray(y_hat_i, dtype=float)
    if est.shape != y_true.shape[1:]:
        raise DimensionMismatch("estimate length differs from the references")
    gram = y_true @ y_true.T
    if np.linalg.cond(gram) > 1e12:
        raise InvalidParameter("reference sources are linearly dependent")
    ref = y_true[i]
    target = (est @ ref) / (ref @ ref) * ref
    coef = np.linalg.solve(gram, y_true @ est)
    interf = coef @ y_true - target
    e_target, e_interf = np.sum(target**2), np.sum(interf**2)
    # interference at the rounding level of the projection counts as none
    if e_interf <= ROUNDOFF * e_target:
        return DB_CAP
    return _db(e_target, e_interf)


def amari_rho(G):
    """Normalized interference index of a global system matrix, in [0, 1].

    Zero exactly when `G` is a scaled signed permutation.
    """
    g2 = np.asarray(G, dtype=float) ** 2
    n = g2.shape[0]
    if g2.ndim != 2 or g2.shape[1] != n or n < 2:
        raise InvalidParameter("need a square matrix of size >= 2")
    if not np.all(np.isfinite(g2)):
        raise InvalidParameter("matrix must be finite")
    rmax = g2.max(axis=1)
    cmax = g2.max(axis=0)
    if np.any(rmax == 0) or np.any(cmax == 0):
        raise InvalidParameter("matrix has an all-zero row or column")
    rows = np.sum(g2.sum(axis=1) / rmax - 1)
    cols = np.sum(g2.sum(axis=0) / cmax - 1)
    return float((rows + cols) / (2 * n * (n - 1)))


def _to_db(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.clip(10 * np.log10(x), -DB_CAP, DB_CAP)


def rho_trajectory(B_path, mixing, grid):
    """rho(t) of ``B(t) A(t)`` on the sample grid `grid`.

    Returns ``(rho, mean_db, std_db)``: the mean is taken on linear values and
    converted to dB; the spread is the standard deviation of ``10 log10 rho``.
    """
    grid = np.asarray(grid)
    G = np.einsum("tij,tjk->tik", B_path.at(grid), mixing.at(grid))
    rho = np.array([amari_rho(g) for g in G])
    return rho, float(_to_db(rho.mean())), float(np.std(_to_db(rho)))


def evaluate(y_hat, y_true, B_path=None, mixing=None, grid_step=64):
    """Align, score SIR per source and, when paths are given, the rho index."""
    perm, signs = align_sources(y_hat, y_true)
    aligned = apply_alignment(y_hat, perm, signs)
    per = [sir(aligned[i], y_true, i) for i in range(len(y_true))]
    traj, mean_db, std_db = [], float("nan"), float("nan")
    if B_path is not None and mixing is not None:
        grid = np.arange(0, y_true.shape[1], grid_step)
        rho, mean_db, std_db = rho_trajectory(B_path, mixing, grid)
        traj = list(zip(grid.tolist(), rho.tolist()))
    return MetricReport(per, float(np.mean(per)), mean_db, std_db, traj)
