import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warpsep.errors import DimensionMismatch, InvalidParameter
from warpsep.metrics import (DB_CAP, align_sources, amari_rho, apply_alignment, evaluate,
                             rho_trajectory, sir)
from warpsep.sobi import UnmixingPath
from warpsep.synthgen import MixingPath


def orthogonal_pair(n=1000, seed=0):
    # two exactly orthogonal, equal-power references
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, 2)))
    return q.T * np.sqrt(n)


def rho_bruteforce(G):
    n = G.shape[0]
    total = 0.0
    for i in range(n):
        m = max(G[i, l] ** 2 for l in range(n))
        total += sum(G[i, j] ** 2 / m for j in range(n)) - 1
    for j in range(n):
        m = max(G[l, j] ** 2 for l in range(n))
        total += sum(G[i, j] ** 2 / m for i in range(n)) - 1
    return total / (2 * n * (n - 1))


def test_rho_identity_and_scaled_permutation():
    assert amari_rho(np.eye(3)) == 0
    P = np.eye(2)[[1, 0]]
    assert amari_rho(np.diag([3.0, -2.0]) @ P) == 0


def test_rho_all_ones_is_one():
    assert amari_rho(np.ones((2, 2))) == 1.0


@settings(max_examples=50)
@given(st.integers(2, 5), st.integers(0, 10**6))
def test_rho_matches_bruteforce(n, seed):
    G = np.random.default_rng(seed).standard_normal((n, n))
    assert amari_rho(G) == pytest.approx(rho_bruteforce(G), rel=1e-12)


def test_rho_invariant_under_signed_permutations_and_global_scale():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = rng.integers(2, 6)
        G = rng.standard_normal((n, n))
        S1 = np.eye(n)[rng.permutation(n)] * rng.choice([-1, 1], n)
        S2 = np.eye(n)[rng.permutation(n)] * rng.choice([-1, 1], n)
        c = rng.uniform(0.2, 5)
        r = amari_rho(G)
        assert 0 <= r <= 1
        assert amari_rho(c * S1 @ G @ S2) == pytest.approx(r, rel=1e-9, abs=1e-15)


def test_rho_changes_under_unequal_diagonal_scaling():
    # the max-normalized row and column terms each absorb one side's scaling,
    # but not the other side's
    G = np.array([[1.0, 0.5], [0.2, 1.0]])
    D = np.diag([1.0, 3.0])
    assert amari_rho(G @ D) != pytest.approx(amari_rho(G))
    assert amari_rho(D @ G) != pytest.approx(amari_rho(G))


def test_rho_rejects_degenerate_matrices():
    with pytest.raises(InvalidParameter):
        amari_rho(np.array([[1.0, 0], [0, 0]]))
    with pytest.raises(InvalidParameter):
        amari_rho(np.ones((1, 1)))
    with pytest.raises(InvalidParameter):
        amari_rho(np.array([[np.inf, 0], [0, 1]]))


def test_sir_closed_forms():
    y = orthogonal_pair()
    assert sir(y[0], y, 0) == DB_CAP
    assert abs(sir(y[0] + y[1], y, 0) - 0.0) <= 1e-9
    assert abs(sir(y[0] + 0.1 * y[1], y, 0) - 20.0) <= 1e-9


@given(st.floats(0.01, 100), st.sampled_from([-1, 1]))
def test_sir_scale_invariance(c, sign):
    y = orthogonal_pair(200, 1)
    est = y[1] + 0.3 * y[0]
    assert sir(sign * c * est, y, 1) == pytest.approx(sir(est, y, 1), abs=1e-9)


def test_sir_ignores_energy_outside_the_reference_span():
    y = orthogonal_pair(500, 2)
    noise = np.random.default_rng(3).standard_normal(500)
    noise -= y.T @ np.linalg.solve(y @ y.T, y @ noise)
    assert abs(sir(y[0] + 0.1 * y[1] + noise, y, 0) - 20.0) <= 1e-9


def test_sir_rejects_dependent_references():
    y = np.random.default_rng(4).standard_normal(100)
    with pytest.raises(InvalidParameter):
        sir(y, np.stack([y, 2 * y]), 0)
    with pytest.raises(DimensionMismatch):
        sir(y[:50], np.stack([y, y**2]), 0)


def test_align_identity():
    y = np.random.default_rng(5).standard_normal((3, 200))
    perm, signs = align_sources(y, y)
    assert np.array_equal(perm, [0, 1, 2]) and np.array_equal(signs, [1, 1, 1])


def test_align_reversed_negated():
    y = np.random.default_rng(6).standard_normal((3, 200))
    perm, signs = align_sources(-y[::-1], y)
    assert np.array_equal(perm, [2, 1, 0]) and np.array_equal(signs, [-1, -1, -1])
    assert np.allclose(apply_alignment(-y[::-1], perm, signs), y)


def test_align_noisy_copy():
    rng = np.random.default_rng(7)
    y = rng.standard_normal((4, 2000))
    noisy = y + 0.1 * rng.standard_normal(y.shape)
    perm, _ = align_sources(noisy, y)
    assert np.array_equal(perm, np.arange(4))


def test_align_checks_shapes():
    with pytest.raises(DimensionMismatch):
        align_sources(np.zeros((2, 10)), np.zeros((3, 10)))


def test_rho_trajectory_perfect_inverse():
    n = 1024
    t = np.arange(n, dtype=float)
    mats = np.eye(2)[None] + 0.2 * np.sin(t / 100)[:, None, None] * np.array([[0, 1], [0, 0]])
    mixing = MixingPath(t, mats)
    grid = np.arange(0, n, 8)
    # one knot per grid point, holding the exact inverse there
    path = UnmixingPath(grid, np.linalg.inv(mats[grid]), 8.0)
    rho, mean_db, std_db = rho_trajectory(path, mixing, grid)
    assert np.all(rho == 0)
    assert mean_db == -DB_CAP


def test_evaluate_perfect_result():
    y = np.random.default_rng(8).standard_normal((3, 4096))
    mixing = MixingPath([0, 4095], np.stack([np.eye(3)] * 2))
    path = UnmixingPath([2048], np.eye(3)[None], 4096.0)
    report = evaluate(y[[1, 2, 0]] * -2, y, path, mixing)
    assert report.mean_sir == DB_CAP
    assert report.rho_mean_db == -DB_CAP
    d = report.to_dict()
    assert d["mean_sir"] == DB_CAP and len(d["per_source_sir"]) == 3


def test_report_without_paths_has_no_rho():
    y = np.random.default_rng(9).standard_normal((2, 512))
    d = evaluate(y, y).to_dict()
    assert d["rho_mean_db"] is None and d["rho_std_db"] is None


def test_sir_of_an_exact_copy_reaches_the_cap_despite_roundoff():
    y = np.random.default_rng(10).standard_normal((3, 16384)) * np.array([[1e-3], [1], [40]])
    for i in range(3):
        assert sir(y[i], y, i) == DB_CAP
    assert sir(y[0] + 1e-6 * y[1], y, 0) < DB_CAP
