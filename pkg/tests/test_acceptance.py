"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line, printed in the terminal summary, and then
asserts. The first two share one run of the full 20-trial benchmark.
"""

import os
import time

import numpy as np
import pytest

from warpsep.cli import cmd_benchmark, load_config
from warpsep.likelihood import (CovarianceModel, ErrorBound, LikelihoodPoint,
                                empirical_epsilon, neg_log_likelihood, nll_gradient_B,
                                theorem1_bound)
from warpsep.metrics import DB_CAP, amari_rho, evaluate, sir
from warpsep.separator import apply_unmixing, jefas_bss
from warpsep.sobi import sobi
from warpsep.synthgen import (Dataset, build_warp, flat_spectrum, hann_band, make_paper_example,
                              mix_time_varying, sine_mixing, synth_stationary, warp_signal)
from warpsep.warpest import ThetaPath, unwarp
from warpsep.wavelet import (DEFAULT_Q, WaveletParams, cwt, default_scale_grid, k_psi,
                             make_scale_grid, warp_relation_residual)

FS = 8192.0
P = WaveletParams()


@pytest.fixture(scope="module")
def benchmark(tmp_path_factory):
    out = tmp_path_factory.mktemp("benchmark")
    jobs = min(8, os.cpu_count() or 1)
    t0 = time.perf_counter()
    rows = cmd_benchmark(load_config(None), out, jobs=jobs)
    return {r["algorithm"]: r for r in rows}, time.perf_counter() - t0, jobs


def test_benchmark_ordering(benchmark, criterion):
    rows, seconds, jobs = benchmark
    j, s, p = rows["jefas-bss"], rows["sobi"], rows["p-sobi"]
    ok = (j["n_trials"] == 20
          and j["sir_mean"] >= s["sir_mean"] + 10
          and j["sir_mean"] >= p["sir_mean"] + 10
          and j["rho_db_mean"] <= p["rho_db_mean"] - 4
          and j["sir_mean"] >= 20
          and seconds <= 30 * 60)
    detail = (f"SIR jefas-bss {j['sir_mean']:.2f} / sobi {s['sir_mean']:.2f} / "
              f"p-sobi {p['sir_mean']:.2f} dB; rho {j['rho_db_mean']:.2f} / "
              f"{s['rho_db_mean']:.2f} / {p['rho_db_mean']:.2f} dB; "
              f"{j['n_trials']} trials in {seconds / 60:.1f} min on {jobs} job(s)")
    assert criterion(1, "benchmark ordering", ok, detail), detail


def test_convergence_within_ten_iterations(benchmark, criterion):
    rows, _, _ = benchmark
    conv = rows["jefas-bss"]["converged"]
    ok = conv >= 18
    detail = f"{conv} of 20 trials converged with Lambda = 25 dB, k_max = 10"
    assert criterion(2, "convergence", ok, detail), detail


def _smooth_mixing_dataset(depth, seed, n=8192, pad=1024):
    spec = (hann_band(1000, 1000, FS), hann_band(2500, 1000, FS))
    warps = (build_warp("sine", n, FS, DEFAULT_Q, a=1.0, f_w=3.0, origin=pad / FS),
             build_warp("sine", n, FS, DEFAULT_Q, a=0.7, f_w=2.0, origin=pad / FS))
    mix = sine_mixing(n, FS, np.array([[1, 0.4], [-0.3, 1.0]]),
                      depth * np.array([[0.2, 0.3], [0.25, 0.15]]),
                      np.array([[1.0, 2.0], [1.5, 2.5]]), np.zeros((2, 2)))
    src = np.array([warp_signal(synth_stationary(spec[i], n + 2 * pad, FS, [seed, i]),
                                warps[i], oversample=8) for i in range(2)])
    return Dataset(src, mix_time_varying(src, mix), warps, spec, mix, FS, seed)


def test_error_variance_bound(criterion):
    grid = default_scale_grid()
    tau = np.arange(1024, 7168, 512)
    eps = np.array([empirical_epsilon(_smooth_mixing_dataset(1.0, seed), grid, P, tau)
                    for seed in range(50)])  # (seed, tau, N, M)
    dev = eps - eps.mean(axis=0)
    power = np.abs(dev) ** 2
    var = power.sum(axis=0) / (eps.shape[0] - 1)
    slack = 3 * power.std(axis=0, ddof=1) / np.sqrt(eps.shape[0])
    ds = _smooth_mixing_dataset(1.0, 0)
    bound = theorem1_bound(ErrorBound(
        sigma_X2=max(s.power for s in ds.spectra), k_psi=k_psi(P),
        A_prime_inf=ds.mixing.derivative_sup(),
        gamma_prime_inf=np.array([w.gamma_prime.max() for w in ds.warps]), scales=grid))
    within = np.all(var <= bound[None] + slack)
    ratio = np.max(var / bound[None])

    const = _smooth_mixing_dataset(0.0, 0)
    e0 = empirical_epsilon(const, grid, P, tau)
    rms = np.sqrt(np.mean(np.abs(cwt(const.observations[0], grid, P).coeffs) ** 2))
    b0 = theorem1_bound(ErrorBound(1.0, k_psi(P), const.mixing.derivative_sup(),
                                   np.ones(2), grid))
    zero_ok = np.all(b0 == 0) and np.max(np.abs(e0)) <= 1e-6 * rms
    ok = bool(within and zero_ok)
    detail = (f"max variance/bound {ratio:.3f} over {var.size} (tau, i, s) cells; "
              f"constant A: bound 0, max |eps| / frame RMS {np.max(np.abs(e0)) / rms:.1e}")
    assert criterion(3, "error variance bound", ok, detail), detail


def test_warp_relation_tightens_with_smoother_warps(criterion):
    grid = make_scale_grid(DEFAULT_Q, 6, 22, 9)
    n, pad = 8192, 2048
    x = synth_stationary(hann_band(1024, 1024, FS), n + 2 * pad, FS, 11)
    taus = np.arange(2048, 6144, 256)
    med = []
    for scale in (1.0, 0.3, 0.1):
        # at fixed amplitude gamma'' scales with the warp rate
        w = build_warp("sine", n, FS, grid.q, a=1.0, f_w=8.0 * scale, origin=pad / FS)
        y = warp_signal(x, w, oversample=8)
        med.append(np.median(warp_relation_residual(x, y, w.gamma * FS, w.gamma_prime,
                                                    grid, P, taus)))
    ok = med[0] > med[1] > med[2]
    detail = "median relative discrepancy " + " > ".join(f"{m:.4f}" for m in med)
    assert criterion(4, "warp relation approximation", ok, detail), detail


def _dense_nll(w, B, sigmas):
    y = B @ w
    out = -w.shape[1] * np.log(abs(np.linalg.det(B)))
    for i, s in enumerate(sigmas):
        out += 0.5 * np.linalg.slogdet(s)[1]
        out += 0.5 * np.real(y[i] @ np.linalg.inv(s) @ y[i].conj())
    return out


def test_likelihood_correctness(criterion):
    rng = np.random.default_rng(2024)
    worst_grad = worst_nll = 0.0
    for k in range(100):
        n, m = (2, 3)[k % 2], (4, 8)[(k // 2) % 2]
        w = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
        B = rng.standard_normal((n, n)) + 2 * np.eye(n)
        sig = []
        for _ in range(n):
            a = rng.standard_normal((m, m))
            sig.append(a @ a.T + m * np.eye(m))

        def f(b):
            return neg_log_likelihood(LikelihoodPoint(w, b, np.zeros(n)), sig)

        g = nll_gradient_B(LikelihoodPoint(w, B, np.zeros(n)), sig)
        fd = np.zeros_like(B)
        for i in range(n):
            for j in range(n):
                h = 1e-5 * max(1.0, abs(B[i, j]))
                e = np.zeros_like(B)
                e[i, j] = h
                fd[i, j] = (f(B + e) - f(B - e)) / (2 * h)
        worst_grad = max(worst_grad, np.max(np.abs(g - fd)) / np.max(np.abs(g)))
        ref = _dense_nll(w, B, sig)
        worst_nll = max(worst_nll, abs(f(B) - ref) / abs(ref))
    ok = worst_grad <= 1e-5 and worst_nll <= 1e-10
    detail = (f"100 instances: worst gradient rel. error {worst_grad:.1e}, "
              f"worst NLL rel. error {worst_nll:.1e}")
    assert criterion(5, "likelihood correctness", ok, detail), detail


def test_covariance_properties(criterion):
    # flat spectrum on scales clear of Nyquist, where the spectrum is cut off
    interior = make_scale_grid(DEFAULT_Q, 6, 30, 25)
    flat = CovarianceModel(interior, P, flat_spectrum(FS), FS)
    s0 = flat.sigma(0.0)
    norm = np.sqrt(np.outer(np.diag(s0), np.diag(s0)))
    invariance = max(np.max(np.abs(flat.sigma(t) - s0) / norm) for t in (-1.0, 0.5, 1.0))

    grid = default_scale_grid()
    spec = hann_band(1500, 1000, FS)
    conv = 0.0
    for theta in (-1.0, 0.0, 1.3):
        a = CovarianceModel(grid, P, spec, FS, 2048).sigma(theta)
        b = CovarianceModel(grid, P, spec, FS, 4096).sigma(theta)
        conv = max(conv, np.max(np.abs(a - b) / np.sqrt(np.outer(np.diag(b), np.diag(b)))))

    thetas = np.linspace(-3, 3, 61)
    min_eig = np.inf
    for s in (hann_band(512, 1024, FS), spec, flat_spectrum(FS)):
        mats = CovarianceModel(grid, P, s, FS).sigma(thetas)
        min_eig = min(min_eig, np.min(np.linalg.eigvalsh(mats) / np.trace(mats, axis1=1,
                                                                          axis2=2)[:, None]))
    ok = invariance < 0.01 and conv < 1e-3 and min_eig > 0
    detail = (f"flat-spectrum change {invariance:.2e}, quadrature doubling change "
              f"{conv:.2e}, min eigenvalue/trace on the theta grid {min_eig:.1e}")
    assert criterion(6, "covariance properties", ok, detail), detail


def test_degenerate_case_recovery(criterion):
    ds = make_paper_example(seed=11, warp_scale=0.0, mixing_scale=0.0)
    z = ds.observations
    sobi_sir = evaluate(apply_unmixing(z, sobi(z)), ds.sources).mean_sir
    res = jefas_bss(z, ds.fs)
    jefas_sir = evaluate(res.sources_hat, ds.sources).mean_sir
    theta_rms = max(np.sqrt(np.mean(t.values**2)) for t in res.theta_paths)
    ok = sobi_sir >= 35 and jefas_sir >= 35 and theta_rms <= 0.1
    detail = (f"SIR sobi {sobi_sir:.2f} dB, jefas-bss {jefas_sir:.2f} dB; "
              f"largest theta RMS {theta_rms:.3f}")
    assert criterion(7, "stationary constant-mixing recovery", ok, detail), detail


def test_metric_identities(criterion):
    identities = (amari_rho(np.eye(3)) == 0
                  and amari_rho(np.diag([3.0, -2.0]) @ np.eye(2)[[1, 0]]) == 0
                  and amari_rho(np.ones((2, 2))) == 1)

    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        n = rng.integers(2, 6)
        G = rng.standard_normal((n, n))
        P1, P2 = np.eye(n)[rng.permutation(n)], np.eye(n)[rng.permutation(n)]
        D1 = np.diag(rng.uniform(0.2, 5, n) * rng.choice([-1, 1], n))
        D2 = np.diag(rng.uniform(0.2, 5, n) * rng.choice([-1, 1], n))
        r = amari_rho(G)
        worst = max(worst, abs(amari_rho(P1 @ D1 @ G @ D2 @ P2) - r) / r)
    invariance = worst <= 1e-9

    q, _ = np.linalg.qr(np.random.default_rng(9).standard_normal((4096, 2)))
    y = q.T * 64.0
    sir_err = max(abs(sir(y[0] + y[1], y, 0) - 0.0),
                  abs(sir(y[0] + 0.1 * y[1], y, 0) - 20.0),
                  abs(sir(y[0], y, 0) - DB_CAP))
    ok = bool(identities and invariance and sir_err <= 1e-9)
    detail = (f"identities {'hold' if identities else 'broken'}; worst relative rho change "
              f"under P D G D P on 1000 matrices {worst:.2e}; SIR closed forms off by "
              f"{sir_err:.1e} dB")
    assert criterion(8, "metric identities", ok, detail), detail


def test_warp_round_trip(criterion):
    worst = 0.0
    for seed in range(3):
        ds = make_paper_example(seed=seed)
        for i, w in enumerate(ds.warps):
            th = w.theta(DEFAULT_Q)
            x_hat = unwarp(ds.sources[i], ThetaPath(np.arange(th.size, dtype=float), th),
                           DEFAULT_Q)
            ref = ds.latent[i, ds.latent_offset:ds.latent_offset + x_hat.size]
            mid = slice(256, x_hat.size - 256)
            err = np.linalg.norm(x_hat[mid] - ref[mid]) / np.linalg.norm(ref[mid])
            worst = max(worst, err)
    ok = worst <= 0.05
    detail = f"worst interior relative L2 error {worst:.4f} over 9 benchmark warps"
    assert criterion(9, "warp round trip", ok, detail), detail
