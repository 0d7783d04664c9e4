"""Recover the warp of a single source and undo it.

A stationary Hann-band source is warped by a sine. The single-source
estimator recovers the warp exponent theta(t) = log_q gamma'(t) and the
underlying spectrum. Unwarping with the estimate gives back a signal close
to the stationary original.

    python demos/estimate_warp.py
"""

import numpy as np

from warpsep.synthgen import build_warp, hann_band, synth_stationary, warp_signal
from warpsep.warpest import jefas, unwarp
from warpsep.wavelet import DEFAULT_Q

fs, n, pad = 8192.0, 16384, 1024
spec = hann_band(1500, 400, fs)
warp = build_warp("sine", n, fs, DEFAULT_Q, a=0.5, f_w=2.0, origin=pad / fs)
x = synth_stationary(spec, n + 2 * pad, fs, seed=6)
y = warp_signal(x, warp, oversample=8)

est = jefas(y, fs)
truth = warp.theta(DEFAULT_Q)[est.theta.tau_grid.astype(int)]
rms = np.sqrt(np.mean((est.theta.values - truth) ** 2))
print(f"{est.iterations} iterations, converged: {est.converged}")
print(f"theta RMS error {rms:.3f} over {truth.size} instants "
      f"(true theta spans {truth.min():.2f} .. {truth.max():.2f})")

# compare spectral centres of mass
centre = lambda s: np.sum(s.freqs * s.values) / np.sum(s.values)
print(f"spectrum centre: true {centre(spec):.0f} Hz, estimated {centre(est.spectrum):.0f} Hz")

# unwarping with the estimate: the result should look stationary, so its
# short-time power should be flat
x_hat = unwarp(y, est.theta, DEFAULT_Q)
for name, sig in (("warped", y), ("unwarped", x_hat)):
    frames = sig[: sig.size // 1024 * 1024].reshape(-1, 1024)
    # centroid per frame, in Hz
    spec_frames = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    f = np.fft.rfftfreq(1024, 1 / fs)
    cent = spec_frames @ f / spec_frames.sum(axis=1)
    print(f"{name:>9}: frame spectral centroid spread {np.std(cent):6.1f} Hz")
