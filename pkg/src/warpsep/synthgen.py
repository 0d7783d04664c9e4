"""Synthetic time-warped stationary sources and time-varying mixtures.

All randomness flows through :func:`numpy.random.default_rng` (PCG64) seeded
explicitly; sub-streams are derived with ``SeedSequence.spawn`` so each
source and the mixing draw from independent generators.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import DimensionMismatch, InvalidParameter, NoConvergence, OutOfRange
from .wavelet import DEFAULT_Q


@dataclass(frozen=True)
class Spectrum:
    """Two-sided power spectral density sampled on ``[0, fs/2]`` (Hz).

    The process variance is twice the integral over the half line.
    """

    freqs: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if f.shape != v.shape or f.ndim != 1 or f.size < 2:
            raise InvalidParameter("spectrum needs matching 1-D freqs and values")
        if not (np.all(np.isfinite(v)) and np.all(v >= 0)):
            raise InvalidParameter("spectrum values must be finite and nonnegative")
        df = np.diff(f)
        if np.any(df <= 0) or not np.allclose(df, df[0], rtol=1e-6):
            raise InvalidParameter("spectrum frequencies must be uniform and ascending")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "values", v)

    @property
    def power(self):
        return 2.0 * trapezoid(self.values, self.freqs)

    def __call__(self, f):
        """Linear interpolation, zero outside the sampled band."""
        return np.interp(f, self.freqs, self.values, left=0.0, right=0.0)

    def normalized(self, power=1.0):
        p = self.power
        if p <= 0:
            raise InvalidParameter("cannot normalize a zero spectrum")
        return Spectrum(self.freqs, self.values * (power / p))


@dataclass(frozen=True)
class WarpFunction:
    """Time warp ``gamma`` (seconds) and its derivative on the sample grid."""

    gamma: np.ndarray = field(repr=False)
    gamma_prime: np.ndarray = field(repr=False)
    fs: float

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        gp = np.asarray(self.gamma_prime, dtype=float)
        if g.shape != gp.shape or g.ndim != 1:
            raise InvalidParameter("gamma and gamma_prime must be matching 1-D arrays")
        if not np.all(np.isfinite(gp)) or np.any(gp <= 0):
            raise InvalidParameter("gamma_prime must be finite and positive")
        if np.any(np.diff(g) <= 0):
            raise InvalidParameter("gamma must be strictly increasing")
        mid = 0.5 * (gp[1:] + gp[:-1])
        if np.any(np.abs(np.diff(g) * self.fs - mid) > 1e-3 * mid):
            raise InvalidParameter("gamma and gamma_prime are inconsistent")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "gamma_prime", gp)

    def theta(self, q):
        """Warp exponent ``log_q gamma'``."""
        return np.log(self.gamma_prime) / np.log(q)


@dataclass(frozen=True)
class MixingPath:
    """Mixing matrices at knot sample indices, linearly interpolated between."""

    times: np.ndarray = field(repr=False)
    matrices: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        m = np.asarray(self.matrices, dtype=float)
        if m.ndim != 3 or m.shape[1] != m.shape[2] or m.shape[0] != t.size:
            raise DimensionMismatch("matrices must be (n_knots, N, N) matching times")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise InvalidParameter("knot times must be ascending")
        n = m.shape[1]
        scale = np.max(np.abs(m), axis=(1, 2))
        if np.any(np.abs(np.linalg.det(m)) <= 1e-10 * scale**n):
            raise InvalidParameter("mixing matrices must be invertible")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "matrices", m)

    @property
    def n_channels(self):
        return self.matrices.shape[1]

    def at(self, n):
        """Interpolated matrices at (possibly fractional) sample positions."""
        n = np.asarray(n, dtype=float)
        flat = self.matrices.reshape(len(self.times), -1)
        out = np.stack(
            [np.interp(n, self.times, flat[:, j]) for j in range(flat.shape[1])], axis=-1
        )
        return out.reshape(n.shape + self.matrices.shape[1:])

    def derivative_sup(self):
        """Entrywise sup of |dA/dn| (per sample) over the path."""
        if self.times.size < 2:
            return np.zeros(self.matrices.shape[1:])
        slopes = np.diff(self.matrices, axis=0) / np.diff(self.times)[:, None, None]
        return np.max(np.abs(slopes), axis=0)


@dataclass(frozen=True)
class Dataset:
    sources: np.ndarray = field(repr=False)
    observations: np.ndarray = field(repr=False)
    warps: tuple
    spectra: tuple
    mixing: MixingPath
    fs: float
    seed: int
    latent: np.ndarray = field(default=None, repr=False, compare=False)
    latent_offset: int = 0

    def __post_init__(self):
        if self.sources.shape != self.observations.shape:
            raise DimensionMismatch("sources and observations differ in shape")
        n = self.sources.shape[0]
        if len(self.warps) != n or len(self.spectra) != n:
            raise DimensionMismatch("need one warp and one spectrum per source")
        if self.mixing.n_channels != n:
            raise DimensionMismatch("mixing size does not match channel count")

    @property
    def n_channels(self):
        return self.sources.shape[0]

    @property
    def n_samples(self):
        return self.sources.shape[1]


def hann_band(center, width, fs, n_freqs=1025):
    """Spectrum shaped as a Hann window of `width` Hz centred at `center`, unit power."""
    f = np.linspace(0.0, fs / 2, n_freqs)
    u = (f - center) / width
    v = np.where(np.abs(u) < 0.5, 0.5 * (1 + np.cos(2 * np.pi * u)), 0.0)
    return Spectrum(f, v).normalized()


def flat_spectrum(fs, level=None, n_freqs=1025):
    """White spectrum; unit power unless `level` is given."""
    f = np.linspace(0.0, fs / 2, n_freqs)
    s = Spectrum(f, np.ones_like(f))
    return s if level is None else Spectrum(f, np.full_like(f, level))


def synth_stationary(spectrum, n_samples, fs, seed):
    """One circularly stationary Gaussian realization with the given spectrum."""
    if n_samples < 8:
        raise InvalidParameter("need at least 8 samples")
    if spectrum.power <= 0:
        raise InvalidParameter("zero spectrum describes a degenerate process")
    rng = np.random.default_rng(seed)
    f = np.fft.rfftfreq(n_samples, d=1.0 / fs)
    var = n_samples * fs * spectrum(f)
    amp = np.sqrt(var / 2) * (rng.standard_normal(f.size) + 1j * rng.standard_normal(f.size))
    amp[0] = np.sqrt(var[0]) * rng.standard_normal()
    if n_samples % 2 == 0:
        amp[-1] = np.sqrt(var[-1]) * rng.standard_normal()
    return np.fft.irfft(amp, n=n_samples)


def catmull_rom(x, pos):
    """Cubic Catmull-Rom interpolation of `x` at fractional indices `pos`.

    Exact at integer positions; positions must lie in ``[0, len(x) - 1]``.
    """
    x = np.asarray(x, dtype=float)
    pos = np.asarray(pos, dtype=float)
    n = x.size
    if np.any(pos < 0) or np.any(pos > n - 1):
        raise OutOfRange("interpolation position outside the signal")
    i = np.minimum(np.floor(pos).astype(int), n - 1)
    t = pos - i
    p0 = x[np.clip(i - 1, 0, n - 1)]
    p1 = x[i]
    p2 = x[np.clip(i + 1, 0, n - 1)]
    p3 = x[np.clip(i + 2, 0, n - 1)]
    return p1 + 0.5 * t * (
        (p2 - p0) + t * ((2 * p0 - 5 * p1 + 4 * p2 - p3) + t * (3 * (p1 - p2) + p3 - p0))
    )


def fourier_upsample(x, factor):
    """Band-limited (periodic) interpolation onto a grid `factor` times finer."""
    x = np.asarray(x, dtype=float)
    if factor == 1:
        return x.copy()
    n = x.size
    spec = np.fft.rfft(x)
    if n % 2 == 0:
        spec[-1] *= 0.5
    out = np.zeros(factor * n // 2 + 1, dtype=complex)
    out[: spec.size] = spec
    return np.fft.irfft(out, n=factor * n) * factor


def warp_signal(x, warp, oversample=1):
    """Apply the warping operator: ``y[n] = sqrt(gamma'[n]) x(gamma[n])``.

    `x` is read with cubic interpolation; with ``oversample > 1`` it is first
    refined by Fourier interpolation, which pushes the cubic interpolation
    error far below the signal band.
    """
    pos = warp.gamma * warp.fs
    if oversample > 1:
        x = fourier_upsample(x, oversample)
        pos = pos * oversample
    return np.sqrt(warp.gamma_prime) * catmull_rom(x, pos)


def build_warp(kind, n_samples, fs, q=DEFAULT_Q, a=0.0, f_w=1.0, phase=0.0, origin=0.0):
    """Construct a warp from a log_q-derivative profile.

    kind="sine": log_q gamma' = a sin(2 pi f_w t + phase); "linear-chirp": ramps
    from -a to a; "constant": identity. The profile is mean-centred, then
    gamma is its cumulative trapezoid starting at `origin` seconds.
    """
    t = np.arange(n_samples) / fs
    if kind == "sine":
        theta = a * np.sin(2 * np.pi * f_w * t + phase)
    elif kind == "linear-chirp":
        theta = a * np.linspace(-1.0, 1.0, n_samples)
    elif kind == "constant":
        theta = np.full(n_samples, float(a))
    else:
        raise InvalidParameter(f"unknown warp kind {kind!r}")
    return warp_from_theta(theta, fs, q, origin)


def warp_from_theta(theta, fs, q=DEFAULT_Q, origin=0.0):
    theta = np.asarray(theta, dtype=float)
    theta = theta - theta.mean()
    gp = q**theta
    if gp.min() < 0.25 or gp.max() > 4:
        raise InvalidParameter("warp derivative leaves [0.25, 4]")
    gamma = origin + cumulative_trapezoid(gp, dx=1.0 / fs, initial=0.0)
    return WarpFunction(gamma, gp, fs)


def mix_time_varying(sources, mixing):
    """z[n] = A(n) y[n] with A linearly interpolated between knots."""
    sources = np.asarray(sources, dtype=float)
    if sources.ndim != 2 or sources.shape[0] != mixing.n_channels:
        raise DimensionMismatch("source channels do not match the mixing size")
    n = np.arange(sources.shape[1])
    if mixing.times[0] > 0 or mixing.times[-1] < n[-1]:
        raise InvalidParameter("mixing knots do not cover the signal")
    return np.einsum("nij,jn->in", mixing.at(n), sources)


def sine_mixing(n_samples, fs, offsets, depths, freqs, phases, knot_step=16):
    """A_ij(t) = offsets_ij + depths_ij sin(2 pi freqs_ij t + phases_ij) on knots."""
    knots = np.arange(0, n_samples + knot_step, knot_step, dtype=float)
    knots[-1] = max(knots[-1], n_samples - 1)
    t = knots[:, None, None] / fs
    mats = offsets + depths * np.sin(2 * np.pi * freqs * t + phases)
    return MixingPath(knots, mats)


def _min_abs_det(mixing):
    return np.min(np.abs(np.linalg.det(mixing.matrices)))


def make_paper_example(n_sources=3, n_samples=16384, fs=8192.0, seed=0, q=DEFAULT_Q,
                       warp_scale=1.0, mixing_scale=1.0):
    """Synthetic benchmark: warped Hann-band Gaussian sources under sine mixing.

    Source ``i`` has a Hann-shaped spectrum centred at ``(i+0.5)/(N+1) fs/2``
    of width ``fs/(2(N+1))``, and a sine warp with its own amplitude and rate.
    The mixing entries oscillate slowly with distinct frequencies in
    ``[1, 2.5]`` Hz. `warp_scale` and `mixing_scale` scale the warp amplitudes
    and the mixing oscillation depths (0 gives stationary sources and a
    constant mixing respectively).
    """
    if n_sources < 2:
        raise InvalidParameter("need at least two sources")
    if n_samples < 2**13:
        raise InvalidParameter("need at least 2**13 samples")
    n = n_sources
    ss = np.random.SeedSequence(seed)
    src_seeds = ss.spawn(n)
    rng = np.random.default_rng(ss.spawn(1)[0])

    width = fs / (2 * (n + 1))
    spectra = tuple(hann_band((i + 0.5) / (n + 1) * fs / 2, width, fs) for i in range(n))

    pad = 512 + n_samples // 16
    amps = warp_scale * rng.permutation(np.linspace(0.5, 1.5, n))
    rates = rng.permutation(np.linspace(2.0, 4.0, n)) + rng.uniform(-0.2, 0.2, n)
    warp_phases = rng.uniform(0, 2 * np.pi, n)
    warps, latent, sources = [], [], []
    for i in range(n):
        x = synth_stationary(spectra[i], n_samples + 2 * pad, fs, src_seeds[i])
        w = build_warp("sine", n_samples, fs, q, a=amps[i], f_w=rates[i],
                       phase=warp_phases[i], origin=pad / fs)
        latent.append(x)
        warps.append(w)
        sources.append(warp_signal(x, w, oversample=8))

    freqs = rng.permutation(np.linspace(1.0, 2.5, n * n)).reshape(n, n)
    phases = rng.uniform(0, 2 * np.pi, (n, n))
    for _ in range(100):
        offsets = np.eye(n) + rng.uniform(-0.6, 0.6, (n, n)) * (1 - np.eye(n))
        depths = mixing_scale * rng.uniform(0.15, 0.35, (n, n))
        mixing = sine_mixing(n_samples, fs, offsets, depths, freqs, phases)
        if _min_abs_det(mixing) > 0.1:
            break
    else:
        raise NoConvergence("could not draw an invertible mixing path")

    sources = np.asarray(sources)
    return Dataset(
        sources=sources,
        observations=mix_time_varying(sources, mixing),
        warps=tuple(warps),
        spectra=spectra,
        mixing=mixing,
        fs=float(fs),
        seed=int(seed),
        latent=np.asarray(latent),
        latent_offset=pad,
    )
