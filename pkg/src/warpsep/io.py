"""CSV/JSON readers and writers for signals, datasets, frames and results.

Floats go to CSV with 17 significant digits and to JSON through Python's
shortest round-trip repr, so everything reads back bit-identical.
"""

import json
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, WarpsepError
from .metrics import DB_CAP
from .sobi import UnmixingPath
from .synthgen import Dataset, MixingPath, Spectrum, WarpFunction
from .warpest import ThetaPath

FMT = "%.17g"


class BundleError(WarpsepError, OSError):
    """A file of a bundle is missing or malformed."""


def _dump(obj, path):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=1) + "\n")


def _load(path):
    path = Path(path)
    if not path.is_file():
        raise BundleError(f"missing file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path}: invalid JSON ({exc})") from exc


def write_csv(path, columns, header):
    """Write 2-D `columns` (rows = lines) under a comma-separated `header`."""
    np.savetxt(path, np.atleast_2d(columns), fmt=FMT, delimiter=",",
               header=",".join(header), comments="")


def read_csv(path):
    path = Path(path)
    if not path.is_file():
        raise BundleError(f"missing file: {path}")
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise BundleError(f"{path}: header has {len(header)} fields, rows have {data.shape[1]}")
    return header, data


def write_signal(path, x, fs, seed=None):
    """Channels as CSV columns ``ch0, ch1, ...`` plus a JSON sidecar."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    path = Path(path)
    write_csv(path, x.T, [f"ch{i}" for i in range(x.shape[0])])
    _dump({"fs": float(fs), "n_channels": x.shape[0], "n_samples": x.shape[1],
           "seed": seed}, path.with_suffix(".json"))


def read_signal(path):
    """Returns ``(x, meta)`` with `x` shaped (channels, samples)."""
    path = Path(path)
    _, data = read_csv(path)
    meta = _load(path.with_suffix(".json"))
    x = data.T
    if x.shape != (meta["n_channels"], meta["n_samples"]):
        raise DimensionMismatch(f"{path}: shape {x.shape} disagrees with its sidecar")
    return x, meta


def spectrum_to_dict(s):
    return {"freqs": s.freqs.tolist(), "values": s.values.tolist()}


def spectrum_from_dict(d):
    return Spectrum(np.array(d["freqs"]), np.array(d["values"]))


def write_dataset(out_dir, ds):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_signal(out / "sources.csv", ds.sources, ds.fs, ds.seed)
    write_signal(out / "observations.csv", ds.observations, ds.fs, ds.seed)
    _dump({"times": ds.mixing.times.tolist(), "matrices": ds.mixing.matrices.tolist()},
          out / "mixing.json")
    _dump([{"fs": w.fs, "gamma": w.gamma.tolist(), "gamma_prime": w.gamma_prime.tolist()}
           for w in ds.warps], out / "warps.json")
    _dump([spectrum_to_dict(s) for s in ds.spectra], out / "spectra.json")


def read_dataset(in_dir):
    src = Path(in_dir)
    sources, meta = read_signal(src / "sources.csv")
    observations, _ = read_signal(src / "observations.csv")
    mix = _load(src / "mixing.json")
    warps = tuple(WarpFunction(np.array(w["gamma"]), np.array(w["gamma_prime"]), w["fs"])
                  for w in _load(src / "warps.json"))
    spectra = tuple(spectrum_from_dict(d) for d in _load(src / "spectra.json"))
    return Dataset(sources, observations, warps, spectra,
                   MixingPath(np.array(mix["times"]), np.array(mix["matrices"])),
                   meta["fs"], meta["seed"])


def write_scalogram(path, frame):
    """Scalogram rows (one per scale, descending frequency) plus a JSON sidecar."""
    path = Path(path)
    np.savetxt(path, np.abs(frame.coeffs) ** 2, fmt=FMT, delimiter=",")
    _dump({"q": frame.grid.q, "s_values": frame.grid.s_values.tolist(), "fs": frame.fs},
          path.with_suffix(".json"))


def path_to_dict(path):
    return {"delta_tau": path.delta_tau, "knots": path.knots.tolist(),
            "matrices": path.matrices.tolist()}


def path_from_dict(d):
    return UnmixingPath(np.array(d["knots"]), np.array(d["matrices"]), d["delta_tau"])


def write_unmixing_path(path, up):
    _dump(path_to_dict(up), path)


def read_unmixing_path(path):
    return path_from_dict(_load(path))


def write_theta(path, theta):
    write_csv(path, np.column_stack([theta.tau_grid, theta.values]), ["tau", "theta"])


def read_theta(path):
    _, data = read_csv(path)
    return ThetaPath(data[:, 0], data[:, 1])


def write_result(out_dir, sources_hat, fs, B_path, theta_paths=(), spectra=(), report=None):
    """Result bundle: estimated sources, unmixing path, warp paths, spectra, report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_signal(out / "sources_hat.csv", sources_hat, fs)
    write_unmixing_path(out / "b_path.json", B_path)
    for i, th in enumerate(theta_paths):
        write_theta(out / f"theta_{i}.csv", th)
    _dump([spectrum_to_dict(s) for s in spectra], out / "spectra.json")
    _dump(report or {}, out / "report.json")


def read_result(in_dir):
    """Returns a dict with the bundle's contents."""
    src = Path(in_dir)
    sources_hat, meta = read_signal(src / "sources_hat.csv")
    thetas = [read_theta(p) for p in sorted(src.glob("theta_*.csv"),
                                            key=lambda p: int(p.stem.split("_")[1]))]
    return {
        "sources_hat": sources_hat,
        "fs": meta["fs"],
        "B_path": read_unmixing_path(src / "b_path.json"),
        "theta_paths": thetas,
        "spectra": [spectrum_from_dict(d) for d in _load(src / "spectra.json")],
        "report": _load(src / "report.json"),
    }


def write_metric_report(out_file, report):
    """report.json with the metric fields, and rho_trajectory.csv next to it."""
    out_file = Path(out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    _dump(report.to_dict(), out_file)
    if report.rho_trajectory:
        traj = np.asarray(report.rho_trajectory, dtype=float)
        with np.errstate(divide="ignore"):
            db = np.clip(10 * np.log10(traj[:, 1]), -DB_CAP, DB_CAP)
        write_csv(out_file.parent / "rho_trajectory.csv",
                  np.column_stack([traj, db]), ["t", "rho", "rho_db"])


def write_json(path, obj):
    _dump(obj, path)


def read_json(path):
    return _load(path)
