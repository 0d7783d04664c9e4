"""Command-line entry point: synthesize, separate, evaluate, benchmark.

Every command reads a JSON run configuration. Missing fields take the
defaults in :data:`DEFAULTS`. Invalid ones are reported with their dotted
path and, when present in the file, their line number.
"""

import argparse
import copy
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError, WarpsepError
from .metrics import evaluate
from .separator import SeparatorConfig, apply_unmixing, jefas_bss
from .sobi import p_sobi, sobi
from .synthgen import make_paper_example
from .warpest import JefasConfig
from .wavelet import WaveletParams, make_scale_grid

log = logging.getLogger("warpsep")

ALGOS = ("jefas-bss", "sobi", "p-sobi")

DEFAULTS = {
    "dataset": {"N": 3, "T": 16384, "fs": 8192.0, "seed": 0,
                "warp_scale": 1.0, "mixing_scale": 1.0},
    "wavelet": {"q": 2.0 ** 0.125, "M_s": 48, "s_min": -5.0, "s_max": 30.0,
                "xi0": math.pi / 2, "sigma": 0.1},
    "separator": {"delta_tau": 512, "Lambda": 25.0, "k_max": 10,
                  "columns_per_knot": 1, "tau_step": 256},
    "baselines": {"lags": list(range(1, 11)), "window": 4096},
    "benchmark": {"n_trials": 20, "seeds": None},
}

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _locate(text, path):
    # line of the last key of a dotted path, found by scanning keys in order
    pos = 0
    for key in path.split("."):
        pos = text.find(f'"{key}"', pos)
        if pos < 0:
            return None
    return text.count("\n", 0, pos) + 1


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)
            and math.isfinite(v))


# (check, message) per field; checks see the whole section for cross-field rules
_RULES = {
    "dataset.N": (lambda v, s: _is_int(v) and v >= 2, "must be an integer >= 2"),
    "dataset.T": (lambda v, s: _is_int(v) and v >= 8192, "must be an integer >= 8192"),
    "dataset.fs": (lambda v, s: _is_num(v) and v > 0, "must be a positive number"),
    "dataset.seed": (lambda v, s: _is_int(v) and v >= 0, "must be a nonnegative integer"),
    "dataset.warp_scale": (lambda v, s: _is_num(v) and v >= 0, "must be >= 0"),
    "dataset.mixing_scale": (lambda v, s: _is_num(v) and v >= 0, "must be >= 0"),
    "wavelet.q": (lambda v, s: _is_num(v) and v > 1, "must be a number > 1"),
    "wavelet.M_s": (lambda v, s: _is_int(v) and v >= 2, "must be an integer >= 2"),
    "wavelet.s_min": (lambda v, s: _is_num(v), "must be a finite number"),
    "wavelet.s_max": (lambda v, s: _is_num(v) and _is_num(s["s_min"]) and v > s["s_min"],
                      "must be a number above s_min"),
    "wavelet.xi0": (lambda v, s: _is_num(v) and 0 < v < math.pi,
                    "must lie in (0, pi) radians per sample"),
    "wavelet.sigma": (lambda v, s: _is_num(v) and v > 0, "must be a positive number"),
    "separator.delta_tau": (lambda v, s: _is_int(v) and v >= 64, "must be an integer >= 64"),
    "separator.Lambda": (lambda v, s: _is_num(v), "must be a finite number"),
    "separator.k_max": (lambda v, s: _is_int(v) and v >= 1, "must be an integer >= 1"),
    "separator.columns_per_knot": (lambda v, s: _is_int(v) and v >= 1,
                                   "must be an integer >= 1"),
    "separator.tau_step": (lambda v, s: _is_int(v) and v >= 1, "must be a positive integer"),
    "baselines.lags": (lambda v, s: isinstance(v, list) and len(v) > 0
                       and all(_is_int(x) and x >= 1 for x in v),
                       "must be a non-empty list of positive integers"),
    "baselines.window": (lambda v, s: _is_int(v) and v >= 1024, "must be an integer >= 1024"),
    "benchmark.n_trials": (lambda v, s: _is_int(v) and v >= 2, "must be an integer >= 2"),
    "benchmark.seeds": (lambda v, s: v is None or (
        isinstance(v, list) and all(_is_int(x) and x >= 0 for x in v)
        and len(v) == s["n_trials"]),
        "must be null or a list of n_trials nonnegative integers"),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration, one dict per section."""

    dataset: dict
    wavelet: dict
    separator: dict
    baselines: dict
    benchmark: dict

    @classmethod
    def from_dict(cls, raw, text=""):
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        merged = copy.deepcopy(DEFAULTS)
        for section, values in raw.items():
            if section not in merged:
                raise _config_error(section, "unknown section", text)
            if not isinstance(values, dict):
                raise _config_error(section, "must be an object", text)
            for key, v in values.items():
                if key not in merged[section]:
                    raise _config_error(f"{section}.{key}", "unknown field", text)
                merged[section][key] = v
        for path, (check, message) in _RULES.items():
            section, key = path.split(".")
            if not check(merged[section][key], merged[section]):
                raise _config_error(path, message, text)
        return cls(**merged)

    def to_dict(self):
        return {name: copy.deepcopy(getattr(self, name)) for name in DEFAULTS}

    def with_seed(self, seed):
        d = self.to_dict()
        d["dataset"]["seed"] = seed
        return RunConfig(**d)

    def jefas_config(self):
        w = self.wavelet
        grid = make_scale_grid(w["q"], w["s_min"], w["s_max"], w["M_s"])
        return JefasConfig(grid=grid, params=WaveletParams(w["xi0"], w["sigma"]),
                           tau_step=self.separator["tau_step"])

    def separator_config(self):
        s = self.separator
        b = self.baselines
        return SeparatorConfig(delta_tau=s["delta_tau"], Lambda=float(s["Lambda"]),
                               k_max=s["k_max"], jefas=self.jefas_config(),
                               columns_per_knot=s["columns_per_knot"],
                               init_window=b["window"], lags=tuple(b["lags"]))

    def make_dataset(self, seed=None):
        d = self.dataset
        return make_paper_example(n_sources=d["N"], n_samples=d["T"], fs=float(d["fs"]),
                                  seed=d["seed"] if seed is None else seed,
                                  q=self.wavelet["q"], warp_scale=d["warp_scale"],
                                  mixing_scale=d["mixing_scale"])

    def trial_seeds(self):
        b = self.benchmark
        if b["seeds"] is not None:
            return list(b["seeds"])
        return [self.dataset["seed"] + i for i in range(b["n_trials"])]


def _config_error(path, message, text):
    line = _locate(text, path) if text else None
    where = f" (line {line})" if line else ""
    return ConfigError(path, f"{message}{where}")


def load_config(path):
    """Read and validate a configuration file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig.from_dict({})
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"{exc.msg} (line {exc.lineno}, column {exc.colno})") from exc
    return RunConfig.from_dict(raw, text)


def run_algorithm(cfg, z, fs, algo):
    """Returns ``(sources_hat, B_path, theta_paths, spectra, report)``."""
    if algo == "sobi":
        path = sobi(z, tuple(cfg.baselines["lags"]))
        return apply_unmixing(z, path), path, [], [], {
            "algo": algo, "iterations": 1, "sir_updates": [], "converged": True}
    if algo == "p-sobi":
        path = p_sobi(z, cfg.baselines["window"], tuple(cfg.baselines["lags"]))
        return apply_unmixing(z, path), path, [], [], {
            "algo": algo, "iterations": 1, "sir_updates": [], "converged": True}
    if algo == "jefas-bss":
        res = jefas_bss(z, fs, cfg.separator_config())
        return res.sources_hat, res.B_path, res.theta_paths, res.spectra, {
            "algo": algo, "iterations": res.outer_iterations,
            "sir_updates": [float(v) for v in res.sir_updates],
            "converged": bool(res.converged)}
    raise ConfigError("algo", f"unknown algorithm {algo!r}")


def cmd_synthesize(cfg, out_dir, seed=None):
    if seed is not None:
        cfg = cfg.with_seed(seed)
    ds = cfg.make_dataset()
    io.write_dataset(out_dir, ds)
    io.write_json(Path(out_dir) / "config.json", cfg.to_dict())
    return ds


def cmd_separate(cfg, dataset_dir, algo, out_dir):
    ds = io.read_dataset(dataset_dir)
    y, path, thetas, spectra, report = run_algorithm(cfg, ds.observations, ds.fs, algo)
    io.write_result(out_dir, y, ds.fs, path, thetas, spectra, report)
    return report


def cmd_evaluate(dataset_dir, result_dir, out_file):
    ds = io.read_dataset(dataset_dir)
    res = io.read_result(result_dir)
    report = evaluate(res["sources_hat"], ds.sources, res["B_path"], ds.mixing)
    io.write_metric_report(out_file, report)
    return report


def run_trial(cfg_dict, seed):
    """Synthesize one dataset and score every algorithm on it."""
    cfg = RunConfig(**cfg_dict)
    out = {"seed": seed, "ok": True, "error": None, "algos": {}}
    try:
        ds = cfg.make_dataset(seed)
        for algo in ("sobi", "p-sobi", "jefas-bss"):
            y, path, _, _, rep = run_algorithm(cfg, ds.observations, ds.fs, algo)
            m = evaluate(y, ds.sources, path, ds.mixing)
            out["algos"][algo] = {**m.to_dict(), "iterations": rep["iterations"],
                                  "converged": rep["converged"]}
    except (WarpsepError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        out.update(ok=False, error=f"{type(exc).__name__}: {exc}")
    return out


def aggregate(trials):
    """Table rows (algorithm, SIR and rho_dB mean/std) over completed trials."""
    done = [t for t in trials if t["ok"]]
    rows = []
    for algo in ("jefas-bss", "sobi", "p-sobi"):
        sir = np.array([t["algos"][algo]["mean_sir"] for t in done])
        rho = np.array([t["algos"][algo]["rho_mean_db"] for t in done])
        conv = sum(t["algos"][algo]["converged"] for t in done)
        rows.append({
            "algorithm": algo, "n_trials": len(done),
            "sir_mean": float(sir.mean()) if done else None,
            "sir_std": float(sir.std()) if done else None,
            "rho_db_mean": float(rho.mean()) if done else None,
            "rho_db_std": float(rho.std()) if done else None,
            "converged": int(conv),
        })
    return rows


def cmd_benchmark(cfg, out_dir, jobs=1, seed=None):
    if seed is not None:
        cfg = cfg.with_seed(seed)
    seeds = cfg.trial_seeds()
    cfg_dict = cfg.to_dict()
    t0 = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(run_trial, [cfg_dict] * len(seeds), seeds))
    else:
        trials = [run_trial(cfg_dict, s) for s in seeds]
    for t in trials:
        if not t["ok"]:
            log.error("trial with seed %d failed: %s", t["seed"], t["error"])
    rows = aggregate(trials)
    log.info("benchmark of %d trials took %.1f s", len(seeds), time.perf_counter() - t0)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["algorithm", "sir_mean", "sir_std", "rho_db_mean", "rho_db_std", "n_trials"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(r["algorithm"] if k == "algorithm" else
                              ("" if r[k] is None else repr(r[k])) for k in header))
    (out / "benchmark.csv").write_text("\n".join(lines) + "\n")
    io.write_json(out / "benchmark.json", {
        "config": cfg_dict, "seeds": seeds, "table": rows, "trials": trials,
        "failed": [t["seed"] for t in trials if not t["ok"]],
        "note": "QTF-BSS is not part of this benchmark",
    })
    return rows


def _parser():
    p = argparse.ArgumentParser(prog="warpsep", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=("synthesize", "separate", "evaluate", "benchmark"))
    p.add_argument("--config", help="JSON run configuration (defaults if omitted)")
    p.add_argument("--out", help="output directory (report file for evaluate)")
    p.add_argument("--algo", choices=ALGOS, default="jefas-bss")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--dataset", help="dataset bundle directory (separate, evaluate)")
    p.add_argument("--result", help="result bundle directory (evaluate)")
    return p


def _setup_logging():
    level = os.environ.get("WARPSEP_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise ConfigError("WARPSEP_LOG", f"must be one of {sorted(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    """Run the CLI; returns the process exit code (0 ok, 1 runtime, 2 usage)."""
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _setup_logging()
        cfg = load_config(args.config)
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be at least 1")
        needs = {"synthesize": ["out"], "separate": ["dataset", "out"],
                 "evaluate": ["dataset", "result", "out"], "benchmark": ["out"]}
        missing = [f"--{k}" for k in needs[args.command] if getattr(args, k) is None]
        if missing:
            parser.print_usage(sys.stderr)
            print(f"warpsep: {args.command} requires {' '.join(missing)}", file=sys.stderr)
            return 2
    except ConfigError as exc:
        print(f"warpsep: config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "synthesize":
            cmd_synthesize(cfg, args.out, args.seed)
        elif args.command == "separate":
            cmd_separate(cfg, args.dataset, args.algo, args.out)
        elif args.command == "evaluate":
            cmd_evaluate(args.dataset, args.result, args.out)
        else:
            cmd_benchmark(cfg, args.out, args.jobs, args.seed)
    except ConfigError as exc:
        print(f"warpsep: config error: {exc}", file=sys.stderr)
        return 2
    except (WarpsepError, OSError, ValueError, ArithmeticError) as exc:
        print(f"warpsep: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
