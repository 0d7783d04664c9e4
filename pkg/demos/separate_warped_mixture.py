"""Separate one synthetic mixture with SOBI, piecewise SOBI and JEFAS-BSS.

Three Gaussian sources with disjoint Hann-shaped spectra are time-warped and
mixed by a matrix whose entries drift sinusoidally. The script prints the
per-source SIR and the mean interference index of each method, and writes
the JEFAS-BSS result bundle when an output directory is given.

    python demos/separate_warped_mixture.py [seed] [out_dir]
"""

import sys

from warpsep import io
from warpsep.metrics import evaluate
from warpsep.separator import apply_unmixing, jefas_bss
from warpsep.sobi import p_sobi, sobi
from warpsep.synthgen import make_paper_example

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
ds = make_paper_example(seed=seed)
z = ds.observations
print(f"{ds.sources.shape[0]} sources, {z.shape[1]} samples at {ds.fs:g} Hz, seed {seed}")

# the two baselines assume a constant (or piecewise-constant) mixture of
# stationary sources
for name, path in (("sobi", sobi(z)), ("p-sobi", p_sobi(z))):
    m = evaluate(apply_unmixing(z, path), ds.sources, path, ds.mixing)
    print(f"{name:>9}: SIR {m.mean_sir:6.2f} dB  rho {m.rho_mean_db:7.2f} dB")

# JEFAS-BSS starts from p-SOBI and alternates warp and unmixing estimates
res = jefas_bss(z, ds.fs)
m = evaluate(res.sources_hat, ds.sources, res.B_path, ds.mixing)
print(f"jefas-bss: SIR {m.mean_sir:6.2f} dB  rho {m.rho_mean_db:7.2f} dB  "
      f"({res.outer_iterations} outer iteration(s), updates "
      + ", ".join(f"{u:.1f}" for u in res.sir_updates) + " dB)")
print("per-source SIR:", ", ".join(f"{v:.2f}" for v in m.per_source_sir))

if len(sys.argv) > 2:
    io.write_result(sys.argv[2], res.sources_hat, ds.fs, res.B_path, res.theta_paths,
                    res.spectra, {"iterations": res.outer_iterations,
                                  "sir_updates": res.sir_updates,
                                  "converged": res.converged})
    io.write_metric_report(f"{sys.argv[2]}/metrics.json", m)
    print("result bundle written to", sys.argv[2])
