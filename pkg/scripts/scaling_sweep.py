"""Sweep the atom number in the cavity-removed model and fit power laws.

Fits ``xi2_m = a / N**alpha`` and ``kappa_eff * t_m = b / N**beta`` and writes
the sweep table plus ``fits.json``.
"""

import argparse
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from qndsqueeze.dynamics import SimConfig
from qndsqueeze.harness import SweepSpec, fit_scaling, sweep
from qndsqueeze.operators import ModelParams


@dataclass
class Experiment:
    values: tuple = (1000, 2000, 5000, 10000, 20000)
    kappa_eff: float = 1.0
    M: int = 200
    seed: int = 20240601
    n_min: float = 1000
    threads: int = 1


def run(exp: Experiment, outdir: Path) -> dict:
    base = SimConfig(ModelParams(N=exp.values[0], g=0.05, kappa=0.4, epsilon=0.4), kappa_eff=exp.kappa_eff)
    table = sweep(SweepSpec("N", exp.values, base, M=exp.M, base_seed=exp.seed), threads=exp.threads, outdir=outdir)
    fits = {kind: asdict(fit_scaling(table, kind, n_min=exp.n_min)) for kind in ("xi2", "topt")}
    fits["exponent_sum"] = fits["xi2"]["exponent"] + fits["topt"]["exponent"]
    (outdir / "fits.json").write_text(json.dumps(fits, indent=2, default=float))
    return fits


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--values", default="1000,2000,5000,10000,20000")
    ap.add_argument("--M", type=int, default=Experiment.M)
    ap.add_argument("--seed", type=int, default=Experiment.seed)
    ap.add_argument("--n-min", type=float, default=Experiment.n_min, help="smallest N used in the fits")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--outdir", default="out/scaling")
    a = ap.parse_args()
    exp = Experiment(values=tuple(int(v) for v in a.values.split(",")), M=a.M, seed=a.seed,
                     n_min=a.n_min, threads=a.threads)
    fits = run(exp, Path(a.outdir))
    for kind, name in (("xi2", "alpha"), ("topt", "beta")):
        f = fits[kind]
        print(f"{name} = {f['exponent']:.3f} +- {f['exponent_err']:.3f}, prefactor {f['prefactor']:.2f}")
    print(f"alpha + beta = {fits['exponent_sum']:.3f}")


if __name__ == "__main__":
    main()
