"""Command-line entry point: ``qndsqueeze {theory,check,run,sweep,fit,compare}``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, theory
from .dynamics import SCHEMES
from .squeezing import EnsembleSummary

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--seed", type=_u64, help="base seed (overrides the config)")
    p.add_argument("--trajectories", type=int, help="number of trajectories M")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--model", choices=("full", "cavity-removed", "cavity_removed"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qndsqueeze", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theory", help="closed-form curves as CSV")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--tau-max", type=float, default=1.0)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--outdir")

    p = sub.add_parser("check", help="regime diagnostics for a configuration")
    p.add_argument("--config", required=True)

    p = sub.add_parser("run", help="one ensemble of trajectories")
    _add_run_flags(p)
    p.add_argument("--dump-trajectories", action="store_true")

    p = sub.add_parser("sweep", help="one ensemble per parameter value")
    _add_run_flags(p)
    p.add_argument("--axis", choices=harness.SWEEP_AXES, required=True)
    p.add_argument("--values", type=_values, required=True, help="comma-separated, ascending")

    p = sub.add_parser("fit", help="power-law fit of a sweep table")
    p.add_argument("--table", required=True, help="sweep.csv")
    p.add_argument("--kind", choices=("xi2", "topt"), default="xi2")
    p.add_argument("--n-min", type=float, default=1000)
    p.add_argument("--transient", action="store_true", help="subtract the cavity filling time")
    p.add_argument("--unweighted", action="store_true")

    p = sub.add_parser("compare", help="z-scores of a run against the closed form")
    p.add_argument("--run", required=True, help="output directory of 'run'")
    p.add_argument("--bias", type=float, default=0.015)
    p.add_argument("--window", type=float, default=0.5)
    return parser


def _spec(args) -> harness.RunSpec:
    spec = harness.load_config(args.config)
    sim = spec.sim
    if args.scheme:
        sim = sim.with_(scheme=args.scheme)
    if args.model:
        model = args.model.replace("-", "_")
        sim = sim.with_(model=model, kappa_eff=sim.kappa_eff if model == "cavity_removed" else None)
    if args.trajectories is not None and args.trajectories < 1:
        raise harness.ConfigError("--trajectories must be >= 1")
    if args.threads < 1:
        raise harness.ConfigError("--threads must be >= 1")
    return harness.RunSpec(
        sim,
        args.trajectories if args.trajectories is not None else spec.M,
        args.seed if args.seed is not None else spec.seed,
        args.outdir or spec.outdir or "qndsqueeze_out",
    )


def _cmd_theory(args) -> int:
    if args.N < 1 or args.points < 2 or args.tau_max <= 0:
        raise harness.ConfigError("need N >= 1, points >= 2, tau-max > 0")
    tau = np.linspace(0.0, args.tau_max, args.points)
    mom = theory.moments_nofeedback(tau, args.N, args.eta)
    cols = {
        "tau": tau,
        "xi2_nofeedback": theory.xi2_average_nofeedback(tau, args.N, args.eta),
        "xi2_feedback": theory.xi2_feedback(tau, args.N, args.eta),
        "Jx": mom["Jx"],
        "var_Jx": mom["var_Jx"],
        "var_Jy": mom["var_Jy"],
        "var_Jz": mom["var_Jz"],
        "contrast": mom["contrast"],
    }
    fh = sys.stdout
    if args.outdir:
        Path(args.outdir).mkdir(parents=True, exist_ok=True)
        fh = open(Path(args.outdir) / "theory.csv", "w", newline="")
    w = csv.writer(fh)
    w.writerow(cols)
    for row in zip(*cols.values()):
        w.writerow([repr(float(v)) for v in row])
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def _cmd_check(args) -> int:
    spec = harness.load_config(args.config)
    report = theory.regime_report(spec.sim.params)
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK


def _cmd_run(args) -> int:
    spec = _spec(args)
    res = harness.run_ensemble(spec, threads=args.threads, dump_trajectories=args.dump_trajectories)
    out = harness.summary_dict(res)
    print(json.dumps({k: out[k] for k in ("xi2_m", "t_m", "tau_m", "delta_t", "c", "effective_M")}, indent=2))
    if res.manifest.failed:
        for f in res.manifest.failed:
            print(f"aborted trajectory {f['index']} seed={f['seed']} step={f['step']}: {f['reason']}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = _spec(args)
    try:
        sw = harness.SweepSpec(args.axis, tuple(args.values), spec.sim, spec.M, spec.seed)
    except ValueError as err:
        raise harness.ConfigError(str(err)) from None
    table = harness.sweep(sw, threads=args.threads, outdir=spec.outdir)
    for r in table.rows:
        print(f"{args.axis}={r['value']:g} xi2_m={r['xi2_m']} t_m={r['t_m']} status={r['status']}")
    return EXIT_OK if all(r["status"] == "ok" for r in table.rows) else EXIT_ABORT


def _cmd_fit(args) -> int:
    try:
        table = harness.SweepTable.read_csv(args.table)
    except (OSError, KeyError) as err:
        raise harness.ConfigError(f"cannot read table: {err}") from None
    try:
        fit = harness.fit_scaling(table, args.kind, n_min=args.n_min, transient=args.transient, weighted=not args.unweighted)
    except ValueError as err:
        raise harness.ConfigError(str(err)) from None
    print(json.dumps(
        {
            "kind": args.kind,
            "exponent": fit.exponent,
            "exponent_err": fit.exponent_err,
            "prefactor": fit.prefactor,
            "prefactor_err": fit.prefactor_err,
            "fit_range": fit.fit_range,
            "weighted": fit.weighted,
            "unweighted_exponent": fit.unweighted_exponent,
            "unweighted_prefactor": fit.unweighted_prefactor,
        },
        indent=2,
    ))
    return EXIT_OK


def _load_summary(run_dir: Path) -> tuple[EnsembleSummary, dict, dict]:
    manifest = json.loads((run_dir / "manifest.json").read_text())
    info = json.loads((run_dir / "summary.json").read_text())
    with (run_dir / "summary.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
    times = col("time")
    mean_moments = np.zeros((times.size, 10))
    mean_moments[:, 0], mean_moments[:, 1], mean_moments[:, 2], mean_moments[:, 9] = (
        col("mean_Jx"), col("mean_Jy"), col("mean_Jz"), col("mean_n"),
    )
    summary = EnsembleSummary(
        times=times,
        mean_xi2=col("mean_xi2"),
        stderr_xi2=col("stderr_xi2"),
        mean_moments=mean_moments,
        stderr_moments=np.full_like(mean_moments, np.nan),
        M=manifest["effective_M"],
        N=manifest["config"]["N"],
        xi2_m=info["xi2_m"],
        t_m=info["t_m"],
        delta_t=info["delta_t"],
        c=info["c"],
    )
    return summary, info, manifest


def _cmd_compare(args) -> int:
    run_dir = Path(args.run)
    try:
        summary, info, manifest = _load_summary(run_dir)
    except (OSError, KeyError, ValueError) as err:
        raise harness.ConfigError(f"cannot read run directory: {err}") from None
    report = harness.compare_to_theory(
        summary, info["kappa_eff"], manifest["config"]["eta"], bias=args.bias, window=args.window
    )
    out = report.as_dict()
    (run_dir / "comparison.csv").write_text(
        "time,theory,z\n" + "".join(f"{t!r},{c!r},{z!r}\n" for t, c, z in zip(report.times, report.theory, report.z))
    )
    print(json.dumps(out, indent=2))
    return EXIT_OK


COMMANDS = {
    "theory": _cmd_theory,
    "check": _cmd_check,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "fit": _cmd_fit,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except harness.ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
