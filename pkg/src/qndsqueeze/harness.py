"""Configuration files, ensembles of trajectories, sweeps, scaling fits and
comparison against the closed-form curves.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import MODELS, IntegrationError, SimConfig, TrajectoryRecord, run_trajectory
from .operators import ModelParams
from .squeezing import (
    MOMENT_COLUMNS,
    EnsembleSummary,
    FitResult,
    bootstrap_optimal_point,
    ensemble_average,
    fit_power_law,
    richardson_extrapolate,
    xi2_series,
)
from .theory import xi2_average_nofeedback

__all__ = [
    "CONFIG_KEYS",
    "SUMMARY_SCHEMA",
    "ConfigError",
    "RunSpec",
    "RunManifest",
    "EnsembleResult",
    "SweepSpec",
    "SweepTable",
    "ComparisonReport",
    "parse_config",
    "load_config",
    "trajectory_seed",
    "run_ensemble",
    "replay",
    "sweep",
    "fit_scaling",
    "compare_to_theory",
    "richardson_point",
    "write_summary",
]

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# key -> (type, default). ``kappa_eff`` optionally fixes the measurement rate
# of the cavity-removed model instead of deriving it from g, kappa, epsilon.
CONFIG_KEYS = {
    "model": (str, "cavity_removed"),
    "N": (int, None),
    "g": (float, None),
    "delta": (float, 1.0),
    "kappa": (float, None),
    "epsilon": (float, None),
    "eta": (float, 1.0),
    "scheme": (str, "implicit_milstein"),
    "R": (float, 1000.0),
    "T": (float, None),
    "stride": (int, None),
    "M": (int, 400),
    "seed": (int, 0),
    "outdir": (str, None),
    "kappa_eff": (float, None),
}
_REQUIRED = ("N", "g", "kappa", "epsilon")


class ConfigError(ValueError):
    """Malformed configuration file or inconsistent parameters."""


def _normalise_model(value: str) -> str:
    value = value.strip().replace("-", "_")
    if value not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {value!r}")
    return value


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        typ = CONFIG_KEYS[key][0]
        try:
            if typ is int:
                out[key] = int(value, 0)
            else:
                out[key] = typ(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: cannot read {key} = {value!r} as {typ.__name__}") from None
    return out


@dataclass(frozen=True)
class RunSpec:
    """Everything a config file describes: one ensemble of trajectories."""

    sim: SimConfig
    M: int = 400
    seed: int = 0
    outdir: str | None = None

    def to_dict(self) -> dict:
        p = self.sim.params
        d = {
            "model": self.sim.model,
            "N": p.N,
            "g": p.g,
            "delta": p.delta,
            "kappa": p.kappa,
            "epsilon": p.epsilon,
            "eta": p.eta,
            "scheme": self.sim.scheme,
            "R": self.sim.R,
            "T": self.sim.total_time,
            "stride": self.sim.sample_stride,
            "M": self.M,
            "seed": self.seed,
            "outdir": self.outdir,
            "kappa_eff": self.sim.kappa_eff,
        }
        return d


def spec_from_dict(values: dict) -> RunSpec:
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    v = {k: values.get(k, default) for k, (_, default) in CONFIG_KEYS.items()}
    if v["seed"] < 0 or v["seed"] > MASK64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if v["M"] < 1:
        raise ConfigError("M must be >= 1")
    try:
        params = ModelParams(N=v["N"], g=v["g"], kappa=v["kappa"], epsilon=v["epsilon"], delta=v["delta"], eta=v["eta"])
        sim = SimConfig(
            params,
            model=_normalise_model(v["model"]),
            scheme=v["scheme"],
            R=v["R"],
            total_time=v["T"],
            sample_stride=v["stride"],
            seed=v["seed"],
            kappa_eff=v["kappa_eff"],
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return RunSpec(sim, v["M"], v["seed"], v["outdir"])


def load_config(path) -> RunSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    return spec_from_dict(parse_config(text))


# --------------------------------------------------------------------- seeds


def trajectory_seed(base_seed: int, index: int) -> int:
    """SplitMix64 output for ``base_seed + (index + 1) * 0x9E3779B97F4A7C15``."""
    z = (base_seed + (index + 1) * GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


# ------------------------------------------------------------------ ensembles


@dataclass
class RunManifest:
    config: dict
    base_seed: int
    M: int
    code_version: str
    threads: int
    started: str
    wall_seconds: float
    seeds: list[int]
    failed: list[dict] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    environment: dict = field(default_factory=dict)

    @property
    def effective_M(self) -> int:
        return self.M - len(self.failed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["effective_M"] = self.effective_M
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunManifest:
        d = dict(d)
        d.pop("effective_M", None)
        return cls(**d)


@dataclass
class EnsembleResult:
    summary: EnsembleSummary | None
    records: list[TrajectoryRecord]
    manifest: RunManifest
    xi2_m_sigma: float = float("nan")
    t_m_sigma: float = float("nan")

    @property
    def kappa_eff(self) -> float:
        cfg = self.manifest.config
        if cfg.get("kappa_eff"):
            return cfg["kappa_eff"]
        return ModelParams(N=cfg["N"], g=cfg["g"], kappa=cfg["kappa"], epsilon=cfg["epsilon"], delta=cfg["delta"]).kappa_eff


def _one(config: SimConfig, seed: int, engine: str):
    try:
        rec = run_trajectory(config, seed, engine=engine)
        rec.xi2 = xi2_series(rec.moments, config.params.N)
        return rec
    except (IntegrationError, ValueError) as err:
        step = getattr(err, "step", None)
        reason = getattr(err, "reason", str(err))
        return {"seed": seed, "step": step, "reason": reason}


def run_ensemble(
    config: SimConfig | RunSpec,
    M: int | None = None,
    base_seed: int | None = None,
    threads: int = 1,
    outdir=None,
    dump_trajectories: bool = False,
    engine: str = "kernel",
    with_transient: bool | None = None,
) -> EnsembleResult:
    """Run ``M`` trajectories with seeds ``trajectory_seed(base_seed, i)``.

    Results are aggregated in index order, so the summary does not depend on
    ``threads``. Aborted trajectories are excluded from the averages and
    listed in the manifest. With ``outdir`` the summary, manifest and
    (optionally) one CSV per trajectory are written there.
    """
    if isinstance(config, RunSpec):
        M = config.M if M is None else M
        base_seed = config.seed if base_seed is None else base_seed
        outdir = config.outdir if outdir is None else outdir
        config = config.sim
    M = 1 if M is None else int(M)
    base_seed = config.seed if base_seed is None else int(base_seed)
    if M < 1:
        raise ValueError("M must be >= 1")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    seeds = [trajectory_seed(base_seed, i) for i in range(M)]
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    t0 = time.perf_counter()
    if threads == 1:
        results = [_one(config, s, engine) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: _one(config, s, engine), seeds))
    wall = time.perf_counter() - t0
    records, failed = [], []
    for i, res in enumerate(results):
        if isinstance(res, dict):
            failed.append({"index": i, **res})
        else:
            records.append(res)
    spec = RunSpec(config, M, base_seed, None if outdir is None else str(outdir))
    manifest = RunManifest(
        config=spec.to_dict(),
        base_seed=base_seed,
        M=M,
        code_version=__version__,
        threads=threads,
        started=started,
        wall_seconds=wall,
        seeds=seeds,
        failed=failed,
        environment={"python": platform.python_version(), "numpy": np.__version__, "engine": engine},
    )
    summary = None
    sx = st = float("nan")
    if records:
        if with_transient is None:
            with_transient = config.model == "full"
        summary = ensemble_average(records, with_transient=with_transient, kappa=config.params.kappa)
        sx, st = bootstrap_optimal_point(summary.times, summary.xi2_traj, seed=base_seed & 0xFFFFFFFF)
    result = EnsembleResult(summary, records, manifest, sx, st)
    if outdir is not None:
        write_summary(result, outdir, dump_trajectories)
    return result


def replay(manifest_path, threads: int = 1, outdir=None) -> EnsembleResult:
    """Re-run an ensemble from its manifest; outputs are bit-identical."""
    d = json.loads(Path(manifest_path).read_text())
    spec = spec_from_dict({k: v for k, v in d["config"].items() if v is not None})
    engine = d.get("environment", {}).get("engine", "kernel")
    return run_ensemble(spec.sim, d["M"], d["base_seed"], threads=threads, outdir=outdir, engine=engine)


# ---------------------------------------------------------------- persistence

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["xi2_m", "t_m", "delta_t", "c", "fit"],
    "properties": {
        "xi2_m": {"type": ["number", "null"]},
        "t_m": {"type": ["number", "null"]},
        "delta_t": {"type": ["number", "null"]},
        "c": {"type": ["number", "null"]},
        "fit": {
            "type": "object",
            "required": ["alpha", "a", "beta", "b", "sigmas"],
            "properties": {
                "alpha": {"type": ["number", "null"]},
                "a": {"type": ["number", "null"]},
                "beta": {"type": ["number", "null"]},
                "b": {"type": ["number", "null"]},
                "sigmas": {
                    "type": "object",
                    "properties": {k: {"type": ["number", "null"]} for k in ("alpha", "a", "beta", "b")},
                },
            },
        },
        "xi2_m_sigma": {"type": ["number", "null"]},
        "t_m_sigma": {"type": ["number", "null"]},
        "tau_m": {"type": ["number", "null"]},
        "kappa_eff": {"type": ["number", "null"]},
        "M": {"type": "integer"},
        "effective_M": {"type": "integer"},
        "flags": {"type": "array", "items": {"type": "string"}},
    },
}


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _empty_fit():
    return {"alpha": None, "a": None, "beta": None, "b": None, "sigmas": {"alpha": None, "a": None, "beta": None, "b": None}}


def summary_dict(result: EnsembleResult) -> dict:
    s = result.summary
    k = result.kappa_eff
    return {
        "xi2_m": _num(s.xi2_m) if s else None,
        "t_m": _num(s.t_m) if s else None,
        "delta_t": _num(s.delta_t) if s else None,
        "c": _num(s.c) if s else None,
        "fit": _empty_fit(),
        "xi2_m_sigma": _num(result.xi2_m_sigma),
        "t_m_sigma": _num(result.t_m_sigma),
        "tau_m": _num(s.t_m * k) if s else None,
        "kappa_eff": _num(k),
        "M": result.manifest.M,
        "effective_M": result.manifest.effective_M,
        "flags": list(s.flags) if s else ["no_trajectories"],
    }


def _fmt(x: float) -> str:
    return repr(float(x))


def write_summary(result: EnsembleResult, outdir, dump_trajectories: bool = False) -> list[str]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    s = result.summary
    if s is not None:
        path = out / "summary.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "mean_Jx", "mean_Jy", "mean_Jz", "mean_n", "mean_xi2", "stderr_xi2"])
            for i, t in enumerate(s.times):
                mm = s.mean_moments[i]
                w.writerow([_fmt(v) for v in (t, mm[0], mm[1], mm[2], mm[9], s.mean_xi2[i], s.stderr_xi2[i])])
        written.append(str(path))
    path = out / "summary.json"
    path.write_text(json.dumps(summary_dict(result), indent=2))
    written.append(str(path))
    if dump_trajectories:
        cols = [MOMENT_COLUMNS.index(c) for c in ("Jx", "Jy", "Jz", "Jx2", "Jy2", "Jz2", "JxJz", "n")]
        seed_index = {sd: i for i, sd in enumerate(result.manifest.seeds)}
        for rec in result.records:
            path = out / f"traj_{seed_index[rec.seed]:05d}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["time", "Jx", "Jy", "Jz", "Jx2", "Jy2", "Jz2", "JxJz_sym", "n", "I"])
                for i, t in enumerate(rec.times):
                    w.writerow([_fmt(t)] + [_fmt(rec.moments[i, c]) for c in cols] + [_fmt(rec.photocurrent[i])])
            written.append(str(path))
    path = out / "manifest.json"
    result.manifest.outputs = written + [str(path)]
    path.write_text(json.dumps(result.manifest.to_dict(), indent=2))
    return result.manifest.outputs


# ---------------------------------------------------------------------- sweeps

SWEEP_AXES = ("N", "g", "kappa", "epsilon")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    base: SimConfig
    M: int = 400
    base_seed: int = 0

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}")
        vals = tuple(self.values)
        if not vals:
            raise ValueError("sweep needs at least one value")
        if any(v <= 0 for v in vals):
            raise ValueError("sweep values must be positive")
        if list(vals) != sorted(vals):
            raise ValueError("sweep values must be sorted")
        object.__setattr__(self, "values", vals)

    def point_config(self, value) -> SimConfig:
        p = self.base.params
        changes = {self.axis: int(value) if self.axis == "N" else float(value)}
        params = ModelParams(**{**asdict(p), **changes})
        return self.base.with_(params=params)


SWEEP_COLUMNS = (
    "value", "N", "kappa_eff", "xi2_m", "xi2_m_sigma", "t_m", "t_m_sigma", "delta_t", "c", "effective_M", "status",
)


@dataclass
class SweepTable:
    axis: str
    rows: list[dict]

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    def ok_rows(self) -> list[dict]:
        return [r for r in self.rows if r["status"] == "ok"]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: ("" if r[k] is None else r[k]) for k in SWEEP_COLUMNS})

    @classmethod
    def read_csv(cls, path, axis: str = "N") -> SweepTable:
        rows = []
        with Path(path).open() as fh:
            for r in csv.DictReader(fh):
                row = {}
                for k in SWEEP_COLUMNS:
                    v = r.get(k, "")
                    if k == "status":
                        row[k] = v
                    elif v == "":
                        row[k] = None
                    else:
                        row[k] = float(v)
                rows.append(row)
        return cls(axis, rows)


def sweep(spec: SweepSpec, threads: int = 1, outdir=None, point_seeds=None) -> SweepTable:
    """One ensemble per sweep value; failing points are recorded, not fatal.

    Point ``i`` uses base seed ``trajectory_seed(spec.base_seed, i)`` unless
    ``point_seeds`` is given.
    """
    rows = []
    for i, value in enumerate(spec.values):
        seed = trajectory_seed(spec.base_seed, i) if point_seeds is None else point_seeds[i]
        sub = None if outdir is None else Path(outdir) / f"point_{i:03d}"
        row = {k: None for k in SWEEP_COLUMNS}
        row["value"] = float(value)
        try:
            cfg = spec.point_config(value)
            res = run_ensemble(cfg, spec.M, seed, threads=threads, outdir=sub)
            s = res.summary
            row.update(N=cfg.params.N, kappa_eff=res.kappa_eff, effective_M=res.manifest.effective_M)
            if s is None:
                row["status"] = "failed"
            else:
                row.update(
                    xi2_m=s.xi2_m,
                    xi2_m_sigma=res.xi2_m_sigma,
                    t_m=s.t_m,
                    t_m_sigma=res.t_m_sigma,
                    delta_t=s.delta_t,
                    c=s.c,
                    status="ok" if "monotone_xi2" not in s.flags else "monotone",
                )
        except (ValueError, IntegrationError) as err:
            row["status"] = f"error: {err}"
        rows.append(row)
    table = SweepTable(spec.axis, rows)
    if outdir is not None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        table.write_csv(out / "sweep.csv")
        meta = {
            "axis": spec.axis,
            "values": list(spec.values),
            "M": spec.M,
            "base_seed": spec.base_seed,
            "base": RunSpec(spec.base, spec.M, spec.base_seed).to_dict(),
            "code_version": __version__,
        }
        (out / "sweep_manifest.json").write_text(json.dumps(meta, indent=2))
    return table


def fit_scaling(table: SweepTable, kind: str = "xi2", n_min: float | None = 1000, transient: bool = False, weighted: bool = True) -> FitResult:
    """Power law in ``N`` for ``xi2_m`` or for the scaled optimal time
    ``kappa_eff * t_m`` (minus the cavity filling time when ``transient``)."""
    if kind not in ("xi2", "topt"):
        raise ValueError("kind must be 'xi2' or 'topt'")
    rows = table.ok_rows()
    N = np.array([r["N"] for r in rows], dtype=float)
    if kind == "xi2":
        y = np.array([r["xi2_m"] for r in rows], dtype=float)
        sig = np.array([r["xi2_m_sigma"] if r["xi2_m_sigma"] is not None else np.nan for r in rows], dtype=float)
    else:
        k = np.array([r["kappa_eff"] for r in rows], dtype=float)
        t = np.array([r["t_m"] for r in rows], dtype=float)
        if transient:
            t = t - np.array([r["delta_t"] or 0.0 for r in rows], dtype=float)
        y = k * t
        sig = k * np.array([r["t_m_sigma"] if r["t_m_sigma"] is not None else np.nan for r in rows], dtype=float)
    if not np.all(np.isfinite(sig)) or np.any(sig <= 0):
        sig = None
    return fit_power_law(N, y, sig, n_min=n_min, weighted=weighted)


# -------------------------------------------------------------------- theory


@dataclass
class ComparisonReport:
    times: np.ndarray
    theory: np.ndarray
    z: np.ndarray
    max_abs_z_near_min: float
    delta_t: float
    window: tuple[float, float]
    departure: bool
    threshold: float = 2.0

    def as_dict(self) -> dict:
        return {
            "max_abs_z_near_min": self.max_abs_z_near_min,
            "delta_t": self.delta_t,
            "window": list(self.window),
            "departure": self.departure,
            "threshold": self.threshold,
        }


def compare_to_theory(
    summary: EnsembleSummary,
    kappa_eff: float,
    eta: float = 1.0,
    delta_t: float | None = None,
    bias: float = 0.015,
    window: float = 0.5,
    threshold: float = 2.0,
    theory=None,
) -> ComparisonReport:
    """z-scores of the mean squeezing against the no-feedback average curve.

    The theory is evaluated at ``tau = kappa_eff (t - delta_t)``; ``delta_t``
    defaults to the summary's cavity filling time (0 if absent). The
    uncertainty combines the standard error with a time-step ``bias``. The
    neighbourhood of the minimum is ``|tau - tau_m| <= window * tau_m``.
    """
    if delta_t is None:
        delta_t = summary.delta_t or 0.0
    tau = np.clip((summary.times - delta_t) * kappa_eff, 0.0, None)
    if theory is None:
        curve = xi2_average_nofeedback(tau, summary.N, eta)
    else:
        curve = np.asarray(theory(tau), dtype=float)
    sigma = np.hypot(np.nan_to_num(summary.stderr_xi2), bias)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, (summary.mean_xi2 - curve) / sigma, 0.0)
    tau_m = (summary.t_m - delta_t) * kappa_eff
    lo, hi = (1 - window) * tau_m, (1 + window) * tau_m
    sel = (tau >= lo) & (tau <= hi)
    max_z = float(np.max(np.abs(z[sel]))) if np.any(sel) else float("nan")
    return ComparisonReport(summary.times, curve, z, max_z, float(delta_t), (lo, hi), bool(max_z > threshold), threshold)


def richardson_point(config: SimConfig, M: int, base_seed: int = 0, threads: int = 1) -> dict:
    """``xi2_m`` at resolution ``R`` and ``2 R`` and the first-order
    extrapolation to ``dt -> 0``."""
    coarse = run_ensemble(config, M, base_seed, threads=threads)
    fine = run_ensemble(config.with_(R=2 * config.R, sample_stride=None), M, base_seed, threads=threads)
    return {
        "xi2_m": coarse.summary.xi2_m,
        "xi2_m_fine": fine.summary.xi2_m,
        "xi2_m_extrapolated": richardson_extrapolate(coarse.summary.xi2_m, fine.summary.xi2_m),
        "R": config.R,
    }
