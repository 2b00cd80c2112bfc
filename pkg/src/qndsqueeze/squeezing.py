"""Wineland squeezing parameter from spin moments, ensemble statistics and
power-law fits.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MOMENT_COLUMNS",
    "DegenerateFrameError",
    "SpinMoments",
    "MeanSpinFrame",
    "covariance_matrix",
    "mean_spin_frame",
    "squeezing_parameter",
    "xi2_series",
    "EnsembleSummary",
    "ensemble_average",
    "OptimalPoint",
    "optimal_point",
    "bootstrap_optimal_point",
    "plateau_value",
    "Transient",
    "transient_time",
    "FitResult",
    "fit_power_law",
    "richardson_extrapolate",
]

# column layout of a trajectory moment row; cross moments are symmetrised
MOMENT_COLUMNS = ("Jx", "Jy", "Jz", "Jx2", "Jy2", "Jz2", "JxJy", "JxJz", "JyJz", "n")
_COL = {name: i for i, name in enumerate(MOMENT_COLUMNS)}


class DegenerateFrameError(ValueError):
    """Mean spin too short to define a tangent plane (contrast lost)."""


@dataclass(frozen=True)
class SpinMoments:
    first: np.ndarray  # (<Jx>, <Jy>, <Jz>)
    second: np.ndarray  # symmetric 3x3 of 1/2 <Ji Jj + Jj Ji>
    J: float

    @classmethod
    def from_row(cls, row, N) -> SpinMoments:
        r = np.asarray(row, dtype=float)
        second = np.array(
            [
                [r[_COL["Jx2"]], r[_COL["JxJy"]], r[_COL["JxJz"]]],
                [r[_COL["JxJy"]], r[_COL["Jy2"]], r[_COL["JyJz"]]],
                [r[_COL["JxJz"]], r[_COL["JyJz"]], r[_COL["Jz2"]]],
            ]
        )
        return cls(r[:3].copy(), second, N / 2)

    @classmethod
    def from_state(cls, state, N) -> SpinMoments:
        from .dynamics import state_moments

        return cls.from_row(state_moments(state, N), N)


@dataclass(frozen=True)
class MeanSpinFrame:
    theta: float
    phi: float
    rotation: np.ndarray


def covariance_matrix(moments: SpinMoments) -> np.ndarray:
    """``cov_ij = 1/2 <Ji Jj + Jj Ji> - <Ji><Jj>``."""
    f = moments.first
    cov = moments.second - np.outer(f, f)
    return 0.5 * (cov + cov.T)


def _rotation(theta: float, phi: float) -> np.ndarray:
    # R = R_y(pi/2 - theta) R_z(-phi); maps the mean spin onto +x
    a = math.pi / 2 - theta
    ry = np.array([[math.cos(a), 0.0, math.sin(a)], [0.0, 1.0, 0.0], [-math.sin(a), 0.0, math.cos(a)]])
    cp, sphi = math.cos(phi), math.sin(phi)
    rz = np.array([[cp, sphi, 0.0], [-sphi, cp, 0.0], [0.0, 0.0, 1.0]])
    return ry @ rz


def mean_spin_frame(moments: SpinMoments, tol: float = 1e-9) -> MeanSpinFrame:
    f = moments.first
    length = float(np.linalg.norm(f))
    if length < tol * moments.J:
        raise DegenerateFrameError(f"|<J>| = {length:.3e} below {tol:g} J")
    theta = math.acos(max(-1.0, min(1.0, f[2] / length)))
    phi = math.atan2(f[1], f[0])
    return MeanSpinFrame(theta, phi, _rotation(theta, phi))


def squeezing_parameter(moments: SpinMoments) -> float:
    """Wineland parameter ``min_perp Var(J_perp) / (J C / 2)``, ``C = |<J>|^2 / J^2``."""
    frame = mean_spin_frame(moments)
    R = frame.rotation
    cov = R @ covariance_matrix(moments) @ R.T
    a, b, c = cov[1, 1], cov[1, 2], cov[2, 2]
    lam_min = 0.5 * (a + c) - math.hypot(0.5 * (a - c), b)
    J = moments.J
    contrast = float(moments.first @ moments.first) / J**2
    return lam_min / (J * contrast / 2)


def xi2_series(moment_rows: np.ndarray, N: int) -> np.ndarray:
    """Squeezing parameter for each row of a ``(S, len(MOMENT_COLUMNS))`` array.

    Vectorised version of :func:`squeezing_parameter`.
    """
    r = np.asarray(moment_rows, dtype=float)
    J = N / 2
    first = r[:, :3]
    length = np.linalg.norm(first, axis=1)
    if np.any(length < 1e-9 * J):
        bad = int(np.flatnonzero(length < 1e-9 * J)[0])
        raise DegenerateFrameError(f"|<J>| = {length[bad]:.3e} at sample {bad}")
    theta = np.arccos(np.clip(first[:, 2] / length, -1.0, 1.0))
    phi = np.arctan2(first[:, 1], first[:, 0])
    # rotated y' and z' unit vectors (rows 1 and 2 of R)
    a = np.pi / 2 - theta
    cp, sp_ = np.cos(phi), np.sin(phi)
    ey = np.stack([-sp_, cp, np.zeros_like(cp)], axis=1)
    ez = np.stack([-np.sin(a) * cp, -np.sin(a) * sp_, np.cos(a)], axis=1)
    second = np.empty((r.shape[0], 3, 3))
    second[:, 0, 0], second[:, 1, 1], second[:, 2, 2] = r[:, 3], r[:, 4], r[:, 5]
    second[:, 0, 1] = second[:, 1, 0] = r[:, 6]
    second[:, 0, 2] = second[:, 2, 0] = r[:, 7]
    second[:, 1, 2] = second[:, 2, 1] = r[:, 8]
    cov = second - first[:, :, None] * first[:, None, :]
    cyy = np.einsum("si,sij,sj->s", ey, cov, ey)
    czz = np.einsum("si,sij,sj->s", ez, cov, ez)
    cyz = np.einsum("si,sij,sj->s", ey, cov, ez)
    lam_min = 0.5 * (cyy + czz) - np.hypot(0.5 * (cyy - czz), cyz)
    contrast = length**2 / J**2
    return lam_min / (J * contrast / 2)


# ------------------------------------------------------------------ ensembles


@dataclass
class EnsembleSummary:
    times: np.ndarray
    mean_xi2: np.ndarray
    stderr_xi2: np.ndarray
    mean_moments: np.ndarray
    stderr_moments: np.ndarray
    M: int
    N: int
    xi2_m: float
    t_m: float
    delta_t: float | None = None
    c: float | None = None
    xi2_traj: np.ndarray = field(default=None, repr=False)
    jz_traj: np.ndarray = field(default=None, repr=False)
    flags: list[str] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return self.mean_moments[:, _COL[name]]


def ensemble_average(records, with_transient: bool = False, kappa: float | None = None) -> EnsembleSummary:
    """Average trajectory records sharing one time grid.

    ``xi2`` is evaluated per trajectory and then averaged; it is never
    recomputed from averaged moments.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to average")
    times = records[0].times
    N = records[0].N
    for rec in records[1:]:
        if rec.times.shape != times.shape or not np.array_equal(rec.times, times):
            raise ValueError("records have mismatched time grids")
    xi2 = np.stack([rec.xi2 if rec.xi2 is not None else xi2_series(rec.moments, N) for rec in records])
    moments = np.stack([rec.moments for rec in records])
    M = len(records)
    flags = []
    if M > 1:
        stderr_xi2 = xi2.std(axis=0, ddof=1) / math.sqrt(M)
        stderr_mom = moments.std(axis=0, ddof=1) / math.sqrt(M)
    else:
        stderr_xi2 = np.full(times.shape, np.nan)
        stderr_mom = np.full(moments.shape[1:], np.nan)
        flags.append("stderr_undefined")
    mean_xi2 = xi2.mean(axis=0)
    summary = EnsembleSummary(
        times=times,
        mean_xi2=mean_xi2,
        stderr_xi2=stderr_xi2,
        mean_moments=moments.mean(axis=0),
        stderr_moments=stderr_mom,
        M=M,
        N=N,
        xi2_m=float("nan"),
        t_m=float("nan"),
        xi2_traj=xi2,
        jz_traj=moments[:, :, _COL["Jz"]],
        flags=flags,
    )
    if times.size >= 10:
        opt = optimal_point(times, mean_xi2)
        summary.xi2_m, summary.t_m = opt.xi2_m, opt.t_m
        if opt.monotone:
            summary.flags.append("monotone_xi2")
    else:
        i = int(np.argmin(mean_xi2))
        summary.xi2_m, summary.t_m = float(mean_xi2[i]), float(times[i])
    if with_transient:
        n_series = summary.column("n")
        try:
            tr = transient_time(times, n_series, plateau_value(n_series), kappa=kappa)
            summary.delta_t, summary.c = tr.delta_t, tr.c
        except ValueError:
            summary.flags.append("no_transient")
    return summary


@dataclass(frozen=True)
class OptimalPoint:
    t_m: float
    xi2_m: float
    index: int
    monotone: bool
    t_refined: float | None = None
    xi2_refined: float | None = None


def optimal_point(times, series, refine: bool = False) -> OptimalPoint:
    """Discrete minimum of ``series``; earliest time wins ties.

    With ``refine=True`` a three-point parabola through the argmin and its
    neighbours is reported as well.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    if t.size < 3:
        raise ValueError("need at least 3 samples")
    i = int(np.argmin(y))  # first occurrence
    monotone = i in (0, t.size - 1)
    if monotone:
        warnings.warn("no interior minimum; returning endpoint", RuntimeWarning, stacklevel=2)
    t_ref = y_ref = None
    if refine and not monotone:
        x0, x1, x2 = t[i - 1 : i + 2]
        y0, y1, y2 = y[i - 1 : i + 2]
        denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
        A = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
        B = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
        C = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / denom
        if A > 0:
            t_ref = -B / (2 * A)
            y_ref = C - B**2 / (4 * A)
    return OptimalPoint(float(t[i]), float(y[i]), i, monotone, t_ref, y_ref)


def bootstrap_optimal_point(times, xi2_traj, n_boot=200, seed=0) -> tuple[float, float]:
    """Bootstrap standard deviations of ``(xi2_m, t_m)`` over trajectories."""
    xi2_traj = np.asarray(xi2_traj)
    M = xi2_traj.shape[0]
    if M < 2:
        return float("nan"), float("nan")
    rng = np.random.default_rng(seed)
    mins, tms = np.empty(n_boot), np.empty(n_boot)
    for b in range(n_boot):
        mean = xi2_traj[rng.integers(0, M, M)].mean(axis=0)
        i = int(np.argmin(mean))
        mins[b], tms[b] = mean[i], times[i]
    return float(mins.std(ddof=1)), float(tms.std(ddof=1))


def plateau_value(series, tail_fraction=0.25) -> float:
    """Mean of the last ``tail_fraction`` of a series."""
    s = np.asarray(series, dtype=float)
    k = max(1, int(round(tail_fraction * s.size)))
    return float(s[-k:].mean())


@dataclass(frozen=True)
class Transient:
    delta_t: float
    c: float | None  # kappa * delta_t / 2


def transient_time(times, mean_n, n_steady, fraction=0.9, kappa=None) -> Transient:
    """First time the photon number reaches ``fraction * n_steady`` (linear
    interpolation between samples)."""
    t = np.asarray(times, dtype=float)
    n = np.asarray(mean_n, dtype=float)
    level = fraction * n_steady
    above = np.flatnonzero(n >= level)
    if above.size == 0:
        raise ValueError(f"series never reaches {fraction:g} of {n_steady:g}")
    i = int(above[0])
    if i == 0:
        dt_cross = float(t[0])
    else:
        dt_cross = float(t[i - 1] + (level - n[i - 1]) * (t[i] - t[i - 1]) / (n[i] - n[i - 1]))
    return Transient(dt_cross, None if kappa is None else kappa * dt_cross / 2)


# ---------------------------------------------------------------------- fits


@dataclass(frozen=True)
class FitResult:
    """``y = prefactor / N**exponent``."""

    exponent: float
    exponent_err: float
    prefactor: float
    prefactor_err: float
    fit_range: tuple[float, float]
    residual_norm: float
    weighted: bool
    unweighted_exponent: float
    unweighted_prefactor: float
    n_points: int

    def predict(self, N):
        return self.prefactor / np.asarray(N, dtype=float) ** self.exponent


def _wls(x, y, w):
    X = np.column_stack([np.ones_like(x), -x])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    cov = np.linalg.inv(X.T @ (X * w[:, None]))
    resid = y - X @ coef
    return coef, cov, resid


def fit_power_law(N, y, sigma=None, n_min: float | None = None, weighted: bool = True) -> FitResult:
    """Weighted least squares of ``log y = log a - alpha log N``.

    ``sigma`` are absolute uncertainties of ``y``; they become ``sigma / y`` in
    log space. Without ``sigma`` the fit is unweighted and parameter errors
    come from the residual scatter.
    """
    N = np.asarray(N, dtype=float)
    y = np.asarray(y, dtype=float)
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
    if n_min is not None:
        keep = N >= n_min
        N, y = N[keep], y[keep]
        sigma = None if sigma is None else sigma[keep]
    if N.size < 3:
        raise ValueError("need at least 3 points")
    if np.any(y <= 0) or np.any(N <= 0):
        raise ValueError("power-law fit requires positive values")
    x, ly = np.log(N), np.log(y)
    ones = np.ones_like(x)
    coef_u, cov_u, resid_u = _wls(x, ly, ones)
    if sigma is not None and weighted:
        if np.any(sigma <= 0):
            raise ValueError("uncertainties must be positive")
        w = (y / sigma) ** 2
        coef, cov, resid = _wls(x, ly, w)
        resid_norm = float(np.sqrt(np.sum(w * resid**2)))
    else:
        coef, cov, resid = coef_u, cov_u, resid_u
        dof = max(N.size - 2, 1)
        cov = cov * float(resid @ resid) / dof
        resid_norm = float(np.linalg.norm(resid))
        weighted = False
    log_a, alpha = coef
    a = math.exp(log_a)
    return FitResult(
        exponent=float(alpha),
        exponent_err=float(math.sqrt(max(cov[1, 1], 0.0))),
        prefactor=a,
        prefactor_err=float(a * math.sqrt(max(cov[0, 0], 0.0))),
        fit_range=(float(N.min()), float(N.max())),
        residual_norm=resid_norm,
        weighted=weighted,
        unweighted_exponent=float(coef_u[1]),
        unweighted_prefactor=float(math.exp(coef_u[0])),
        n_points=int(N.size),
    )


def richardson_extrapolate(value_coarse, value_fine, ratio=2.0, order=1.0):
    """Extrapolate to ``dt -> 0`` from results at ``dt`` and ``dt / ratio``."""
    k = ratio**order
    return (k * value_fine - value_coarse) / (k - 1)
