"""Closed-form reference curves for the adiabatically removed cavity and
simple regime diagnostics.

Time is the scaled time ``tau = kappa_eff * t`` unless stated otherwise.
All functions are pure and accept numpy arrays where it makes sense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

HBAR = 1.054571817e-34  # J s

__all__ = [
    "n0",
    "kappa_eff",
    "RegimeReport",
    "regime_report",
    "moments_nofeedback",
    "xi2_conditional",
    "xi2_average_nofeedback",
    "optimum_nofeedback",
    "asymptotic_optimum_nofeedback",
    "xi2_feedback",
    "feedback_optimum",
    "t_opt_full",
    "gaussian_jz_distribution",
    "exponent_relation",
    "SrEstimates",
    "sr_estimates",
    "to_db",
]


def n0(epsilon, kappa):
    """Steady photon number of the empty driven cavity, ``(2 eps / kappa)^2``."""
    if np.any(np.asarray(kappa) <= 0):
        raise ValueError("kappa must be positive")
    return (2.0 * np.asarray(epsilon, dtype=float) / kappa) ** 2


def kappa_eff(g, delta, kappa, n_photons):
    """Measurement rate after cavity removal, ``4 (2 g^2/delta)^2 n0 / kappa``."""
    if np.any(np.asarray(kappa) <= 0):
        raise ValueError("kappa must be positive")
    return 4.0 * (2.0 * np.asarray(g, dtype=float) ** 2 / delta) ** 2 * n_photons / kappa


@dataclass(frozen=True)
class RegimeReport:
    frequency_shift: float  # g^2 N / delta
    bad_cavity_ratio: float  # frequency_shift / kappa, should be << 1
    elimination_ratio: float  # n0 / (delta/g)^2, should be << 1
    cavity_removal_ratio: float  # n0 / (kappa delta / g^2), should be << 1
    kappa_eff: float
    n0: float
    threshold: float = 0.1

    @property
    def flags(self) -> dict[str, str]:
        return {
            name: ("pass" if getattr(self, name) <= self.threshold else "warn")
            for name in ("bad_cavity_ratio", "elimination_ratio", "cavity_removal_ratio")
        }

    @property
    def bad_cavity(self) -> bool:
        return self.bad_cavity_ratio < 1.0

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["flags"] = self.flags
        out["bad_cavity"] = self.bad_cavity
        return out


def regime_report(params, threshold: float = 0.1) -> RegimeReport:
    """Ratios behind the excited-state elimination and bad-cavity conditions.

    A ratio above ``threshold`` is flagged ``warn``.
    """
    photons = float(n0(params.epsilon, params.kappa))
    g2 = params.g**2
    shift = g2 * params.N / params.delta
    return RegimeReport(
        frequency_shift=shift,
        bad_cavity_ratio=shift / params.kappa,
        elimination_ratio=photons * g2 / params.delta**2,
        cavity_removal_ratio=photons * g2 / (params.kappa * params.delta),
        kappa_eff=float(kappa_eff(params.g, params.delta, params.kappa, photons)),
        n0=photons,
        threshold=threshold,
    )


def moments_nofeedback(tau, N, eta=1.0) -> dict[str, np.ndarray]:
    """Gaussian-approximation moments starting from a CSS along +x.

    Variances are normalised by the coherent-state value ``J/2``.
    """
    tau = np.asarray(tau, dtype=float)
    J = N / 2
    e1, e2 = np.exp(-tau), np.exp(-2 * tau)
    return {
        "Jx": J * np.exp(-tau / 2),
        "Jx2": J**2 / 2 * (1 + e2) + J / 4 * (1 - e2),
        "Jy2": J**2 / 2 * (1 - e2) + J / 4 * (1 + e2),
        "var_Jx": J * (1 - e1) ** 2 + 0.5 * (1 - e2),
        "var_Jy": J * (1 - e2) + 0.5 * (1 + e2),
        "var_Jz": 1.0 / (1.0 + 2 * J * eta * tau),
        "contrast": e1,
    }


def xi2_conditional(tau, jz, N, eta=1.0, refined_contrast=False):
    """Conditional squeezing parameter for a trajectory with ``<Jz>_c = jz``.

    With ``refined_contrast=False`` the contrast is ``exp(-tau)`` and
    ``|<J>|^2 = J^2 exp(-tau)``; averaging over a Gaussian ``jz`` of variance
    ``N/4`` then gives :func:`xi2_average_nofeedback` exactly. The refined
    variant keeps ``jz^2`` in both ``|<J>|^2`` and the contrast, which is more
    accurate far from the equator.
    """
    tau = np.asarray(tau, dtype=float)
    jz2 = np.asarray(jz, dtype=float) ** 2
    J = N / 2
    et = np.exp(tau)
    var_z = 1.0 / (1.0 + 2 * eta * J * tau)
    var_x = J * (1 - np.exp(-tau)) ** 2 + 0.5 * (1 - np.exp(-2 * tau))
    if refined_contrast:
        contrast = np.exp(-tau) + jz2 / J**2
        q = jz2 / (J**2 * contrast)
        return (var_z * (1 - q) + var_x * q) / contrast
    q = jz2 / (J**2 / et)
    return et * var_z * (1 - q) + et * var_x * q


def xi2_average_nofeedback(tau, N, eta=1.0):
    """Trajectory-averaged squeezing parameter without feedback."""
    tau = np.asarray(tau, dtype=float)
    et = np.exp(tau)
    return (1 - et / N) * et / (1 + eta * N * tau) + (N * (et - 1) ** 2 + et**2 - 1) / (2 * N)


def optimum_nofeedback(N, eta=1.0, tol=1e-10) -> tuple[float, float]:
    """Numerical ``(tau_m, xi2_m)`` of :func:`xi2_average_nofeedback`.

    Log-spaced scan followed by golden-section refinement.
    """
    grid = np.logspace(-6, 1, 2001)
    values = xi2_average_nofeedback(grid, N, eta)
    i = int(np.clip(np.argmin(values), 1, grid.size - 2))
    res = minimize_scalar(
        lambda t: float(xi2_average_nofeedback(t, N, eta)),
        bracket=(grid[i - 1], grid[i], grid[i + 1]),
        method="golden",
        options={"xtol": tol / max(grid[i], 1e-300)},
    )
    return float(res.x), float(res.fun)


def asymptotic_optimum_nofeedback(N, eta=1.0) -> tuple[float, float]:
    """Large-N ``(tau_m, xi2_m) = ((eta N)^(-1/3), 1.5 (eta N)^(-2/3))``."""
    eN = eta * N
    return eN ** (-1 / 3), 1.5 * eN ** (-2 / 3)


def xi2_feedback(tau, N, eta=1.0):
    """Approximate squeezing with continuous feedback, ``e^tau / (1 + eta N tau)``."""
    tau = np.asarray(tau, dtype=float)
    return np.exp(tau) / (1 + eta * N * tau)


def feedback_optimum(N, eta=1.0) -> tuple[float, float]:
    """``(xi2_F_m, tau_F_m) = (e / (eta N), 1)``."""
    return math.e / (eta * N), 1.0


def t_opt_full(N, kappa_eff, kappa, b=0.9, beta=0.32, c=3.0):
    """Optimal time of the full model: power law plus cavity-filling offset."""
    return b / (kappa_eff * np.asarray(N, dtype=float) ** beta) + 2 * c / kappa


def gaussian_jz_distribution(q, N):
    """Large-J distribution of conditional ``<Jz>_c``: normal, variance ``N/4``."""
    var = N / 4
    q = np.asarray(q, dtype=float)
    return np.exp(-(q**2) / (2 * var)) / np.sqrt(2 * np.pi * var)


def exponent_relation(delta_exp, gamma_exp, eps_exp, f=1.0) -> dict[str, float]:
    """Minimum of ``Q^-d + f Q^g / N^e`` over ``Q``.

    Returns the scaling exponents ``alpha`` (of the minimum) and ``beta`` (of
    the optimal time, with ``Q ~ N t``) and the prefactors of ``xi2_m`` and
    of the optimal ``Q``.
    """
    d, g, e = delta_exp, gamma_exp, eps_exp
    q_pref = (d / (f * g)) ** (1 / (g + d))
    xi_pref = (1 + d / g) * (d / (f * g)) ** (-d / (g + d))
    return {
        "alpha": d * e / (g + d),
        "beta": 1 - e / (g + d),
        "xi2_prefactor": xi_pref,
        "q_prefactor": q_pref,
    }


@dataclass(frozen=True)
class SrEstimates:
    delta_opt: float
    n_lim: float
    P_lim: float  # W
    t_m: float  # s
    xi2_m: float
    xi2_m_db: float
    NC0: float


def sr_estimates(g, kappa, gamma, omega_d, N, f) -> SrEstimates:
    """Design numbers for the V-level (Sr-like) clock configuration.

    Rates are angular frequencies in s^-1. ``f`` is the attenuation factor
    ``n_lim / n0``.
    """
    for name, v in (("g", g), ("kappa", kappa), ("gamma", gamma), ("omega_d", omega_d), ("N", N), ("f", f)):
        if v <= 0:
            raise ValueError(f"{name} must be positive")
    xi2 = 1.5 / N ** (2 / 3)
    return SrEstimates(
        delta_opt=g**2 * N / kappa,
        n_lim=(g * N / kappa) ** 2,
        P_lim=g**2 * N**2 * HBAR * omega_d / (4 * kappa),
        t_m=f * kappa / (4 * g**2 * N ** (1 / 3)) + 6 / kappa,
        xi2_m=xi2,
        xi2_m_db=to_db(xi2),
        NC0=N * 4 * g**2 / (kappa * gamma),
    )


def to_db(xi2):
    """Squeezing in dB, positive for ``xi2 < 1``."""
    return -10.0 * np.log10(xi2)
