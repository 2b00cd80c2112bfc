"""Independent reference values for the test-suite.

Closed forms are re-typed here in mpmath at 40 digits so that the package's
numpy versions are checked against a separate implementation. Nothing in
this file imports qndsqueeze.
"""

import math

import mpmath as mp
import numpy as np

mp.mp.dps = 40

# dense 10^6-point scan of the trajectory-averaged squeezing on tau in [1e-6, 1]
FROZEN_OPTIMA = {
    160: (0.161818838182, 0.060017908592944126),
    1000: (0.094156905844, 0.016511466988197134),
    10000: (0.045255954745, 0.0033829919813071862),
}
SCAN_SPACING = (1.0 - 1e-6) / 1_000_000


def xi2_average(tau, N, eta=1):
    tau, N, eta = mp.mpf(tau), mp.mpf(N), mp.mpf(eta)
    et = mp.e**tau
    return (1 - et / N) * et / (1 + eta * N * tau) + (N * (et - 1) ** 2 + et**2 - 1) / (2 * N)


def xi2_conditional(tau, jz, N, eta=1):
    tau, jz, N, eta = mp.mpf(tau), mp.mpf(jz), mp.mpf(N), mp.mpf(eta)
    J = N / 2
    var_z = 1 / (1 + 2 * eta * J * tau)
    var_x = J * (1 - mp.e**-tau) ** 2 + (1 - mp.e ** (-2 * tau)) / 2
    q = jz**2 * mp.e**tau / J**2
    return mp.e**tau * (var_z * (1 - q) + var_x * q)


def xi2_feedback(tau, N, eta=1):
    tau = mp.mpf(tau)
    return mp.e**tau / (1 + mp.mpf(eta) * N * tau)


def moments(tau, N, eta=1):
    tau, J = mp.mpf(tau), mp.mpf(N) / 2
    return {
        "Jx": J * mp.e ** (-tau / 2),
        "var_Jx": J * (1 - mp.e**-tau) ** 2 + (1 - mp.e ** (-2 * tau)) / 2,
        "var_Jy": J * (1 - mp.e ** (-2 * tau)) + (1 + mp.e ** (-2 * tau)) / 2,
        "var_Jz": 1 / (1 + 2 * J * mp.mpf(eta) * tau),
        "contrast": mp.e**-tau,
    }


def gaussian_density(q, N):
    var = mp.mpf(N) / 4
    return mp.e ** (-mp.mpf(q) ** 2 / (2 * var)) / mp.sqrt(2 * mp.pi * var)


def dense_scan_optimum(N, eta=1.0, points=1_000_001):
    t = np.linspace(1e-6, 1.0, points)
    et = np.exp(t)
    v = (1 - et / N) * et / (1 + eta * N * t) + (N * (et - 1) ** 2 + et**2 - 1) / (2 * N)
    i = int(np.argmin(v))
    return float(t[i]), float(v[i])


def free_cavity_photons(t, epsilon, kappa):
    """<n>(t) of a resonantly driven damped cavity from vacuum: |alpha(t)|^2."""
    return (2 * epsilon / kappa) ** 2 * (1 - np.exp(-kappa * np.asarray(t) / 2)) ** 2


def free_cavity_amplitude(t, epsilon, kappa):
    return -(2j * epsilon / kappa) * (1 - np.exp(-kappa * np.asarray(t) / 2))


def fill_constant(fraction=0.9):
    """kappa * t / 2 at which the free-cavity photon number reaches ``fraction`` n0.

    Root-solved on the closed form rather than inverted by hand.
    """
    return float(mp.findroot(lambda x: (1 - mp.e**-x) ** 2 - fraction, 3))


def splitmix64_stream(state, n):
    """Reference SplitMix64 generator (Steele, Lea and Flood)."""
    mask = (1 << 64) - 1
    out = []
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out.append(z ^ (z >> 31))
    return out


def removed_filter_exact(psi0, m, kappa, dW_fine, fine_dt):
    """Final state of the Jz-measurement filter driven by ``dW_fine``.

    The linear (unnormalised) equation integrates to
    ``phi_m = phi_m(0) exp(sqrt(kappa) m Y - kappa m^2 t)`` where the record
    ``dY = 2 sqrt(kappa) <Jz> dt + dW`` has additive noise, so a fine Euler
    grid for ``Y`` is first-order accurate in the strong sense.
    """
    sk = math.sqrt(kappa)
    base = np.log(np.abs(psi0) + 1e-300)
    Y = 0.0
    t = 0.0
    for w in dW_fine:
        lw = base + sk * m * Y - kappa * m * m * t
        p = np.exp(2 * (lw - lw.max()))
        p /= p.sum()
        Y += 2 * sk * float(p @ m) * fine_dt + w
        t += fine_dt
    lw = sk * m * Y - kappa * m * m * t
    amp = psi0 * np.exp(lw - lw.max())
    return amp / np.linalg.norm(amp)
