"""Compiled inner loops for the trajectory integrators.

Every kernel advances a state in place over the Wiener increments it is
given and returns ``(sum of I dt, failed_step)``; ``failed_step`` is -1 on
success, otherwise the index of the step that produced a non-finite or
vanishing norm. Scheme codes: 0 Euler-Maruyama, 1 Milstein, 2 implicit
Milstein.
"""

import math

import numpy as np
from numba import njit

EULER_MARUYAMA = 0
MILSTEIN = 1
IMPLICIT_MILSTEIN = 2


@njit(cache=True, nogil=True)
def removed_sse_chunk(psi, m, kappa, dt, dW, scheme):
    """Pure-state SSE with collapse operator ``sqrt(kappa) Jz`` (diagonal).

    The renormalisation of each step is folded into the update of the next
    one, so every step is a single pass over the amplitudes.
    """
    sk = math.sqrt(kappa)
    n = psi.size
    inv_den = np.empty(n)
    for i in range(n):
        inv_den[i] = 1.0 / (1.0 + 0.5 * kappa * m[i] ** 2 * dt) if scheme == 2 else 1.0
    norm2 = 0.0
    weighted = 0.0
    for i in range(n):
        p = psi[i].real ** 2 + psi[i].imag ** 2
        norm2 += p
        weighted += p * m[i]
    total = 0.0
    for s in range(dW.size):
        if not (norm2 > 1e-300 and norm2 < 1e300):
            return total, max(s - 1, 0)
        w = dW[s]
        jz = weighted / norm2
        scale = 1.0 / math.sqrt(norm2)
        total += 2.0 * sk * jz * dt + w
        c0 = 1.0 - 0.5 * kappa * jz * jz * dt
        c1 = kappa * jz * dt
        c2 = 0.5 * kappa * dt if scheme != 2 else 0.0
        c3 = 0.5 * kappa * (w * w - dt) if scheme != 0 else 0.0
        norm2 = 0.0
        weighted = 0.0
        for i in range(n):
            d = m[i] - jz
            f = (c0 + c1 * m[i] - c2 * m[i] * m[i] + sk * d * w + c3 * d * d) * inv_den[i] * scale
            v = psi[i] * f
            psi[i] = v
            p = v.real ** 2 + v.imag ** 2
            norm2 += p
            weighted += p * m[i]
    if not (norm2 > 1e-300 and norm2 < 1e300):
        return total, dW.size - 1
    scale = 1.0 / math.sqrt(norm2)
    for i in range(n):
        psi[i] *= scale
    return total, -1


@njit(cache=True, nogil=True)
def removed_sme_chunk(rho, m, kappa, eta, dt, dW, scheme):
    """Density-matrix SME ``kappa D[Jz] dt + sqrt(eta kappa) H[Jz] dW``."""
    se = math.sqrt(eta * kappa)
    n = m.size
    total = 0.0
    for s in range(dW.size):
        w = dW[s]
        jz = 0.0
        for i in range(n):
            jz += rho[i, i].real * m[i]
        total += 2.0 * se * jz * dt + w
        for i in range(n):
            for j in range(n):
                sm = m[i] + m[j] - 2.0 * jz
                dm = m[i] - m[j]
                if scheme == 0:
                    f = 1.0 - 0.5 * kappa * dm * dm * dt + se * sm * w
                elif scheme == 1:
                    f = 1.0 - 0.5 * kappa * dm * dm * dt + se * sm * w + 0.5 * eta * kappa * sm * sm * (w * w - dt)
                else:
                    f = (1.0 + se * sm * w + 0.5 * eta * kappa * sm * sm * (w * w - dt)) / (
                        1.0 + 0.5 * kappa * dm * dm * dt
                    )
                rho[i, j] *= f
        tr = 0.0
        for i in range(n):
            tr += rho[i, i].real
        if not (abs(tr) > 1e-12 and abs(tr) < 1e300):
            return total, s
        inv = 1.0 / tr
        for i in range(n):
            for j in range(n):
                rho[i, j] *= inv
    return total, -1


def tridiagonal_factors(d_c, m, chi, eps, kappa, dt):
    """Thomas-algorithm factors of ``I - dt(-i H - kappa n / 2)`` for every
    spin index. Returns ``(off, cprime, inv_denom)``; ``off[k]`` couples
    photon numbers ``k - 1`` and ``k``.
    """
    k = np.arange(d_c, dtype=float)
    off = 1j * eps * dt * np.sqrt(k)  # off[0] unused
    diag = 1.0 + dt * (1j * chi * np.outer(k, m) + 0.5 * kappa * k[:, None])
    cprime = np.zeros((d_c, m.size), dtype=complex)
    inv_denom = np.zeros((d_c, m.size), dtype=complex)
    inv_denom[0] = 1.0 / diag[0]
    if d_c > 1:
        cprime[0] = off[1] * inv_denom[0]
    for i in range(1, d_c):
        denom = diag[i] - off[i] * cprime[i - 1]
        inv_denom[i] = 1.0 / denom
        if i + 1 < d_c:
            cprime[i] = off[i + 1] * inv_denom[i]
    return off, cprime, inv_denom


@njit(cache=True, nogil=True)
def full_sse_chunk(psi, m, chi, eps, kappa, dt, dW, scheme, off, cprime, inv_denom):
    """Pure-state SSE of the driven dispersive cavity, ``L = sqrt(kappa) c``.

    ``psi`` has shape ``(d_c, N + 1)`` (photon index first). As in
    :func:`removed_sse_chunk` the renormalisation is applied lazily.
    """
    d_c, nj = psi.shape
    sk = math.sqrt(kappa)
    sq = np.sqrt(np.arange(d_c + 1).astype(np.float64))
    cur = psi.copy()
    new = np.empty_like(psi)
    bpsi = np.zeros((d_c + 1, nj), dtype=np.complex128)
    norm2 = 0.0
    xr = 0.0
    for k in range(d_c):
        for j in range(nj):
            v = cur[k, j]
            norm2 += v.real ** 2 + v.imag ** 2
            if k + 1 < d_c:
                u = cur[k + 1, j]
                xr += sq[k + 1] * (v.real * u.real + v.imag * u.imag)
    total = 0.0
    for s in range(dW.size):
        if not (norm2 > 1e-300 and norm2 < 1e300):
            return total, max(s - 1, 0)
        w = dW[s]
        scale = 1.0 / math.sqrt(norm2)
        xbar = 2.0 * sk * xr / norm2
        total += xbar * dt + w
        # B psi = (L - xbar / 2) psi, unnormalised; row d_c stays zero
        for k in range(d_c - 1):
            a = sk * sq[k + 1]
            for j in range(nj):
                bpsi[k, j] = a * cur[k + 1, j] - 0.5 * xbar * cur[k, j]
        for j in range(nj):
            bpsi[d_c - 1, j] = -0.5 * xbar * cur[d_c - 1, j]
        mil = 0.5 * (w * w - dt) if scheme != 0 else 0.0
        c_psi = 1.0 + 0.125 * xbar * xbar * dt
        c_b = 0.5 * xbar * dt + w - 0.5 * xbar * mil
        for k in range(d_c):
            a = sk * sq[k + 1] * mil
            for j in range(nj):
                v = c_psi * cur[k, j] + c_b * bpsi[k, j] + a * bpsi[k + 1, j]
                if scheme != 2:
                    h = chi * k * m[j] * cur[k, j]
                    if k + 1 < d_c:
                        h += eps * sq[k + 1] * cur[k + 1, j]
                    if k > 0:
                        h += eps * sq[k] * cur[k - 1, j]
                    v += (-1j * h - 0.5 * kappa * k * cur[k, j]) * dt
                    new[k, j] = v * scale
                elif k == 0:
                    new[k, j] = v * scale * inv_denom[0, j]
                else:
                    new[k, j] = (v * scale - off[k] * new[k - 1, j]) * inv_denom[k, j]
        norm2 = 0.0
        xr = 0.0
        for k in range(d_c - 1, -1, -1):
            for j in range(nj):
                v = new[k, j]
                if scheme == 2 and k + 1 < d_c:
                    v = v - cprime[k, j] * new[k + 1, j]
                    new[k, j] = v
                norm2 += v.real ** 2 + v.imag ** 2
                if k + 1 < d_c:
                    u = new[k + 1, j]
                    xr += sq[k + 1] * (v.real * u.real + v.imag * u.imag)
        cur, new = new, cur
    if not (norm2 > 1e-300 and norm2 < 1e300):
        return total, dW.size - 1
    scale = 1.0 / math.sqrt(norm2)
    for k in range(d_c):
        for j in range(nj):
            psi[k, j] = cur[k, j] * scale
    return total, -1
