"""Conditional (homodyne) trajectories of the dispersive cavity model and of
the model with the cavity adiabatically removed.

Two integration routes exist. The ``kernel`` engine runs compiled loops
specialised to each model; the ``generic`` engine steps sparse
:class:`~qndsqueeze.operators.Operator` objects through :func:`sse_step` and
:func:`sme_step_cavity_removed`. Both consume identical noise for a given seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .operators import (
    HilbertSpace,
    ModelParams,
    Operator,
    QuantumState,
    coherent_spin_state,
    dicke_m_values,
    dicke_space,
    dicke_spin_ops,
    fock_cutoff,
    fock_ops,
    fock_vacuum,
    identity,
    ladder_coefficients,
    product_state,
    tensor,
)
from .theory import optimum_nofeedback

__all__ = [
    "MODELS",
    "SCHEMES",
    "IntegrationError",
    "SimConfig",
    "MeasurementChannel",
    "TrajectoryRecord",
    "select_timestep",
    "suggest_total_time",
    "wiener_increments",
    "sse_step",
    "sme_step_cavity_removed",
    "photocurrent_increment",
    "measurement_channel",
    "initial_state",
    "state_moments",
    "run_trajectory",
]

MODELS = ("full", "cavity_removed")
SCHEMES = ("euler_maruyama", "milstein", "implicit_milstein")
STATE_REPRS = ("pure_sse", "mixed_sme")
_SCHEME_CODE = {name: i for i, name in enumerate(SCHEMES)}

# Dicke populations below this fraction of the largest are dropped from the
# cavity-removed state (see run_trajectory)
_SUPPORT_CUTOFF = 1e-30


class IntegrationError(RuntimeError):
    """A trajectory produced NaN, a vanishing norm or an unsolved implicit step."""

    def __init__(self, reason: str, seed: int | None = None, step: int | None = None):
        self.reason = reason
        self.seed = seed
        self.step = step
        super().__init__(f"{reason} (seed={seed}, step={step})")


@dataclass(frozen=True)
class SimConfig:
    """Physical parameters plus numerical controls of one trajectory.

    ``total_time`` is in units of ``1/delta``; ``None`` picks a window that
    covers the expected optimum. ``kappa_eff`` overrides the measurement
    rate derived from ``params`` (cavity-removed model only).
    ``state_repr`` defaults to ``pure_sse`` for ``eta = 1`` and to
    ``mixed_sme`` otherwise.
    """

    params: ModelParams
    model: str = "cavity_removed"
    scheme: str = "implicit_milstein"
    R: float = 1000.0
    total_time: float | None = None
    sample_stride: int | None = None
    seed: int = 0
    state_repr: str | None = None
    kappa_eff: float | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.R >= 100:
            raise ValueError(f"resolution R must be >= 100, got {self.R!r}")
        if self.total_time is not None and not self.total_time > 0:
            raise ValueError("total_time must be positive")
        if self.sample_stride is not None and self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")
        if self.kappa_eff is not None:
            if self.model != "cavity_removed":
                raise ValueError("kappa_eff override only applies to the cavity-removed model")
            if not self.kappa_eff > 0:
                raise ValueError("kappa_eff must be positive")
        repr_ = self.state_repr
        if repr_ is None:
            repr_ = "pure_sse" if self.params.eta == 1.0 else "mixed_sme"
            object.__setattr__(self, "state_repr", repr_)
        if repr_ not in STATE_REPRS:
            raise ValueError(f"state_repr must be one of {STATE_REPRS}")
        if repr_ == "pure_sse" and self.params.eta != 1.0:
            raise ValueError("pure-state unravelling requires eta = 1")
        if repr_ == "mixed_sme" and self.model == "full":
            raise ValueError("the full model is integrated as a pure state (eta = 1) only")
        if self.model == "full" and self.params.kappa <= 0:
            raise ValueError("full model needs kappa > 0")

    @property
    def measurement_rate(self) -> float:
        """``kappa_eff`` of the cavity-removed model."""
        if self.kappa_eff is not None:
            return self.kappa_eff
        return self.params.kappa_eff

    @property
    def d_c(self) -> int:
        return fock_cutoff(self.params.n0)

    def with_(self, **changes) -> SimConfig:
        return replace(self, **changes)


@dataclass(frozen=True)
class MeasurementChannel:
    L: Operator
    rate: float
    efficiency: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("measurement rate must be positive")
        if self.phase != 0:
            raise ValueError("only the phase-0 quadrature is supported")


@dataclass
class TrajectoryRecord:
    """Sampled conditional moments of one trajectory.

    ``moments`` columns follow :data:`qndsqueeze.squeezing.MOMENT_COLUMNS`;
    ``photocurrent[i]`` is the mean current over the interval ending at
    ``times[i]`` (0 for the initial sample).
    """

    seed: int
    N: int
    times: np.ndarray
    moments: np.ndarray
    photocurrent: np.ndarray
    dt: float
    xi2: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        from .squeezing import MOMENT_COLUMNS

        return self.moments[:, MOMENT_COLUMNS.index(name)]


# ----------------------------------------------------------------- time grid


def select_timestep(config: SimConfig) -> float:
    """``dt = 2 pi / (R omega_max)`` with ``omega_max`` the fastest rate of the model."""
    p = config.params
    if config.model == "cavity_removed":
        k = config.measurement_rate
        omega = max(k * p.N, k)
    else:
        shift = p.g**2 * p.N / p.delta
        omega = max(p.n0 * shift, p.N * shift, p.kappa, p.epsilon)
    if not omega > 0:
        raise ValueError("fastest rate is zero; nothing to resolve")
    return 2 * math.pi / (config.R * omega)


def suggest_total_time(config: SimConfig, span: float = 2.5, c: float = 3.0) -> float:
    """A window reaching ``span`` times the expected optimal time.

    The full model adds the cavity filling time ``2 c / kappa``.
    """
    p = config.params
    tau_m, _ = optimum_nofeedback(p.N, p.eta)
    if config.model == "cavity_removed":
        return span * tau_m / config.measurement_rate
    return 2 * c / p.kappa + span * tau_m / p.kappa_eff


def _grid(config: SimConfig) -> tuple[float, int, int]:
    dt = select_timestep(config)
    T = config.total_time if config.total_time is not None else suggest_total_time(config)
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    stride = config.sample_stride or max(1, round(n_steps / 400))
    n_samples = math.ceil(n_steps / stride)
    return dt, stride, n_samples


def wiener_increments(rng: np.random.Generator, n: int, dt: float) -> np.ndarray:
    """``n`` independent increments of variance ``dt``."""
    return rng.standard_normal(n) * math.sqrt(dt)


# ---------------------------------------------------------- operator route


def measurement_channel(config: SimConfig) -> MeasurementChannel:
    p = config.params
    if config.model == "full":
        L = math.sqrt(p.kappa) * tensor(fock_ops(config.d_c)["c"], identity(dicke_space(p.N)))
        return MeasurementChannel(L, p.kappa, p.eta)
    k = config.measurement_rate
    return MeasurementChannel(math.sqrt(k) * dicke_spin_ops(p.N)["Jz"], k, p.eta)


def _x_bar(psi, L):
    return 2.0 * float(np.vdot(psi, L @ psi).real)


def sse_step(
    psi: np.ndarray,
    H: Operator | None,
    channel: MeasurementChannel,
    dt: float,
    dW: float,
    scheme: str = "implicit_milstein",
    tol: float = 1e-10,
    max_iter: int = 50,
) -> np.ndarray:
    """One normalised homodyne SSE step; returns the renormalised state.

    ``implicit_milstein`` treats ``-iH - L^dag L / 2`` implicitly (fixed-point
    iteration, falling back to a sparse direct solve if it stalls) and keeps
    the expectation-dependent terms explicit.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    L = channel.L.matrix
    psi = np.asarray(psi, dtype=complex)
    xbar = _x_bar(psi, L)
    lpsi = L @ psi
    bpsi = lpsi - 0.5 * xbar * psi
    explicit = (0.5 * xbar * lpsi - 0.125 * xbar**2 * psi) * dt + bpsi * dW
    if scheme != "euler_maruyama":
        explicit = explicit + 0.5 * (L @ bpsi - 0.5 * xbar * bpsi) * (dW * dW - dt)
    A0 = -0.5 * (L.conj().T @ L)
    if H is not None:
        A0 = A0 - 1j * H.matrix
    if scheme != "implicit_milstein":
        new = psi + A0 @ psi * dt + explicit
    else:
        rhs = psi + explicit
        new = rhs.copy()
        converged = False
        for _ in range(max_iter):
            nxt = rhs + dt * (A0 @ new)
            if np.linalg.norm(nxt - new) <= tol * max(np.linalg.norm(nxt), 1.0):
                new = nxt
                converged = True
                break
            new = nxt
        if not converged:
            M = sp.identity(psi.size, dtype=complex, format="csc") - dt * sp.csc_array(A0)
            new = spla.spsolve(M, rhs)
    norm = np.linalg.norm(new)
    if not (np.isfinite(norm) and norm > 1e-150):
        raise IntegrationError("state norm collapsed or became non-finite")
    return new / norm


def sme_step_cavity_removed(
    rho: np.ndarray, m: np.ndarray, kappa: float, eta: float, dt: float, dW: float, scheme: str = "implicit_milstein"
) -> np.ndarray:
    """One step of ``d rho = kappa D[Jz] rho dt + sqrt(eta kappa) H[Jz] rho dW``.

    ``rho`` is expressed in the ``Jz`` eigenbasis with eigenvalues ``m``, so
    every superoperator acts elementwise.
    """
    rho = np.asarray(rho, dtype=complex)
    m = np.asarray(m, dtype=float)
    jz = float(np.real(np.diag(rho)) @ m)
    s = m[:, None] + m[None, :] - 2 * jz
    d2 = (m[:, None] - m[None, :]) ** 2
    se = math.sqrt(eta * kappa)
    stoch = se * s * dW
    if scheme != "euler_maruyama":
        stoch = stoch + 0.5 * eta * kappa * s**2 * (dW * dW - dt)
    if scheme == "implicit_milstein":
        new = rho * (1 + stoch) / (1 + 0.5 * kappa * d2 * dt)
    else:
        new = rho * (1 - 0.5 * kappa * d2 * dt + stoch)
    tr = float(np.trace(new).real)
    if not (np.isfinite(tr) and abs(tr) > 1e-12):
        raise IntegrationError("trace collapsed or became non-finite")
    return new / tr


def photocurrent_increment(state, channel: MeasurementChannel, dt: float, dW: float) -> float:
    """Measured ``I dt = sqrt(eta) <L + L^dag> dt + dW``.

    With ``L = sqrt(kappa) c`` this is the cavity homodyne current; with
    ``L = sqrt(kappa_eff) Jz`` it becomes ``2 sqrt(eta kappa_eff) <Jz> dt + dW``.
    """
    data = state.data if isinstance(state, QuantumState) else np.asarray(state)
    L = channel.L.matrix
    if data.ndim == 1:
        xbar = _x_bar(data, L)
    else:
        xbar = 2.0 * float(np.trace(L @ data).real)
    return math.sqrt(channel.efficiency) * xbar * dt + dW


# ------------------------------------------------------------------- moments


def _moments_from_bands(P, C1, C2, N, j0=0):
    """Spin moments from the Dicke populations ``P_j`` and the first and second
    coherences ``C1_j = sum conj(psi_{j-1}) psi_j``, ``C2_j`` likewise.

    Indices are global Dicke indices offset by ``j0``.
    """
    J = N / 2
    nj = P.size
    m = J - (j0 + np.arange(nj))
    a = ladder_coefficients(N, m)
    jz = float(P @ m)
    jz2 = float(P @ m**2)
    jp = complex(np.sum(a[1:] * C1[1:])) if nj > 1 else 0j
    jp2 = complex(np.sum(a[2:] * a[1:-1] * C2[2:])) if nj > 2 else 0j
    q = complex(np.sum(a[1:] * (2 * m[1:] + 1) * C1[1:])) if nj > 1 else 0j
    rest = 0.5 * (J * (J + 1) - jz2)
    return np.array(
        [
            jp.real,
            jp.imag,
            jz,
            0.5 * jp2.real + rest,
            -0.5 * jp2.real + rest,
            jz2,
            0.5 * jp2.imag,
            0.5 * q.real,
            0.5 * q.imag,
        ]
    )


def _bands_pure(psi2d):
    P = np.sum(np.abs(psi2d) ** 2, axis=0)
    nj = psi2d.shape[1]
    C1 = np.zeros(nj, dtype=complex)
    C2 = np.zeros(nj, dtype=complex)
    if nj > 1:
        C1[1:] = np.sum(psi2d[:, :-1].conj() * psi2d[:, 1:], axis=0)
    if nj > 2:
        C2[2:] = np.sum(psi2d[:, :-2].conj() * psi2d[:, 2:], axis=0)
    return P, C1, C2


def _bands_mixed(rho):
    # rho[j, j-1] plays the role of conj(psi_{j-1}) psi_j
    P = np.real(np.diag(rho)).copy()
    C1 = np.zeros(P.size, dtype=complex)
    C2 = np.zeros(P.size, dtype=complex)
    if P.size > 1:
        C1[1:] = np.diag(rho, -1)
    if P.size > 2:
        C2[2:] = np.diag(rho, -2)
    return P, C1, C2


def state_moments(state, N: int, d_c: int | None = None, j0: int = 0) -> np.ndarray:
    """Moment row ``(Jx, Jy, Jz, Jx2, Jy2, Jz2, JxJy, JxJz, JyJz, n)`` of a state.

    A product-space vector needs ``d_c``; ``n`` is 0 for Dicke-only states.
    ``j0`` is the global index of the first Dicke amplitude when the vector
    covers only part of the sector.
    """
    data = state.data if isinstance(state, QuantumState) else np.asarray(state)
    if data.ndim == 2 and data.shape[0] == data.shape[1] and d_c is None:
        row = _moments_from_bands(*_bands_mixed(data), N, j0)
        return np.append(row, 0.0)
    psi2d = data.reshape(d_c, -1) if d_c is not None else data.reshape(1, -1)
    row = _moments_from_bands(*_bands_pure(psi2d), N, j0)
    n = 0.0
    if d_c is not None:
        n = float(np.arange(d_c) @ np.sum(np.abs(psi2d) ** 2, axis=1))
    return np.append(row, n)


# ----------------------------------------------------------------- trajectory


def initial_state(config: SimConfig) -> QuantumState:
    """CSS along +x, tensored with the empty cavity for the full model."""
    css = coherent_spin_state(config.params.N, math.pi / 2, 0.0)
    if config.model == "full":
        return product_state(fock_vacuum(config.d_c), css)
    if config.state_repr == "mixed_sme":
        return css.to_density_matrix()
    return css


def _support(probabilities: np.ndarray) -> tuple[int, int]:
    keep = np.flatnonzero(probabilities > _SUPPORT_CUTOFF * probabilities.max())
    return int(keep[0]), int(keep[-1]) + 1


def _shrink(psi, m, j0, kind, factors=None):
    """Drop negligible Dicke populations from both ends of the window.

    ``kind`` is ``pure``, ``mixed`` or ``product`` (photon index first).
    """
    if kind == "mixed":
        probs = np.real(np.diag(psi))
    elif kind == "product":
        probs = np.sum(np.abs(psi) ** 2, axis=0)
    else:
        probs = np.abs(psi) ** 2
    lo, hi = _support(probs)
    if lo == 0 and hi == m.size:
        return psi, m, j0, factors
    m = m[lo:hi].copy()
    if kind == "mixed":
        return np.ascontiguousarray(psi[lo:hi, lo:hi]), m, j0 + lo, factors
    if kind == "product":
        off, cprime, inv_denom = factors
        factors = (off, np.ascontiguousarray(cprime[:, lo:hi]), np.ascontiguousarray(inv_denom[:, lo:hi]))
        return np.ascontiguousarray(psi[:, lo:hi]), m, j0 + lo, factors
    return psi[lo:hi].copy(), m, j0 + lo, factors


def _window_operators(config, m):
    """Hamiltonian and channel restricted to the Dicke window with eigenvalues ``m``."""
    p = config.params
    jz = sp.diags(m.astype(complex), format="csr")
    if config.model == "cavity_removed":
        kappa = config.measurement_rate
        return None, MeasurementChannel(Operator(HilbertSpace("dicke", N=m.size - 1), jz * math.sqrt(kappa)), kappa, p.eta)
    d_c = config.d_c
    f = fock_ops(d_c)
    eye = sp.identity(m.size, dtype=complex, format="csr")
    space = HilbertSpace("product", N=m.size - 1, d_c=d_c)
    H = p.coupling * sp.kron(f["n"].matrix, jz) + p.epsilon * sp.kron((f["c"] + f["cdag"]).matrix, eye)
    L = math.sqrt(p.kappa) * sp.kron(f["c"].matrix, eye)
    return Operator(space, H), MeasurementChannel(Operator(space, L), p.kappa, p.eta)


def _generic_chunk(psi, m, config, dW, dt, mixed):
    """Advance with the operator-level step functions; mirrors the kernels."""
    p = config.params
    kappa = config.measurement_rate if config.model == "cavity_removed" else p.kappa
    shape = psi.shape
    H, channel = _window_operators(config, m)
    state = psi if mixed else psi.reshape(-1).astype(complex)
    total = 0.0
    for i, w in enumerate(dW):
        try:
            if mixed:
                total += 2 * math.sqrt(p.eta * kappa) * float(np.real(np.diag(state)) @ m) * dt + w
                state = sme_step_cavity_removed(state, m, kappa, p.eta, dt, w, config.scheme)
            else:
                total += photocurrent_increment(state, channel, dt, w)
                state = sse_step(state, H, channel, dt, w, config.scheme)
        except IntegrationError:
            return state if mixed else state.reshape(shape), total, i
    return (state if mixed else state.reshape(shape)), total, -1


def run_trajectory(config: SimConfig, seed: int | None = None, engine: str = "kernel") -> TrajectoryRecord:
    """Integrate one conditional trajectory.

    The Wiener increments come from ``numpy``'s PCG64 seeded with ``seed``
    (defaults to ``config.seed``); one block of ``sample_stride`` normals is
    drawn per sampling interval, so records are bit-reproducible.

    Only the Dicke populations above ``1e-30`` of the largest one are
    integrated; the window is re-trimmed after every sampling interval.
    Each population is a martingale under the measurement, so one that ever
    grows from ``p`` to ``q`` does so with probability at most ``p / q``.
    """
    if engine not in ("kernel", "generic"):
        raise ValueError("engine must be 'kernel' or 'generic'")
    seed = config.seed if seed is None else int(seed)
    p = config.params
    dt, stride, n_samples = _grid(config)
    rng = np.random.Generator(np.random.PCG64(seed))
    times = np.arange(n_samples + 1) * (stride * dt)
    moments = np.empty((n_samples + 1, 10))
    current = np.zeros(n_samples + 1)
    code = _SCHEME_CODE[config.scheme]
    state = initial_state(config)
    full = config.model == "full"
    mixed = config.state_repr == "mixed_sme"
    m = dicke_m_values(p.N)
    j0 = 0

    if full:
        d_c = config.d_c
        psi = state.data.reshape(d_c, p.N + 1).copy()
        factors = _kernels.tridiagonal_factors(d_c, m, p.coupling, p.epsilon, p.kappa, dt)
    else:
        kappa = config.measurement_rate
        psi = state.data.copy()
        if not mixed and not np.any(psi.imag):
            # the update factors are real, so a real state stays real
            psi = psi.real.copy()
    kind = "product" if full else ("mixed" if mixed else "pure")
    psi, m, j0, factors = _shrink(psi, m, j0, kind, factors if full else None)
    support_start = (j0, j0 + m.size)

    def sample():
        if full:
            return state_moments(psi, p.N, d_c=d_c, j0=j0)
        row = state_moments(psi, p.N, j0=j0)
        row[9] = p.n0 if p.kappa > 0 else 0.0
        return row

    moments[0] = sample()
    for s in range(1, n_samples + 1):
        dW = wiener_increments(rng, stride, dt)
        if engine == "generic":
            psi, total, bad = _generic_chunk(psi, m, config, dW, dt, mixed)
        elif full:
            total, bad = _kernels.full_sse_chunk(psi, m, p.coupling, p.epsilon, p.kappa, dt, dW, code, *factors)
        elif mixed:
            total, bad = _kernels.removed_sme_chunk(psi, m, kappa, p.eta, dt, dW, code)
        else:
            total, bad = _kernels.removed_sse_chunk(psi, m, kappa, dt, dW, code)
        if bad >= 0:
            raise IntegrationError("state norm collapsed or became non-finite", seed, (s - 1) * stride + bad)
        current[s] = total / (stride * dt)
        row = sample()
        if not np.all(np.isfinite(row)):
            raise IntegrationError("non-finite moments", seed, s * stride)
        moments[s] = row
        psi, m, j0, factors = _shrink(psi, m, j0, kind, factors if full else None)
    return TrajectoryRecord(
        seed=seed,
        N=p.N,
        times=times,
        moments=moments,
        photocurrent=current,
        dt=dt,
        meta={
            "stride": stride,
            "support_start": support_start,
            "support_end": (j0, j0 + m.size),
            "model": config.model,
            "scheme": config.scheme,
        },
    )
