"""Hilbert spaces, collective-spin and cavity operators, initial states and
model Hamiltonians.

Basis conventions (fixed so that matrix fixtures are reproducible):

* Dicke sector of ``N`` spins: dimension ``N + 1``, index ``j`` holds
  ``m = J - j`` (``m`` descending, ``J = N/2``).
* Truncated Fock space: index ``k`` is the photon number (ascending).
* Product space ``fock (x) dicke``: flat index ``k * (N + 1) + j``, i.e. a
  state vector reshapes to a ``(d_c, N + 1)`` array.

Frequencies are expressed in units of the detuning ``delta`` (usually 1).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln, xlogy

__all__ = [
    "HilbertSpace",
    "Operator",
    "QuantumState",
    "ModelParams",
    "ThreeLevelCoefficients",
    "dicke_space",
    "fock_space",
    "product_space",
    "dicke_spin_ops",
    "dicke_m_values",
    "ladder_coefficients",
    "fock_ops",
    "fock_cutoff",
    "identity",
    "tensor",
    "coherent_spin_state",
    "fock_vacuum",
    "product_state",
    "build_lambda_hamiltonian",
    "build_v_hamiltonian",
    "effective_coefficients_from_three_level",
]


@dataclass(frozen=True)
class HilbertSpace:
    kind: str
    N: int | None = None
    d_c: int | None = None

    def __post_init__(self):
        if self.kind not in ("dicke", "fock", "product"):
            raise ValueError(f"unknown space kind {self.kind!r}")
        if self.kind in ("dicke", "product"):
            _check_atom_number(self.N)
        if self.kind in ("fock", "product"):
            if not isinstance(self.d_c, (int, np.integer)) or self.d_c < 2:
                raise ValueError(f"Fock cutoff must be an integer >= 2, got {self.d_c!r}")

    @property
    def dim(self) -> int:
        if self.kind == "dicke":
            return self.N + 1
        if self.kind == "fock":
            return self.d_c
        return self.d_c * (self.N + 1)

    @property
    def J(self) -> float:
        return self.N / 2


def _check_atom_number(N):
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)):
        raise ValueError(f"atom number must be an integer, got {N!r}")
    if N < 1:
        raise ValueError(f"atom number must be >= 1, got {N}")


def dicke_space(N: int) -> HilbertSpace:
    return HilbertSpace("dicke", N=N)


def fock_space(d_c: int) -> HilbertSpace:
    return HilbertSpace("fock", d_c=d_c)


def product_space(d_c: int, N: int) -> HilbertSpace:
    return HilbertSpace("product", N=N, d_c=d_c)


@dataclass(frozen=True, eq=False)
class Operator:
    """A matrix tied to a Hilbert space. ``matrix`` is a scipy CSR array."""

    space: HilbertSpace
    matrix: sp.csr_array
    label: str = ""

    def __post_init__(self):
        m = sp.csr_array(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"matrix shape {m.shape} does not match dim {self.space.dim}")
        object.__setattr__(self, "matrix", m)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dag(self) -> Operator:
        return Operator(self.space, self.matrix.conj().T.tocsr(), f"{self.label}^dag")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._same_space(other)
            return Operator(self.space, (self.matrix @ other.matrix).tocsr())
        return self.matrix @ other

    def __add__(self, other: Operator) -> Operator:
        self._same_space(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: Operator) -> Operator:
        self._same_space(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar) -> Operator:
        return Operator(self.space, self.matrix * scalar, self.label)

    __rmul__ = __mul__

    def __neg__(self) -> Operator:
        return self * -1

    def commutator(self, other: Operator) -> Operator:
        return self @ other - other @ self

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.conj().T
        return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= tol

    def expect(self, state) -> complex:
        """Expectation value in a pure vector or density matrix."""
        data = state.data if isinstance(state, QuantumState) else np.asarray(state)
        if data.ndim == 1:
            return complex(np.vdot(data, self.matrix @ data))
        return complex((self.matrix @ data).trace())

    def _same_space(self, other: Operator):
        if other.space != self.space:
            raise ValueError("operators act on different Hilbert spaces")


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, sp.identity(space.dim, dtype=complex, format="csr"), "I")


def tensor(fock_op: Operator, dicke_op: Operator) -> Operator:
    """Fock (x) Dicke product, photon index slowest."""
    if fock_op.space.kind != "fock" or dicke_op.space.kind != "dicke":
        raise ValueError("tensor expects (fock, dicke) operators")
    space = product_space(fock_op.space.d_c, dicke_op.space.N)
    return Operator(space, sp.kron(fock_op.matrix, dicke_op.matrix, format="csr"))


@dataclass(frozen=True, eq=False)
class QuantumState:
    space: HilbertSpace
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.shape not in ((self.space.dim,), (self.space.dim, self.space.dim)):
            raise ValueError(f"state shape {d.shape} incompatible with dim {self.space.dim}")
        object.__setattr__(self, "data", d)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def norm(self) -> float:
        if self.is_pure:
            return float(np.linalg.norm(self.data))
        return float(np.trace(self.data).real)

    def to_density_matrix(self) -> QuantumState:
        if not self.is_pure:
            return self
        return QuantumState(self.space, np.outer(self.data, self.data.conj()))


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the driven, continuously monitored cavity.

    Rates are angular frequencies in units of ``delta``. Only the resonant
    drive (``drive_detuning = 0``) and the ``x`` quadrature
    (``homodyne_phase = 0``) are supported by the dynamics.
    """

    N: int
    g: float
    kappa: float
    epsilon: float
    delta: float = 1.0
    eta: float = 1.0
    homodyne_phase: float = 0.0
    drive_detuning: float = 0.0

    def __post_init__(self):
        _check_atom_number(self.N)
        for name in ("g", "kappa", "epsilon", "delta"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")
        if self.delta == 0:
            raise ValueError("delta must be non-zero")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta!r}")

    @property
    def J(self) -> float:
        return self.N / 2

    @property
    def coupling(self) -> float:
        """Dispersive coupling per photon per unit Jz, 2 g^2 / delta."""
        return 2.0 * self.g**2 / self.delta

    @property
    def frequency_shift(self) -> float:
        """Maximum cavity shift g^2 N / delta."""
        return self.g**2 * self.N / self.delta

    @property
    def n0(self) -> float:
        if self.kappa == 0:
            raise ValueError("steady photon number undefined for kappa = 0")
        return (2.0 * self.epsilon / self.kappa) ** 2

    @property
    def kappa_eff(self) -> float:
        return 4.0 * self.coupling**2 * self.n0 / self.kappa


# ---------------------------------------------------------------- spin & boson


def dicke_m_values(N: int) -> np.ndarray:
    _check_atom_number(N)
    return N / 2 - np.arange(N + 1, dtype=float)


def ladder_coefficients(N: int, m: np.ndarray | None = None) -> np.ndarray:
    """``<m+1|J+|m> = sqrt(J(J+1) - m(m+1))`` for each ``m``."""
    J = N / 2
    if m is None:
        m = dicke_m_values(N)
    return np.sqrt(np.maximum(J * (J + 1) - m * (m + 1), 0.0))


def dicke_spin_ops(N: int) -> dict[str, Operator]:
    """Collective spin operators on the maximal Dicke sector (J = N/2)."""
    space = dicke_space(N)
    m = dicke_m_values(N)
    a = ladder_coefficients(N, m)
    # J+ maps index j (m) to j-1 (m+1)
    jp = sp.diags(a[1:], offsets=1, shape=(N + 1, N + 1), format="csr", dtype=complex)
    jm = jp.conj().T.tocsr()
    J = N / 2
    ops = {
        "Jz": Operator(space, sp.diags(m, format="csr", dtype=complex), "Jz"),
        "Jplus": Operator(space, jp, "J+"),
        "Jminus": Operator(space, jm, "J-"),
        "Jx": Operator(space, (jp + jm) / 2, "Jx"),
        "Jy": Operator(space, (jp - jm) / 2j, "Jy"),
        "J2": Operator(space, sp.identity(N + 1, dtype=complex, format="csr") * (J * (J + 1)), "J2"),
    }
    return ops


def fock_ops(d_c: int) -> dict[str, Operator]:
    space = fock_space(d_c)
    k = np.arange(d_c, dtype=float)
    c = sp.diags(np.sqrt(k[1:]), offsets=1, shape=(d_c, d_c), format="csr", dtype=complex)
    return {
        "c": Operator(space, c, "c"),
        "cdag": Operator(space, c.conj().T.tocsr(), "c^dag"),
        "n": Operator(space, sp.diags(k, format="csr", dtype=complex), "n"),
    }


def fock_cutoff(n0: float) -> int:
    """Photon cutoff dimension ``int(3 n0 + 6)``."""
    if n0 < 0:
        raise ValueError("mean photon number must be non-negative")
    return int(math.floor(3.0 * n0 + 6.0))


# ---------------------------------------------------------------------- states


def coherent_spin_state(N: int, theta: float, phi: float = 0.0) -> QuantumState:
    """Spin-coherent state pointing along polar angle ``theta`` and azimuth ``phi``.

    The returned state satisfies ``<J> = J (sin t cos p, sin t sin p, cos t)``;
    the ``m = J`` amplitude is real and non-negative.
    """
    space = dicke_space(N)
    j = np.arange(N + 1)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    log_binom = 0.5 * (gammaln(N + 1) - gammaln(j + 1) - gammaln(N - j + 1))
    mag = np.zeros(N + 1)
    with np.errstate(divide="ignore"):
        log_mag = log_binom + xlogy(N - j, abs(c)) + xlogy(j, abs(s))
    finite = np.isfinite(log_mag)
    mag[finite] = np.exp(log_mag[finite])
    sign = np.sign(c) ** (N - j) * np.sign(s) ** j
    amp = mag * sign * np.exp(1j * j * phi)
    nz = np.flatnonzero(np.abs(amp) > 0)
    if nz.size and nz[0] == 0:
        amp = amp * np.exp(-1j * np.angle(amp[0]))
    amp /= np.linalg.norm(amp)
    return QuantumState(space, amp)


def fock_vacuum(d_c: int) -> QuantumState:
    v = np.zeros(d_c, dtype=complex)
    v[0] = 1.0
    return QuantumState(fock_space(d_c), v)


def product_state(cavity: QuantumState, atoms: QuantumState) -> QuantumState:
    if not (cavity.is_pure and atoms.is_pure):
        raise ValueError("product_state expects pure states")
    space = product_space(cavity.space.d_c, atoms.space.N)
    return QuantumState(space, np.kron(cavity.data, atoms.data))


# ---------------------------------------------------------------- Hamiltonians


def _drive_term(params: ModelParams, d_c: int) -> Operator:
    if params.drive_detuning != 0:
        raise ValueError("only resonant driving (drive_detuning = 0) is supported")
    f = fock_ops(d_c)
    eye = identity(dicke_space(params.N))
    return params.epsilon * tensor(f["c"] + f["cdag"], eye)


def build_lambda_hamiltonian(params: ModelParams, d_c: int) -> Operator:
    """``(2 g^2/delta) n Jz + epsilon (c + c^dag)`` on the product space."""
    drive = _drive_term(params, d_c)
    spin = dicke_spin_ops(params.N)
    h = params.coupling * tensor(fock_ops(d_c)["n"], spin["Jz"]) + drive
    return Operator(h.space, h.matrix, "H_lambda")


def build_v_hamiltonian(params: ModelParams, d_c: int) -> Operator:
    """V-level Stark-shift Hamiltonian plus the resonant drive.

    ``-(g^2/delta) n Jz + (g^2 N / 2 delta) n + epsilon (c + c^dag)``.
    """
    drive = _drive_term(params, d_c)
    spin = dicke_spin_ops(params.N)
    n = fock_ops(d_c)["n"]
    g2d = params.g**2 / params.delta
    h = (
        -g2d * tensor(n, spin["Jz"])
        + (g2d * params.N / 2) * tensor(n, identity(dicke_space(params.N)))
        + drive
    )
    return Operator(h.space, h.matrix, "H_V")


class ThreeLevelCoefficients(NamedTuple):
    sz_coefficient: float
    shift_coefficient: float
    balanced: bool


def effective_coefficients_from_three_level(g_up, g_down, delta_up, delta_down) -> ThreeLevelCoefficients:
    """Coefficients of ``n s_z`` and of the state-independent ``n`` term after
    eliminating the excited level of a single three-level atom.
    """
    if delta_up == 0 or delta_down == 0:
        raise ValueError("detunings must be non-zero")
    for g, d in ((g_up, delta_up), (g_down, delta_down)):
        if abs(g) > 0 and abs(d) / abs(g) < 10:
            warnings.warn(
                f"|detuning/coupling| = {abs(d) / abs(g):.3g} < 10: adiabatic elimination is questionable",
                stacklevel=2,
            )
    up = abs(g_up) ** 2 / (2 * delta_up)
    down = abs(g_down) ** 2 / (2 * delta_down)
    if abs(g_up) > 0:
        target = -delta_up * abs(g_down) ** 2 / abs(g_up) ** 2
        balanced = abs(delta_down - target) <= 1e-9 * abs(target)
    else:
        balanced = abs(g_down) == 0
    shift = 0.0 if balanced else up + down
    return ThreeLevelCoefficients(2 * (up - down), shift, balanced)
