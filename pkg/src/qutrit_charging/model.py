"""Battery prototypes, charger parameters and composite-space operators.

Composite basis is qutrit-major, battery-minor with qutrit order
``(g, h, e)``: the state ``|i, n>`` sits at index ``i * dim + n``.
Everything is expressed in the rotating frame of the drive, so the
Hamiltonian is time independent.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

QUTRIT_LEVELS = ("g", "h", "e")
G, H, E = 0, 1, 2


class BatteryKind(str, enum.Enum):
    UNIFORM = "uniform"
    SPIN = "spin"
    HO = "ho"


@dataclass(frozen=True)
class BatteryModel:
    """A (dim)-level battery with ladder ``A^dag = sum_n A_n |n+1><n|``.

    Use :func:`uniform_ladder`, :func:`large_spin` or :func:`truncated_ho`
    rather than the raw constructor.  ``level_energies`` are absolute
    (``E_B * m`` for the spin, which is negative below ``m = 0``).
    """

    kind: BatteryKind
    dim: int
    energy_quantum: float
    level_energies: tuple[float, ...]
    ladder_coeffs: tuple[float, ...]
    spin: Fraction | None = field(default=None)

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"battery needs at least two levels, got dim={self.dim}")
        if len(self.level_energies) != self.dim:
            raise ValueError("level_energies must have dim entries")
        if len(self.ladder_coeffs) != self.dim - 1:
            raise ValueError("ladder_coeffs must have dim - 1 entries")
        if not self.energy_quantum > 0:
            raise ValueError("energy_quantum must be positive")
        if any(not a > 0 for a in self.ladder_coeffs):
            raise ValueError("ladder coefficients must be strictly positive")

    @property
    def N(self) -> int:
        """Index of the top level."""
        return self.dim - 1

    @property
    def max_ergotropy(self) -> float:
        return self.level_energies[-1] - self.level_energies[0]

    def coeff(self, n: int) -> float:
        """``A_n``, with ``A_n = 0`` at and above the top level."""
        if n < 0:
            raise IndexError(n)
        return self.ladder_coeffs[n] if n < self.N else 0.0

    def hamiltonian(self) -> np.ndarray:
        return np.diag(np.asarray(self.level_energies, dtype=complex))

    def quantum_number(self, n: int) -> float:
        """Magnetic quantum number ``m = n - J`` (spin) or ``n`` otherwise."""
        if self.kind is BatteryKind.SPIN:
            return float(n - self.spin)
        return float(n)

    def level_index(self, m: float) -> int:
        """Inverse of :meth:`quantum_number`."""
        n = m + float(self.spin) if self.kind is BatteryKind.SPIN else m
        idx = int(round(n))
        if abs(n - idx) > 1e-9 or not 0 <= idx < self.dim:
            raise ValueError(f"no level with quantum number {m}")
        return idx

    def describe(self) -> dict:
        size = {"J": str(self.spin)} if self.kind is BatteryKind.SPIN else {"N": self.N}
        return {"kind": self.kind.value, **size, "E_B": self.energy_quantum}


def uniform_ladder(N: int, energy_quantum: float = 1.0) -> BatteryModel:
    N = int(N)
    return BatteryModel(
        BatteryKind.UNIFORM,
        N + 1,
        float(energy_quantum),
        tuple(energy_quantum * n for n in range(N + 1)),
        (1.0,) * N,
    )


def large_spin(J, energy_quantum: float = 1.0) -> BatteryModel:
    """Spin-J battery with ``H_B = E_B J_z``; ``J`` may be half-integer."""
    J = Fraction(str(J)) if isinstance(J, str) else Fraction(J)
    if J <= 0 or (2 * J).denominator != 1:
        raise ValueError(f"J must be a positive integer or half-integer, got {J}")
    dim = int(2 * J + 1)
    ms = [-J + k for k in range(dim)]
    jj = J * (J + 1)
    coeffs = tuple(math.sqrt(float(jj - m * (m + 1))) for m in ms[:-1])
    return BatteryModel(
        BatteryKind.SPIN,
        dim,
        float(energy_quantum),
        tuple(energy_quantum * float(m) for m in ms),
        coeffs,
        spin=J,
    )


def truncated_ho(N: int, energy_quantum: float = 1.0) -> BatteryModel:
    N = int(N)
    return BatteryModel(
        BatteryKind.HO,
        N + 1,
        float(energy_quantum),
        tuple(energy_quantum * n for n in range(N + 1)),
        tuple(math.sqrt(n + 1) for n in range(N)),
    )


def make_battery(kind: str | BatteryKind, size, energy_quantum: float = 1.0) -> BatteryModel:
    """``size`` is ``N`` for uniform/ho and ``J`` for spin."""
    kind = BatteryKind(kind)
    if kind is BatteryKind.UNIFORM:
        return uniform_ladder(size, energy_quantum)
    if kind is BatteryKind.SPIN:
        return large_spin(size, energy_quantum)
    return truncated_ho(size, energy_quantum)


@dataclass(frozen=True)
class ChargerParams:
    """Qutrit charger: detunings, drive, decay rates and coupling ``g``."""

    Delta: float
    delta: float
    Omega: float
    gamma_hg: float
    gamma_eg: float
    gamma_he: float = 0.0
    g: float = 0.0

    def __post_init__(self):
        for name in ("Delta", "delta", "Omega", "gamma_hg", "gamma_eg", "gamma_he", "g"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        for name in ("Omega", "gamma_hg", "gamma_eg", "gamma_he", "g"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")

    @property
    def Delta_c(self) -> complex:
        return complex(self.Delta, -(self.gamma_hg + self.gamma_he) / 2)

    @property
    def delta_c(self) -> complex:
        return complex(self.delta, -self.gamma_eg / 2)

    @property
    def detuning_product(self) -> complex:
        return self.Delta_c * self.delta_c

    @property
    def phi(self) -> float:
        return cmath.phase(self.detuning_product)

    def replace(self, **changes) -> "ChargerParams":
        return replace(self, **changes)


def ladder_raising_operator(b: BatteryModel) -> np.ndarray:
    a_dag = np.zeros((b.dim, b.dim), dtype=complex)
    n = np.arange(b.N)
    a_dag[n + 1, n] = b.ladder_coeffs
    return a_dag


def _qutrit_op(i: int, j: int) -> np.ndarray:
    op = np.zeros((3, 3), dtype=complex)
    op[i, j] = 1.0
    return op


def composite_hamiltonian(b: BatteryModel, c: ChargerParams) -> np.ndarray:
    eye = np.eye(b.dim, dtype=complex)
    a_dag = ladder_raising_operator(b)
    hq = c.Delta * _qutrit_op(H, H) + c.delta * _qutrit_op(E, E)
    hq += c.Omega * (_qutrit_op(H, G) + _qutrit_op(G, H))
    h = np.kron(hq, eye)
    h += c.g * (np.kron(_qutrit_op(E, H), a_dag) + np.kron(_qutrit_op(H, E), a_dag.conj().T))
    return h


def jump_operators(b: BatteryModel, c: ChargerParams) -> list[np.ndarray]:
    """Qutrit decay channels h->g, e->g, h->e; zero-rate channels are dropped."""
    eye = np.eye(b.dim, dtype=complex)
    channels = ((c.gamma_hg, G, H), (c.gamma_eg, G, E), (c.gamma_he, E, H))
    return [math.sqrt(rate) * np.kron(_qutrit_op(to, frm), eye) for rate, to, frm in channels if rate > 0]


def composite_index(i: int, n: int, dim: int) -> int:
    return i * dim + n
