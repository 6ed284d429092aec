"""Effective operators from resolvents, path-sum couplings and superoperators.

Each charging subspace ``n`` couples the ground state ``|g n>`` through
the drive to the excited pair ``{|h n>, |e n+1>}`` (only ``|h N>`` for the
top level).  Eliminating the excited pair with the resolvent of the
non-Hermitian excited-space Hamiltonian gives the effective Hamiltonian
and jump amplitudes acting on ``|g n>``; expanding the same resolvent in
the charger-battery coupling gives a geometric series of path sums.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import constants as C
from .dynamics import LindbladGenerator
from .model import BatteryModel, ChargerParams
from .numerics import SingularMatrixError, kron, solve_linear


class SeriesDivergenceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SubspaceSystem:
    """Excited-space data of subspace ``n``.

    Excited basis is ``(|h n>, |e n+1>)``, truncated to ``(|h N>,)`` at the
    top.  ``jump_rows[k][m]`` is the amplitude of decay channel ``k`` out of
    excited state ``m`` (``hg`` lands on ``|g n>``, ``eg`` on ``|g n+1>``,
    ``he`` on ``|e n>``).
    """

    n: int
    excited_hamiltonian: np.ndarray
    drive_vector: np.ndarray
    jump_rows: dict

    @property
    def size(self) -> int:
        return self.excited_hamiltonian.shape[0]


def subspace_system(b: BatteryModel, c: ChargerParams, n: int) -> SubspaceSystem:
    if not 0 <= n <= b.N:
        raise ValueError(f"subspace index {n} outside 0..{b.N}")
    sq = np.sqrt
    if n == b.N:
        h = np.array([[c.Delta_c]])
        rows = {"hg": np.array([sq(c.gamma_hg)]), "eg": np.zeros(1), "he": np.array([sq(c.gamma_he)])}
        return SubspaceSystem(n, h, np.array([c.Omega], dtype=complex), rows)
    ga = c.g * b.coeff(n)
    h = np.array([[c.Delta_c, ga], [ga, c.delta_c]])
    rows = {
        "hg": np.array([sq(c.gamma_hg), 0.0]),
        "eg": np.array([0.0, sq(c.gamma_eg)]),
        "he": np.array([sq(c.gamma_he), 0.0]),
    }
    return SubspaceSystem(n, h, np.array([c.Omega, 0.0], dtype=complex), rows)


class EffectiveOperators(NamedTuple):
    hamiltonian: float  # Hermitian shift of |g n>
    non_hermitian: complex  # -V^dag H~^-1 V
    hg: complex  # <g n| L_hg^eff |g n>
    eg: complex  # <g n+1| L_eg^eff |g n>
    he: complex  # <e n| L_he^eff |g n>


def excited_amplitudes(s: SubspaceSystem) -> np.ndarray:
    """``H~^-1 V_+``: adiabatically followed excited amplitudes per unit ``|g n>``."""
    try:
        return solve_linear(s.excited_hamiltonian, s.drive_vector)
    except SingularMatrixError as exc:
        raise SingularMatrixError(exc.condition, f"subspace n={s.n} is resonant: {exc}") from exc


def effective_operators_subspace(s: SubspaceSystem) -> EffectiveOperators:
    x = excited_amplitudes(s)
    nh = complex(-np.vdot(s.drive_vector, x))
    return EffectiveOperators(
        hamiltonian=nh.real,
        non_hermitian=nh,
        hg=complex(s.jump_rows["hg"] @ x),
        eg=complex(s.jump_rows["eg"] @ x),
        he=complex(s.jump_rows["he"] @ x),
    )


def leakage_residual(s: SubspaceSystem) -> float:
    """How far ``-V^dag H~^-1 V + (i/2)(|L_hg|^2 + |L_eg|^2)`` is from ``H_eff - (i/2)|L_he|^2``."""
    ops = effective_operators_subspace(s)
    lhs = ops.non_hermitian + 0.5j * (abs(ops.hg) ** 2 + abs(ops.eg) ** 2)
    rhs = ops.hamiltonian - 0.5j * abs(ops.he) ** 2
    return abs(lhs - rhs)


def fgr_effective_coupling(s: SubspaceSystem, l: int) -> complex:
    """Order-``l`` path sum from ``|g n>`` into the excited space.

    Sums ``V_{f m_{l-1}} ... V_{m_1 i} / prod_k (E_i - E_{m_k})`` over
    intermediate excited states, with ``E_i = 0``.  Odd orders end on
    ``|h n>``, even orders on ``|e n+1>``.  Zero couplings are pruned
    while enumerating, so only live paths are visited.
    """
    if l < 1:
        raise ValueError("order must be >= 1")
    energies = np.diagonal(s.excited_hamiltonian)
    coupling = s.excited_hamiltonian - np.diag(energies)
    target = 0 if l % 2 else 1
    if target >= s.size:
        return 0j
    total = 0j
    # (state reached, path length so far, numerator / denominators of earlier intermediates)
    stack = [(m, 1, complex(v)) for m, v in enumerate(s.drive_vector) if v != 0]
    while stack:
        m, depth, amp = stack.pop()
        if depth == l:
            if m == target:
                total += amp
            continue
        amp = amp / (0.0 - energies[m])
        for nxt in range(s.size):
            if coupling[nxt, m] != 0:
                stack.append((nxt, depth + 1, amp * coupling[nxt, m]))
    return total


def expansion_ratio(s: SubspaceSystem) -> complex:
    """Ratio of successive same-parity path sums, ``g^2 A_n^2 / (Delta~ delta~)``."""
    if s.size == 1:
        return 0j
    h = s.excited_hamiltonian
    return complex(h[0, 1] * h[1, 0] / (h[0, 0] * h[1, 1]))


class SeriesCheck(NamedTuple):
    ratio: complex
    partial_hg: np.ndarray  # partial sums after each odd order
    partial_eg: np.ndarray  # partial sums after each even order
    closed_hg: complex
    closed_eg: complex
    residual_hg: float
    residual_eg: float


def fgr_series_check(s: SubspaceSystem, l_max: int) -> SeriesCheck:
    """Compare partial path-sum series up to order ``l_max`` with the resolvent result."""
    if not 1 <= l_max <= C.SERIES_MAX_ORDER:
        raise ValueError(f"l_max must be in 1..{C.SERIES_MAX_ORDER}")
    ratio = expansion_ratio(s)
    if abs(ratio) >= C.SERIES_MAX_RATIO:
        raise SeriesDivergenceError(
            f"subspace n={s.n}: |ratio| = {abs(ratio):.4f} >= {C.SERIES_MAX_RATIO}; path series does not converge usefully"
        )
    energies = np.diagonal(s.excited_hamiltonian)
    terms = np.array([fgr_effective_coupling(s, l) for l in range(1, l_max + 1)])
    pref_hg = s.jump_rows["hg"][0] / energies[0]
    partial_hg = pref_hg * np.cumsum(terms[0::2])
    if s.size > 1:
        pref_eg = s.jump_rows["eg"][1] / energies[1]
        partial_eg = pref_eg * np.cumsum(terms[1::2])
    else:
        partial_eg = np.zeros(len(terms[1::2]), dtype=complex)
    ops = effective_operators_subspace(s)
    last_eg = partial_eg[-1] if partial_eg.size else 0j
    return SeriesCheck(
        ratio,
        partial_hg,
        partial_eg,
        ops.hg,
        ops.eg,
        float(abs(partial_hg[-1] - ops.hg)),
        float(abs(last_eg - ops.eg)),
    )


def vectorized_generator(gen: LindbladGenerator) -> np.ndarray:
    """Dense ``d^2 x d^2`` superoperator on column-stacked states.

    ``vec(rho) = rho.T.ravel()`` (equivalently ``rho.ravel(order="F")``) and
    ``vec(A X B) = (B^T kron A) vec(X)``.
    """
    d = gen.dim
    if d > C.MAX_VECTORIZED_DIM:
        raise ValueError(f"dimension {d} exceeds the dense superoperator cap {C.MAX_VECTORIZED_DIM}")
    eye = np.eye(d, dtype=complex)
    h = gen.hamiltonian
    out = -1j * (kron(eye, h) - kron(h.T, eye))
    for L in gen.jumps:
        ldl = L.conj().T @ L
        out += kron(L.conj(), L) - 0.5 * kron(eye, ldl) - 0.5 * kron(ldl.T, eye)
    return out


def vec(rho) -> np.ndarray:
    return np.asarray(rho, dtype=complex).ravel(order="F")


def unvec(v, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


class DischargingRatios(NamedTuple):
    dephasing_ratio: float
    decay_ratio: float


def discharging_ratios(b: BatteryModel, c: ChargerParams, n: int) -> DischargingRatios:
    """Size of the h->e induced dephasing and downward decay relative to charging.

    Both use the inverse of the Kronecker-sum operator
    ``-i H~*_{n-1} (x) I + I (x) i H~_{n-1}`` over the excited pair
    ``(|h n-1>, |e n>)``.
    """
    if not 1 <= n <= b.N - 1:
        raise ValueError(f"subspace index must satisfy 1 <= n <= {b.N - 1}, got {n}")
    if c.gamma_he == 0:
        return DischargingRatios(0.0, 0.0)
    if c.gamma_hg <= 0 or c.gamma_eg <= 0 or c.g <= 0:
        raise ValueError("gamma_hg, gamma_eg and g must be positive")
    h_prev = subspace_system(b, c, n - 1).excited_hamiltonian
    eye = np.eye(2, dtype=complex)
    ksum = -1j * kron(h_prev.conj(), eye) + 1j * kron(eye, h_prev)
    e_en = np.array([0.0, 1.0], dtype=complex)
    col = solve_linear(ksum, np.kron(e_en, e_en))  # column (en, en) of the inverse
    inv_en_en = col[3]
    inv_h_en = col[0]
    an = b.coeff(n)
    dephasing = c.gamma_eg * c.gamma_he / c.gamma_hg * abs(inv_en_en)
    decay = c.gamma_hg * c.gamma_he * abs(c.delta_c) ** 2 / (c.gamma_eg * c.g**2 * an**2) * abs(inv_h_en)
    return DischargingRatios(float(dephasing), float(decay))
