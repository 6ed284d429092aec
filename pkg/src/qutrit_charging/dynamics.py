"""Full composite master equation and the battery-only effective one.

The full generator acts on the qutrit (x) battery space; the effective
generator acts on the battery alone with a diagonal Hamiltonian, a
diagonal dephasing jump and a single raising jump.  :func:`charge_full`
and :func:`charge_effective` run either one from a battery state and
return a :class:`Trajectory` with energy, ergotropy and populations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import constants as C
from . import observables as obs
from .model import G, BatteryModel, ChargerParams, composite_hamiltonian, jump_operators
from .numerics import NumericsError, as_complex_matrix, integrate_ode, max_asymmetry


class InvalidStateError(NumericsError, ValueError):
    """A density matrix broke trace, Hermiticity or positivity bounds."""


class ResonanceError(ValueError):
    def __init__(self, n: int, value: float):
        super().__init__(
            f"subspace n={n} is resonant: |Delta~ delta~ - g^2 A_n^2| = {value:.3e} is numerically zero"
        )
        self.n = n


def check_density_matrix(
    rho,
    trace_tol: float = C.TRACE_TOL,
    herm_tol: float = C.HERMITICITY_TOL,
    pos_tol: float = C.POSITIVITY_TOL,
    t: float | None = None,
) -> None:
    rho = np.asarray(rho)
    where = "" if t is None else f" at t = {t:.6g}"
    if rho.ndim == 1:
        total, low = float(np.sum(np.real(rho))), float(np.min(np.real(rho)))
        asym = float(np.max(np.abs(np.imag(rho))))
    else:
        total = float(np.real(np.trace(rho)))
        asym = max_asymmetry(rho)
        low = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]) if asym <= herm_tol else 0.0
    if abs(total - 1.0) > trace_tol:
        raise InvalidStateError(f"trace = {total!r} deviates from 1{where}")
    if asym > herm_tol:
        raise InvalidStateError(f"state is not Hermitian (max asymmetry {asym:.3e}){where}")
    if low < -pos_tol:
        raise InvalidStateError(f"state is not positive (min eigenvalue {low:.3e}){where}")


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    hamiltonian: np.ndarray
    jumps: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        h = as_complex_matrix(self.hamiltonian)
        if h.shape[0] != h.shape[1]:
            raise ValueError("hamiltonian must be square")
        jumps = tuple(as_complex_matrix(j) for j in self.jumps)
        for j in jumps:
            if j.shape != h.shape:
                raise ValueError(f"jump operator shape {j.shape} does not match hamiltonian {h.shape}")
        asym = max_asymmetry(h)
        if asym > C.HERMITIAN_TOL * max(np.linalg.norm(h), 1.0):
            raise ValueError(f"hamiltonian is not Hermitian (max asymmetry {asym:.3e})")
        h.flags.writeable = False
        for j in jumps:
            j.flags.writeable = False
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "jumps", jumps)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]


def lindblad_rhs(gen: LindbladGenerator, rho) -> np.ndarray:
    """``-i[H, rho] + sum_k (L rho L^dag - {L^dag L, rho} / 2)``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (gen.dim, gen.dim):
        raise ValueError(f"state shape {rho.shape} does not match generator dimension {gen.dim}")
    h = gen.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    for L in gen.jumps:
        Ld = L.conj().T
        LdL = Ld @ L
        out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def sparse_liouvillian(gen: LindbladGenerator) -> sp.csr_matrix:
    """Sparse superoperator acting on column-stacked density matrices.

    Same layout as :func:`qutrit_charging.perturbation.vectorized_generator`;
    ``vec(rho) = rho.T.ravel()``.
    """
    eye = sp.identity(gen.dim, dtype=complex, format="csr")
    h = sp.csr_matrix(gen.hamiltonian)
    out = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    for L in gen.jumps:
        L = sp.csr_matrix(L)
        ldl = L.conj().T @ L
        out = out + sp.kron(L.conj(), L) - 0.5 * sp.kron(eye, ldl) - 0.5 * sp.kron(ldl.T, eye)
    out = sp.csr_matrix(out)
    out.eliminate_zeros()
    return out


def _hermitian_rhs(liouv: sp.csr_matrix, dim: int):
    """Vectorised right-hand side whose output is exactly Hermitian.

    The generator maps Hermitian states to Hermitian derivatives; taking the
    Hermitian part of the sparse product removes the rounding asymmetry so
    that Runge-Kutta iterates stay Hermitian to machine precision.
    """

    def rhs(v: np.ndarray) -> np.ndarray:
        m = (liouv @ v).reshape(dim, dim)
        return (0.5 * (m + m.conj().T)).ravel()

    return rhs


def _vec(rho: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(rho.T).ravel()


def _unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return v.reshape(dim, dim).T


def classical_rate_matrix(gen: LindbladGenerator) -> np.ndarray | None:
    """Rate matrix ``M`` with ``dp/dt = M p`` for diagonal states, if one exists.

    Exists when the Hamiltonian is diagonal and every jump sends each basis
    state to at most one basis state injectively; otherwise ``None``.
    """
    h = gen.hamiltonian
    if np.any(h - np.diag(np.diagonal(h))):
        return None
    m = np.zeros((gen.dim, gen.dim))
    for L in gen.jumps:
        nz = L != 0
        if np.any(nz.sum(axis=0) > 1) or np.any(nz.sum(axis=1) > 1):
            return None
        w = np.abs(L) ** 2
        m += w - np.diag(w.sum(axis=0))
    return m


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Battery observables on a time grid.

    ``states`` holds battery density matrices, or is ``None`` when only
    populations were propagated.  ``final_state`` is the last state of the
    underlying propagation (composite for full runs) for continuation.
    """

    times: np.ndarray
    populations: np.ndarray
    states: list | None = None
    stored_energy: np.ndarray | None = None
    ergotropy: np.ndarray | None = None
    qutrit_ground_population: np.ndarray | None = None
    final_state: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.times)
        for name in ("populations", "states", "stored_energy", "ergotropy", "qutrit_ground_population"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise ValueError(f"{name} has {len(v)} samples, times has {n}")
        pops = np.asarray(self.populations)
        if pops.size:
            worst = float(np.max(np.abs(pops.sum(axis=1) - 1)))
            if worst > C.POPULATION_SUM_TOL:
                raise ValueError(f"populations sum to 1 only within {worst:.3e}")

    @property
    def dim(self) -> int:
        return self.populations.shape[1]

    def battery_state(self, k: int) -> np.ndarray:
        if self.states is not None:
            return self.states[k]
        return np.diag(self.populations[k]).astype(complex)

    def spectra(self) -> np.ndarray:
        if self.states is None:
            return self.populations
        return np.array([obs.spectrum(s) for s in self.states])

    def with_observables(self, b: BatteryModel, rho0) -> "Trajectory":
        e0 = obs.mean_energy(rho0, b)
        energies = np.asarray(b.level_energies)
        mean = self.populations @ energies
        passive = np.sort(self.spectra(), axis=1)[:, ::-1] @ np.sort(energies)
        return replace(self, stored_energy=mean - e0, ergotropy=mean - passive)


def propagate(
    gen: LindbladGenerator,
    rho0,
    t_grid: Sequence[float],
    rel_tol: float = C.RTOL,
    abs_tol: float = C.ATOL,
    fast_path: bool = True,
) -> Trajectory:
    """Propagate ``rho0`` under ``gen`` onto ``t_grid`` (starting at 0).

    Diagonal initial states under a diagonal-preserving generator are
    evolved as population vectors (``states`` is then ``None``).
    """
    rho0 = as_complex_matrix(rho0)
    if rho0.shape != (gen.dim, gen.dim):
        raise ValueError(f"initial state shape {rho0.shape} does not match generator dimension {gen.dim}")
    check_density_matrix(rho0)
    t_grid = np.asarray(t_grid, dtype=float)
    rates = classical_rate_matrix(gen) if fast_path else None
    diagonal = not np.any(rho0 - np.diag(np.diagonal(rho0)))
    if rates is not None and diagonal:
        def observe(p):
            p = np.real(p).copy()
            check_density_matrix(p)
            return p

        pops = integrate_ode(lambda p: rates @ p, np.real(np.diagonal(rho0)), t_grid, rel_tol, abs_tol, observe)
        pops = np.array(pops)
        return Trajectory(t_grid, pops, final_state=np.diag(pops[-1]).astype(complex))

    liouv = sparse_liouvillian(gen)
    times = iter(t_grid)

    def observe(v):
        rho = _unvec(v, gen.dim).copy()
        check_density_matrix(rho, t=next(times))
        return rho

    states = integrate_ode(_hermitian_rhs(liouv, gen.dim), _vec(rho0), t_grid, rel_tol, abs_tol, observe)
    pops = np.array([np.real(np.diagonal(s)) for s in states])
    return Trajectory(t_grid, pops, states=states, final_state=states[-1])


def partial_trace_qutrit(rho, dim: int) -> np.ndarray:
    """Battery state ``Tr_qutrit rho`` for a composite state of size ``3 * dim``."""
    r = np.asarray(rho).reshape(3, dim, 3, dim)
    return np.einsum("inim->nm", r)


def qutrit_populations(rho, dim: int) -> np.ndarray:
    r = np.asarray(rho).reshape(3, dim, 3, dim)
    return np.real(np.einsum("inin->i", r))


def full_generator(b: BatteryModel, c: ChargerParams) -> LindbladGenerator:
    return LindbladGenerator(composite_hamiltonian(b, c), tuple(jump_operators(b, c)))


def initial_composite_state(rho_b0) -> np.ndarray:
    """Qutrit in ``|g>`` times the battery state."""
    ground = np.zeros((3, 3), dtype=complex)
    ground[G, G] = 1.0
    return np.kron(ground, np.asarray(rho_b0, dtype=complex))


def effective_coefficients(b: BatteryModel, c: ChargerParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-level effective Hamiltonian, dephasing and raising amplitudes.

    Returns ``(h_diag, dephasing_diag, raising)`` where ``raising[n]`` is
    the ``|n+1><n|`` amplitude, ``n = 0 .. dim-2``.
    """
    dd = c.detuning_product
    coeff = np.array([b.coeff(n) for n in range(b.dim)])
    denom = dd - (c.g * coeff) ** 2
    bad = np.abs(denom) < C.RESONANCE_TOL * abs(dd)
    if dd == 0 or np.any(bad):
        n = int(np.flatnonzero(bad)[0]) if np.any(bad) else 0
        raise ResonanceError(n, float(abs(denom[n])))
    h_diag = -(c.Omega**2) * np.real(c.delta_c / denom)
    dephasing = np.sqrt(c.gamma_hg) * c.Omega * c.delta_c / denom
    raising = -np.sqrt(c.gamma_eg) * c.Omega * c.g * coeff[:-1] / denom[:-1]
    return h_diag, dephasing, raising


def effective_battery_generator(b: BatteryModel, c: ChargerParams) -> LindbladGenerator:
    h_diag, dephasing, raising = effective_coefficients(b, c)
    up = np.zeros((b.dim, b.dim), dtype=complex)
    n = np.arange(b.N)
    up[n + 1, n] = raising
    return LindbladGenerator(np.diag(h_diag).astype(complex), (np.diag(dephasing), up))


def time_grid(horizon: float, points: int = C.DEFAULT_GRID_POINTS) -> np.ndarray:
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if horizon == 0:
        return np.zeros(1)
    return np.linspace(0.0, horizon, max(int(points), 2))


def charge_effective(
    b: BatteryModel,
    c: ChargerParams,
    rho_b0,
    t_grid: Sequence[float],
    rel_tol: float = C.RTOL,
    abs_tol: float = C.ATOL,
    energy_reference=None,
) -> Trajectory:
    """Effective battery dynamics with observables filled in.

    ``energy_reference`` is the state ``Delta E`` is measured against
    (defaults to ``rho_b0``).
    """
    traj = propagate(effective_battery_generator(b, c), rho_b0, t_grid, rel_tol, abs_tol)
    ref = rho_b0 if energy_reference is None else energy_reference
    return traj.with_observables(b, ref)


def charge_full(
    b: BatteryModel,
    c: ChargerParams,
    rho_b0,
    t_grid: Sequence[float],
    rel_tol: float = C.RTOL,
    abs_tol: float = C.ATOL,
    composite0=None,
    energy_reference=None,
) -> Trajectory:
    """Composite dynamics reduced to the battery, observables filled in.

    Starts from ``|g><g| (x) rho_b0`` unless an explicit composite state
    ``composite0`` is given (used to continue a run).
    """
    gen = full_generator(b, c)
    rho0 = initial_composite_state(rho_b0) if composite0 is None else as_complex_matrix(composite0)
    if rho0.shape != (gen.dim, gen.dim):
        raise ValueError(f"composite state has shape {rho0.shape}, expected {(gen.dim, gen.dim)}")
    check_density_matrix(rho0)
    t_grid = np.asarray(t_grid, dtype=float)
    times = iter(t_grid)
    last = {}

    def observe(v):
        rho = _unvec(v, gen.dim).copy()
        check_density_matrix(rho, t=next(times))
        last["rho"] = rho
        return partial_trace_qutrit(rho, b.dim), qutrit_populations(rho, b.dim)[G]

    rhs = _hermitian_rhs(sparse_liouvillian(gen), gen.dim)
    out = integrate_ode(rhs, _vec(rho0), t_grid, rel_tol, abs_tol, observe)
    states = [s for s, _ in out]
    traj = Trajectory(
        t_grid,
        np.array([np.real(np.diagonal(s)) for s in states]),
        states=states,
        qutrit_ground_population=np.array([p for _, p in out]),
        final_state=last["rho"],
    )
    ref = partial_trace_qutrit(rho0, b.dim) if energy_reference is None else energy_reference
    return traj.with_observables(b, ref)
