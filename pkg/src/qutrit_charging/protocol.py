"""Charging-rate optimisation, coupling quenches and saturation times."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import constants as C
from . import dynamics
from . import observables as obs
from .dynamics import ResonanceError, Trajectory
from .model import BatteryKind, BatteryModel, ChargerParams


def gamma_eff(b: BatteryModel, c: ChargerParams, n: int) -> float:
    """Effective rate of ``|n> -> |n+1>``."""
    if not 0 <= n < b.N:
        raise ValueError(f"transition index must be in 0..{b.N - 1}, got {n}")
    x = (c.g * b.coeff(n)) ** 2
    denom = x - c.detuning_product
    if abs(denom) < C.RESONANCE_TOL * abs(c.detuning_product):
        raise ResonanceError(n, abs(denom))
    return c.gamma_eg * c.Omega**2 * x / abs(denom) ** 2


def gamma_eff_landscape(b: BatteryModel, c: ChargerParams, g_values: Sequence[float]) -> np.ndarray:
    """``out[i, n]`` is the ``n -> n+1`` rate at coupling ``g_values[i]``."""
    coeff2 = np.asarray(b.ladder_coeffs) ** 2
    g2 = np.asarray(g_values, dtype=float)[:, None] ** 2
    x = g2 * coeff2[None, :]
    return c.gamma_eg * c.Omega**2 * x / np.abs(x - c.detuning_product) ** 2


def optimal_coupling(b: BatteryModel, c: ChargerParams, n: int) -> float:
    """Coupling that maximises the ``n -> n+1`` rate: ``g^2 A_n^2 = |Delta~ delta~|``."""
    a = b.coeff(n) if 0 <= n else 0.0
    if a == 0:
        raise ValueError(f"level {n} has no upward transition (A_n = 0)")
    return math.sqrt(abs(c.detuning_product)) / a


def optimized_rate_uniform(c: ChargerParams) -> float:
    phi = c.phi
    if math.sin(phi / 2) == 0:
        raise ValueError("phi = 0: the optimum rate formula is singular for lossless equal-sign detunings")
    return c.gamma_eg * c.Omega**2 / (4 * abs(c.detuning_product) * math.sin(phi / 2) ** 2)


@dataclass(frozen=True)
class QuenchSchedule:
    """Piecewise-constant coupling: ``segments[k] = (start_time, g)``."""

    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.segments or self.segments[0][0] != 0:
            raise ValueError("first segment must start at t = 0")
        starts = [s for s, _ in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment start times must be strictly increasing")
        if any(not g > 0 for _, g in self.segments):
            raise ValueError("couplings must be positive")

    @property
    def quench_times(self) -> tuple[float, ...]:
        return tuple(s for s, _ in self.segments[1:])

    def coupling_at(self, t: float) -> float:
        g = self.segments[0][1]
        for start, value in self.segments:
            if t >= start:
                g = value
        return g


def quench_schedule_ho(
    b: BatteryModel,
    c: ChargerParams,
    quench_times: Sequence[float],
    mean_excitation: Callable[[float], float],
) -> QuenchSchedule:
    """Re-optimise ``g`` for the mean excitation at each quench time.

    ``mean_excitation(tau)`` returns ``Tr[rho_B(tau) H_B] / E_B`` of the
    running trajectory; it is called once per quench time, in order, so a
    caller may propagate lazily up to ``tau`` inside it.
    """
    if b.kind is not BatteryKind.HO:
        raise ValueError("coupling quenches are defined for the truncated oscillator battery only")
    taus = [float(t) for t in quench_times]
    if any(t <= 0 for t in taus) or any(b2 <= a for a, b2 in zip(taus, taus[1:])):
        raise ValueError("quench times must be positive and strictly increasing")
    segments = [(0.0, optimal_coupling(b, c, 0))]
    for tau in taus:
        segments.append((tau, requench_coupling(c, mean_excitation(tau))))
    return QuenchSchedule(tuple(segments))


def requench_coupling(c: ChargerParams, nbar: float) -> float:
    """``g`` optimal for the transition out of level ``nbar`` of the oscillator."""
    if nbar < -1e-9:
        raise RuntimeError(f"negative mean excitation {nbar}")
    return math.sqrt(abs(c.detuning_product) / (max(nbar, 0.0) + 1))


def charge_with_quenches(
    b: BatteryModel,
    c: ChargerParams,
    rho_b0,
    t_grid: Sequence[float],
    quench_times: Sequence[float] = (),
    engine: str = "effective",
    rel_tol: float = C.RTOL,
    abs_tol: float = C.ATOL,
) -> tuple[Trajectory, QuenchSchedule]:
    """Charge the oscillator battery with ``g`` re-optimised at each quench time.

    Returns the trajectory sampled on ``t_grid`` and the schedule applied.
    ``c.g`` is ignored; the run starts at ``g_{0,opt}``.
    """
    if engine not in ("effective", "full"):
        raise ValueError(f"unknown engine {engine!r}")
    t_grid = np.asarray(t_grid, dtype=float)
    rho_b0 = np.asarray(rho_b0, dtype=complex)
    runner = _SegmentRunner(b, c, rho_b0, t_grid, engine, rel_tol, abs_tol)
    runner.g = optimal_coupling(b, c, 0)
    schedule = quench_schedule_ho(b, c, [t for t in quench_times if t < t_grid[-1]], runner.advance)
    runner.finish()
    return runner.trajectory(), schedule


class _SegmentRunner:
    """Propagates piecewise in time, one constant coupling per segment."""

    def __init__(self, b, c, rho_b0, t_grid, engine, rel_tol, abs_tol):
        self.b, self.c, self.engine = b, c, engine
        self.t_grid = t_grid
        self.rho_b0 = rho_b0
        self.tol = (rel_tol, abs_tol)
        self.t = 0.0
        self.g = c.g
        self.state = rho_b0 if engine == "effective" else dynamics.initial_composite_state(rho_b0)
        self.pieces: list[Trajectory] = []

    def _run_to(self, t_end: float) -> Trajectory:
        inner = self.t_grid[(self.t_grid > self.t) & (self.t_grid < t_end)]
        local = np.concatenate([[0.0], inner - self.t, [t_end - self.t]])
        c = self.c.replace(g=self.g)
        if self.engine == "effective":
            piece = dynamics.charge_effective(self.b, c, self.state, local, *self.tol, energy_reference=self.rho_b0)
        else:
            piece = dynamics.charge_full(
                self.b, c, None, local, *self.tol, composite0=self.state, energy_reference=self.rho_b0
            )
        self.pieces.append(replace(piece, times=np.concatenate([[self.t], inner, [t_end]])))
        self.state = piece.final_state
        self.t = t_end
        return piece

    def advance(self, tau: float) -> float:
        piece = self._run_to(tau)
        nbar = obs.mean_energy(piece.populations[-1], self.b) / self.b.energy_quantum
        self.g = requench_coupling(self.c, nbar)
        return nbar

    def finish(self) -> None:
        end = self.t_grid[-1]
        if end > self.t:
            self._run_to(end)
        elif not self.pieces:
            self._single_point()

    def _single_point(self) -> None:
        c = self.c.replace(g=self.g)
        run = dynamics.charge_effective if self.engine == "effective" else dynamics.charge_full
        self.pieces.append(run(self.b, c, self.rho_b0, np.zeros(1), *self.tol))

    def trajectory(self) -> Trajectory:
        fields = {}
        times = np.concatenate([p.times for p in self.pieces])
        keep = np.isin(times, self.t_grid)
        _, first = np.unique(times, return_index=True)
        mask = np.zeros(len(times), dtype=bool)
        mask[first] = True
        keep &= mask
        for name in ("populations", "stored_energy", "ergotropy", "qutrit_ground_population"):
            parts = [getattr(p, name) for p in self.pieces]
            fields[name] = None if parts[0] is None else np.concatenate(parts)[keep]
        states = None
        if self.pieces[0].states is not None and all(p.states is not None for p in self.pieces):
            all_states = [s for p in self.pieces for s in p.states]
            states = [s for s, k in zip(all_states, keep) if k]
        return Trajectory(times[keep], states=states, final_state=self.pieces[-1].final_state, **fields)


class SaturationReport(NamedTuple):
    time: float  # absolute, units of 1/E_B
    gamma_eg_time: float | None  # gamma_eg * T, when gamma_eg was supplied
    threshold: float  # ergotropy threshold in energy units
    quench_times: tuple[float, ...]
    before_last_quench: bool


class NotSaturatedError(RuntimeError):
    pass


def saturation_time(
    traj: Trajectory,
    b: BatteryModel,
    threshold_fraction: float = C.SATURATION_FRACTION,
    gamma_eg: float | None = None,
    quench_times: Sequence[float] = (),
) -> SaturationReport:
    """First time the ergotropy reaches ``threshold_fraction`` of its maximum.

    Linear interpolation between grid samples.
    """
    if not 0 < threshold_fraction < 1:
        raise ValueError("threshold_fraction must lie in (0, 1)")
    if traj.ergotropy is None:
        raise ValueError("trajectory has no ergotropy samples")
    level = threshold_fraction * b.max_ergotropy
    erg = np.asarray(traj.ergotropy)
    times = np.asarray(traj.times)
    hits = np.flatnonzero(erg >= level)
    if hits.size == 0:
        raise NotSaturatedError(
            f"ergotropy never reached {level:.6g} (final value {erg[-1]:.6g} at t = {times[-1]:.6g})"
        )
    k = int(hits[0])
    if k == 0:
        T = float(times[0])
    else:
        e0, e1 = erg[k - 1], erg[k]
        T = float(times[k - 1] + (level - e0) / (e1 - e0) * (times[k] - times[k - 1]))
    qts = tuple(float(q) for q in quench_times)
    return SaturationReport(
        T,
        None if gamma_eg is None else gamma_eg * T,
        level,
        qts,
        bool(qts) and T < max(qts),
    )


def first_crossing_index(values: Sequence[float], level: float) -> int | None:
    hits = np.flatnonzero(np.asarray(values) >= level)
    return int(hits[0]) if hits.size else None
