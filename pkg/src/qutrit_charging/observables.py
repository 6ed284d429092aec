"""Stored energy, ergotropy, passive states and thermal states of the battery."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .model import BatteryModel
from .numerics import hermitian_eigh


class PassiveState(NamedTuple):
    """Populations of the passive state, indexed by battery level.

    ``populations[n]`` belongs to level ``n``; levels sorted by ascending
    energy receive nonincreasing populations.
    """

    populations: np.ndarray


def _energies(b: BatteryModel) -> np.ndarray:
    return np.asarray(b.level_energies, dtype=float)


def _check_dim(rho: np.ndarray, b: BatteryModel) -> None:
    if rho.shape[-1] != b.dim:
        raise ValueError(f"state has dimension {rho.shape[-1]}, battery has {b.dim}")


def mean_energy(rho, b: BatteryModel) -> float:
    """``Tr[H_B rho]``; ``rho`` may be a matrix or a population vector."""
    rho = np.asarray(rho)
    _check_dim(rho, b)
    pops = np.real(np.diagonal(rho)) if rho.ndim == 2 else np.real(rho)
    return float(pops @ _energies(b))


def stored_energy(rho, rho0, b: BatteryModel) -> float:
    return mean_energy(rho, b) - mean_energy(rho0, b)


def spectrum(rho) -> np.ndarray:
    """Eigenvalues of a density matrix (or the entries of a population vector)."""
    rho = np.asarray(rho)
    if rho.ndim == 1:
        return np.real(rho).astype(float)
    return hermitian_eigh(rho, tol=1e-8).eigenvalues


def passive_state(rho, b: BatteryModel) -> PassiveState:
    rho = np.asarray(rho)
    _check_dim(rho, b)
    lam = np.sort(spectrum(rho))[::-1]
    order = np.argsort(_energies(b), kind="stable")
    pops = np.empty(b.dim)
    pops[order] = lam
    return PassiveState(pops)


def passive_energy(rho, b: BatteryModel) -> float:
    return float(passive_state(rho, b).populations @ _energies(b))


def ergotropy(rho, b: BatteryModel) -> float:
    return mean_energy(rho, b) - passive_energy(rho, b)


def thermal_state(b: BatteryModel, beta: float) -> np.ndarray:
    """Gibbs state ``exp(-beta H_B) / Z``; ``beta = inf`` gives the ground level."""
    if math.isnan(beta) or beta < 0:
        raise ValueError(f"beta must be >= 0 or inf, got {beta}")
    e = _energies(b)
    if math.isinf(beta):
        w = (e == e.min()).astype(float)
    else:
        w = np.exp(-beta * (e - e.min()))
    return np.diag(w / w.sum()).astype(complex)


def level_projector(b: BatteryModel, n: int) -> np.ndarray:
    rho = np.zeros((b.dim, b.dim), dtype=complex)
    rho[n, n] = 1.0
    return rho


def most_populated_level(rho) -> int:
    """Index of the largest diagonal population; ties go to the higher level."""
    rho = np.asarray(rho)
    pops = np.real(np.diagonal(rho)) if rho.ndim == 2 else np.real(rho)
    top = pops.max()
    return int(np.flatnonzero(pops >= top - 1e-12 * max(abs(top), 1.0))[-1])
