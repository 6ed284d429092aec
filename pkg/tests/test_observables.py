import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qutrit_charging import observables as obs
from qutrit_charging.model import large_spin, truncated_ho, uniform_ladder


def random_state(rng, dim):
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = m @ m.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def random_unitary(rng, dim):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def brute_force_passive_energy(rho, b):
    lam = np.linalg.eigvalsh(rho)
    e = np.asarray(b.level_energies)
    return min(float(np.dot(lam[list(p)], e)) for p in itertools.permutations(range(b.dim)))


small_batteries = st.one_of(
    st.integers(1, 5).map(uniform_ladder),
    st.integers(1, 5).map(truncated_ho),
    st.integers(1, 5).map(lambda k: large_spin(k / 2)),
)


def test_stored_energy_examples():
    b = uniform_ladder(5, 2.0)
    rho0 = obs.level_projector(b, 0)
    assert obs.stored_energy(rho0, rho0, b) == 0
    assert obs.stored_energy(obs.level_projector(b, 5), rho0, b) == pytest.approx(10.0)
    th = obs.thermal_state(b, 0.4)
    assert obs.stored_energy(th, th, b) == 0


def test_energy_accepts_population_vector():
    b = uniform_ladder(2)
    assert obs.mean_energy(np.array([0.2, 0.3, 0.5]), b) == pytest.approx(1.3)
    with pytest.raises(ValueError):
        obs.mean_energy(np.eye(2) / 2, b)


def test_passive_state_examples():
    b = uniform_ladder(2)
    p = np.diag([0.6, 0.3, 0.1])
    assert np.allclose(obs.passive_state(p, b).populations, [0.6, 0.3, 0.1])
    assert np.allclose(obs.passive_state(obs.level_projector(b, 2), b).populations, [1, 0, 0])
    b1 = uniform_ladder(1)
    assert np.allclose(obs.passive_state(np.diag([0.3, 0.7]), b1).populations, [0.7, 0.3])


def test_ergotropy_examples():
    b = uniform_ladder(1)
    assert obs.ergotropy(np.diag([0.3, 0.7]), b) == pytest.approx(0.4)
    b = uniform_ladder(50)
    assert obs.ergotropy(obs.level_projector(b, 50), b) == pytest.approx(50)
    assert obs.ergotropy(obs.level_projector(b, 0), b) == 0
    assert obs.ergotropy(obs.thermal_state(b, 0.5), b) == pytest.approx(0, abs=1e-12)


def test_ergotropy_coherent_qubit():
    # |+> on a unit-gap qubit: pure state, passive energy 0, mean energy 1/2
    b = uniform_ladder(1)
    plus = np.full((2, 2), 0.5, dtype=complex)
    assert obs.ergotropy(plus, b) == pytest.approx(0.5)


def test_thermal_state_examples():
    b = uniform_ladder(1)
    assert np.allclose(obs.thermal_state(b, math.inf), np.diag([1, 0]))
    assert np.allclose(np.diagonal(obs.thermal_state(uniform_ladder(4), 0.0)), 0.2)
    assert obs.thermal_state(b, 1.0)[0, 0].real == pytest.approx(1 / (1 + math.exp(-1)))
    assert obs.thermal_state(b, 1.0)[0, 0].real == pytest.approx(0.7311, abs=1e-4)
    with pytest.raises(ValueError):
        obs.thermal_state(b, -1.0)


def test_spin_thermal_state_favours_lowest_m():
    b = large_spin(3)
    pops = np.real(np.diagonal(obs.thermal_state(b, 1.0)))
    assert np.all(np.diff(pops) < 0)
    assert pops[1] / pops[0] == pytest.approx(math.exp(-1))


def test_most_populated_level():
    assert obs.most_populated_level(np.diag([1.0, 0, 0])) == 0
    assert obs.most_populated_level(np.eye(4) / 4) == 3
    assert obs.most_populated_level(np.array([0.2, 0.5, 0.3])) == 1


@settings(max_examples=60, deadline=None)
@given(b=small_batteries, seed=st.integers(0, 2**32 - 1))
def test_passive_energy_matches_brute_force(b, seed):
    rho = random_state(np.random.default_rng(seed), b.dim)
    assert obs.passive_energy(rho, b) == pytest.approx(brute_force_passive_energy(rho, b), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(b=small_batteries, seed=st.integers(0, 2**32 - 1))
def test_ergotropy_bounds(b, seed):
    rho = random_state(np.random.default_rng(seed), b.dim)
    erg = obs.ergotropy(rho, b)
    assert erg >= -1e-9
    assert erg <= obs.mean_energy(rho, b) - min(b.level_energies) + 1e-12


@settings(max_examples=60, deadline=None)
@given(b=small_batteries, seed=st.integers(0, 2**32 - 1))
def test_passive_energy_unitarily_invariant(b, seed):
    rng = np.random.default_rng(seed)
    rho = random_state(rng, b.dim)
    u = random_unitary(rng, b.dim)
    rotated = u @ rho @ u.conj().T
    assert obs.passive_energy(rotated, b) == pytest.approx(obs.passive_energy(rho, b), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(b=small_batteries, seed=st.integers(0, 2**32 - 1))
def test_passive_state_structure_and_idempotence(b, seed):
    rho = random_state(np.random.default_rng(seed), b.dim)
    pops = obs.passive_state(rho, b).populations
    assert abs(pops.sum() - 1) < 1e-10
    order = np.argsort(b.level_energies, kind="stable")
    assert np.all(np.diff(pops[order]) <= 1e-15)
    again = obs.passive_state(np.diag(pops), b).populations
    assert np.allclose(again, pops, atol=1e-15)
    assert obs.ergotropy(np.diag(pops), b) == pytest.approx(0, abs=1e-12)
