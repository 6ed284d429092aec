import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from qutrit_charging import protocol as pr
from qutrit_charging.dynamics import Trajectory, charge_effective, charge_full
from qutrit_charging.model import ChargerParams, large_spin, truncated_ho, uniform_ladder
from qutrit_charging.observables import level_projector

FIG2 = ChargerParams(Delta=0.1, delta=0.01, Omega=0.005, gamma_hg=0.1, gamma_eg=0.01)


# rates and optimal couplings


def test_gamma_eff_zero_without_coupling():
    b = uniform_ladder(5)
    assert all(pr.gamma_eff(b, FIG2, n) == 0 for n in range(5))


def test_gamma_eff_fig2_optimum():
    b = uniform_ladder(50)
    c = FIG2.replace(g=pr.optimal_coupling(b, FIG2, 0))
    assert c.g == pytest.approx(0.035355339, rel=1e-8)
    assert pr.gamma_eff(b, c, 0) == pytest.approx(2.5e-4, rel=1e-12)
    assert pr.optimized_rate_uniform(FIG2) == pytest.approx(2.5e-4, rel=1e-12)


def test_gamma_eff_range():
    b = uniform_ladder(3)
    for n in (-1, 3):
        with pytest.raises(ValueError):
            pr.gamma_eff(b, FIG2, n)


def test_optimal_coupling_examples():
    spin = large_spin(25)
    assert pr.optimal_coupling(spin, FIG2, spin.level_index(0)) == pytest.approx(
        math.sqrt(abs(FIG2.detuning_product) / 650), rel=1e-14
    )
    ho = truncated_ho(30)
    g0 = pr.optimal_coupling(ho, FIG2, 0)
    for n in (1, 5, 29):
        assert pr.optimal_coupling(ho, FIG2, n) / g0 == pytest.approx(1 / math.sqrt(n + 1), rel=1e-14)
    with pytest.raises(ValueError):
        pr.optimal_coupling(ho, FIG2, 30)


def test_optimized_rate_singular_phase():
    c = ChargerParams(Delta=0.1, delta=0.01, Omega=0.01, gamma_hg=0.0, gamma_eg=0.0)
    with pytest.raises(ValueError):
        pr.optimized_rate_uniform(c)


def test_optimized_rate_scales_with_drive_squared():
    assert pr.optimized_rate_uniform(FIG2.replace(Omega=0.01)) == pytest.approx(
        4 * pr.optimized_rate_uniform(FIG2), rel=1e-14
    )


chargers = st.builds(
    ChargerParams,
    Delta=st.floats(-0.5, 0.5).filter(lambda x: abs(x) > 1e-3),
    delta=st.floats(-0.5, 0.5).filter(lambda x: abs(x) > 1e-3),
    Omega=st.floats(1e-3, 0.1),
    gamma_hg=st.floats(1e-3, 0.5),
    gamma_eg=st.floats(1e-3, 0.5),
    gamma_he=st.floats(0, 0.5),
)


@settings(max_examples=40, deadline=None)
@given(c=chargers)
def test_optimized_rate_matches_numerical_maximum(c):
    b = uniform_ladder(1)
    g_star = pr.optimal_coupling(b, c, 0)
    res = minimize_scalar(
        lambda lg: -pr.gamma_eff(b, c.replace(g=g_star * math.exp(lg)), 0),
        bounds=(-3, 3),
        method="bounded",
        options={"xatol": 1e-10},
    )
    assert -res.fun == pytest.approx(pr.optimized_rate_uniform(c), rel=1e-10)
    assert abs(res.x) < 1e-4


@settings(max_examples=40, deadline=None)
@given(c=chargers, kind=st.sampled_from(["uniform", "ho", "spin"]))
def test_rate_is_unimodal_in_g(c, kind):
    b = {"uniform": uniform_ladder(20), "ho": truncated_ho(20), "spin": large_spin(10)}[kind]
    g_star = pr.optimal_coupling(b, c, 3)
    grid = g_star * np.geomspace(1e-2, 1e2, 200)
    rates = pr.gamma_eff_landscape(b, c, grid)[:, 3]
    k = int(np.argmax(rates))
    assert np.all(np.diff(rates[: k + 1]) >= 0)
    assert np.all(np.diff(rates[k:]) <= 0)
    signs = np.sign(np.diff(rates))
    signs = signs[signs != 0]
    assert np.count_nonzero(np.diff(signs)) == 1
    assert abs(math.log(grid[k] / g_star)) <= math.log(grid[1] / grid[0])


def test_landscape_matches_pointwise_rates():
    b = truncated_ho(6)
    gs = [0.001, 0.01, 0.05]
    land = pr.gamma_eff_landscape(b, FIG2, gs)
    for i, g in enumerate(gs):
        for n in range(b.N):
            assert land[i, n] == pytest.approx(pr.gamma_eff(b, FIG2.replace(g=g), n), rel=1e-13)


def test_spin_rates_peak_mid_ladder_at_central_optimum():
    b = large_spin(25)
    c = FIG2.replace(g=pr.optimal_coupling(b, FIG2, b.level_index(0)))
    rates = [pr.gamma_eff(b, c, n) for n in range(b.N)]
    assert max(rates) == pytest.approx(rates[b.level_index(0)])
    assert rates[b.level_index(0)] == pytest.approx(rates[b.level_index(-1)], rel=1e-14)
    assert rates[0] < 0.2 * max(rates)


# quench schedules


def test_quench_schedule_validation():
    with pytest.raises(ValueError):
        pr.QuenchSchedule(((1.0, 0.1),))
    with pytest.raises(ValueError):
        pr.QuenchSchedule(((0.0, 0.1), (5.0, 0.1), (5.0, 0.2)))
    with pytest.raises(ValueError):
        pr.QuenchSchedule(((0.0, 0.0),))
    s = pr.QuenchSchedule(((0.0, 0.3), (2.0, 0.2)))
    assert s.quench_times == (2.0,)
    assert s.coupling_at(1.9) == 0.3 and s.coupling_at(2.0) == 0.2


def test_quench_schedule_requires_oscillator():
    with pytest.raises(ValueError):
        pr.quench_schedule_ho(uniform_ladder(3), FIG2, [1.0], lambda t: 0.0)


def test_quench_schedule_bad_times():
    ho = truncated_ho(5)
    for times in ([0.0], [2.0, 1.0], [-1.0]):
        with pytest.raises(ValueError):
            pr.quench_schedule_ho(ho, FIG2, times, lambda t: 0.0)


def test_quench_schedule_reoptimises_for_mean_excitation():
    ho = truncated_ho(20)
    s = pr.quench_schedule_ho(ho, FIG2, [10.0, 20.0], lambda t: {10.0: 0.0, 20.0: 3.0}[t])
    g0 = pr.optimal_coupling(ho, FIG2, 0)
    assert s.segments[0] == (0.0, g0)
    assert s.segments[1][1] == pytest.approx(g0)  # still in the ground state
    assert s.segments[2][1] == pytest.approx(g0 / 2)
    assert pr.quench_schedule_ho(ho, FIG2, [], lambda t: 0.0).segments == ((0.0, g0),)


def test_charge_with_quenches_without_quenches_is_plain_run():
    ho = truncated_ho(6)
    c = FIG2.replace(Omega=0.01)
    rho0 = level_projector(ho, 0)
    t = np.linspace(0, 2000, 41)
    traj, sched = pr.charge_with_quenches(ho, c, rho0, t)
    ref = charge_effective(ho, c.replace(g=pr.optimal_coupling(ho, c, 0)), rho0, t)
    assert len(sched.segments) == 1
    assert np.allclose(traj.populations, ref.populations, atol=1e-9)
    assert np.array_equal(traj.times, t)


def test_charge_with_quenches_continuity():
    ho = truncated_ho(6)
    c = FIG2.replace(Omega=0.01)
    rho0 = level_projector(ho, 0)
    t = np.linspace(0, 2000, 41)
    traj, sched = pr.charge_with_quenches(ho, c, rho0, t, quench_times=[500.0, 1000.0])
    assert sched.quench_times == (500.0, 1000.0)
    assert sched.segments[2][1] < sched.segments[1][1] < sched.segments[0][1]
    assert np.array_equal(traj.times, t)
    # identical to the unquenched run before the first quench
    plain, _ = pr.charge_with_quenches(ho, c, rho0, t)
    before = t <= 500
    assert np.allclose(traj.populations[before], plain.populations[before], atol=1e-9)
    assert not np.allclose(traj.populations[-1], plain.populations[-1], atol=1e-6)


def test_charge_with_quenches_full_engine_small():
    ho = truncated_ho(2)
    c = FIG2.replace(Omega=0.002)
    rho0 = level_projector(ho, 0)
    t = np.linspace(0, 400, 9)
    traj, _ = pr.charge_with_quenches(ho, c, rho0, t, quench_times=[200.0], engine="full")
    assert traj.qutrit_ground_population is not None
    assert np.allclose(traj.populations.sum(axis=1), 1, atol=1e-8)
    with pytest.raises(ValueError):
        pr.charge_with_quenches(ho, c, rho0, t, engine="exact")


def test_full_engine_matches_unquenched_full_run():
    ho = truncated_ho(2)
    c = FIG2.replace(Omega=0.002)
    rho0 = level_projector(ho, 0)
    t = np.linspace(0, 400, 9)
    traj, _ = pr.charge_with_quenches(ho, c, rho0, t, engine="full")
    ref = charge_full(ho, c.replace(g=pr.optimal_coupling(ho, c, 0)), rho0, t)
    assert np.allclose(traj.populations, ref.populations, atol=1e-8)


# saturation


def ramp(erg, times):
    n = len(times)
    return Trajectory(np.asarray(times, float), np.tile([1.0, 0.0], (n, 1)), ergotropy=np.asarray(erg, float))


def test_saturation_interpolates():
    b = uniform_ladder(1)
    rep = pr.saturation_time(ramp([0, 0.5, 1.0], [0, 10, 20]), b, 0.9, gamma_eg=0.1)
    assert rep.time == pytest.approx(18.0)
    assert rep.gamma_eg_time == pytest.approx(1.8)
    assert rep.threshold == pytest.approx(0.9)


def test_saturation_at_start():
    assert pr.saturation_time(ramp([1.0, 1.0], [0, 1]), uniform_ladder(1)).time == 0


def test_saturation_never_reached():
    with pytest.raises(pr.NotSaturatedError):
        pr.saturation_time(ramp([0, 0.5], [0, 1]), uniform_ladder(1))
    with pytest.raises(ValueError):
        pr.saturation_time(ramp([0, 0.5], [0, 1]), uniform_ladder(1), 1.0)


def test_saturation_flags_early_saturation():
    rep = pr.saturation_time(ramp([0, 1.0], [0, 1]), uniform_ladder(1), quench_times=[5.0])
    assert rep.before_last_quench


def test_saturation_time_decreases_with_drive():
    b = uniform_ladder(10)
    rho0 = level_projector(b, 0)
    t = np.linspace(0, 4e6, 2001)
    times = []
    for omega in (0.002, 0.005, 0.01):
        c = FIG2.replace(Omega=omega)
        c = c.replace(g=pr.optimal_coupling(b, c, 0))
        times.append(pr.saturation_time(charge_effective(b, c, rho0, t), b).time)
    assert times[0] > times[1] > times[2]
