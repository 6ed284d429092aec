"""Self-check battery behind ``qutrit-charging validate``.

Every check compares two independent routes to the same quantity and
reports the worst discrepancy against a fixed bound.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from . import perturbation as pt
from .dynamics import LindbladGenerator, lindblad_rhs
from .model import ChargerParams, truncated_ho


class Check(NamedTuple):
    name: str
    value: float
    bound: float
    passed: bool

    def line(self) -> str:
        return f"{self.name} {self.value:.3e} {self.bound:.1e} {'PASS' if self.passed else 'FAIL'}"


def _check(name: str, value: float, bound: float) -> Check:
    return Check(name, float(value), bound, bool(value <= bound))


def random_charger(rng: np.random.Generator, max_ratio: float | None = None, n: int = 0) -> ChargerParams:
    """Random lossy charger; with ``max_ratio`` the coupling keeps ``|g^2 A_n^2 / (Delta~ delta~)| <= max_ratio``."""
    sign = rng.choice([-1.0, 1.0], size=2)
    c = ChargerParams(
        Delta=float(sign[0] * rng.uniform(0.01, 1.0)),
        delta=float(sign[1] * rng.uniform(0.001, 0.2)),
        Omega=float(rng.uniform(1e-3, 0.1)),
        gamma_hg=float(rng.uniform(1e-3, 0.3)),
        gamma_eg=float(rng.uniform(1e-3, 0.1)),
        gamma_he=float(rng.choice([0.0, rng.uniform(1e-3, 0.1)])),
        g=float(rng.uniform(1e-3, 0.3)),
    )
    if max_ratio is not None:
        a = math.sqrt(n + 1)
        g = math.sqrt(rng.uniform(0.05, 1.0) * max_ratio * abs(c.detuning_product)) / a
        c = c.replace(g=g)
    return c


def _closed_forms(c: ChargerParams, a: float) -> tuple[float, complex, complex]:
    d = c.Delta_c * c.delta_c - (c.g * a) ** 2
    h = -(c.Omega**2) * (c.delta_c / d).real
    hg = math.sqrt(c.gamma_hg) * c.Omega * c.delta_c / d
    eg = -math.sqrt(c.gamma_eg) * c.Omega * c.g * a / d
    return h, hg, eg


def _rel(a, b) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def check_resolvent(draws: int = 200, seed: int = 1) -> list[Check]:
    rng = np.random.default_rng(seed)
    b = truncated_ho(12)
    worst_op = worst_leak = 0.0
    for _ in range(draws):
        c = random_charger(rng)
        n = int(rng.integers(0, b.N))
        s = pt.subspace_system(b, c, n)
        ops = pt.effective_operators_subspace(s)
        h, hg, eg = _closed_forms(c, b.coeff(n))
        worst_op = max(worst_op, _rel(ops.hamiltonian, h), _rel(ops.hg, hg), _rel(ops.eg, eg))
        worst_leak = max(worst_leak, pt.leakage_residual(s) / abs(ops.non_hermitian))
    return [
        _check("resolvent_vs_closed_form_rel", worst_op, 1e-10),
        _check("leakage_identity_rel", worst_leak, 1e-12),
    ]


def check_series(draws: int = 50, seed: int = 2, max_ratio: float = 0.5, l_max: int = 82) -> list[Check]:
    rng = np.random.default_rng(seed)
    b = truncated_ho(12)
    worst_res = worst_geo = 0.0
    for _ in range(draws):
        n = int(rng.integers(0, b.N))
        c = random_charger(rng, max_ratio, n)
        s = pt.subspace_system(b, c, n)
        sc = pt.fgr_series_check(s, l_max)
        worst_res = max(worst_res, sc.residual_hg, sc.residual_eg)
        r = pt.expansion_ratio(s)
        for l in range(1, 9):
            worst_geo = max(
                worst_geo,
                _rel(pt.fgr_effective_coupling(s, l + 2) / pt.fgr_effective_coupling(s, l), r),
            )
    return [
        _check("fgr_series_residual", worst_res, 1e-10),
        _check("fgr_geometric_ratio_rel", worst_geo, 1e-12),
    ]


def random_generator(rng: np.random.Generator, dim: int = 3) -> LindbladGenerator:
    h = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    jumps = tuple(
        rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)) for _ in range(int(rng.integers(1, 4)))
    )
    return LindbladGenerator(0.5 * (h + h.conj().T), jumps)


def random_density(rng: np.random.Generator, dim: int = 3) -> np.ndarray:
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


Rhs = Callable[[LindbladGenerator, np.ndarray], np.ndarray]


def check_superoperator(rhs: Rhs = lindblad_rhs, draws: int = 50, seed: int = 3) -> list[Check]:
    """Dense vectorised generator against ``rhs``; trace preservation of ``rhs``."""
    rng = np.random.default_rng(seed)
    worst_vec = worst_trace = 0.0
    for _ in range(draws):
        gen = random_generator(rng)
        rho = random_density(rng)
        direct = rhs(gen, rho)
        scale = max(np.linalg.norm(direct), 1.0)
        via_vec = pt.unvec(pt.vectorized_generator(gen) @ pt.vec(rho), gen.dim)
        worst_vec = max(worst_vec, np.max(np.abs(via_vec - direct)) / scale)
        worst_trace = max(worst_trace, abs(np.trace(direct)) / scale)
        sup = pt.vectorized_generator(gen)
        worst_trace = max(worst_trace, np.max(np.abs(pt.vec(np.eye(gen.dim)) @ sup)) / np.linalg.norm(sup))
    return [
        _check("vectorized_vs_direct_rhs", worst_vec, 1e-12),
        _check("trace_preservation", worst_trace, 1e-12),
    ]


def run_checks(rhs: Rhs = lindblad_rhs) -> list[Check]:
    return check_resolvent() + check_series() + check_superoperator(rhs)
