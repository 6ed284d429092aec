"""Dense complex linear algebra and adaptive time integration.

Matrices are plain ``numpy`` complex arrays.  The helpers here add the
checks the rest of the package relies on: Hermiticity before an
eigendecomposition, conditioning and residual checks around linear
solves, and an embedded Dormand-Prince 5(4) integrator with PI step
control that steps exactly onto a requested output grid.
"""

from __future__ import annotations

from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from . import constants as C


class NumericsError(RuntimeError):
    """Base class for numerical failures."""


class NotHermitianError(NumericsError, ValueError):
    def __init__(self, max_asymmetry: float, tol: float):
        super().__init__(
            f"matrix is not Hermitian: max |m - m^H| = {max_asymmetry:.3e} exceeds {tol:.3e}"
        )
        self.max_asymmetry = max_asymmetry


class SingularMatrixError(NumericsError):
    def __init__(self, condition: float, message: str | None = None):
        super().__init__(message or f"matrix is singular or ill-conditioned (cond ~ {condition:.3e})")
        self.condition = condition


class IntegrationError(NumericsError):
    def __init__(self, t: float, message: str):
        super().__init__(f"integration failed at t = {t:.6g}: {message}")
        self.t = t


class HermitianEigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # real, ascending
    eigenvectors: np.ndarray  # unitary, columns are eigenvectors


def as_complex_matrix(a: Any) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def max_asymmetry(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def hermitian_eigh(m: Any, tol: float = C.HERMITIAN_TOL) -> HermitianEigenDecomposition:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Raises :class:`NotHermitianError` when ``m`` deviates from its
    adjoint by more than ``tol * ||m||`` (Frobenius norm).
    """
    m = as_complex_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    asym = max_asymmetry(m)
    bound = tol * max(np.linalg.norm(m), 1e-300)
    if asym > bound:
        raise NotHermitianError(asym, bound)
    # LAPACK only reads one triangle; symmetrise so both halves count.
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return HermitianEigenDecomposition(w, v)


def kron(a: Any, b: Any) -> np.ndarray:
    return np.kron(as_complex_matrix(a), as_complex_matrix(b))


def solve_linear(
    a: Any,
    b: Any,
    max_cond: float = C.SOLVE_MAX_COND,
    residual_tol: float = C.SOLVE_RESIDUAL_TOL,
) -> np.ndarray:
    """Solve ``a x = b`` with a conditioning guard and a residual check."""
    a = as_complex_matrix(a)
    b = np.asarray(b, dtype=complex)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, matrix has {a.shape[0]}")
    cond = float(np.linalg.cond(a)) if a.size else 1.0
    if not np.isfinite(cond) or cond > max_cond:
        raise SingularMatrixError(cond)
    x = np.linalg.solve(a, b)
    resid = np.linalg.norm(a @ x - b)
    bound = residual_tol * (np.linalg.norm(a) * np.linalg.norm(x) + np.linalg.norm(b))
    if resid > bound:
        raise SingularMatrixError(cond, f"residual {resid:.3e} exceeds bound {bound:.3e} (cond ~ {cond:.3e})")
    return x


# Dormand-Prince 5(4) tableau.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

# PI controller constants (Hairer, Norsett & Wanner, DOPRI5).
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA
_SAFE = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 10.0


def _combine(y: np.ndarray, h: float, coeffs, ks) -> np.ndarray:
    out = y.copy()
    for a, k in zip(coeffs, ks):
        if a:
            out += (h * a) * k
    return out


def _error_norm(err: np.ndarray, y: np.ndarray, y_new: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(f, y0, f0, rtol, atol, span) -> float:
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean(np.abs(y0 / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = f(y0 + h0 * f0)
    d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def integrate_ode(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0: Any,
    t_grid: Sequence[float],
    rel_tol: float = C.RTOL,
    abs_tol: float = C.ATOL,
    observe: Callable[[np.ndarray], Any] | None = None,
    max_steps: int = C.MAX_STEPS,
) -> list:
    """Integrate the autonomous system ``dy/dt = rhs(y)`` onto ``t_grid``.

    Adaptive Dormand-Prince 5(4) with PI step-size control.  Steps are
    clipped so that every grid time is hit exactly; the unclipped step
    proposal is carried over afterwards.  ``observe`` maps each grid
    state to what gets stored (defaults to a copy of the state).

    ``t_grid`` must start at 0 and be strictly increasing.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    if t_grid[0] != 0.0:
        raise ValueError("t_grid must start at 0")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if rel_tol <= 0 or abs_tol <= 0:
        raise ValueError("tolerances must be positive")
    if observe is None:
        observe = np.copy

    y = np.array(y0, dtype=complex)
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state has non-finite entries")
    out = [observe(y)]
    if t_grid.size == 1:
        return out

    t = 0.0
    k1 = rhs(y)
    h = _initial_step(rhs, y, k1, rel_tol, abs_tol, t_grid[-1])
    fac_old = 1e-4
    steps = 0
    for t_next in t_grid[1:]:
        while t < t_next:
            if steps >= max_steps:
                raise IntegrationError(t, f"exceeded {max_steps} steps")
            hmin = C.MIN_STEP_FRACTION * max(1.0, abs(t))
            if h < hmin:
                raise IntegrationError(t, f"step size underflow (h = {h:.3e})")
            last = t + h >= t_next
            h_try = t_next - t if last else h

            ks = [k1]
            for i in range(1, 6):
                ks.append(rhs(_combine(y, h_try, _A[i], ks)))
            y_new = _combine(y, h_try, _B, ks)
            k7 = rhs(y_new)
            ks.append(k7)
            err_vec = _combine(np.zeros_like(y), h_try, _E, ks)
            steps += 1

            if not np.all(np.isfinite(y_new)):
                raise IntegrationError(t, "non-finite state produced")
            err = _error_norm(err_vec, y, y_new, rel_tol, abs_tol)
            fac11 = err**_EXPO if err > 0 else 0.0
            if err <= 1.0:
                fac = fac11 / fac_old**_BETA
                fac = max(1 / _FAC_MAX, min(1 / _FAC_MIN, fac / _SAFE))
                h_prop = h_try / fac
                fac_old = max(err, 1e-4)
                t = float(t_next) if last else t + h_try
                y = y_new
                k1 = k7
                # a clipped step says nothing about the natural step size
                if h_try >= h or h_prop < h:
                    h = h_prop
            else:
                h = h_try / min(1 / _FAC_MIN, fac11 / _SAFE)
        out.append(observe(y))
    return out
