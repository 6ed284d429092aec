"""Frozen numerical defaults shared by every module."""

# ODE integration
RTOL = 1e-8
ATOL = 1e-10
MIN_STEP_FRACTION = 1e-14  # step underflow threshold relative to max(1, |t|)
MAX_STEPS = 10_000_000

# Linear algebra
HERMITIAN_TOL = 1e-10  # relative to the matrix norm
SOLVE_MAX_COND = 1e12
SOLVE_RESIDUAL_TOL = 1e-10

# Density-matrix checks
TRACE_TOL = 1e-9
HERMITICITY_TOL = 1e-9
POSITIVITY_TOL = 1e-7
POPULATION_SUM_TOL = 1e-8

# Model / perturbation
RESONANCE_TOL = 1e-12
MAX_VECTORIZED_DIM = 64
SERIES_MAX_ORDER = 200
SERIES_MAX_RATIO = 0.95

# Protocol / output
DEFAULT_GRID_POINTS = 400
SATURATION_FRACTION = 0.99
