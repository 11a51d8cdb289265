"""Package-wide numerical constants."""

# tol_residual(grid) = c * (dx^2 + dt^2).  Each c is about 2.5x the largest
# residual/(dx^2 + dt^2) ratio observed on the tabulated exact heat solution
# sin(pi x) exp(-pi^2 t), T = 0.5, over N = 32..256 with the default bases.
TOL_RESIDUAL_CONSTANT = 0.1
TOL_RESIDUAL_FAMILY = {
    "occ-ibp-time": 30.0,
    "occ-ibp-space": 1.0,
    "occ-weak": 4.0,
    "occ-dissipation": 100.0,
}

# default relaxation solver settings
SOLVER_TOL = 1e-6
SOLVER_MAX_ITERS = 20000
SOLVER_RHO = 0.01
# iteration budgets per relaxation degree; iteration counts rather than
# wall-clock limits keep reports reproducible.  Each stays under 60 s on one core.
SOLVER_ITERS_BY_DEGREE = {1: 20000, 2: 20000, 3: 20000, 4: 4000, 5: 1500}
