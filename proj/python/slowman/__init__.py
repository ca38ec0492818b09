"""Slow-manifold projection by zero-derivative functional iteration."""

from ._core import (  # noqa: F401
    DivergenceError,
    Error,
    FastSlowSystem,
    ValidationError,
    boundary_residual,
    complex_pair_test,
    critical_point,
    h_max_over_eps,
    in_sector,
    linear_test,
    make_system,
    michaelis_menten,
    mu,
    mu_hat,
    order_of_accuracy,
    project,
    project_cascade,
    raster_region,
    rpm_iterate,
    run_cli,
    uniform_bound,
)

__all__ = [name for name in dir() if not name.startswith("_")]
