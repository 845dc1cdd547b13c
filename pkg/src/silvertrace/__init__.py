"""Trace-map dynamics for the silver-ratio quasiperiodic Schrodinger operator."""

from .tracecore import (
    Point3,
    Coupling,
    trace_map,
    trace_map_inverse,
    rho,
    fricke_invariant,
    initial_line,
    pell,
    trace_sequences,
    transfer_matrix_oracle,
    table_w,
)
from .regions import classify_region, property_p, CATALOG
from .surface import SurfacePoint, solve_branch, on_surface, sample_region

__version__ = "0.1.0"
