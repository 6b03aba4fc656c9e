"""Numerical invariants of causal structures given by a graph y0 = F(x; y)."""
from .errors import CausalGeoError, GeometricError, InputError
from .geometry import (AdaptedCoframe, CausalStructure, CPoint, FubiniCubic, adapted_coframe,
                       fubini_cubic, invariant_report, normalize_sff, vertical_hessian)
from .flow import (integrate_characteristic, optical_scalars, propagate_jacobi, run_geodesic)
from .oracle import Metric, curvature, geodesic_deviation, graph_from_metric, null_geodesic

__version__ = "0.1.0"

__all__ = [
    "AdaptedCoframe", "CausalGeoError", "CausalStructure", "CPoint", "FubiniCubic", "GeometricError",
    "InputError", "Metric", "adapted_coframe", "curvature", "fubini_cubic", "geodesic_deviation",
    "graph_from_metric", "integrate_characteristic", "invariant_report", "normalize_sff",
    "null_geodesic", "optical_scalars", "propagate_jacobi", "run_geodesic", "vertical_hessian",
]
