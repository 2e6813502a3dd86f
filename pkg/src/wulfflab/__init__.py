"""Numerical companion for the quantitative anisotropic isoperimetric inequality.

Wulff shapes from sampled surface tensions, anisotropic perimeters and the
asymmetry index, certified Whitney decompositions, discrete John constants,
Whitney-chain boundary traces and the penalized selection of near-Wulff sets.
"""

from .anisotropy import TensionSpec, WulffShape, disc, normalize_shape, polygon_shape, wulff_from_tension
from .errors import WulffLabError
from .geomset import GeomSet, anisotropic_perimeter, perimeter, volume
from .isoperimetry import asymmetry, deficit, qwi_ratio
from .johnmetric import estimate_john
from .selection import SelectionProblem, solve_selection
from .tracelab import trace_constant
from .whitney import whitney_decompose

__version__ = "0.1.0"

__all__ = [
    "GeomSet", "SelectionProblem", "TensionSpec", "WulffLabError", "WulffShape",
    "anisotropic_perimeter", "asymmetry", "deficit", "disc", "estimate_john", "normalize_shape",
    "perimeter", "polygon_shape", "qwi_ratio", "solve_selection", "trace_constant", "volume",
    "whitney_decompose", "wulff_from_tension",
]
