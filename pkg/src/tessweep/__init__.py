"""tessweep: a laboratory for planar line tessellations and Voronoi diagrams.

The package builds random tessellations with exact cell geometry, simulates
the chord evolution seen by a horizontal line sweeping across cells, solves
the matching kinetic transport equations numerically, verifies their
transform-domain reduction, and reconstructs whole-plane area/perimeter
distributions from chord-level objects.  Every pipeline is cross-validated
against direct Monte Carlo tessellation oracles.
"""

from .direction_law import DirectionLaw, EPS_ANGLE
from .line_process import (LineSet, PointSet, Window, make_rng, replica_seed,
                           sample_lines, sample_points, secant_crossings)
from .tessellation import (CellComplex, ConvexCell, build_arrangement,
                           build_voronoi, cell_metrics, interior_cells)

__version__ = "0.1.0"

__all__ = [
    "DirectionLaw", "EPS_ANGLE",
    "LineSet", "PointSet", "Window", "make_rng", "replica_seed",
    "sample_lines", "sample_points", "secant_crossings",
    "CellComplex", "ConvexCell", "build_arrangement", "build_voronoi",
    "cell_metrics", "interior_cells",
    "__version__",
]
