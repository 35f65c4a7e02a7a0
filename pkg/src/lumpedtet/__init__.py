"""Mass-lumped tetrahedral finite elements for the acoustic wave equation.

The main entry points are re-exported here; see the submodules for the rest.
"""

from .assembly import AssembledSystem, assemble_system, point_source_vector
from .kernels import BACKEND
from .mesh import TetMesh, build_box_mesh, build_honeycomb_cell, number_nodes, perturb_mesh
from .reference_element import ElementTable, NodalBasis, build_nodal_basis, verify_exactness
from .tables import BUILTIN_IDS, build_element_table
from .time_integration import C_K, PointSource, TimeScheme, run, stable_dt

__version__ = "0.1.0"

__all__ = [
    "AssembledSystem",
    "BACKEND",
    "BUILTIN_IDS",
    "C_K",
    "ElementTable",
    "NodalBasis",
    "PointSource",
    "TetMesh",
    "TimeScheme",
    "assemble_system",
    "build_box_mesh",
    "build_element_table",
    "build_honeycomb_cell",
    "build_nodal_basis",
    "number_nodes",
    "perturb_mesh",
    "point_source_vector",
    "run",
    "stable_dt",
    "verify_exactness",
]
