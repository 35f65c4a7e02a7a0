"""Lumped mass, stiffness and load assembly on a numbered mesh."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import GlobalNumbering, TetMesh, affine_maps, locate_points, number_nodes
from .reference_element import NodalBasis

__all__ = [
    "AssembledSystem",
    "element_stiffness",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_source",
    "point_source_vector",
    "point_evaluation_matrix",
    "apply_dirichlet",
    "assemble_system",
    "dump_system",
]


@dataclass(eq=False)
class AssembledSystem:
    """Diagonal mass, CSR stiffness and Dirichlet mask of one discretisation.

    Dirichlet nodes are masked, not removed: ``inv_mass`` is zero there, so
    explicit updates keep those entries at zero while global indices stay
    stable.
    """

    mass_diag: np.ndarray
    stiffness: sp.csr_matrix
    interior_mask: np.ndarray
    numbering: GlobalNumbering | None = None

    def __post_init__(self):
        self.mass_diag = np.asarray(self.mass_diag, dtype=float)
        self.interior_mask = np.asarray(self.interior_mask, dtype=bool)
        with np.errstate(divide="ignore"):
            self.inv_mass = np.where(self.interior_mask, 1.0 / self.mass_diag, 0.0)

    @property
    def n(self) -> int:
        return len(self.mass_diag)

    def energy(self, u_prev: np.ndarray, u_curr: np.ndarray, dt: float) -> float:
        """Discrete energy at the half step between two leap-frog levels.

        ``0.5 v^T M v + 0.5 u_prev^T A u_curr`` with ``v = (u_curr - u_prev)/dt``
        is exactly conserved by source-free leap-frog stepping.
        """
        v = (u_curr - u_prev) / dt
        return 0.5 * float(np.real(np.vdot(v, self.mass_diag * v))) + 0.5 * float(
            np.real(np.vdot(u_prev, self.stiffness @ u_curr))
        )


def element_stiffness(basis: NodalBasis, jac: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Element matrices ``c_e det(J) sum_ab (J^-1 J^-T)_ab K^ab``, shape (ne, n, n)."""
    jinv = np.linalg.inv(jac)
    metric = np.einsum("eai,ebi->eab", jinv, jinv)
    scale = c * np.linalg.det(jac)
    k = basis.ref_stiffness.reshape(9, basis.n * basis.n)
    out = (metric.reshape(-1, 9) * scale[:, None]) @ k
    return out.reshape(-1, basis.n, basis.n)


def assemble_mass(mesh: TetMesh, basis: NodalBasis, numbering: GlobalNumbering) -> np.ndarray:
    """Diagonal entries ``sum_e det(J_e) w_ref rho_e`` of the lumped mass matrix."""
    _, jac = affine_maps(mesh)
    contrib = (np.linalg.det(jac) * mesh.rho)[:, None] * basis.weights[None, :]
    return np.bincount(
        numbering.elem_to_global.ravel(), weights=contrib.ravel(), minlength=numbering.n_nodes
    )


def assemble_stiffness(
    mesh: TetMesh,
    basis: NodalBasis,
    numbering: GlobalNumbering,
    chunk: int = 2048,
) -> sp.csr_matrix:
    """Global stiffness in CSR form with sorted column indices."""
    _, jac = affine_maps(mesh)
    e2g = numbering.elem_to_global
    n = basis.n
    rows, cols, vals = [], [], []
    for start in range(0, mesh.n_elements, chunk):
        sl = slice(start, start + chunk)
        ke = element_stiffness(basis, jac[sl], mesh.c[sl])
        g = e2g[sl]
        rows.append(np.repeat(g, n, axis=1).ravel())
        cols.append(np.tile(g, (1, n)).ravel())
        vals.append(ke.ravel())
    nn = numbering.n_nodes
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nn, nn)
    ).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_source(
    mesh: TetMesh,
    basis: NodalBasis,
    numbering: GlobalNumbering,
    f: Callable[[np.ndarray, float], np.ndarray],
    t: float,
) -> np.ndarray:
    """Quadrature load ``sum_e det(J_e) w_ref f(x, t)`` for a pointwise field.

    ``f(points, t)`` receives node coordinates (m, 3).
    """
    _, jac = affine_maps(mesh)
    values = np.asarray(f(numbering.node_coords, t), dtype=float)
    values = np.broadcast_to(values, (numbering.n_nodes,))
    contrib = np.linalg.det(jac)[:, None] * basis.weights[None, :]
    load = contrib * values[numbering.elem_to_global]
    return np.bincount(
        numbering.elem_to_global.ravel(), weights=load.ravel(), minlength=numbering.n_nodes
    )


def point_source_vector(numbering: GlobalNumbering, position, amplitude: float = 1.0,
                        tol: float = 1e-9) -> tuple[np.ndarray, int]:
    """Unit-strength delta source collocated at the global node nearest ``position``.

    The load entry of that node equals the source amplitude, which is the
    value of ``(delta_x, w_i)`` for a node sitting exactly on the source.
    Returns the spatial load vector and the node index.
    """
    coords = numbering.node_coords
    pos = np.asarray(position, dtype=float)
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    span = float(np.max(hi - lo))
    if np.any(pos < lo - tol * span) or np.any(pos > hi + tol * span):
        raise ValueError(f"point source {pos} lies outside the mesh bounding box")
    node = numbering.nearest_node(pos)
    vec = np.zeros(numbering.n_nodes)
    vec[node] = amplitude
    return vec, node


def point_evaluation_matrix(mesh: TetMesh, basis: NodalBasis, numbering: GlobalNumbering,
                            points) -> sp.csr_matrix:
    """Sparse ``R`` with ``(R u)_k = u_h(x_k)``, evaluated through the element basis.

    Row ``k`` is also the Galerkin load ``(delta_{x_k}, w_i)`` of a unit point
    source at ``x_k``.  At a global node the row is that node's unit vector.
    """
    elems, bary = locate_points(mesh, points)
    vals = basis(bary)
    vals[np.abs(vals) < 1e-14] = 0.0
    rows = np.repeat(np.arange(len(elems)), basis.n)
    cols = numbering.elem_to_global[elems].ravel()
    R = sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(len(elems), numbering.n_nodes))
    R.eliminate_zeros()
    return R


def apply_dirichlet(system: AssembledSystem, numbering: GlobalNumbering) -> AssembledSystem:
    """Return the system with Dirichlet nodes of ``numbering`` masked out."""
    return AssembledSystem(system.mass_diag, system.stiffness, numbering.interior_mask, numbering)


def assemble_system(mesh: TetMesh, basis: NodalBasis,
                    numbering: GlobalNumbering | None = None) -> AssembledSystem:
    numbering = number_nodes(mesh, basis) if numbering is None else numbering
    mass = assemble_mass(mesh, basis, numbering)
    stiff = assemble_stiffness(mesh, basis, numbering)
    return AssembledSystem(mass, stiff, numbering.interior_mask, numbering)


def dump_system(system: AssembledSystem, directory: str | Path) -> None:
    """Write ``mass.txt`` (one value per line) and ``stiffness.txt`` (``i j v``)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "mass.txt", system.mass_diag, fmt="%.17g")
    coo = system.stiffness.tocoo()
    with open(directory / "stiffness.txt", "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v:.17g}\n")
