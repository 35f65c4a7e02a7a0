"""Tetrahedral meshes, affine maps, global node numbering and the periodic cell."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .reference_element import NodalBasis

__all__ = [
    "MeshError",
    "TetMesh",
    "AffineMap",
    "GlobalNumbering",
    "PeriodicCell",
    "HONEYCOMB_T",
    "cube_split",
    "build_box_mesh",
    "perturb_mesh",
    "affine_map",
    "affine_maps",
    "locate_points",
    "number_nodes",
    "build_honeycomb_cell",
    "read_mesh",
    "write_mesh",
]

# lattice tensor of the tetragonal disphenoid honeycomb (columns = cell edges)
HONEYCOMB_T = np.array(
    [
        [1.0, -1.0 / 3.0, -1.0 / 3.0],
        [0.0, np.sqrt(8.0 / 9.0), -np.sqrt(2.0 / 9.0)],
        [0.0, 0.0, np.sqrt(2.0 / 3.0)],
    ]
)

# face f of a tet is the face opposite local vertex f
FACE_VERTICES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


class MeshError(ValueError):
    pass


def _signed_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    v = vertices[tets]
    return np.linalg.det(v[:, 1:] - v[:, :1]) / 6.0


@dataclass(eq=False)
class TetMesh:
    """Vertices, positively oriented tets and per-element material constants.

    ``dirichlet_faces`` lists ``(element, local_face)`` pairs; every other
    boundary face is a natural (zero-Neumann) boundary.
    """

    vertices: np.ndarray
    tets: np.ndarray
    rho: np.ndarray
    c: np.ndarray
    dirichlet_faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.tets = np.ascontiguousarray(self.tets, dtype=np.int64)
        ne = len(self.tets)
        self.rho = np.broadcast_to(np.asarray(self.rho, dtype=float), (ne,)).copy()
        self.c = np.broadcast_to(np.asarray(self.c, dtype=float), (ne,)).copy()
        self.dirichlet_faces = np.asarray(self.dirichlet_faces, dtype=np.int64).reshape(-1, 2)
        self.validate()

    def validate(self) -> None:
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (nv, 3)")
        if self.tets.ndim != 2 or self.tets.shape[1] != 4:
            raise MeshError("tets must have shape (nt, 4)")
        if len(self.tets) and (self.tets.min() < 0 or self.tets.max() >= len(self.vertices)):
            raise MeshError("tet vertex index out of range")
        if not (np.all(self.rho > 0) and np.all(self.c > 0)):
            raise MeshError("material parameters must be positive")
        if len(self.tets) and np.any(self.volumes() <= 0):
            bad = int(np.argmin(self.volumes()))
            raise MeshError(f"element {bad} has non-positive volume")
        df = self.dirichlet_faces
        if len(df) and (df[:, 0].min() < 0 or df[:, 0].max() >= len(self.tets)
                        or df[:, 1].min() < 0 or df[:, 1].max() > 3):
            raise MeshError("dirichlet face reference out of range")

    @property
    def n_elements(self) -> int:
        return len(self.tets)

    def volumes(self) -> np.ndarray:
        return _signed_volumes(self.vertices, self.tets)

    def boundary_faces(self) -> np.ndarray:
        """``(element, local_face)`` pairs of faces owned by a single element."""
        faces = np.sort(self.tets[:, FACE_VERTICES], axis=-1).reshape(-1, 3)
        _, inv, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
        if counts.max(initial=1) > 2:
            raise MeshError("a face is shared by more than two elements")
        idx = np.flatnonzero(counts[inv.ravel()] == 1)
        return np.column_stack([idx // 4, idx % 4])

    def with_dirichlet(self, selector=None) -> "TetMesh":
        """Copy with Dirichlet tags on boundary faces.

        *selector* receives the (m, 3) face centroids and returns a boolean
        mask; ``None`` tags the whole boundary.
        """
        bf = self.boundary_faces()
        if selector is not None:
            gv = self.tets[bf[:, 0][:, None], np.array(FACE_VERTICES)[bf[:, 1]]]
            centroids = self.vertices[gv].mean(axis=1)
            bf = bf[np.asarray(selector(centroids), dtype=bool)]
        return TetMesh(self.vertices, self.tets, self.rho, self.c, bf)

    def scaled(self, factor: float) -> "TetMesh":
        return TetMesh(self.vertices * factor, self.tets, self.rho, self.c, self.dirichlet_faces)

    def translated(self, shift) -> "TetMesh":
        return TetMesh(self.vertices + np.asarray(shift, dtype=float), self.tets, self.rho,
                       self.c, self.dirichlet_faces)


@dataclass(frozen=True)
class AffineMap:
    origin: np.ndarray
    jacobian: np.ndarray

    @property
    def volume_ratio(self) -> float:
        """|e| / |e_ref| = det J."""
        return float(np.linalg.det(self.jacobian))

    def __call__(self, xref) -> np.ndarray:
        return self.origin + np.asarray(xref) @ self.jacobian.T


def affine_maps(mesh: TetMesh) -> tuple[np.ndarray, np.ndarray]:
    """Origins (ne, 3) and Jacobians (ne, 3, 3) of all reference-to-element maps."""
    v = mesh.vertices[mesh.tets]
    jac = (v[:, 1:] - v[:, :1]).transpose(0, 2, 1)
    return v[:, 0].copy(), jac


def locate_points(mesh: TetMesh, points, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Containing element and barycentric coordinates of each point.

    Among the elements whose closure holds the point (smallest barycentric
    coordinate ``>= -tol``) the one giving the largest such coordinate is
    chosen.  Raises MeshError for points outside the mesh.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    origins, jac = affine_maps(mesh)
    inv = np.linalg.inv(jac)
    elems = np.empty(len(pts), dtype=np.int64)
    bary = np.empty((len(pts), 4))
    for i, p in enumerate(pts):
        x = np.einsum("eab,eb->ea", inv, p - origins)
        b = np.column_stack([1.0 - x.sum(axis=1), x])
        worst = b.min(axis=1)
        e = int(np.argmax(worst))
        if worst[e] < -tol:
            raise MeshError(f"point {p.tolist()} lies outside the mesh")
        elems[i], bary[i] = e, np.clip(b[e], 0.0, None) / np.clip(b[e], 0.0, None).sum()
    return elems, bary


def affine_map(mesh: TetMesh, element: int) -> AffineMap:
    v = mesh.vertices[mesh.tets[element]]
    jac = (v[1:] - v[0]).T
    if not np.linalg.det(jac) > 0:
        raise MeshError(f"element {element} has non-positive volume")
    return AffineMap(v[0].copy(), jac)


def cube_split() -> np.ndarray:
    """Local connectivity of the 6-tet split of the unit cube.

    Cube corners are indexed by ``i + 2 j + 4 k``.  Each tet is one ordering
    ``x_p >= x_q >= x_r`` of the coordinates, i.e. the region cut out by the
    planes ``x1 = x2``, ``x1 = x3`` and ``x2 = x3``.
    """
    corners = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=float)
    tets = []
    for perm in itertools.permutations(range(3)):
        path = [0]
        pos = np.zeros(3, dtype=int)
        for axis in perm:
            pos[axis] = 1
            path.append(int(pos[0] + 2 * pos[1] + 4 * pos[2]))
        if np.linalg.det(corners[path[1:]] - corners[path[0]]) < 0:
            path[1], path[2] = path[2], path[1]
        tets.append(path)
    return np.array(tets, dtype=np.int64)


def build_box_mesh(bounds, resolution, rho=1.0, c=1.0) -> TetMesh:
    """Structured box mesh, each sub-cube split into 6 tets.

    ``bounds`` is ``((x0, x1), (y0, y1), (z0, z1))``; ``resolution`` an int
    or three ints (cells per axis).
    """
    bounds = np.asarray(bounds, dtype=float).reshape(3, 2)
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (3,))
    if np.any(res < 1):
        raise MeshError("resolution must be >= 1 along every axis")
    if np.any(bounds[:, 1] <= bounds[:, 0]):
        raise MeshError("degenerate box")
    axes = [np.linspace(lo, hi, n + 1) for (lo, hi), n in zip(bounds, res)]
    nx, ny, nz = res + 1
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    vid = np.arange(nx * ny * nz).reshape(nx, ny, nz)
    i, j, k = (a.ravel() for a in np.meshgrid(*(np.arange(n) for n in res), indexing="ij"))
    corner = np.stack(
        [vid[i + (q & 1), j + ((q >> 1) & 1), k + ((q >> 2) & 1)] for q in range(8)], axis=1
    )
    tets = corner[:, cube_split()].reshape(-1, 4)
    return TetMesh(grid, tets, rho, c)


def perturb_mesh(mesh: TetMesh, fraction: float, seed: int = 0, pinned=None) -> TetMesh:
    """Move interior vertices randomly, by at most ``fraction`` of their shortest edge.

    Each shift is drawn uniformly in a ball.  Boundary vertices stay put so the
    domain is unchanged, and so do vertices within 1e-9 of a point in ``pinned``
    (e.g. sources and receivers).  Raises :class:`MeshError` if an element inverts.
    """
    rng = np.random.default_rng(seed)
    bf = mesh.boundary_faces()
    nv = len(mesh.vertices)
    on_boundary = np.zeros(nv, dtype=bool)
    on_boundary[mesh.tets[bf[:, 0][:, None], np.array(FACE_VERTICES)[bf[:, 1]]].ravel()] = True
    pairs = mesh.tets[:, [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]].reshape(-1, 2)
    lengths = np.linalg.norm(mesh.vertices[pairs[:, 0]] - mesh.vertices[pairs[:, 1]], axis=1)
    hmin = np.full(nv, np.inf)
    np.minimum.at(hmin, pairs[:, 0], lengths)
    np.minimum.at(hmin, pairs[:, 1], lengths)
    direction = rng.normal(size=(nv, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = fraction * hmin * rng.uniform(size=nv) ** (1.0 / 3.0)
    shift = direction * radius[:, None]
    shift[on_boundary] = 0.0
    if pinned is not None and len(pinned):
        pts = np.atleast_2d(np.asarray(pinned, dtype=float))
        d = np.linalg.norm(mesh.vertices[:, None, :] - pts[None], axis=-1)
        shift[(d <= 1e-9).any(axis=1)] = 0.0
    return TetMesh(mesh.vertices + shift, mesh.tets, mesh.rho, mesh.c, mesh.dirichlet_faces)


@dataclass(frozen=True, eq=False)
class GlobalNumbering:
    """Global nodes of a mesh for a given reference element.

    ``elem_to_global[e, i]`` is the global index of reference node ``i`` on
    element ``e``; ``entity_dim`` is 0/1/2/3 for vertex, edge, face and
    interior nodes.
    """

    node_coords: np.ndarray
    elem_to_global: np.ndarray
    interior_mask: np.ndarray
    entity_dim: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    def nearest_node(self, point) -> int:
        d = np.linalg.norm(self.node_coords - np.asarray(point, dtype=float), axis=1)
        return int(np.argmin(d))


_COORD_SCALE = 2.0**40


def number_nodes(mesh: TetMesh, basis: NodalBasis) -> GlobalNumbering:
    """Number the global nodes so that elements sharing an entity share nodes.

    A reference node is classified by the set of local vertices on which its
    barycentric coordinates are nonzero.  Its key is that vertex set in global
    numbering plus the coordinates reordered by global vertex id, quantised to
    2**-40.  Nodes on a shared face, edge or vertex therefore get the same key
    from every adjacent element however those elements order their vertices.
    """
    bary = basis.nodes
    support = basis.support_mask()
    ne, nloc = mesh.n_elements, len(bary)
    e2g = np.empty((ne, nloc), dtype=np.int64)
    entity_dim = np.empty(0, dtype=np.int8)
    offset = 0
    for k in range(1, 5):
        local = np.flatnonzero(support.sum(axis=1) == k)
        if not len(local):
            continue
        cols = np.array([np.flatnonzero(support[i]) for i in local])  # (m, k)
        gids = mesh.tets[:, cols]  # (ne, m, k)
        coords = np.broadcast_to(bary[local[:, None], cols], gids.shape)
        order = np.argsort(gids, axis=-1, kind="stable")
        gids_sorted = np.take_along_axis(gids, order, axis=-1)
        q = np.rint(np.take_along_axis(coords, order, axis=-1) * _COORD_SCALE).astype(np.int64)
        keys = np.concatenate([gids_sorted, q], axis=-1).reshape(-1, 2 * k)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        e2g[:, local] = inv.reshape(ne, len(local)) + offset
        offset += len(uniq)
        entity_dim = np.concatenate([entity_dim, np.full(len(uniq), k - 1, dtype=np.int8)])

    origins, jac = affine_maps(mesh)
    xref = basis.nodes_cartesian
    phys = origins[:, None, :] + np.einsum("eab,ib->eia", jac, xref)
    coords = np.empty((offset, 3))
    coords[e2g.ravel()] = phys.reshape(-1, 3)
    _check_collisions(coords, e2g, phys)

    interior = np.ones(offset, dtype=bool)
    for elem, face in mesh.dirichlet_faces:
        on_face = bary[:, face] <= 1e-12
        interior[e2g[elem, on_face]] = False
    for arr in (coords, e2g, interior, entity_dim):
        arr.setflags(write=False)
    return GlobalNumbering(coords, e2g, interior, entity_dim)


def _check_collisions(coords: np.ndarray, e2g: np.ndarray, phys: np.ndarray) -> None:
    """Distinct nodes of one element must stay apart; shared nodes must agree."""
    spread = np.abs(coords[e2g] - phys).max()
    scale = np.abs(phys).max() + 1.0
    if spread > 1e-8 * scale:
        raise MeshError(f"shared node positions disagree by {spread:.3e}")
    ne, n, _ = phys.shape
    if n < 2:
        return
    iu = np.triu_indices(n, 1)
    for start in range(0, ne, 256):
        chunk = phys[start : start + 256]
        dist = np.linalg.norm(chunk[:, iu[0]] - chunk[:, iu[1]], axis=-1)
        d, diam = dist.min(axis=1), dist.max(axis=1)
        if np.any(d < 1e-8 * diam):
            bad = start + int(np.argmin(d / diam))
            raise MeshError(f"two distinct nodes of element {bad} collide; mesh too distorted")


@dataclass(frozen=True, eq=False)
class PeriodicCell:
    """One parallelepiped cell ``T . [0,1)^3`` of a periodic tet tiling.

    ``mesh`` holds the 6 tets of the cell in physical coordinates.
    """

    lattice: np.ndarray
    mesh: TetMesh

    @property
    def volume(self) -> float:
        return float(np.linalg.det(self.lattice))

    @property
    def mean_element_volume(self) -> float:
        return self.volume / self.mesh.n_elements

    def lattice_coords(self, x) -> np.ndarray:
        return np.linalg.solve(self.lattice, np.asarray(x, dtype=float).T).T

    def classify(self, points, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
        """Owner representatives and lattice offsets of physical points.

        Returns ``(owner_key, offset)``: ``offset`` is the integer k with the
        point in ``T.k + Omega_0`` and ``owner_key`` the wrapped lattice
        coordinates quantised for matching.
        """
        y = self.lattice_coords(points)
        k = np.floor(y + tol).astype(np.int64)
        wrapped = y - k
        key = np.rint(wrapped * _COORD_SCALE).astype(np.int64)
        return key, k


def build_honeycomb_cell(lattice: np.ndarray | None = None) -> PeriodicCell:
    lattice = HONEYCOMB_T if lattice is None else np.asarray(lattice, dtype=float)
    corners = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=float)
    mesh = TetMesh(corners @ lattice.T, cube_split(), 1.0, 1.0)
    return PeriodicCell(lattice.copy(), mesh)


def write_mesh(mesh: TetMesh, path: str | Path) -> None:
    """Write the ASCII ``tetmesh 1`` format (0-based indices)."""
    out = ["tetmesh 1", f"{len(mesh.vertices)} {mesh.n_elements}"]
    out += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    out += [
        f"{a} {b} {c} {d} {r!r} {s!r}"
        for (a, b, c, d), r, s in zip(mesh.tets.tolist(), mesh.rho.tolist(), mesh.c.tolist())
    ]
    if len(mesh.dirichlet_faces):
        out.append(f"dirichlet_faces {len(mesh.dirichlet_faces)}")
        out += [f"{e} {f}" for e, f in mesh.dirichlet_faces.tolist()]
    Path(path).write_text("\n".join(out) + "\n")


def read_mesh(path: str | Path) -> TetMesh:
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        if lines[0] != ["tetmesh", "1"]:
            raise MeshError("missing 'tetmesh 1' header")
        nv, nt = (int(v) for v in lines[1])
        verts = np.array([[float(v) for v in ln] for ln in lines[2 : 2 + nv]])
        rows = lines[2 + nv : 2 + nv + nt]
        if len(verts) != nv or len(rows) != nt or any(len(r) != 6 for r in rows):
            raise MeshError("truncated or malformed element block")
        tets = np.array([[int(v) for v in r[:4]] for r in rows], dtype=np.int64)
        rho = np.array([float(r[4]) for r in rows])
        c = np.array([float(r[5]) for r in rows])
        faces = np.zeros((0, 2), dtype=np.int64)
        rest = lines[2 + nv + nt :]
        if rest:
            if rest[0][0] != "dirichlet_faces":
                raise MeshError(f"unexpected record {' '.join(rest[0])!r}")
            m = int(rest[0][1])
            faces = np.array([[int(v) for v in r] for r in rest[1 : 1 + m]], dtype=np.int64)
            if len(faces) != m:
                raise MeshError("truncated dirichlet_faces block")
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"{path}: malformed mesh file ({exc})") from exc
    return TetMesh(verts.reshape(-1, 3), tets.reshape(-1, 4), rho, c, faces)
