"""Reference tetrahedron: symmetry orbits, nodal bases and quadrature exactness.

Points and polynomials on the reference tetrahedron (vertices (0,0,0),
(1,0,0), (0,1,0), (0,0,1)) are expressed in barycentric coordinates
``b = (b0, b1, b2, b3)`` where ``b_k`` belongs to reference vertex ``k``:
``b0 = 1 - x1 - x2 - x3`` and ``b_k = x_k`` otherwise.  Every symmetry of the
tetrahedron is a permutation of these four numbers, so orbits and equivariance
reduce to index permutations.

Polynomials are stored as linear combinations of barycentric monomials
``b0**e0 * b1**e1 * b2**e2 * b3**e3``; their integrals over the reference
element follow from ``e0! e1! e2! e3! / (e0 + e1 + e2 + e3 + 3)!``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "ORBIT_TOL",
    "RANK_TOL",
    "MAX_VANDERMONDE_COND",
    "ElementTableError",
    "NodeOrbit",
    "FunctionOrbit",
    "ElementTable",
    "NodalBasis",
    "ExactnessReport",
    "cartesian_to_barycentric",
    "barycentric_to_cartesian",
    "expand_orbit",
    "expand_exponent_orbit",
    "monomial_integral",
    "monomial_integral_exact",
    "monomials_of_degree",
    "eval_monomials",
    "build_nodal_basis",
    "verify_exactness",
    "test_space",
]

ORBIT_TOL = 1e-14
RANK_TOL = 1e-10
MAX_VANDERMONDE_COND = 1e12
PERMUTATIONS = tuple(itertools.permutations(range(4)))


class ElementTableError(ValueError):
    """An element table violates one of its structural invariants."""


def cartesian_to_barycentric(x) -> np.ndarray:
    """Map Cartesian reference coordinates (..., 3) to barycentric (..., 4)."""
    x = np.asarray(x, dtype=float)
    b0 = 1.0 - x.sum(axis=-1, keepdims=True)
    return np.concatenate([b0, x], axis=-1)


def barycentric_to_cartesian(b) -> np.ndarray:
    return np.asarray(b, dtype=float)[..., 1:]


def expand_orbit(generator: Sequence[float], tol: float = ORBIT_TOL) -> np.ndarray:
    """All distinct images of a barycentric point under the 24 permutations.

    Two images are the same node when every coordinate agrees within *tol*.
    The generator is returned first; the remaining order is deterministic.

    >>> len(expand_orbit((0.5, 0.5, 0.0, 0.0)))
    6
    """
    g = np.asarray(generator, dtype=float)
    if g.shape != (4,):
        raise ValueError("barycentric point needs 4 coordinates")
    if abs(g.sum() - 1.0) > 1e-14 or (g < -1e-14).any() or (g > 1 + 1e-14).any():
        raise ValueError(f"not a point of the reference tetrahedron: {g}")
    points: list[np.ndarray] = []
    for perm in PERMUTATIONS:
        p = g[list(perm)]
        if not any(np.all(np.abs(p - q) <= tol) for q in points):
            points.append(p)
    return np.array(points)


def expand_exponent_orbit(exponents: Sequence[int]) -> list[tuple[int, int, int, int]]:
    """Distinct permutations of a monomial exponent tuple, in first-seen order."""
    seen: dict[tuple[int, ...], None] = {}
    for perm in PERMUTATIONS:
        seen.setdefault(tuple(int(exponents[i]) for i in perm), None)
    return list(seen)  # type: ignore[arg-type]


@lru_cache(maxsize=None)
def monomial_integral_exact(exponents: tuple[int, int, int, int]) -> Fraction:
    if len(exponents) != 4 or any(e < 0 for e in exponents):
        raise ValueError("need 4 non-negative exponents")
    if sum(exponents) > 64:
        raise ValueError("total degree above 64")
    num = math.prod(math.factorial(e) for e in exponents)
    return Fraction(num, math.factorial(sum(exponents) + 3))


def monomial_integral(exponents: Sequence[int]) -> float:
    """Integral of a barycentric monomial over the reference tetrahedron.

    >>> monomial_integral((1, 1, 1, 1)) == 1 / 5040
    True
    """
    return float(monomial_integral_exact(tuple(int(e) for e in exponents)))


def monomials_of_degree(degree: int, homogeneous: bool = False) -> list[tuple[int, int, int, int]]:
    """Barycentric exponent tuples of total degree ``degree`` (or ``<= degree``)."""
    degrees = [degree] if homogeneous else range(degree + 1)
    out = []
    for d in degrees:
        for e0 in range(d, -1, -1):
            for e1 in range(d - e0, -1, -1):
                for e2 in range(d - e0 - e1, -1, -1):
                    out.append((e0, e1, e2, d - e0 - e1 - e2))
    return out


def eval_monomials(exponents: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Evaluate monomials ``exponents`` (m, 4) at barycentric points ``b`` (n, 4)."""
    b = np.atleast_2d(np.asarray(b, dtype=float))
    exponents = np.asarray(exponents)
    return np.prod(b[:, None, :] ** exponents[None, :, :], axis=-1)


def _factorial_array(nmax: int) -> np.ndarray:
    return np.array([math.factorial(k) for k in range(nmax + 1)], dtype=float)


def _integrate_exponent_array(exps: np.ndarray) -> np.ndarray:
    """Vectorised factorial formula for an exponent array (..., 4)."""
    fact = _factorial_array(int(exps.sum(axis=-1).max()) + 3)
    num = np.prod(fact[exps], axis=-1)
    return num / fact[exps.sum(axis=-1) + 3]


def _homogenize(exponents: tuple[int, ...], degree: int, index: dict) -> np.ndarray:
    """Coefficients of ``b**e * (b0+b1+b2+b3)**(degree-|e|)`` over degree-``degree`` monomials.

    On the tetrahedron sum(b) == 1, so this is the same function written in a
    unique homogeneous basis, which makes linear (in)dependence well defined.
    """
    vec = np.zeros(len(index))
    extra = degree - sum(exponents)
    for pad in monomials_of_degree(extra, homogeneous=True):
        coef = math.factorial(extra) / math.prod(math.factorial(k) for k in pad)
        vec[index[tuple(e + k for e, k in zip(exponents, pad))]] += coef
    return vec


@dataclass(frozen=True)
class NodeOrbit:
    """One row of an element table: a symmetry class of quadrature nodes."""

    generator: tuple[float, float, float, float]
    weight: float
    parameters: dict[str, float] = field(default_factory=dict)

    @property
    def points(self) -> np.ndarray:
        return expand_orbit(self.generator)

    @property
    def multiplicity(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class FunctionOrbit:
    """Span of a barycentric monomial and all its permuted copies."""

    exponents: tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.exponents) != 4 or min(self.exponents) < 0:
            raise ElementTableError(f"bad monomial exponents {self.exponents}")
        if sum(self.exponents) > 8:
            raise ElementTableError("space generators are limited to degree 8")

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    def expand(self) -> list[tuple[int, int, int, int]]:
        return expand_exponent_orbit(self.exponents)


@dataclass(frozen=True)
class ElementTable:
    """A mass-lumped reference element: nodes, weights and function space."""

    id: str
    degree: int
    node_orbits: tuple[NodeOrbit, ...]
    space_orbits: tuple[FunctionOrbit, ...]

    @property
    def max_degree(self) -> int:
        return max(f.degree for f in self.space_orbits)

    @property
    def n_nodes(self) -> int:
        return sum(o.multiplicity for o in self.node_orbits)

    def nodes(self) -> np.ndarray:
        """Expanded barycentric nodes, orbit by orbit, shape (n_nodes, 4)."""
        return np.vstack([o.points for o in self.node_orbits])

    def weights(self) -> np.ndarray:
        return np.concatenate([np.full(o.multiplicity, o.weight) for o in self.node_orbits])

    def validate(self) -> None:
        """Check the cheap structural invariants; raise ElementTableError."""
        if self.degree < 1:
            raise ElementTableError("degree must be >= 1")
        if not self.node_orbits or not self.space_orbits:
            raise ElementTableError("table needs node orbits and space orbits")
        for o in self.node_orbits:
            if not o.weight > 0:
                raise ElementTableError(
                    f"{self.id}: non-positive weight {o.weight} for orbit {o.generator}"
                )
        nodes = self.nodes()
        for i, j in itertools.combinations(range(len(nodes)), 2):
            if np.all(np.abs(nodes[i] - nodes[j]) <= 1e-12):
                raise ElementTableError(f"{self.id}: node orbits overlap")
        dim = span_dimension(self.space_orbits)
        if dim != self.n_nodes:
            raise ElementTableError(
                f"{self.id}: {self.n_nodes} nodes but the function space has dimension {dim}"
            )


def _space_matrix(exps: Sequence[tuple[int, ...]]) -> np.ndarray:
    degree = max(sum(e) for e in exps)
    index = {m: i for i, m in enumerate(monomials_of_degree(degree, homogeneous=True))}
    return np.array([_homogenize(e, degree, index) for e in exps])


def independent_monomials(space_orbits: Sequence[FunctionOrbit]) -> list[tuple[int, int, int, int]]:
    """A maximal linearly independent subset of the expanded space generators.

    Selection uses column-pivoted QR of the homogenised coefficient matrix with
    a relative cutoff of ``RANK_TOL`` on the diagonal of R.
    """
    exps: list[tuple[int, int, int, int]] = []
    for orbit in space_orbits:
        for e in orbit.expand():
            if e not in exps:
                exps.append(e)
    mat = _space_matrix(exps)
    _, r, piv = scipy.linalg.qr(mat.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > RANK_TOL * diag[0]))
    # keep orbit order for readability of the coefficient matrix
    return [exps[i] for i in sorted(piv[:rank])]


def span_dimension(space_orbits: Sequence[FunctionOrbit]) -> int:
    return len(independent_monomials(space_orbits))


@dataclass(frozen=True, eq=False)
class NodalBasis:
    """Nodal basis of a reference space, stored over barycentric monomials.

    ``w_i(b) = sum_j monomial_coeffs[j, i] * b**monomials[j]``.
    ``ref_stiffness[a, c]`` holds ``K^{ac}_{ij} = int d_a w_i d_c w_j`` with
    Cartesian reference derivatives ``d_a``.
    """

    table: ElementTable
    nodes: np.ndarray
    weights: np.ndarray
    monomials: np.ndarray
    monomial_coeffs: np.ndarray
    ref_stiffness: np.ndarray
    vandermonde_cond: float

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def nodes_cartesian(self) -> np.ndarray:
        return barycentric_to_cartesian(self.nodes)

    def __call__(self, b) -> np.ndarray:
        """Values of all basis functions at barycentric points, shape (npts, n)."""
        return eval_monomials(self.monomials, b) @ self.monomial_coeffs

    def support_mask(self) -> np.ndarray:
        """Boolean (n, 4): node i has a nonzero barycentric coordinate k."""
        return self.nodes > 1e-12

    def kronecker_error(self) -> float:
        return float(np.abs(self(self.nodes) - np.eye(self.n)).max())


def _gradient_gram(monomials: np.ndarray) -> np.ndarray:
    """G[a, c, j, k] = int d_a m_j d_c m_k for barycentric monomials m.

    d/dx_a = d/db_a - d/db_0 on the reference element, so each derivative of a
    monomial has at most two terms.
    """
    n = len(monomials)
    coefs = np.zeros((3, n, 2))
    exps = np.zeros((3, n, 2, 4), dtype=int)
    for a in range(3):
        for t, k in enumerate((a + 1, 0)):
            sign = 1.0 if t == 0 else -1.0
            e = monomials.copy()
            coefs[a, :, t] = sign * e[:, k]
            e[:, k] = np.maximum(e[:, k] - 1, 0)
            exps[a, :, t] = e
    gram = np.zeros((3, 3, n, n))
    for a in range(3):
        for c in range(3):
            pe = exps[a][:, None, :, None, :] + exps[c][None, :, None, :, :]
            pc = coefs[a][:, None, :, None] * coefs[c][None, :, None, :]
            gram[a, c] = np.sum(pc * _integrate_exponent_array(pe), axis=(2, 3))
    return gram


def build_nodal_basis(table: ElementTable) -> NodalBasis:
    """Construct the nodal basis and reference stiffness tensors of a table."""
    table.validate()
    nodes = table.nodes()
    monomials = np.array(independent_monomials(table.space_orbits))
    if len(monomials) != len(nodes):
        raise ElementTableError(
            f"{table.id}: space dimension {len(monomials)} != node count {len(nodes)}"
        )
    vander = eval_monomials(monomials, nodes)
    cond = float(np.linalg.cond(vander))
    if not cond < MAX_VANDERMONDE_COND:
        raise ElementTableError(f"{table.id}: Vandermonde condition number {cond:.3e}")
    coeffs = np.linalg.solve(vander, np.eye(len(nodes)))
    gram = _gradient_gram(monomials)
    ref_stiffness = np.einsum("ji,acjk,kl->acil", coeffs, gram, coeffs)
    # exact in theory; remove round-off asymmetry
    ref_stiffness = 0.5 * (ref_stiffness + ref_stiffness.transpose(1, 0, 3, 2))
    for arr in (nodes, coeffs, ref_stiffness):
        arr.setflags(write=False)
    return NodalBasis(
        table=table,
        nodes=nodes,
        weights=table.weights(),
        monomials=monomials,
        monomial_coeffs=coeffs,
        ref_stiffness=ref_stiffness,
        vandermonde_cond=cond,
    )


@dataclass
class ExactnessReport:
    table_id: str
    mode: str
    exponents: list[tuple[int, int, int, int]]
    quadrature: np.ndarray
    exact: np.ndarray

    @property
    def rel_errors(self) -> np.ndarray:
        return np.abs(self.quadrature - self.exact) / np.abs(self.exact)

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_errors.max()) if len(self.exponents) else 0.0

    def failing(self, tol: float = 1e-12) -> list[tuple[tuple[int, int, int, int], float]]:
        return [(e, float(r)) for e, r in zip(self.exponents, self.rel_errors) if r > tol]

    def passed(self, tol: float = 1e-12) -> bool:
        return self.max_rel_error <= tol


def test_space(table: ElementTable, mode: str = "new") -> list[tuple[int, int, int, int]]:
    """Spanning monomials of the space the quadrature must integrate exactly.

    ``new``: products of the element space with P_{p-2}; for p = 1 the factor
    is taken as P_0 so that the element space itself is tested.
    ``old``: all of P_{p+p'-2}.
    """
    p = table.degree
    if mode == "old":
        return monomials_of_degree(p + table.max_degree - 2)
    if mode != "new":
        raise ValueError(f"unknown exactness mode {mode!r}")
    factors = monomials_of_degree(max(p - 2, 0))
    products: dict[tuple[int, ...], None] = {}
    for orbit in table.space_orbits:
        # the rule is permutation-invariant, so one orbit representative suffices
        for f in factors:
            products.setdefault(tuple(a + b for a, b in zip(orbit.exponents, f)), None)
    return list(products)  # type: ignore[arg-type]


def verify_exactness(table: ElementTable, mode: str = "new") -> ExactnessReport:
    """Compare the table's quadrature with exact monomial integrals."""
    exps = test_space(table, mode)
    nodes, weights = table.nodes(), table.weights()
    quad = eval_monomials(np.array(exps), nodes).T @ weights if exps else np.zeros(0)
    exact = np.array([monomial_integral(e) for e in exps])
    return ExactnessReport(table.id, mode, exps, np.asarray(quad), exact)
