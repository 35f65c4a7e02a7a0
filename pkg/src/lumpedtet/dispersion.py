"""Plane-wave dispersion analysis on the periodic honeycomb and derived cost metrics.

A periodic mesh is built from one cell ``Omega_0 = T [0,1)^3`` holding six
tetrahedra.  Each node of the cell mesh is identified with an owner node in
``Omega_0`` and a lattice offset ``k``; element couplings are binned into
blocks ``A_k`` by the offset difference.  For a wave vector ``kappa`` the
symbol

    H(kappa) = D^-1/2 (sum_k exp(i kappa . T k) A_k) D^-1/2

is Hermitian and its eigenvalues ``s_h`` give the numerical frequencies of
the order-2K scheme through ``cos(omega_h dt) = P_K(dt^2 s_h)``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

import scipy.sparse as sp

from .assembly import AssembledSystem, element_stiffness
from .mesh import PeriodicCell, affine_maps, build_honeycomb_cell, number_nodes
from .reference_element import NodalBasis
from .time_integration import C_K

__all__ = [
    "SymbolFactory",
    "DispersionResult",
    "CostMetrics",
    "UnstableModeError",
    "build_symbol_factory",
    "symbol",
    "symbol_eigenvalues",
    "bloch_system",
    "one_minus_step_polynomial",
    "numerical_frequencies",
    "numerical_speeds",
    "fibonacci_directions",
    "dispersion_error",
    "dispersion_sweep",
    "wavelength_for_NE",
    "s_h_max",
    "cost_metrics",
    "cost_at_error",
    "power_law_fit",
    "fixed_order_constant",
    "write_dispersion_csv",
    "write_cost_csv",
]

OFFSETS = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class UnstableModeError(ValueError):
    """A symbol eigenvalue lies outside the stability interval of the scheme."""


@dataclass(eq=False)
class SymbolFactory:
    """Cell mass diagonal and stiffness blocks ``A_k`` for ``k`` in {-1,0,1}^3.

    ``blocks[j]`` belongs to offset ``OFFSETS[j]``; ``stencil`` is the
    per-owned-node count of coupled nodes ``|N(q)|``.
    """

    cell: PeriodicCell
    mass: np.ndarray
    blocks: np.ndarray
    stencil: np.ndarray
    element_id: str = ""
    degree: int = 0

    @property
    def n0(self) -> int:
        return len(self.mass)

    @cached_property
    def phase_vectors(self) -> np.ndarray:
        """Physical translation ``T k`` of every block offset, (27, 3)."""
        return OFFSETS @ self.cell.lattice.T

    @cached_property
    def _scaled_blocks(self) -> np.ndarray:
        d = 1.0 / np.sqrt(self.mass)
        return self.blocks * d[None, :, None] * d[None, None, :]

    def reciprocal_lattice(self) -> np.ndarray:
        """Columns ``2 pi T^-T e_i`` spanning the wave-vector lattice."""
        return 2.0 * np.pi * np.linalg.inv(self.cell.lattice).T

    @cached_property
    def s_max(self) -> float:
        return s_h_max(self)[0]


def build_symbol_factory(basis: NodalBasis, cell: PeriodicCell | None = None,
                         element_id: str = "") -> SymbolFactory:
    """Assemble the periodic cell operators for ``rho = c = 1``."""
    cell = build_honeycomb_cell() if cell is None else cell
    mesh = cell.mesh
    numbering = number_nodes(mesh, basis)
    key, offset = cell.classify(numbering.node_coords)
    _, owner = np.unique(key, axis=0, return_inverse=True)
    owner = owner.ravel()
    n0 = int(owner.max()) + 1

    e2g = numbering.elem_to_global
    _, jac = affine_maps(mesh)
    det = np.linalg.det(jac)
    mass = np.bincount(
        owner[e2g].ravel(), weights=(det[:, None] * mesh.rho[:, None] * basis.weights).ravel(),
        minlength=n0,
    )
    ke = element_stiffness(basis, jac, mesh.c)

    o = owner[e2g]  # (ne, n)
    k = offset[e2g]  # (ne, n, 3)
    rel = k[:, None, :, :] - k[:, :, None, :]  # offset of column node seen from row node
    if np.abs(rel).max() > 1:
        raise ValueError("element coupling reaches beyond the nearest-neighbour cells")
    slot = ((rel[..., 0] + 1) * 9 + (rel[..., 1] + 1) * 3 + (rel[..., 2] + 1)).astype(np.int64)
    rows = np.broadcast_to(o[:, :, None], slot.shape)
    cols = np.broadcast_to(o[:, None, :], slot.shape)
    flat = (slot * n0 + rows) * n0 + cols
    blocks = np.bincount(flat.ravel(), weights=ke.ravel(), minlength=27 * n0 * n0)
    blocks = blocks.reshape(27, n0, n0)
    # symmetrise against round-off: A_{-k} = A_k^T
    blocks = 0.5 * (blocks + blocks[::-1].transpose(0, 2, 1))

    pairs = np.unique(np.stack([rows.ravel(), cols.ravel(), slot.ravel()], axis=1), axis=0)
    stencil = np.bincount(pairs[:, 0], minlength=n0)
    return SymbolFactory(cell, mass, blocks, stencil, element_id, basis.table.degree)


def symbol(factory: SymbolFactory, kappa) -> np.ndarray:
    """Hermitian matrices ``H(kappa)``; ``kappa`` is (3,) or (m, 3)."""
    kappa = np.asarray(kappa, dtype=float)
    phase = np.exp(1j * (np.atleast_2d(kappa) @ factory.phase_vectors.T))  # (m, 27)
    h = np.tensordot(phase, factory._scaled_blocks, axes=(1, 0))
    return h if kappa.ndim > 1 else h[0]


def symbol_eigenvalues(factory: SymbolFactory, kappa, batch: int = 256) -> np.ndarray:
    """Ascending eigenvalues ``s_h`` of the symbol, shape (m, n0) or (n0,)."""
    kappa = np.asarray(kappa, dtype=float)
    pts = np.atleast_2d(kappa)
    out = np.empty((len(pts), factory.n0))
    for start in range(0, len(pts), batch):
        out[start : start + batch] = np.linalg.eigvalsh(symbol(factory, pts[start : start + batch]))
    return out if kappa.ndim > 1 else out[0]


def bloch_system(factory: SymbolFactory, kappa) -> AssembledSystem:
    """Cell system for fields ``u(x + T k) = exp(i kappa . T k) u(x)``.

    Stepping it with the usual explicit schemes is equivalent to stepping the
    infinite periodic mesh on that Bloch wave; ``M^-1 A`` has the symbol's
    eigenvalues.
    """
    phase = np.exp(1j * (factory.phase_vectors @ np.asarray(kappa, dtype=float)))
    a = np.tensordot(phase, factory.blocks, axes=(0, 0))
    a = 0.5 * (a + a.conj().T)
    return AssembledSystem(factory.mass.copy(), sp.csr_matrix(a), np.ones(factory.n0, dtype=bool))


def one_minus_step_polynomial(z, K: int) -> np.ndarray:
    """``1 - sum_{k=0}^K (-z)^k/(2k)!`` summed without the leading one."""
    z = np.asarray(z, dtype=float)
    term = z / 2.0
    out = term.copy()
    for k in range(2, K + 1):
        term = term * (-z) / ((2 * k - 1) * (2 * k))
        out = out + term
    return out


def numerical_frequencies(s, dt: float, K: int, check: bool = True) -> np.ndarray:
    """``|omega_h| = arccos(P_K(dt^2 s)) / dt``, evaluated as ``2 arcsin(sqrt((1-P)/2))``."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, None)
    q = one_minus_step_polynomial(dt * dt * s, K)
    bad = (q < -1e-12) | (q > 2.0 + 1e-12)
    if check and np.any(bad):
        raise UnstableModeError(
            f"{int(bad.sum())} modes violate |P| <= 1 (dt^2 s_max = {dt * dt * s.max():.4g})"
        )
    q = np.clip(q, 0.0, 2.0)
    return 2.0 * np.arcsin(np.sqrt(q / 2.0)) / dt


def numerical_speeds(s, kappa, dt: float, K: int) -> np.ndarray:
    kn = np.linalg.norm(np.atleast_2d(kappa), axis=-1)
    w = numerical_frequencies(s, dt, K)
    return w / (kn[:, None] if w.ndim > 1 else kn[0])


def fibonacci_directions(n: int = 1024) -> np.ndarray:
    """Quasi-uniform unit vectors on the sphere (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


@dataclass
class DispersionResult:
    """Worst-direction dispersion error at one wavelength."""

    wavelength: float
    NE: float
    e_disp: float
    K: int
    dt: float
    kappa: np.ndarray
    s_h: np.ndarray
    omega_h: np.ndarray
    c_h: np.ndarray
    branch: int


def _direction_errors(factory, dirs, kn, dt, K):
    s = symbol_eigenvalues(factory, dirs * kn)
    c = numerical_frequencies(s, dt, K) / kn
    err = np.abs(c - 1.0)
    return err.min(axis=1), s, c


def _to_angles(d):
    return math.acos(max(-1.0, min(1.0, d[2]))), math.atan2(d[1], d[0])


def _from_angles(theta, phi):
    st = math.sin(theta)
    return np.array([st * math.cos(phi), st * math.sin(phi), math.cos(theta)])


def _golden_max(f, lo, hi, iters=20):
    a, b = lo, hi
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc > fd else (d, fd)


def dispersion_error(
    factory: SymbolFactory,
    wavelength: float,
    K: int,
    dt: float | None = None,
    n_dir: int = 1024,
    sweeps: int = 3,
) -> DispersionResult:
    """``sup`` over directions of the smallest relative speed error over branches.

    ``dt`` defaults to the largest stable step ``sqrt(c_K / s_h,max)``.
    """
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    dt = math.sqrt(C_K[K] / factory.s_max) if dt is None else dt
    kn = 2.0 * math.pi / wavelength
    dirs = fibonacci_directions(n_dir)
    err, _, _ = _direction_errors(factory, dirs, kn, dt, K)
    best = int(np.argmax(err))
    theta, phi = _to_angles(dirs[best])
    e_best = float(err[best])

    def at(th, ph):
        return float(_direction_errors(factory, _from_angles(th, ph)[None], kn, dt, K)[0][0])

    width = 2.0 * math.sqrt(4.0 * math.pi / n_dir)
    for _ in range(sweeps):
        th, e_th = _golden_max(lambda v: at(v, phi), theta - width, theta + width)
        if e_th > e_best:
            theta, e_best = th, e_th
        ph, e_ph = _golden_max(lambda v: at(theta, v), phi - width, phi + width)
        if e_ph > e_best:
            phi, e_best = ph, e_ph
        width *= 0.5

    direction = _from_angles(theta, phi)
    kappa = direction * kn
    _, s, c = _direction_errors(factory, direction[None], kn, dt, K)
    s, c = s[0], c[0]
    branch = int(np.argmin(np.abs(c - 1.0)))
    ne = wavelength / factory.cell.mean_element_volume ** (1.0 / 3.0)
    return DispersionResult(wavelength, ne, float(abs(c[branch] - 1.0)), K, dt, kappa, s,
                            c * kn, c, branch)


def wavelength_for_NE(factory: SymbolFactory, NE: float) -> float:
    return NE * factory.cell.mean_element_volume ** (1.0 / 3.0)


def dispersion_sweep(factory: SymbolFactory, K: int, NE_values: Iterable[float],
                     **kw) -> list[DispersionResult]:
    return [dispersion_error(factory, wavelength_for_NE(factory, ne), K, **kw) for ne in NE_values]


def s_h_max(factory: SymbolFactory, n_grid: int = 16) -> tuple[float, np.ndarray]:
    """Largest symbol eigenvalue over the Brillouin zone.

    A uniform ``n_grid^3`` grid over ``T^-T [0, 2 pi)^3`` followed by one
    refined ``5^3`` grid spanning a coarse cell around the maximum.
    """
    recip = factory.reciprocal_lattice()
    m = np.arange(n_grid) / n_grid
    grid = np.stack(np.meshgrid(m, m, m, indexing="ij"), axis=-1).reshape(-1, 3)
    # s(kappa) = s(-kappa): keep one of each pair
    idx = np.rint(grid * n_grid).astype(int)
    radix = np.array([n_grid * n_grid, n_grid, 1])
    code, ncode = idx @ radix, (-idx % n_grid) @ radix
    keep = code <= ncode
    pts = grid[keep]
    top = symbol_eigenvalues(factory, pts @ recip.T)[:, -1]
    j = int(np.argmax(top))
    h = 1.0 / n_grid
    local = np.linspace(-h, h, 5)
    fine = pts[j] + np.stack(np.meshgrid(local, local, local, indexing="ij"), -1).reshape(-1, 3)
    ftop = symbol_eigenvalues(factory, fine @ recip.T)[:, -1]
    jf = int(np.argmax(ftop))
    if ftop[jf] >= top[j]:
        return float(ftop[jf]), fine[jf] @ recip.T
    return float(top[j]), pts[j] @ recip.T


@dataclass
class CostMetrics:
    """Cost of resolving one wavelength with a given element and scheme."""

    NE: float
    n_vec: float
    n_mat: float
    N_dt: float
    n_comp: float
    s_h_max: float
    K: int

    def as_row(self) -> dict:
        return {"NE": self.NE, "n_vec": self.n_vec, "n_mat": self.n_mat,
                "N_dt": self.N_dt, "n_comp": self.n_comp}


def cost_metrics(factory: SymbolFactory, wavelength: float, K: int, c_P: float = 1.0) -> CostMetrics:
    """Degrees of freedom, stiffness nonzeros and steps per period for one wavelength."""
    cells = wavelength**3 / factory.cell.volume
    n_vec = factory.n0 * cells
    n_mat = float(factory.stencil.sum()) * cells
    dt = math.sqrt(C_K[K] / factory.s_max)
    n_dt = (wavelength / c_P) / dt
    ne = wavelength / factory.cell.mean_element_volume ** (1.0 / 3.0)
    return CostMetrics(ne, n_vec, n_mat, n_dt, n_mat * K * n_dt, factory.s_max, K)


def cost_at_error(factory: SymbolFactory, K: int, target: float,
                  fit: tuple[float, float]) -> CostMetrics:
    """Cost metrics at the resolution where the fitted error ``C N_E^-q`` hits ``target``."""
    const, q = fit
    ne = (const / target) ** (1.0 / q)
    return cost_metrics(factory, wavelength_for_NE(factory, ne), K)


def power_law_fit(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares ``(C, q)`` of ``y = C x^-q`` in log-log coordinates."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("power_law_fit needs at least 3 (x, y) points")
    if np.any(pts <= 0):
        raise ValueError("power_law_fit needs positive data")
    slope, intercept = np.polyfit(np.log(pts[:, 0]), np.log(pts[:, 1]), 1)
    return float(np.exp(intercept)), float(-slope)


def fixed_order_constant(points: Sequence[tuple[float, float]], order: float) -> float:
    """Constant ``C`` of ``y = C x^-order`` with the exponent held fixed.

    The log-space least-squares solution is the geometric mean of ``y x^order``;
    this is the extrapolated leading constant when the points are asymptotic.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 1:
        raise ValueError("need at least one (x, y) point")
    if np.any(pts <= 0):
        raise ValueError("fixed_order_constant needs positive data")
    return float(np.exp(np.mean(np.log(pts[:, 1]) + order * np.log(pts[:, 0]))))


def write_dispersion_csv(path: str | Path, element: str, results: Iterable[DispersionResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "K", "lambda", "NE", "e_disp"])
        for r in results:
            w.writerow([element, r.K, f"{r.wavelength:.10g}", f"{r.NE:.10g}", f"{r.e_disp:.10e}"])


def write_cost_csv(path: str | Path, rows: Iterable[tuple[str, float, CostMetrics]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "target_err", "NE", "n_vec", "n_mat", "N_dt", "n_comp"])
        for element, target, m in rows:
            w.writerow([element, f"{target:.6g}", f"{m.NE:.6g}", f"{m.n_vec:.6g}",
                        f"{m.n_mat:.6g}", f"{m.N_dt:.6g}", f"{m.n_comp:.6g}"])
