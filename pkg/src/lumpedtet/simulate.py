"""Run configurations, point-source simulations and mesh-refinement studies."""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import kernels
from .analytic import (
    PointSourceSolution,
    build_mirrors,
    convergence_fit,
    exact_solution,
    rms_error,
    ricker_support,
)
from .assembly import assemble_system, point_evaluation_matrix, point_source_vector
from .mesh import TetMesh, affine_maps, build_box_mesh, number_nodes, perturb_mesh, read_mesh
from .reference_element import build_nodal_basis
from .tables import build_element_table
from .time_integration import C_K, PointSource, TimeScheme, run, stable_dt

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "SimulationResult",
    "run_simulation",
    "write_traces",
    "run_convergence",
    "save_simulation",
    "ConvergenceRow",
    "write_errors_csv",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """One simulation.  Saved as JSON with ``"lumpedtet": 1``.

    ``mesh`` is ``{"bounds": [[x0, x1], ...], "resolution": n, "perturb": f,
    "seed": s, "pin_points": bool}`` for a box, or ``{"path": file}``;
    ``pin_points`` keeps the source and receiver vertices out of the perturbation.  The source strength is
    normalised so the free-space response is ``amplitude * w / (4 pi r)``.
    ``sampling`` is ``"nearest"`` (source and receivers snap to the nearest
    global node) or ``"interpolate"`` (receivers evaluate the element basis,
    the source load is ``(delta, w_i)``); both agree on mesh nodes.
    """

    element: str = "ml2n15"
    K: int = 2
    mesh: dict = field(default_factory=lambda: {"bounds": [[-1, 1], [-1, 1], [-1, 1]],
                                                "resolution": 4})
    rho: float = 1.0
    c: float = 4.0
    source: dict = field(default_factory=lambda: {"position": [0.0, 0.0, 0.0], "f_peak": 3.5,
                                                  "t_start": -0.6, "amplitude": 1.0})
    receivers: list = field(default_factory=list)
    T_end: float = 0.6
    record_from: float | None = 0.0
    dt: float | None = None
    trace_stride: int = 1
    dirichlet: str = "none"
    sampling: str = "nearest"
    analytic: bool = False
    output: str = "out"
    threads: int | None = None

    def validate(self) -> "RunConfig":
        if self.K not in C_K:
            raise ConfigError(f"K must be one of {sorted(C_K)}")
        if not self.source.get("f_peak", 0) > 0:
            raise ConfigError("source.f_peak must be positive")
        if "position" not in self.source:
            raise ConfigError("source.position is required")
        if self.trace_stride < 1:
            raise ConfigError("trace_stride must be >= 1")
        if self.sampling not in ("nearest", "interpolate"):
            raise ConfigError("sampling must be 'nearest' or 'interpolate'")
        if self.dirichlet not in ("none", "all"):
            raise ConfigError("dirichlet must be 'none' or 'all'")
        if not (self.rho > 0 and self.c > 0):
            raise ConfigError("rho and c must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt override must be positive")
        if "path" not in self.mesh and "bounds" not in self.mesh:
            raise ConfigError("mesh needs 'bounds' or 'path'")
        if self.T_end <= self.source.get("t_start", -0.6):
            raise ConfigError("T_end must exceed source.t_start")
        if "bounds" in self.mesh and self.receivers:
            box = np.asarray(self.mesh["bounds"], dtype=float).reshape(3, 2)
            rec = np.atleast_2d(np.asarray(self.receivers, dtype=float))
            if rec.shape[1] != 3:
                raise ConfigError("receivers must be 3-D points")
            tol = 1e-12 * float(np.max(box[:, 1] - box[:, 0]))
            outside = np.any((rec < box[:, 0] - tol) | (rec > box[:, 1] + tol), axis=1)
            if outside.any():
                raise ConfigError(f"receiver {np.flatnonzero(outside)[0] + 1} lies outside the box")
        return self

    @property
    def c_P(self) -> float:
        return math.sqrt(self.c / self.rho)

    def to_json(self) -> str:
        return json.dumps({"lumpedtet": SCHEMA_VERSION, **asdict(self)}, indent=2)

    def build_mesh(self) -> TetMesh:
        spec = self.mesh
        if "path" in spec:
            mesh = read_mesh(spec["path"])
        else:
            mesh = build_box_mesh(spec["bounds"], spec.get("resolution", 4), self.rho, self.c)
            if spec.get("perturb", 0.0):
                pinned = None
                if spec.get("pin_points", False):
                    pinned = [self.source["position"], *self.receivers]
                mesh = perturb_mesh(mesh, float(spec["perturb"]), int(spec.get("seed", 0)),
                                    pinned)
        if self.dirichlet == "all":
            mesh = mesh.with_dirichlet()
        return mesh


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict) or raw.pop("lumpedtet", None) != SCHEMA_VERSION:
        raise ConfigError(f"{path}: expected schema field \"lumpedtet\": {SCHEMA_VERSION}")
    known = RunConfig.__dataclass_fields__
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return RunConfig(**raw).validate()


@dataclass
class SimulationResult:
    config: RunConfig
    times: np.ndarray
    traces: np.ndarray
    receiver_positions: np.ndarray
    n_nodes: int
    dt: float
    s_max: float
    n_steps: int
    wall_time: float
    reference: np.ndarray | None = None
    rms: Any = None

    def metadata(self) -> dict:
        meta = {
            "element": self.config.element,
            "K": self.config.K,
            "dt": self.dt,
            "s_max": self.s_max,
            "n_nodes": self.n_nodes,
            "n_steps": self.n_steps,
            "wall_time": self.wall_time,
            "backend": kernels.BACKEND,
            "receiver_positions": self.receiver_positions.tolist(),
        }
        if self.rms is not None:
            meta["rms_abs"] = self.rms.rms_abs
            meta["rms_rel"] = self.rms.rms_rel
        return meta


def _source_coefficient(mesh: TetMesh, point) -> float:
    """Mean ``c`` over the elements whose closure holds ``point``."""
    origins, jac = affine_maps(mesh)
    x = np.einsum("eab,eb->ea", np.linalg.inv(jac), np.asarray(point, dtype=float) - origins)
    touching = np.column_stack([1.0 - x.sum(axis=1), x]).min(axis=1) >= -1e-9
    if not touching.any():
        raise ConfigError(f"source {list(point)} lies outside the mesh")
    return float(mesh.c[touching].mean())


def run_simulation(cfg: RunConfig) -> SimulationResult:
    """Assemble, step from ``source.t_start`` to ``T_end`` and sample the receivers."""
    cfg.validate()
    kernels.set_num_threads(cfg.threads)
    t_wall = time.perf_counter()
    basis = build_nodal_basis(build_element_table(cfg.element))
    mesh = cfg.build_mesh()
    numbering = number_nodes(mesh, basis)
    system = assemble_system(mesh, basis, numbering)

    src = cfg.source
    src_pos = np.asarray(src["position"], dtype=float)
    rec_pos = np.asarray(cfg.receivers, dtype=float).reshape(-1, 3)
    sampler = None
    if cfg.sampling == "interpolate":
        spatial = point_evaluation_matrix(mesh, basis, numbering, src_pos).toarray().ravel()
        if len(rec_pos):
            sampler = point_evaluation_matrix(mesh, basis, numbering, rec_pos)
        rec_nodes = ()
    else:
        spatial, src_node = point_source_vector(numbering, src_pos)
        src_pos = numbering.node_coords[src_node]
        rec_nodes = np.array([numbering.nearest_node(p) for p in rec_pos], dtype=int)
        rec_pos = numbering.node_coords[rec_nodes].reshape(-1, 3)
    amplitude = float(src.get("amplitude", 1.0))
    spatial *= amplitude * _source_coefficient(mesh, src_pos)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        dt_auto, s_max = stable_dt(system, cfg.K, return_s_max=True)
    if cfg.dt is not None:
        dt = float(cfg.dt)
        if dt * dt * s_max > C_K[cfg.K]:
            warnings.warn(f"dt override {dt:g} exceeds the stability estimate "
                          f"{math.sqrt(C_K[cfg.K] / s_max):g}", RuntimeWarning, stacklevel=2)
    else:
        # land exactly on T_end with a step no larger than the stable one
        t_span = cfg.T_end - src.get("t_start", -0.6)
        dt = t_span / math.ceil(t_span / dt_auto)
    t0 = float(src.get("t_start", -0.6))
    n_steps = int(round((cfg.T_end - t0) / dt))

    source = PointSource(spatial, float(src["f_peak"]))
    record_from = t0 if cfg.record_from is None else cfg.record_from
    res = run(system, TimeScheme(cfg.K, dt, n_steps), source, rec_nodes, t0=t0,
              trace_stride=cfg.trace_stride, record_from=record_from, sampler=sampler)
    wall = time.perf_counter() - t_wall
    out = SimulationResult(cfg, res.times, res.traces, rec_pos, numbering.n_nodes, dt, s_max,
                           n_steps, wall)
    if cfg.analytic and len(rec_pos):
        out.reference = analytic_reference(cfg, src_pos, rec_pos, res.times, amplitude)
        out.rms = rms_error(res.traces, out.reference)
    return out


def analytic_reference(cfg: RunConfig, source_pos, rec_pos, times, amplitude) -> np.ndarray:
    """Mirror-image solution at the receiver nodes, shape (nt, nrec)."""
    if "bounds" not in cfg.mesh or cfg.dirichlet != "none":
        raise ConfigError("analytic comparison needs a Neumann box mesh")
    f = float(cfg.source["f_peak"])
    support = ricker_support(f)
    images = build_mirrors(cfg.mesh["bounds"], source_pos, cfg.c_P, cfg.T_end, support, rec_pos)
    sol = PointSourceSolution(source_pos, cfg.c_P, f, amplitude, images)
    return exact_solution(sol, rec_pos, times)


def write_traces(path: str | Path, times, traces) -> None:
    """``t,r1,...,rn`` with one row per recorded step."""
    traces = np.asarray(traces)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"r{i + 1}" for i in range(traces.shape[1])])
        for t, row in zip(times, traces):
            w.writerow([f"{t:.12g}"] + [f"{v:.17g}" for v in row])


def save_simulation(result: SimulationResult, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_traces(d / "traces.csv", result.times, result.traces)
    if result.reference is not None:
        write_traces(d / "reference.csv", result.times, result.reference)
    meta = result.metadata()
    (d / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    return d


@dataclass
class ConvergenceRow:
    resolution: int
    n_dofs: int
    dt: float
    rms_abs: float
    rms_rel: float
    wall_time: float


def run_convergence(base: RunConfig, resolutions: Sequence[int]):
    """Repeat ``base`` on box meshes of the given resolutions.

    Returns the per-level rows and the ``(C, order)`` fit of the relative RMS
    error against ``N^{1/3}`` (``None`` with fewer than three levels).
    """
    rows = []
    for n in resolutions:
        cfg = replace(base, mesh={**base.mesh, "resolution": int(n)}, analytic=True)
        res = run_simulation(cfg)
        rows.append(ConvergenceRow(int(n), res.n_nodes, res.dt, res.rms.rms_abs,
                                   res.rms.rms_rel, res.wall_time))
    fit = None
    if len(rows) >= 3:
        fit = convergence_fit([r.n_dofs for r in rows], [r.rms_rel for r in rows])
    return rows, fit


def write_errors_csv(path: str | Path, element: str, K: int, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "K", "resolution", "N", "dt", "rms_abs", "rms_rel"])
        for r in rows:
            w.writerow([element, K, r.resolution, r.n_dofs, f"{r.dt:.10g}",
                        f"{r.rms_abs:.10e}", f"{r.rms_rel:.10e}"])
