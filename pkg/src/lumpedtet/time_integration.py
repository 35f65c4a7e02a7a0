"""Explicit leap-frog and order-2K Dablain stepping for ``M u'' + A u = f``.

With ``L = M^-1 A`` and ``g_j = M^-1 f^(2j)`` the even time derivatives of
the semi-discrete solution satisfy ``u^(2k) = w_k`` where ``w_0 = u`` and
``w_k = -L w_{k-1} + g_{k-1}``.  The order-2K update is the truncated
Taylor sum

    u(t+dt) + u(t-dt) = 2 * sum_{k=0}^{K} dt^{2k} / (2k)! * w_k(t),

so K = 1 is leap-frog and a source contributes through its first K-1 even
derivatives.  For the Ricker wavelet these come in closed form.  A general
load callable has no derivatives; it is restricted to K <= 2 and its second
derivative is approximated by a central difference with step dt, which keeps
the scheme fourth order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import hermite

from .assembly import AssembledSystem
from .kernels import StepOperator

__all__ = [
    "C_K",
    "TimeScheme",
    "WaveState",
    "ricker",
    "ricker_derivative",
    "PointSource",
    "LoadSource",
    "step_polynomial",
    "estimate_s_max",
    "stable_dt",
    "leapfrog_step",
    "dablain_step",
    "zero_velocity_start",
    "Stepper",
    "run",
]

# stability constants of the order-2K schemes: dt^2 s_max <= c_K
C_K = {1: 4.0, 2: 12.0, 3: 7.57, 4: 21.48}


@dataclass(frozen=True)
class TimeScheme:
    K: int
    dt: float
    n_steps: int = 0

    def __post_init__(self):
        if self.K not in C_K:
            raise ValueError(f"K must be one of {sorted(C_K)}, got {self.K}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")

    @property
    def c_K(self) -> float:
        return C_K[self.K]

    @property
    def order(self) -> int:
        return 2 * self.K


@dataclass
class WaveState:
    """Two consecutive time levels; ``u_curr`` lives at time ``t``."""

    u_prev: np.ndarray
    u_curr: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, n: int, t: float = 0.0, dtype=float) -> "WaveState":
        return cls(np.zeros(n, dtype=dtype), np.zeros(n, dtype=dtype), t)


# ---------------------------------------------------------------- sources


def ricker_derivative(t, f_peak: float, n: int = 0):
    """n-th time derivative of ``w(t) = (1 - 2 a t^2) exp(-a t^2)``, ``a = (pi f)^2``.

    Uses ``w = -H_2(s) exp(-s^2) / 2`` with ``s = sqrt(a) t`` and the Rodrigues
    formula for the physicists' Hermite polynomials.
    """
    if n < 0:
        raise ValueError("derivative order must be non-negative")
    a = (math.pi * f_peak) ** 2
    t = np.asarray(t, dtype=float)
    s = math.sqrt(a) * t
    coef = np.zeros(n + 3)
    coef[n + 2] = 1.0
    vals = -0.5 * (-1.0) ** n * a ** (n / 2.0) * hermite.hermval(s, coef) * np.exp(-s * s)
    return vals if vals.ndim else float(vals)


def ricker(t, f_peak: float):
    """Ricker wavelet and its exact second derivative, ``(w, w'')``."""
    return ricker_derivative(t, f_peak, 0), ricker_derivative(t, f_peak, 2)


@dataclass
class PointSource:
    """Load ``f(t) = wavelet(t - delay) * spatial``.

    ``spatial`` is usually ``point_source_vector(...)[0]``.  Any even time
    derivative is available in closed form.
    """

    spatial: np.ndarray
    f_peak: float
    delay: float = 0.0

    def derivative(self, t: float, order: int) -> np.ndarray:
        return ricker_derivative(t - self.delay, self.f_peak, order) * self.spatial

    def derivatives(self, t: float, count: int) -> list[np.ndarray]:
        """``[f(t), f''(t), ...]``, ``count`` entries."""
        return [self.derivative(t, 2 * j) for j in range(count)]


@dataclass
class LoadSource:
    """Arbitrary load ``f(t)`` given as a callable returning a load vector."""

    load: Callable[[float], np.ndarray]
    dt: float | None = None

    def derivatives(self, t: float, count: int) -> list[np.ndarray]:
        if count > 2:
            raise ValueError("a generic load source only supports K <= 2")
        f0 = np.asarray(self.load(t), dtype=float)
        if count == 1:
            return [f0]
        if self.dt is None:
            raise ValueError("LoadSource needs dt for its second-derivative estimate")
        h = self.dt
        f2 = (np.asarray(self.load(t + h)) - 2.0 * f0 + np.asarray(self.load(t - h))) / h**2
        return [f0, f2]


# ---------------------------------------------------------------- step size


def step_polynomial(z, K: int):
    """Amplification polynomial ``sum_{k=0}^K (-z)^k / (2k)!`` with ``z = dt^2 s``."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(K + 1):
        out = out + term
        term = term * (-z) / ((2 * k + 1) * (2 * k + 2))
    return out if out.ndim else float(out)


def _power_iteration(system: AssembledSystem, max_iter: int, tol: float, seed: int):
    """Power iteration on ``D^-1/2 A D^-1/2``; returns ``(lam, converged_at)``.

    ``converged_at`` is the iteration at which the relative change fell below
    ``tol``, or ``None`` if it never did.
    """
    mask = system.interior_mask
    if not mask.any():
        return 0.0, 0
    scale = np.where(mask, np.sqrt(system.inv_mass), 0.0)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(system.n) * mask
    x /= np.linalg.norm(x)
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = scale * (system.stiffness @ (scale * x))
        new = float(np.dot(x, y))
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0, it
        x = y / norm
        if it > 1 and abs(new - lam) <= tol * abs(new):
            return new, it
        lam = new
    return lam, None


def estimate_s_max(
    system: AssembledSystem,
    max_iter: int = 200,
    tol: float = 1e-8,
    seed: int = 0,
) -> tuple[float, bool, int]:
    """Largest eigenvalue of ``M^-1 A`` on the interior nodes by power iteration.

    Iterates on the symmetric form ``D^-1/2 A D^-1/2`` and returns the
    Rayleigh quotient, whether it converged, and the iteration count.
    """
    lam, at = _power_iteration(system, max_iter, tol, seed)
    return lam, at is not None, max_iter if at is None else at


def stable_dt(system: AssembledSystem, K: int, safety: float = 0.9, seed: int = 0,
              return_s_max: bool = False):
    """``safety * sqrt(c_K / s_max)`` with ``s_max`` from power iteration.

    If 200 iterations do not settle to 1e-8 relative change, the same
    iteration continues to 500 and the safety factor drops to 0.85, with a
    warning.
    """
    if K not in C_K:
        raise ValueError(f"K must be one of {sorted(C_K)}")
    s_max, at = _power_iteration(system, 500, 1e-8, seed)
    if at is None or at > 200:
        safety = min(safety, 0.85)
        warnings.warn(
            "power iteration for s_max did not converge in 200 iterations; "
            "using the 500-iteration estimate with safety factor 0.85",
            RuntimeWarning,
            stacklevel=2,
        )
    if s_max <= 0.0:
        raise ValueError("operator has no positive eigenvalue; dt is unbounded")
    dt = safety * math.sqrt(C_K[K] / s_max)
    return (dt, s_max) if return_s_max else dt


# ---------------------------------------------------------------- stepping


class Stepper:
    """Order-2K update ``u_next = 2u - u_prev + 2 sum_k dt^2k/(2k)! w_k`` for one system."""

    def __init__(self, system: AssembledSystem, scheme: TimeScheme, backend: str | None = None):
        self.system = system
        self.scheme = scheme
        self.op = StepOperator(system.stiffness, system.inv_mass, backend=backend)
        self._coef = [2.0 * scheme.dt ** (2 * k) / math.factorial(2 * k)
                      for k in range(1, scheme.K + 1)]
        self._fixed = np.flatnonzero(~system.interior_mask)

    def source_terms(self, source, t: float) -> list[np.ndarray | None]:
        if source is None:
            return [None] * self.scheme.K
        return [self.system.inv_mass * f for f in source.derivatives(t, self.scheme.K)]

    def step(self, state: WaveState, source=None, out: np.ndarray | None = None) -> WaveState:
        """Advance ``state`` by one step; ``out`` may be ``state.u_prev``."""
        g = self.source_terms(source, state.t)
        u, u_prev = state.u_curr, state.u_prev
        if self.scheme.K == 1:
            nxt = self.op.leapfrog(u_prev, u, g[0], self.scheme.dt**2, out=out)
        else:
            w = u
            acc = np.zeros_like(u, dtype=np.result_type(u, self.op.dtype))
            for k in range(self.scheme.K):
                w = self.op.apply(w, g[k])
                acc += self._coef[k] * w
            acc += 2.0 * u
            acc -= u_prev
            if out is None:
                nxt = acc
            else:
                out[:] = acc
                nxt = out
        nxt[self._fixed] = 0.0
        return WaveState(u, nxt, state.t + self.scheme.dt)


def leapfrog_step(state: WaveState, system: AssembledSystem, dt: float,
                  source=None) -> WaveState:
    """One second-order step ``2u - u_prev + dt^2 M^-1 (f - A u)``."""
    return Stepper(system, TimeScheme(1, dt)).step(state, source)


def dablain_step(state: WaveState, system: AssembledSystem, dt: float, K: int,
                 source=None) -> WaveState:
    """One order-2K step; K = 1 reduces to leap-frog."""
    return Stepper(system, TimeScheme(K, dt)).step(state, source)


def zero_velocity_start(system: AssembledSystem, u0: np.ndarray, dt: float, K: int) -> WaveState:
    """Initial levels for ``u(0) = u0`` at rest.

    Sets ``u_prev = P(dt^2 L) u0`` with the amplification polynomial P, so the
    first step returns ``u_prev`` again and each mode evolves as ``cos(n theta)``.
    """
    op = StepOperator(system.stiffness, system.inv_mass)
    w = np.array(u0, dtype=np.result_type(u0, op.dtype))
    w[~system.interior_mask] = 0.0
    u_prev = w.copy()
    term = w
    for k in range(1, K + 1):
        term = op.apply(term) * (dt**2 / ((2 * k - 1) * (2 * k)))
        u_prev = u_prev + term
    return WaveState(u_prev, w, 0.0)


@dataclass
class RunResult:
    times: np.ndarray
    traces: np.ndarray
    state: WaveState
    receiver_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def run(
    system: AssembledSystem,
    scheme: TimeScheme,
    source=None,
    receiver_nodes: Sequence[int] = (),
    t0: float = 0.0,
    state: WaveState | None = None,
    trace_stride: int = 1,
    record_from: float = -math.inf,
    monitor: Callable[[WaveState], None] | None = None,
    backend: str | None = None,
    sampler=None,
) -> RunResult:
    """Take ``scheme.n_steps`` steps, recording ``u`` at the receiver nodes.

    Samples are taken at time levels ``t0 + n dt`` with ``n % trace_stride == 0``
    and ``t >= record_from``.  A sparse ``sampler`` (nrec, n), e.g. from
    ``point_evaluation_matrix``, replaces the node lookup.
    """
    if trace_stride < 1:
        raise ValueError("trace_stride must be >= 1")
    stepper = Stepper(system, scheme, backend=backend)
    if state is None:
        state = WaveState.zeros(system.n, t0)
    nodes = np.asarray(receiver_nodes, dtype=int)
    n_rec = sampler.shape[0] if sampler is not None else len(nodes)
    times, rows = [], []
    eps = 1e-9 * scheme.dt

    def record(n, st):
        if n % trace_stride == 0 and st.t >= record_from - eps:
            times.append(st.t)
            rows.append(sampler @ st.u_curr if sampler is not None else np.array(st.u_curr[nodes]))

    record(0, state)
    for n in range(1, scheme.n_steps + 1):
        state = stepper.step(state, source, out=state.u_prev)
        if monitor is not None:
            monitor(state)
        record(n, state)
    traces = np.array(rows) if rows else np.zeros((0, n_rec))
    return RunResult(np.array(times), traces, state, nodes)
