"""Analytic point-source solution in a box with mirror images, RMS errors and order fits."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .dispersion import power_law_fit
from .time_integration import ricker_derivative

__all__ = [
    "PointSourceSolution",
    "ErrorReport",
    "ricker_support",
    "build_mirrors",
    "exact_solution",
    "rms_error",
    "convergence_fit",
]


def ricker_support(f_peak: float, eps: float = 1e-16) -> float:
    """Half-width beyond which ``|w(t)| < eps``.

    ``|w| <= (2 a t^2) e^{-a t^2}`` for ``a t^2 >= 1``; solved by bisection on that bound.
    """
    a = (math.pi * f_peak) ** 2
    lo, hi = 1.0, 1.0
    while 2.0 * hi * math.exp(-hi) > eps:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 2.0 * mid * math.exp(-mid) > eps:
            lo = mid
        else:
            hi = mid
    return math.sqrt(hi / a)


@dataclass
class PointSourceSolution:
    """``u(x, t) = strength * sum_i sign_i w(t - r_i / c_P) / (4 pi r_i)``.

    ``images`` holds ``(position, sign)`` pairs; the free-space source is
    the first entry with sign +1.  For ``rho u_tt = div(c grad u) + A w delta``
    the strength is ``A / c``.
    """

    source: np.ndarray
    c_P: float
    f_peak: float
    strength: float = 1.0
    images: list[tuple[np.ndarray, float]] = field(default_factory=list)

    def __post_init__(self):
        self.source = np.asarray(self.source, dtype=float)
        if not self.images:
            self.images = [(self.source.copy(), 1.0)]

    @property
    def positions(self) -> np.ndarray:
        return np.array([p for p, _ in self.images])

    @property
    def signs(self) -> np.ndarray:
        return np.array([s for _, s in self.images])


def build_mirrors(
    box,
    source,
    c_P: float,
    T_end: float,
    support: float,
    receivers,
    wall_signs: Sequence[float] = (1.0,) * 6,
) -> list[tuple[np.ndarray, float]]:
    """Images of ``source`` in the box walls that can reach a receiver by ``T_end``.

    Breadth-first over reflections in the six planes ``x_a = lo_a, hi_a``
    (``wall_signs`` in that order: x-lo, x-hi, y-lo, ...; +1 for Neumann,
    -1 for Dirichlet).  An image is kept iff its distance to the nearest
    receiver is at most ``c_P (T_end + support)``; only kept images are
    reflected further.
    """
    box = np.asarray(box, dtype=float).reshape(3, 2)
    src = np.asarray(source, dtype=float)
    if np.any(src <= box[:, 0]) or np.any(src >= box[:, 1]):
        raise ValueError("source must lie strictly inside the box")
    rec = np.atleast_2d(np.asarray(receivers, dtype=float))
    reach = c_P * (T_end + support)
    size = box[:, 1] - box[:, 0]

    def key(p):
        return tuple(np.rint((p - box[:, 0]) / size * 2**20).astype(np.int64))

    images = [(src.copy(), 1.0)]
    seen = {key(src)}
    queue = deque(images)
    while queue:
        p, sign = queue.popleft()
        for axis in range(3):
            for side in range(2):
                q = p.copy()
                q[axis] = 2.0 * box[axis, side] - p[axis]
                k = key(q)
                if k in seen:
                    continue
                seen.add(k)
                if np.min(np.linalg.norm(rec - q, axis=1)) <= reach:
                    img = (q, sign * float(wall_signs[2 * axis + side]))
                    images.append(img)
                    queue.append(img)
    return images


def exact_solution(sol: PointSourceSolution, x, t) -> np.ndarray:
    """Field at points ``x`` (m, 3) and times ``t`` (nt,), shape (nt, m).

    Scalar inputs give correspondingly squeezed output.
    """
    xs = np.atleast_2d(np.asarray(x, dtype=float))
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    r = np.linalg.norm(xs[None, :, :] - sol.positions[:, None, :], axis=-1)  # (ni, m)
    if np.any(r == 0.0):
        raise ValueError("exact solution evaluated at a source point")
    w = ricker_derivative(ts[:, None, None] - r[None] / sol.c_P, sol.f_peak, 0)
    u = sol.strength * np.einsum("i,tim->tm", sol.signs, w / (4.0 * np.pi * r[None]))
    shape = ()
    if np.ndim(t):
        shape += (len(ts),)
    if np.ndim(x) > 1:
        shape += (len(xs),)
    return u.reshape(shape) if shape else float(u[0, 0])


@dataclass
class ErrorReport:
    rms_abs: float
    rms_rel: float
    fit: tuple[float, float] | None = None


def rms_error(traces, reference, times=None, ref_times=None) -> ErrorReport:
    """RMS difference over all samples; the reference is spline-resampled if needed.

    ``traces`` and ``reference`` are (nt, nrec).  When ``ref_times`` differs
    from ``times`` the reference is interpolated with a cubic spline onto
    ``times``, which must then lie inside the reference window.
    """
    a = np.asarray(traces, dtype=float)
    b = np.asarray(reference, dtype=float)
    if times is not None and ref_times is not None:
        times = np.asarray(times, dtype=float)
        ref_times = np.asarray(ref_times, dtype=float)
        same = len(times) == len(ref_times) and np.allclose(times, ref_times, rtol=0, atol=1e-12)
        if not same:
            span = ref_times[-1] - ref_times[0]
            if times[0] < ref_times[0] - 1e-9 * span or times[-1] > ref_times[-1] + 1e-9 * span:
                raise ValueError("solver times fall outside the reference window")
            b = CubicSpline(ref_times, b, axis=0)(times)
    if a.shape != b.shape:
        raise ValueError(f"trace shapes differ: {a.shape} vs {b.shape}")
    diff = np.sqrt(np.mean((a - b) ** 2))
    ref = np.sqrt(np.mean(b**2))
    return ErrorReport(float(diff), float(diff / ref) if ref > 0 else math.inf)


def convergence_fit(n_dofs: Sequence[float], errors: Sequence[float]) -> tuple[float, float]:
    """``(C, order)`` of ``error = C (N^{1/3})^-order``."""
    n = np.asarray(n_dofs, dtype=float)
    return power_law_fit(list(zip(np.cbrt(n), np.asarray(errors, dtype=float))))
