import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lumpedtet.analytic import (
    PointSourceSolution,
    build_mirrors,
    convergence_fit,
    exact_solution,
    ricker_support,
    rms_error,
)

PAPER_BOX = [[-2, 2], [-1, 1], [0, 2]]
PAPER_RECEIVERS = np.array([[x, 0.0, 0.8] for x in np.arange(-1.375, 1.3751, 0.05)])


def free_space(source=(0.0, 0.0, 0.0), c=2.0, f=3.5):
    return PointSourceSolution(np.array(source, dtype=float), c, f)


def mirrored(box, source, c, f, T_end, receivers, **kw):
    sup = ricker_support(f)
    imgs = build_mirrors(box, source, c, T_end, sup, receivers, **kw)
    return PointSourceSolution(np.asarray(source, float), c, f, images=imgs)


# ---------------------------------------------------------------- exact solution


def test_ricker_support():
    sup = ricker_support(3.5)
    from lumpedtet.time_integration import ricker_derivative

    assert abs(ricker_derivative(-sup, 3.5)) < 1e-16
    assert abs(ricker_derivative(-0.9 * sup, 3.5)) > 1e-16
    assert sup < 0.6


def test_causality():
    sol = free_space()
    x = np.array([[0.5, 0.0, 0.0]])
    r = 0.5
    # start at -0.6 s: nothing arrives before the wavelet support reaches r
    t = np.linspace(-0.6, -0.6 + r / 2.0 - ricker_support(3.5), 20)
    t = t[t < r / 2.0 - ricker_support(3.5)]
    assert np.abs(exact_solution(sol, x, t)).max() < 1e-15


def test_peak_value():
    sol = free_space()
    r = 0.7
    assert exact_solution(sol, [r, 0, 0], r / 2.0) == pytest.approx(1 / (4 * math.pi * r), rel=1e-14)


def test_strength_scales_field():
    sol = PointSourceSolution(np.zeros(3), 2.0, 3.5, strength=0.25)
    assert exact_solution(sol, [1.0, 0, 0], 0.5) == pytest.approx(0.25 / (4 * math.pi), rel=1e-14)


def test_neumann_wall_doubles_field():
    box = [[-5, 5], [-5, 5], [0, 10]]
    src = np.array([0.3, -0.2, 1.0])
    on_wall = np.array([[1.0, 0.4, 0.0]])
    sol = mirrored(box, src, 2.0, 3.5, 1.0, on_wall)
    free = free_space(src)
    t = np.linspace(0, 1.0, 50)
    # only the z = 0 image reaches the receiver within 1 s
    assert len(sol.images) == 2
    np.testing.assert_allclose(exact_solution(sol, on_wall, t), 2 * exact_solution(free, on_wall, t),
                               rtol=1e-14, atol=1e-18)


def test_dirichlet_wall_cancels_field():
    box = [[-5, 5], [-5, 5], [0, 10]]
    on_wall = np.array([[1.0, 0.4, 0.0]])
    sol = mirrored(box, [0.3, -0.2, 1.0], 2.0, 3.5, 1.0, on_wall, wall_signs=(1, 1, 1, 1, -1, 1))
    assert np.abs(exact_solution(sol, on_wall, np.linspace(0, 1, 30))).max() < 1e-16


def test_exact_solution_rejects_source_point():
    with pytest.raises(ValueError):
        exact_solution(free_space(), [0, 0, 0], 0.1)


def test_exact_solution_shapes():
    sol = free_space()
    x = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    assert exact_solution(sol, x, np.linspace(0, 1, 4)).shape == (4, 2)
    assert exact_solution(sol, x, 0.5).shape == (2,)
    assert exact_solution(sol, x[0], np.linspace(0, 1, 4)).shape == (4,)
    assert isinstance(exact_solution(sol, x[0], 0.5), float)


# ---------------------------------------------------------------- mirrors


def test_mirrors_short_time_only_source():
    imgs = build_mirrors(PAPER_BOX, [0, 0, 1], 2.0, 1e-6, 0.0, [[0.0, 0.0, 0.9]])
    assert len(imgs) == 1 and imgs[0][1] == 1.0


def test_mirrors_symmetric_cube():
    box = [[-1, 1]] * 3
    rec = np.array([[0.0, 0.0, 0.0]])
    imgs = build_mirrors(box, [1e-12, 0, 0], 1.0, 3.0, 0.0, rec)
    # a centred source (nudged by a hair so it is strictly inside)
    pos = np.round(np.array([p for p, _ in imgs]), 6)
    keyed = {tuple(p) for p in pos}
    for p in pos:
        for axis in range(3):
            q = p.copy()
            q[axis] = -q[axis]
            assert tuple(np.round(q, 6)) in keyed
        assert tuple(p[[1, 0, 2]]) in keyed and tuple(p[[2, 1, 0]]) in keyed


def test_mirrors_paper_geometry_bound():
    sup = 0.6
    imgs = build_mirrors(PAPER_BOX, [0, 0, 1], 2.0, 0.6, sup, PAPER_RECEIVERS)
    reach = 2.0 * (0.6 + sup)
    for p, _ in imgs:
        assert np.linalg.norm(PAPER_RECEIVERS - p, axis=1).min() <= reach + 1e-12
    # all images of reflection depth one that satisfy the bound are present
    src = np.array([0.0, 0.0, 1.0])
    box = np.array(PAPER_BOX, float)
    kept = {tuple(np.round(p, 9)) for p, _ in imgs}
    for axis in range(3):
        for side in range(2):
            q = src.copy()
            q[axis] = 2 * box[axis, side] - q[axis]
            inside = np.linalg.norm(PAPER_RECEIVERS - q, axis=1).min() <= reach
            assert (tuple(np.round(q, 9)) in kept) == inside
    # x-images sit 2.625 from the nearest receiver, beyond the 2.4 reach; every
    # second reflection is farther still, so source + 4 images remain
    assert len(imgs) == 5


def test_mirrors_source_outside():
    with pytest.raises(ValueError):
        build_mirrors(PAPER_BOX, [0, 0, 0], 2.0, 0.6, 0.6, PAPER_RECEIVERS)


def test_mirror_truncation_safety():
    f, c, T = 3.5, 2.0, 0.6
    sup = ricker_support(f)
    base = build_mirrors(PAPER_BOX, [0, 0, 1], c, T, sup, PAPER_RECEIVERS)
    # doubling the distance criterion: reach 2 c (T + sup)
    wide = build_mirrors(PAPER_BOX, [0, 0, 1], c, 2 * T + sup, sup, PAPER_RECEIVERS)
    assert len(wide) > len(base)
    t = np.linspace(-0.6, T, 241)
    u0 = exact_solution(PointSourceSolution(np.array([0, 0, 1.0]), c, f, images=base),
                        PAPER_RECEIVERS, t)
    u1 = exact_solution(PointSourceSolution(np.array([0, 0, 1.0]), c, f, images=wide),
                        PAPER_RECEIVERS, t)
    assert np.abs(u1 - u0).max() < 1e-12 * np.abs(u0).max()


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_translation_invariance(shift):
    shift = np.array(shift)
    t = np.linspace(0, 0.6, 61)
    a = mirrored(PAPER_BOX, [0, 0, 1], 2.0, 3.5, 0.6, PAPER_RECEIVERS[::7])
    box2 = np.array(PAPER_BOX, float) + shift[:, None]
    b = mirrored(box2, np.array([0, 0, 1.0]) + shift, 2.0, 3.5, 0.6, PAPER_RECEIVERS[::7] + shift)
    assert len(a.images) == len(b.images)
    ua = exact_solution(a, PAPER_RECEIVERS[::7], t)
    ub = exact_solution(b, PAPER_RECEIVERS[::7] + shift, t)
    assert np.abs(ua - ub).max() < 1e-13 * np.abs(ua).max()


# ---------------------------------------------------------------- RMS and fits


def test_rms_identical():
    x = np.random.default_rng(0).normal(size=(20, 3))
    r = rms_error(x, x)
    assert r.rms_abs == 0.0 and r.rms_rel == 0.0


def test_rms_constant_offset():
    x = np.random.default_rng(1).normal(size=(30, 4))
    assert rms_error(x + 0.01, x).rms_abs == pytest.approx(0.01, rel=1e-12)


def test_rms_resamples_reference():
    t_ref = np.linspace(0, 1, 401)
    t = np.linspace(0.1, 0.9, 37)
    ref = np.sin(3 * t_ref)[:, None]
    r = rms_error(np.sin(3 * t)[:, None], ref, t, t_ref)
    assert r.rms_abs < 1e-9
    with pytest.raises(ValueError):
        rms_error(np.zeros((3, 1)), ref, np.array([0.0, 0.5, 1.5]), t_ref)
    with pytest.raises(ValueError):
        rms_error(np.zeros((3, 2)), np.zeros((3, 1)))


def test_rms_zero_reference():
    assert rms_error(np.ones((2, 2)), np.zeros((2, 2))).rms_rel == math.inf


def test_convergence_fit_exact():
    n = np.array([1e3, 8e3, 64e3])
    c, q = convergence_fit(n, 5.0 * np.cbrt(n) ** -3.0)
    assert q == pytest.approx(3.0, abs=1e-12) and c == pytest.approx(5.0, rel=1e-12)
    with pytest.raises(ValueError):
        convergence_fit([1e3, 8e3], [1e-2, 1e-3])
