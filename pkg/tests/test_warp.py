import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import deformed_boundary, deformed_region, forward_deform, to_image
from symparts.errors import FitError
from symparts.warp import (GRID, DeformableParams, canonical_angle, EllipseParams, ShapeHistogram, boundary_residuals, chi2_distance,
                           fit_deformable, fit_deformable_report, fit_ellipse_moments, fit_objective, grid_cells,
                           shape_histogram, transform_params, unwarp_point, unwarp_points, warp_points)
from symparts.warp import _pack, _residuals


def _params(center=(0.0, 0.0), theta=0.0, ax=10.0, ay=5.0, kappa=0.0, t=0.0):
    return DeformableParams(EllipseParams(center, theta, ax, ay), kappa, t)


valid_params = st.builds(
    lambda cx, cy, th, ax, ratio, bend, t: _params((cx, cy), th, ax, ax * ratio, bend / ax, t),
    st.floats(-50, 50), st.floats(-50, 50), st.floats(-1.5, 1.5), st.floats(4, 40),
    st.floats(0.15, 1.0), st.floats(-0.9, 0.9), st.floats(-0.6, 0.6),
)


# -- moment ellipse ----------------------------------------------------------


def test_disk_moments():
    yy, xx = np.mgrid[0:101, 0:101]
    inside = (xx - 50) ** 2 + (yy - 50) ** 2 <= 20 ** 2
    e = fit_ellipse_moments(np.column_stack([xx[inside], yy[inside]]))
    assert e.center == pytest.approx((50, 50))
    assert e.ax == pytest.approx(20, abs=0.5) and e.ay == pytest.approx(20, abs=0.5)


def test_rectangle_moments():
    w, h = 60, 20
    yy, xx = np.mgrid[0:h, 0:w]
    e = fit_ellipse_moments(np.column_stack([xx.ravel(), yy.ravel()]))
    assert e.theta == pytest.approx(0.0, abs=1e-9)
    assert e.ax == pytest.approx(w / math.sqrt(3), rel=0.02)


def test_collinear_pixels_fail():
    with pytest.raises(FitError):
        fit_ellipse_moments(np.array([[0, 0], [1, 0]]))
    with pytest.raises(FitError):
        fit_ellipse_moments(np.array([[0, 0], [1, 1], [2, 2], [3, 3]]))


def test_axes_ordering_enforced():
    with pytest.raises(ValueError):
        EllipseParams((0, 0), 0.0, 2.0, 3.0)


# -- warps -------------------------------------------------------------------


def test_straight_unwarp_is_rigid():
    w = _params((3.0, -2.0), 0.4)
    q = np.array([[5.0, 1.0], [-7.0, 2.5]])
    c, s = math.cos(0.4), math.sin(0.4)
    d = q - (3.0, -2.0)
    expected = np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])
    np.testing.assert_allclose(unwarp_points(q, w), expected, atol=1e-12)


def test_bend_example():
    w = _params(ax=20.0, kappa=0.1)
    u, v = unwarp_point((10 * math.sin(1), 10 - 10 * math.cos(1)), w)
    assert u == pytest.approx(10, abs=1e-9) and v == pytest.approx(0, abs=1e-9)


def test_taper_example():
    u, v = unwarp_point((10.0, 1.5), _params(ax=10.0, t=0.5))
    assert (u, v) == pytest.approx((10.0, 1.0))


def test_continuity_at_zero_bend():
    ax = 20.0
    pts = np.array([(u, v) for u in np.linspace(-1.5 * ax, 1.5 * ax, 10)
                    for v in np.linspace(-15, 15, 10)])
    a = unwarp_points(pts, _params(ax=ax, kappa=1e-10))
    b = unwarp_points(pts, _params(ax=ax, kappa=1e-6))
    assert np.abs(a - b).max() < 1e-3


@given(valid_params)
def test_forward_oracle_then_unwarp_is_identity(w):
    e = w.ellipse
    rng = np.random.default_rng(0)
    r, a = np.sqrt(rng.uniform(0, 1, 100)), rng.uniform(0, 2 * math.pi, 100)
    uv = np.column_stack([r * np.cos(a) * e.ax, r * np.sin(a) * e.ay])  # inside the ellipse
    q = np.array([to_image(*forward_deform(u, v, w.kappa, w.t, e.ax), e.center, e.theta) for u, v in uv])
    np.testing.assert_allclose(unwarp_points(q, w), uv, atol=1e-6)


@given(valid_params)
def test_package_forward_model_matches_oracle(w):
    e = w.ellipse
    uv = np.random.default_rng(1).uniform(-1, 1, size=(20, 2)) * (e.ax, e.ay)
    expected = [to_image(*forward_deform(u, v, w.kappa, w.t, e.ax), e.center, e.theta) for u, v in uv]
    np.testing.assert_allclose(warp_points(uv, w), expected, atol=1e-9)


# -- deformable fit ----------------------------------------------------------


def test_exact_ellipse_stays_straight():
    e = EllipseParams((40.0, 30.0), 0.3, 30.0, 10.0)
    edgels = deformed_boundary(e.center, e.theta, e.ax, e.ay, 0.0, 0.0)
    w = fit_deformable(edgels, e)
    assert abs(w.kappa) * w.ellipse.ax < 0.02 and abs(w.t) < 0.02


def _fit_synthetic(ax, ay, kappa, t, theta=0.2, center=(60.0, 50.0)):
    edgels = deformed_boundary(center, theta, ax, ay, kappa, t)
    init = fit_ellipse_moments(deformed_region(center, theta, ax, ay, kappa, t))
    return fit_deformable(edgels, init)


def test_recovers_bend():
    ax = 30.0
    w = _fit_synthetic(ax, 8.0, 0.5 / ax, 0.0)
    assert w.kappa == pytest.approx(0.5 / ax, rel=0.1)


def test_recovers_taper():
    w = _fit_synthetic(30.0, 8.0, 0.0, 0.4)
    assert w.t == pytest.approx(0.4, abs=0.05)


@given(st.floats(0.1, 0.8), st.floats(-0.5, 0.5), st.floats(-1.5, 1.5))
def test_fit_never_worse_than_init(bend, t, theta):
    ax, ay = 25.0, 7.0
    edgels = deformed_boundary((0.0, 0.0), theta, ax, ay, bend / ax, t, n=60)
    init = fit_ellipse_moments(deformed_region((0.0, 0.0), theta, ax, ay, bend / ax, t, step=1.0))
    rep = fit_deformable_report(edgels, init)
    assert rep.objective <= rep.initial_objective
    assert rep.objective == pytest.approx(fit_objective(edgels, rep.params), rel=1e-9, abs=1e-12)
    assert rep.params.is_valid()
    assert rep.params.ellipse.ax >= rep.params.ellipse.ay > 0


def test_too_few_edgels():
    with pytest.raises(FitError):
        fit_deformable(np.ones((5, 3)), EllipseParams((0, 0), 0, 2, 1))


def test_nonfinite_edgels_fail():
    edgels = deformed_boundary((0, 0), 0, 10, 4, 0, 0, n=20)
    edgels[3, 0] = np.nan
    with pytest.raises(FitError):
        fit_deformable(edgels, EllipseParams((0, 0), 0, 10, 4))


@given(valid_params, st.integers(0, 1000))
def test_jacobian_matches_central_differences(w, seed):
    rng = np.random.default_rng(seed)
    e = w.ellipse
    edgels = np.column_stack([rng.normal(e.center, 2 * e.ax, size=(30, 2)), rng.uniform(0.1, 1, 30)])
    _, jac = boundary_residuals(edgels, w, jacobian=True)
    p = _pack(w)
    q = np.ascontiguousarray(edgels[:, :2])
    sw = np.sqrt(edgels[:, 2])
    numeric = np.empty_like(jac)
    for m in range(7):
        h = 1e-5 * max(1.0, abs(p[m]))
        hi, lo = p.copy(), p.copy()
        hi[m] += h
        lo[m] -= h
        r_hi, r_lo = np.empty(30), np.empty(30)
        _residuals(q, sw, hi, r_hi, np.empty((1, 7)), False)
        _residuals(q, sw, lo, r_lo, np.empty((1, 7)), False)
        numeric[:, m] = (r_hi - r_lo) / (2 * h)
    # the taper clamp is a kink; skip rows sitting on it
    u = unwarp_points(edgels[:, :2], DeformableParams(e, w.kappa, 0.0))[:, 0]
    smooth = np.abs(1 + w.t * u / e.ax - 0.1) > 1e-3
    # and rows close to the centre of curvature, where the unbend is singular
    c, s = math.cos(e.theta), math.sin(e.theta)
    d = edgels[:, :2] - e.center
    x, y = c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]
    smooth &= np.hypot(w.kappa * x, 1 - w.kappa * y) > 0.2
    scale = max(1.0, np.abs(numeric).max())
    assert np.abs(jac[smooth] - numeric[smooth]).max() / scale < 1e-4


# -- histogram ---------------------------------------------------------------


def test_empty_histogram():
    h = shape_histogram(np.zeros((0, 3)), _params())
    assert np.all(h.bins == 0) and h.total_mass == 0


def test_origin_lands_in_centre_cell():
    h = shape_histogram(np.array([[0.0, 0.0, 1.0]]), _params())
    assert h.grid[5, 5] == 1.0 and h.bins.sum() == 1.0


def test_grid_edges_half_open_and_last_closed():
    ax, ay = 10.0, 4.0
    uv = np.array([[-15.0, -6.0], [15.0, 6.0], [-12.0, -6.0], [15.01, 0.0]])
    row, col, inside = grid_cells(uv, ax, ay)
    assert list(inside) == [True, True, True, False]
    assert (row[0], col[0]) == (0, 0)
    assert (row[1], col[1]) == (GRID - 1, GRID - 1)
    assert col[2] == 1  # boundary between cells 0 and 1 belongs to the upper cell


@given(valid_params, st.integers(0, 1000))
def test_histogram_mass_bounded(w, seed):
    rng = np.random.default_rng(seed)
    e = w.ellipse
    edgels = np.column_stack([rng.normal(e.center, 2 * e.ax, size=(40, 2)), rng.uniform(0, 1, 40)])
    h = shape_histogram(edgels, w)
    assert np.all(h.bins >= 0)
    assert h.total_mass <= edgels[:, 2].sum() + 1e-12
    if h.total_mass > 0:
        assert h.bins.sum() == pytest.approx(1.0)


@given(st.floats(-math.pi, math.pi), st.floats(-30, 30), st.floats(-30, 30), st.floats(-0.8, 0.8),
       st.floats(-0.5, 0.5))
def test_histogram_equivariant_under_rigid_motion(angle, sx, sy, bend, t):
    w = _params((5.0, -3.0), 0.3, 20.0, 6.0, bend / 20.0, t)
    edgels = deformed_boundary(w.ellipse.center, w.ellipse.theta, 20.0, 6.0, w.kappa, w.t, n=77, phase=0.01)
    c, s = math.cos(angle), math.sin(angle)
    moved = edgels.copy()
    moved[:, 0] = c * edgels[:, 0] - s * edgels[:, 1] + sx
    moved[:, 1] = s * edgels[:, 0] + c * edgels[:, 1] + sy
    w2 = transform_params(w, angle, (sx, sy))
    a, b = shape_histogram(edgels, w), shape_histogram(moved, w2)
    expected = a.grid
    if abs(w2.ellipse.theta - canonical_angle(w.ellipse.theta + angle)) < 1e-12 and \
            abs(math.remainder(w.ellipse.theta + angle - w2.ellipse.theta, 2 * math.pi)) > 1:
        expected = expected[::-1, ::-1]  # axis direction flipped: the local frame is point-reflected
    np.testing.assert_allclose(b.grid, expected, atol=1e-6)


def test_histogram_matches_after_rotating_and_refitting():
    ax, ay, kappa, t = 24.0, 7.0, 0.4 / 24.0, 0.2
    edgels = deformed_boundary((50.0, 50.0), 0.1, ax, ay, kappa, t, phase=0.01)
    region = deformed_region((50.0, 50.0), 0.1, ax, ay, kappa, t)
    angle = math.radians(30)
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    edgels2 = edgels.copy()
    edgels2[:, :2] = edgels[:, :2] @ rot.T
    w1 = fit_deformable(edgels, fit_ellipse_moments(region))
    w2 = fit_deformable(edgels2, fit_ellipse_moments(region @ rot.T))
    np.testing.assert_allclose(shape_histogram(edgels, w1).bins, shape_histogram(edgels2, w2).bins, atol=1e-6)


def test_chi2_distance_properties():
    a = np.zeros(100)
    a[3] = 1
    b = np.zeros(100)
    b[7] = 1
    assert chi2_distance(a, a) == 0
    assert chi2_distance(a, b) == pytest.approx(1.0)
    assert isinstance(ShapeHistogram(a, 1.0).grid, np.ndarray)
