"""Ellipse and deformable-ellipse models of a local region, the normalising warp,
and the 10x10 warped spatial histogram of boundary edgels.

Coordinates are image pixels: x to the right, y down.  The local frame of a
model has u along the major axis and v along the minor axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import FitError

GRID = 10
GRID_EXTENT = 1.5
MAX_BEND = 0.9  # |kappa| * a_x
MAX_TAPER = 0.6
MIN_TAPER_DEN = 0.1
MIN_AXIS = 0.5
_STRAIGHT = 1e-9


@dataclass(frozen=True)
class EllipseParams:
    center: tuple[float, float]
    theta: float
    ax: float
    ay: float

    def __post_init__(self):
        if not (self.ax >= self.ay > 0):
            raise ValueError(f"need a_x >= a_y > 0, got ({self.ax}, {self.ay})")


@dataclass(frozen=True)
class DeformableParams:
    ellipse: EllipseParams
    kappa: float = 0.0
    t: float = 0.0

    @classmethod
    def straight(cls, ellipse: EllipseParams) -> "DeformableParams":
        return cls(ellipse, 0.0, 0.0)

    def is_valid(self, tol: float = 1e-12) -> bool:
        return abs(self.kappa) * self.ellipse.ax <= MAX_BEND + tol and abs(self.t) <= MAX_TAPER + tol


def canonical_angle(theta: float) -> float:
    """Map an axis orientation into (-pi/2, pi/2]."""
    theta = theta - math.pi * math.floor(theta / math.pi)  # [0, pi)
    if theta > math.pi / 2:
        theta -= math.pi
    return theta


def fit_ellipse_moments(points: np.ndarray) -> EllipseParams:
    """Moment-matched ellipse of a pixel set given as (N, 2) x, y coordinates.

    Semi-axes are twice the principal standard deviations, so a filled disc of
    radius r maps to a_x = a_y = r.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise FitError("need at least 3 pixels to fit an ellipse")
    center = pts.mean(axis=0)
    d = pts - center
    cov = d.T @ d / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= 1e-10 * max(evals[1], 1.0):
        raise FitError("degenerate region: pixel covariance has rank < 2")
    major = evecs[:, 1]
    theta = canonical_angle(math.atan2(major[1], major[0]))
    return EllipseParams((float(center[0]), float(center[1])), theta,
                         2.0 * math.sqrt(evals[1]), 2.0 * math.sqrt(evals[0]))


# ---------------------------------------------------------------------------
# warps


def _to_local(q: np.ndarray, e: EllipseParams) -> tuple[np.ndarray, np.ndarray]:
    c, s = math.cos(e.theta), math.sin(e.theta)
    dx = q[..., 0] - e.center[0]
    dy = q[..., 1] - e.center[1]
    return c * dx + s * dy, -s * dx + c * dy


def unwarp_points(q: np.ndarray, w: DeformableParams) -> np.ndarray:
    """Map image points into the straightened, untapered model frame.

    Rigid part first, then undo the bend (circular arc of curvature kappa along
    the major axis), then undo the taper.
    """
    q = np.asarray(q, dtype=np.float64)
    x, y = _to_local(q, w.ellipse)
    k = w.kappa
    if abs(k) > _STRAIGHT:
        a = k * x
        b = 1.0 - k * y
        u = np.arctan2(a, b) / k
        v = (2.0 * y - k * (x * x + y * y)) / (1.0 + np.hypot(a, b))  # (1 - rho) / k without cancellation
    else:
        u, v = x, y
    den = np.maximum(1.0 + w.t * u / w.ellipse.ax, MIN_TAPER_DEN)
    return np.stack([u, v / den], axis=-1)


def unwarp_point(q: tuple[float, float], w: DeformableParams) -> tuple[float, float]:
    u, v = unwarp_points(np.asarray(q, dtype=np.float64), w)
    return float(u), float(v)


def warp_points(uv: np.ndarray, w: DeformableParams) -> np.ndarray:
    """Forward model: taper in the straight frame, bend, then rotate and translate."""
    uv = np.asarray(uv, dtype=np.float64)
    u, v = uv[..., 0], uv[..., 1]
    e = w.ellipse
    v0 = v * np.maximum(1.0 + w.t * u / e.ax, MIN_TAPER_DEN)
    k = w.kappa
    if abs(k) > _STRAIGHT:
        sk, ck = np.sin(k * u), np.cos(k * u)
        x = sk / k - v0 * sk
        y = v0 * ck + 2.0 * np.sin(0.5 * k * u) ** 2 / k
    else:
        x, y = u, v0
    c, s = math.cos(e.theta), math.sin(e.theta)
    return np.stack([e.center[0] + c * x - s * y, e.center[1] + s * x + c * y], axis=-1)


# ---------------------------------------------------------------------------
# deformable fit

# parameter vector layout: px, py, theta, ax, ay, kappa, t
_NPARAM = 7


def _pack(w: DeformableParams) -> np.ndarray:
    e = w.ellipse
    return np.array([e.center[0], e.center[1], e.theta, e.ax, e.ay, w.kappa, w.t])


def _from_vector(p: np.ndarray) -> DeformableParams:
    px, py, theta, ax, ay, kappa, t = (float(v) for v in p)
    return DeformableParams(EllipseParams((px, py), theta, ax, ay), kappa, t)


@njit(cache=True, error_model="numpy")
def _canonical(theta):
    theta = theta - math.pi * math.floor(theta / math.pi)  # [0, pi)
    if theta > math.pi / 2:
        theta -= math.pi
    return theta


@njit(cache=True, error_model="numpy")
def _project(p):
    """Restore a_x >= a_y > 0, the canonical angle, and the bend/taper limits."""
    q = p.copy()
    q[3] = max(abs(q[3]), MIN_AXIS)
    q[4] = max(abs(q[4]), MIN_AXIS)
    if q[4] > q[3]:
        # swapping the axes invalidates the bend/taper frame
        q[3], q[4] = q[4], q[3]
        q[2] += math.pi / 2
        q[5] = 0.0
        q[6] = 0.0
    q[2] = _canonical(q[2])
    lim = MAX_BEND / q[3]
    q[5] = min(max(q[5], -lim), lim)
    q[6] = min(max(q[6], -MAX_TAPER), MAX_TAPER)
    return q


@njit(cache=True, fastmath=True, error_model="numpy")
def _residuals(q, sw, p, res, jac, want_jac):
    """Fill res (and jac when asked) for parameter vector p; returns the squared norm."""
    px, py, theta, ax, ay, k, t = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    c, s = math.cos(theta), math.sin(theta)
    bent = abs(k) > _STRAIGHT
    total = 0.0
    for i in range(q.shape[0]):
        dx = q[i, 0] - px
        dy = q[i, 1] - py
        x = c * dx + s * dy
        y = -s * dx + c * dy
        if bent:
            a = k * x
            b = 1.0 - k * y
            rho = math.sqrt(a * a + b * b)
            phi = math.atan2(a, b)
            u0 = phi / k
            v0 = (2.0 * y - k * (x * x + y * y)) / (1.0 + rho)
        else:
            a = b = rho = phi = 0.0
            u0, v0 = x, y
        raw_den = 1.0 + t * u0 / ax
        live = raw_den >= MIN_TAPER_DEN
        den = raw_den if live else MIN_TAPER_DEN
        v = v0 / den
        nrm = math.sqrt((u0 / ax) ** 2 + (v / ay) ** 2)
        res[i] = sw[i] * (nrm - 1.0)
        total += res[i] * res[i]
        if not want_jac:
            continue
        # d(x, y) / d(px, py, theta)
        dxd = (-c, -s, y)
        dyd = (s, -c, -x)
        if bent:
            rho2 = rho * rho
            du0_dx, du0_dy = b / rho2, a / rho2
            dv0_dx, dv0_dy = -a / rho, b / rho
            if abs(k) * (abs(x) + abs(y)) < 1e-4:
                # series in k; the closed form cancels badly here
                du0_dk = x * y + 2.0 * k * (x * y * y - x * x * x / 3.0)
            else:
                du0_dk = ((b * x + a * y) / rho2 - phi / k) / k
            r2 = x * x + y * y
            dv0_dk = (-r2 - (2.0 * y - k * r2) * ((k * r2 - y) / rho) / (1.0 + rho)) / (1.0 + rho)
        else:
            du0_dx, du0_dy, dv0_dx, dv0_dy = 1.0, 0.0, 0.0, 1.0
            du0_dk = x * y
            dv0_dk = -0.5 * x * x
        safe = max(nrm, 1e-12)
        de_du = u0 / (ax * ax * safe)
        de_dv = v / (ay * ay * safe)
        dv_dv0 = 1.0 / den
        dv_du0 = -v0 * t / (ax * den * den) if live else 0.0
        for m in range(3):
            du0 = du0_dx * dxd[m] + du0_dy * dyd[m]
            dv0 = dv0_dx * dxd[m] + dv0_dy * dyd[m]
            dv = dv_dv0 * dv0 + dv_du0 * du0
            jac[i, m] = sw[i] * (de_du * du0 + de_dv * dv)
        dv_ax = v0 * t * u0 / (ax * ax * den * den) if live else 0.0
        jac[i, 3] = sw[i] * (de_dv * dv_ax - u0 * u0 / (ax ** 3 * safe))
        jac[i, 4] = sw[i] * (-v * v / (ay ** 3 * safe))
        jac[i, 5] = sw[i] * (de_du * du0_dk + de_dv * (dv_dv0 * dv0_dk + dv_du0 * du0_dk))
        dv_dt = -v0 * u0 / (ax * den * den) if live else 0.0
        jac[i, 6] = sw[i] * de_dv * dv_dt
    return total


@njit(cache=True, error_model="numpy")
def _lm(q, sw, p0, max_iter, rel_tol, damping):
    n = q.shape[0]
    res = np.empty(n)
    trial = np.empty(n)
    jac = np.empty((n, _NPARAM))
    dummy = np.empty((1, _NPARAM))
    p = _project(p0)
    f = _residuals(q, sw, p, res, jac, True)
    f0 = f
    lam = damping
    it = 0
    status = 0  # 0 converged/stalled, 1 non-finite
    if not np.isfinite(f):
        return p, f, f0, 0, 1
    for it in range(1, max_iter + 1):
        g = jac.T @ res
        h = jac.T @ jac
        improved = False
        cand = p
        f_new = f
        while lam < 1e12:
            a = h.copy()
            for j in range(_NPARAM):
                a[j, j] += lam * max(h[j, j], 1e-12)
            step = np.linalg.solve(a, -g)
            cand = _project(p + step)
            f_new = _residuals(q, sw, cand, trial, dummy, False)
            if not np.isfinite(f_new):
                return p, f, f0, it, 1
            if f_new < f:
                improved = True
                break
            lam *= 10.0
        if not improved:
            break
        rel = (f - f_new) / max(f, 1e-300)
        p, f = cand, f_new
        lam *= 0.5
        if rel < rel_tol:
            break
        f = _residuals(q, sw, p, res, jac, True)
    return p, f, f0, it, 0


def boundary_residuals(edgels: np.ndarray, w: DeformableParams, jacobian: bool = False):
    """Strength-weighted radial residuals of edgels against the model boundary.

    r_i = sqrt(s_i) * (||(u_i / a_x, v_i / a_y)|| - 1).  With ``jacobian`` the
    analytic (N, 7) derivative with respect to (px, py, theta, a_x, a_y, kappa, t)
    is returned as well.
    """
    edgels = np.ascontiguousarray(edgels, dtype=np.float64)
    n = len(edgels)
    res = np.empty(n)
    jac = np.empty((n if jacobian else 1, _NPARAM))
    _residuals(np.ascontiguousarray(edgels[:, :2]), np.sqrt(edgels[:, 2]), _pack(w), res, jac, jacobian)
    return (res, jac) if jacobian else res


def fit_objective(edgels: np.ndarray, w: DeformableParams) -> float:
    r = boundary_residuals(edgels, w)
    return float(r @ r)


@dataclass(frozen=True)
class FitReport:
    params: DeformableParams
    objective: float
    initial_objective: float
    iterations: int


def fit_deformable_report(edgels: np.ndarray, init: EllipseParams | DeformableParams, *,
                          max_iter: int = 50, rel_tol: float = 1e-6,
                          damping: float = 1e-3) -> FitReport:
    """Damped Gauss-Newton (Levenberg-Marquardt) with projection onto valid parameters after each step."""
    edgels = np.asarray(edgels, dtype=np.float64)
    if edgels.ndim != 2 or edgels.shape[0] < 8:
        raise FitError("need at least 8 edgels for a deformable fit")
    if not np.all(np.isfinite(edgels)):
        raise FitError("edgels contain non-finite values")
    w = init if isinstance(init, DeformableParams) else DeformableParams.straight(init)
    q = np.ascontiguousarray(edgels[:, :2])
    sw = np.sqrt(np.maximum(edgels[:, 2], 0.0))
    p, f, f0, it, status = _lm(q, sw, _pack(w), max_iter, rel_tol, damping)
    if status != 0:
        raise FitError("deformable fit diverged (objective not finite)")
    return FitReport(_from_vector(p), float(f), float(f0), int(it))


def fit_deformable(edgels: np.ndarray, init: EllipseParams | DeformableParams, **kw) -> DeformableParams:
    """Levenberg-Marquardt fit of bend and taper (plus pose and axes) to weighted edgels."""
    return fit_deformable_report(edgels, init, **kw).params


# ---------------------------------------------------------------------------
# shape histogram


@dataclass(frozen=True, eq=False)
class ShapeHistogram:
    bins: np.ndarray  # (100,), unit L1 mass unless empty
    total_mass: float  # edgel strength that landed inside the grid, before normalising

    @property
    def grid(self) -> np.ndarray:
        return self.bins.reshape(GRID, GRID)


def grid_cells(uv: np.ndarray, ax: float, ay: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row (v) and column (u) cell of each normalised point plus an in-grid flag.

    Cells are half-open except the last row and column, which are closed.
    """
    span_x, span_y = GRID_EXTENT * ax, GRID_EXTENT * ay
    fx = (uv[:, 0] + span_x) / (2 * span_x) * GRID
    fy = (uv[:, 1] + span_y) / (2 * span_y) * GRID
    inside = (fx >= 0) & (fx <= GRID) & (fy >= 0) & (fy <= GRID)
    col = np.minimum(np.floor(np.where(inside, fx, 0)).astype(int), GRID - 1)
    row = np.minimum(np.floor(np.where(inside, fy, 0)).astype(int), GRID - 1)
    return row, col, inside


def shape_histogram(edgels: np.ndarray, w: DeformableParams) -> ShapeHistogram:
    edgels = np.asarray(edgels, dtype=np.float64).reshape(-1, 3)
    bins = np.zeros(GRID * GRID)
    if len(edgels) == 0:
        return ShapeHistogram(bins, 0.0)
    uv = unwarp_points(edgels[:, :2], w)
    row, col, inside = grid_cells(uv, w.ellipse.ax, w.ellipse.ay)
    np.add.at(bins, row[inside] * GRID + col[inside], edgels[inside, 2])
    total = float(bins.sum())
    if total > 0:
        bins /= total
    return ShapeHistogram(bins, total)


def chi2_distance(h1: np.ndarray, h2: np.ndarray, eps: float = 1e-12) -> float:
    """Half the chi-squared distance; in [0, 1] for unit-mass histograms."""
    h1, h2 = np.asarray(h1, dtype=np.float64), np.asarray(h2, dtype=np.float64)
    den = h1 + h2
    keep = den > eps
    return float(0.5 * np.sum((h1[keep] - h2[keep]) ** 2 / den[keep]))


def transform_params(w: DeformableParams, angle: float, shift: tuple[float, float]) -> DeformableParams:
    """Parameters of the same model after rotating the image plane by ``angle`` about the origin and shifting."""
    c, s = math.cos(angle), math.sin(angle)
    px, py = w.ellipse.center
    center = (c * px - s * py + shift[0], s * px + c * py + shift[1])
    theta = w.ellipse.theta + angle
    kappa, t = w.kappa, w.t
    canon = canonical_angle(theta)
    if abs(canon - theta) > 1e-9 and abs(abs(canon - theta) - 2 * math.pi) > 1e-9:
        # axis direction flipped by pi: the local frame is mirrored in both u and v
        kappa, t = -kappa, -t
    e = replace(w.ellipse, center=center, theta=canon)
    return DeformableParams(e, kappa, t)
