"""Oseen potential, Oseen tensor and heat kernel in closed form.

The potential is

    G(t, x) = (1/|x|) int_0^{|x|} exp(-r^2 / (4 nu t)) / sqrt(t) dr
            = sqrt(pi nu) erf(y) / |x|,      y = |x| / (2 sqrt(nu t)),

and T = Hess(G) - (Lap G) I, i.e. T_ii = -(G_jj + G_kk), T_ij = G_ij.
This G equals 4 pi^{3/2} sqrt(nu) times the heat-smoothed Newtonian
potential, so T is the classical unsteady Oseen tensor up to that factor.

Derivatives of T used by the estimate scans are taken by central
differences with one Richardson extrapolation.
"""
from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erf, gamma, gammainc

from ._validation import check_positive

log = logging.getLogger(__name__)

_SQRT_PI = np.sqrt(np.pi)
# int_0^inf r^4 exp(-r^2) dr
MOMENT4_INF = 3.0 * _SQRT_PI / 8.0
# below this y the series branch is used
_Y_SERIES = 1e-6


def moment4(y):
    """Incomplete moment int_0^y r^4 exp(-r^2) dr (no cancellation at small y)."""
    y = np.asarray(y, dtype=float)
    return 0.5 * gamma(2.5) * gammainc(2.5, y * y)


def _moment4_over_y3(y):
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = y < _Y_SERIES
    ys = y[small]
    out[small] = ys**2 / 5.0 - ys**4 / 7.0
    yl = y[~small]
    out[~small] = moment4(yl) / yl**3
    return out


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError("points must have a trailing dimension of size 3")
    return x


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise ValueError("time must be > 0")
    return t


@dataclass(frozen=True)
class OseenEval:
    """Closed-form evaluator; every method broadcasts over leading axes of x."""

    nu: float = 1.0

    def __post_init__(self):
        check_positive(self.nu, "nu")

    def _y(self, t, r):
        return r / (2.0 * np.sqrt(self.nu * t))

    def G(self, t, x):
        t = _check_time(t)
        x = _as_points(x)
        r = np.linalg.norm(x, axis=-1)
        y = self._y(t, r)
        # erf(y)/r = erf(y)/y * 1/(2 sqrt(nu t)); erf(y)/y -> 2/sqrt(pi)
        ratio = np.where(y < _Y_SERIES, 2.0 / _SQRT_PI * (1 - y**2 / 3.0), erf(y) / np.where(y > 0, y, 1.0))
        return np.sqrt(np.pi * self.nu) * ratio / (2.0 * np.sqrt(self.nu * t))

    def gradG(self, t, x):
        """dG/dx_i = -x_i / (2 nu t^{3/2} |x|^3) int_0^{|x|} r^2 e^{-r^2/4nu t} dr.

        Equivalently (x_i / |x|^2)(e^{-y^2} / sqrt(t) - G).
        """
        t = _check_time(t)
        x = _as_points(x)
        r = np.linalg.norm(x, axis=-1)
        y = self._y(t, r)
        # int_0^y s^2 e^{-s^2} ds / y^3 via the regularized gamma, series near 0
        small = y < _Y_SERIES
        m2 = np.where(small, 1.0 / 3.0 - y**2 / 5.0,
                      0.5 * gamma(1.5) * gammainc(1.5, y * y) / np.where(small, 1.0, y) ** 3)
        coef = -m2 / (2 * self.nu * t**1.5)
        return coef[..., None] * x

    def hessG(self, t, x):
        """Second derivatives in the incomplete-moment form.

        G_ij = -e^{-y^2} delta_ij / (6 nu t^{3/2})
               + 8 sqrt(nu) (x_i x_j / |x|^5 - delta_ij / (3|x|^3)) int_0^y r^4 e^{-r^2} dr
        """
        t = _check_time(t)
        x = _as_points(x)
        r = np.linalg.norm(x, axis=-1)
        y = self._y(t, r)
        b = 1.0 / (2.0 * np.sqrt(self.nu * t))
        q = _moment4_over_y3(y) * b**3  # = moment4(y) / r^3
        with np.errstate(invalid="ignore", divide="ignore"):
            xhat = np.where(r[..., None] > 0, x / np.where(r > 0, r, 1.0)[..., None], 0.0)
        eye = np.eye(3)
        outer = xhat[..., :, None] * xhat[..., None, :]
        first = (-np.exp(-y**2) / (6.0 * self.nu * t**1.5))[..., None, None] * eye
        second = (8.0 * np.sqrt(self.nu) * q)[..., None, None] * (outer - eye / 3.0)
        return first + second

    def laplacianG(self, t, x):
        t = _check_time(t)
        r = np.linalg.norm(_as_points(x), axis=-1)
        return -np.exp(-self._y(t, r) ** 2) / (2.0 * self.nu * t**1.5)

    def T(self, t, x):
        H = self.hessG(t, x)
        tr = np.trace(H, axis1=-2, axis2=-1)
        return H - tr[..., None, None] * np.eye(3)

    def Q(self, t, x):
        t = _check_time(t)
        r2 = np.sum(_as_points(x) ** 2, axis=-1)
        return (4 * np.pi * self.nu * t) ** -1.5 * np.exp(-r2 / (4 * self.nu * t))


# ---------------------------------------------------------------------------
# finite-difference derivatives of T


def _fd_first(fun, x, h):
    """Central differences of fun (values (..., 3, 3)) in each x_k, Richardson-extrapolated.

    Returns (..., 3, 3, 3) with the derivative index last.
    """
    def central(step):
        out = []
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            dx = step[..., None] * e
            out.append((fun(x + dx) - fun(x - dx)) / (2 * step[..., None, None]))
        return np.stack(out, axis=-1)

    d1 = central(h)
    d2 = central(h / 2)
    return (4 * d2 - d1) / 3.0


def dT(ev, t, x, rel_step=1e-3):
    """Gradient of T by Richardson-extrapolated central differences."""
    x = _as_points(x)
    scale = np.sqrt(np.sum(x**2, axis=-1) + ev.nu * t)
    return _fd_first(lambda p: ev.T(t, p), x, rel_step * scale)


def d2T(ev, t, x, rel_step=1e-2):
    """Second derivatives of T (..., 3, 3, 3, 3) by nested central differences."""
    x = _as_points(x)
    scale = np.sqrt(np.sum(x**2, axis=-1) + ev.nu * t)

    def second(step):
        out = np.empty(x.shape[:-1] + (3, 3, 3, 3))
        for k, l in itertools.product(range(3), repeat=2):
            ek = np.zeros(3)
            el = np.zeros(3)
            ek[k] = 1.0
            el[l] = 1.0
            s = step[..., None]
            f = lambda a, b: ev.T(t, x + a * s * ek + b * s * el)
            val = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4 * step[..., None, None] ** 2)
            out[..., k, l] = val
        return out

    h = rel_step * scale
    return (4 * second(h / 2) - second(h)) / 3.0


def row_divergence(ev, t, x, h):
    """max_i |sum_j d_j T_ij| by plain central differences with step h."""
    x = _as_points(x)
    div = np.zeros(x.shape[:-1] + (3,))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        div += (ev.T(t, x + e)[..., :, j] - ev.T(t, x - e)[..., :, j]) / (2 * h)
    return np.max(np.abs(div), axis=-1)


def heat_identity_residual(ev, t, x, h, sign=-1.0):
    """(d_t G + sign * nu Lap G) at x, by central differences in t and x."""
    x = _as_points(x)
    dt = (ev.G(t + h * h, x) - ev.G(t - h * h, x)) / (2 * h * h)
    lap = np.zeros(x.shape[:-1])
    g0 = ev.G(t, x)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        lap += (ev.G(t, x + e) - 2 * g0 + ev.G(t, x - e)) / h**2
    return dt + sign * ev.nu * lap


# ---------------------------------------------------------------------------
# estimate scans


# fixed directions for the scans: axis, face diagonal, body diagonal, generic
SCAN_DIRECTIONS = np.array([
    [1.0, 0.0, 0.0],
    [1.0, 1.0, 0.0],
    [1.0, 1.0, 1.0],
    [0.3, 0.5, 0.8124038],
])
SCAN_DIRECTIONS = SCAN_DIRECTIONS / np.linalg.norm(SCAN_DIRECTIONS, axis=1, keepdims=True)


@dataclass(frozen=True)
class ScanSpec:
    """Samples y = |x| / (2 sqrt(nu t)) uniformly on [0, y_max] at fixed (t, nu)."""

    y_max: float = 10.0
    n: int = 400
    t: float = 1.0
    nu: float = 1.0


class NonFiniteSample(ArithmeticError):
    pass


def scan_profile(m, spec=ScanSpec()):
    """Normalized values (|x|^2 + nu t)^{(m+3)/2} |D^m T| at each scan y.

    |.| is the largest entry in absolute value over all indices and
    directions.  Returns (y, values).
    """
    if m not in (0, 1, 2):
        raise ValueError("m must be 0, 1 or 2")
    ev = OseenEval(spec.nu)
    t = spec.t
    y = np.linspace(0.0, spec.y_max, spec.n + 1)
    r = 2 * np.sqrt(spec.nu * t) * y
    pts = r[:, None, None] * SCAN_DIRECTIONS[None, :, :]
    if m == 0:
        D = ev.T(t, pts)
    elif m == 1:
        D = dT(ev, t, pts)
    else:
        D = d2T(ev, t, pts)
    mag = np.max(np.abs(D.reshape(D.shape[0], D.shape[1], -1)), axis=(1, 2))
    vals = (r**2 + spec.nu * t) ** ((m + 3) / 2) * mag
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteSample(f"non-finite sample at t={t}, |x|={r[i]:.6g}")
    return y, vals


def estimate_constant(m, spec=ScanSpec()):
    """Measured constant sup (|x|^2 + nu t)^{(m+3)/2} |D^m T(t, x)| over the scan."""
    _, vals = scan_profile(m, spec)
    return float(np.max(vals))


def write_scan_csv(path, rows):
    """Write (m, y, normalized_value) rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "y", "normalized_value"])
        for m, y, v in rows:
            w.writerow([int(m), f"{y:.17g}", f"{v:.17g}"])
    return path


def far_field_tail_constant(nu=1.0):
    """Limit of |x|^3 max|T| as y -> inf: 8 sqrt(nu) * MOMENT4_INF * max|xx - I/3|.

    The maximum entry of xhat xhat^T - I/3 over unit xhat is 2/3 (axis direction).
    """
    return 8 * np.sqrt(nu) * MOMENT4_INF * (2.0 / 3.0)


# ---------------------------------------------------------------------------
# L1 norm of grad T


class QuadratureError(ArithmeticError):
    pass


def _gradT_frobenius_radial(ev, t, r):
    # the Frobenius norm of grad T is rotation invariant, so one direction suffices
    pts = r[:, None] * np.array([1.0, 0.0, 0.0])
    D = dT(ev, t, pts)
    return np.sqrt(np.sum(D.reshape(D.shape[0], -1) ** 2, axis=1))


def gradT_L1_norm(t, nu=1.0, s_max=2.0e3, panels=80, order=16, tail=True):
    """int_{R^3} |grad T(t, x)| dx with |.| the Frobenius norm.

    Radial Gauss-Legendre quadrature in s = |x| / sqrt(nu t) on log-spaced
    panels up to s_max; with ``tail`` the homogeneous r^-4 far field is
    integrated analytically beyond s_max.  Returns (value, value * sqrt(nu t)).
    """
    t = float(_check_time(t))
    ev = OseenEval(nu)
    ell = np.sqrt(nu * t)
    edges = np.concatenate(([0.0], np.geomspace(1e-3, s_max, panels)))
    xg, wg = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    s = 0.5 * (b - a) * xg + 0.5 * (b + a)
    w = 0.5 * (b - a) * wg
    s = s.ravel()
    w = w.ravel()
    r = s * ell
    f = _gradT_frobenius_radial(ev, t, r)
    if not np.all(np.isfinite(f)):
        raise QuadratureError("non-finite integrand in grad T quadrature")
    value = 4 * np.pi * np.sum(w * ell * r**2 * f)
    if tail:
        r_end = np.array([s_max * ell])
        c_far = float(_gradT_frobenius_radial(ev, t, r_end)[0]) * r_end[0] ** 4
        value += 4 * np.pi * c_far / r_end[0]
    return value, value * ell
