"""Generalized nonlinear Volterra equations.

Solves and analyses

    f(t) = a + int_0^t K(t - s) P(f(s)) ds

on a uniform grid with product integration: the kernel moments over each
grid cell are computed exactly (constant and inverse-square-root kernels)
and P(f) is interpolated piecewise linearly.  Sub/supersolution checks,
monotone Picard iteration and the comparison (maximum) principle between
sub- and supersolutions are provided on top of the discrete operator.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.signal import fftconvolve
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive

__all__ = [
    "VolterraKernel",
    "Nonlinearity",
    "VolterraProblem",
    "GridFunction",
    "PicardResult",
    "VolterraError",
    "ConvergenceError",
    "MonotonicityError",
    "BlowupError",
    "PreconditionError",
    "apply_S",
    "picard_from",
    "check_subsolution",
    "check_supersolution",
    "default_slack",
    "vmax_check",
    "constant_supersolution_horizon",
    "detect_blowup",
    "VolterraSolver",
]


class VolterraError(RuntimeError):
    """Base class for Volterra solver failures."""


class ConvergenceError(VolterraError):
    pass


class MonotonicityError(VolterraError):
    pass


class BlowupError(VolterraError):
    def __init__(self, message, index, time):
        super().__init__(message)
        self.index = index
        self.time = time


class PreconditionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# kernels and nonlinearities


@dataclass(frozen=True)
class VolterraKernel:
    """Nonnegative convolution kernel K.

    ``form`` is one of ``"constant"`` (K = c), ``"inverse_sqrt"``
    (K = c / sqrt(nu t)) or ``"tabulated"`` (K given by ``samples`` at
    t_k = k h, k = 0..M, trapezoidal moments).
    """

    form: str = "constant"
    coefficient: float = 1.0
    nu: float = 1.0
    samples: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.form not in ("constant", "inverse_sqrt", "tabulated"):
            raise ValueError(f"unknown kernel form {self.form!r}")
        if self.coefficient < 0:
            raise ValueError("kernel coefficient must be >= 0")
        if self.form == "inverse_sqrt":
            check_positive(self.nu, "nu")
        if self.form == "tabulated":
            if self.samples is None:
                raise ValueError("tabulated kernel needs samples")
            s = np.asarray(self.samples, dtype=float)
            if not np.all(np.isfinite(s)):
                raise ValueError("tabulated kernel samples must be finite")
            if np.any(s < 0):
                raise ValueError("kernel samples must be nonnegative")
            object.__setattr__(self, "samples", s)

    @classmethod
    def constant(cls, c=1.0):
        return cls("constant", float(c))

    @classmethod
    def inverse_sqrt(cls, c=1.0, nu=1.0):
        return cls("inverse_sqrt", float(c), float(nu))

    @classmethod
    def tabulated(cls, samples):
        return cls("tabulated", 1.0, 1.0, np.asarray(samples, dtype=float))

    @property
    def exact_moments(self):
        return self.form != "tabulated"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.form == "constant":
            return np.full_like(t, self.coefficient)
        if self.form == "inverse_sqrt":
            with np.errstate(divide="ignore"):
                return self.coefficient / np.sqrt(self.nu * t)
        raise TypeError("tabulated kernels are only defined on their grid")

    def moments(self, h, M):
        """Cumulative moments M0(kh) = int_0^{kh} K, M1(kh) = int_0^{kh} v K(v) dv."""
        v = h * np.arange(M + 1)
        c = self.coefficient
        if self.form == "constant":
            return c * v, 0.5 * c * v**2
        if self.form == "inverse_sqrt":
            s = c / np.sqrt(self.nu)
            return 2.0 * s * np.sqrt(v), (2.0 / 3.0) * s * v**1.5
        k = self.samples
        if k.size < M + 1:
            raise ValueError(f"tabulated kernel has {k.size} samples, grid needs {M + 1}")
        k = k[: M + 1]
        m0 = np.concatenate(([0.0], np.cumsum(0.5 * h * (k[1:] + k[:-1]))))
        vk = v * k
        m1 = np.concatenate(([0.0], np.cumsum(0.5 * h * (vk[1:] + vk[:-1]))))
        return m0, m1

    def integral(self, tau):
        """int_0^tau K(u) du for the closed-form kernels."""
        tau = np.asarray(tau, dtype=float)
        if self.form == "constant":
            return self.coefficient * tau
        if self.form == "inverse_sqrt":
            return 2.0 * self.coefficient * np.sqrt(tau / self.nu)
        raise TypeError("use moments() for tabulated kernels")


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar map P with its declared Lipschitz constant."""

    func: Callable[[np.ndarray], np.ndarray]
    lipschitz: float = np.inf
    monotone: bool = True
    name: str = "P"

    def __call__(self, z):
        return np.asarray(self.func(np.asarray(z, dtype=float)), dtype=float)

    def check(self, lo=-10.0, hi=10.0, n=2001, rtol=1e-12):
        """Sampled monotonicity/Lipschitz checks on [lo, hi]; returns (monotone_ok, lipschitz_ok)."""
        z = np.linspace(lo, hi, n)
        p = self(z)
        dp = np.diff(p)
        scale = rtol * max(1.0, float(np.max(np.abs(p))))
        mono = bool(np.all(dp >= -scale))
        lip = bool(np.all(np.abs(dp) <= self.lipschitz * np.diff(z) + scale))
        return mono, lip

    @classmethod
    def power(cls, k):
        """z -> max(z, 0)**k (nondecreasing)."""
        return cls(lambda z: np.maximum(z, 0.0) ** k, np.inf, True, f"z^{k}")

    @classmethod
    def linear(cls, alpha1=0.0, alpha2=1.0):
        return cls(lambda z: alpha1 + alpha2 * z, abs(alpha2), alpha2 >= 0, "linear")

    @classmethod
    def clipped_quadratic(cls, c2, c1, zmax):
        """0 for z <= 0, c2 z^2 + c1 z on [0, zmax], constant beyond.

        This is the energy-estimate nonlinearity: with c2 = C/eps^(3/2),
        c1 = C N_A/eps and zmax = sqrt(sup W).
        """
        pmax = c2 * zmax**2 + c1 * zmax

        def func(z):
            zc = np.clip(z, 0.0, zmax)
            return c2 * zc**2 + c1 * zc

        return cls(func, 2 * c2 * zmax + c1, True, "clipped_quadratic")


@dataclass(frozen=True)
class VolterraProblem:
    a: float
    T: float
    kernel: VolterraKernel
    P: Nonlinearity
    M: int = 1024

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("offset a must be >= 0")
        check_positive(self.T, "T")
        if self.M < 1:
            raise ValueError("need at least one grid interval")

    @property
    def h(self):
        return self.T / self.M

    @property
    def grid(self):
        return np.linspace(0.0, self.T, self.M + 1)

    def constant(self, value):
        return GridFunction(self.grid, np.full(self.M + 1, float(value)))

    def from_callable(self, fn):
        t = self.grid
        return GridFunction(t, np.asarray(fn(t), dtype=float) * np.ones_like(t))

    def weights(self):
        """Product-integration weights (alpha_n, beta_n), n = 1..M.

        S_i = a + sum_{n=1}^{i} alpha_n P_{i-n} + beta_n P_{i-n+1}.
        """
        return _weights(self.kernel, self.h, self.M)


def _weights(kernel, h, M):
    m0, m1 = kernel.moments(h, M)
    n = np.arange(1, M + 1)
    d0 = m0[n] - m0[n - 1]
    d1 = m1[n] - m1[n - 1]
    # cell n in lag v covers [(n-1)h, nh]; hat functions in v
    alpha = (d1 - (n - 1) * h * d0) / h
    beta = (n * h * d0 - d1) / h
    # guard tiny negative roundoff in the moments
    return np.maximum(alpha, 0.0), np.maximum(beta, 0.0)


@dataclass
class GridFunction:
    """Values on a uniform time grid, piecewise-linear in between."""

    t: np.ndarray
    values: np.ndarray
    blowup_index: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.shape != self.values.shape or self.t.ndim != 1:
            raise ValueError("t and values must be 1-D arrays of equal length")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("grid must be strictly increasing")

    def __len__(self):
        return self.t.size

    def __call__(self, s):
        return np.interp(s, self.t, self.values)

    @property
    def valid(self):
        if self.blowup_index is None:
            return np.ones(self.t.size, dtype=bool)
        return np.arange(self.t.size) < self.blowup_index

    def sup(self):
        v = self.values[self.valid]
        return float(np.max(np.abs(v))) if v.size else 0.0

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "f"])
            for ti, fi in zip(self.t, self.values):
                w.writerow([f"{ti:.17g}", f"{fi:.17g}"])
        return path

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])


# ---------------------------------------------------------------------------
# the map S[a, f]


def _check_on_grid(problem, f):
    if len(f) != problem.M + 1 or not np.allclose(f.t, problem.grid, rtol=0, atol=1e-12 * problem.T):
        raise ValueError("function is not defined on the problem grid")


def _check_monotone_P(problem):
    if problem.P.monotone:
        mono, _ = problem.P.check()
        if not mono:
            raise ValueError(f"nonlinearity {problem.P.name} is flagged monotone but is not")


def _S_values(problem, values, weights=None):
    alpha, beta = problem.weights() if weights is None else weights
    p = problem.P(values)
    M = problem.M
    out = np.empty(M + 1)
    out[0] = problem.a
    # S_i = a + (alpha * p)[i-1] + (beta * p)[i]   as convolutions
    if M <= 64:
        ca = np.convolve(alpha, p)[: M]
        cb = np.convolve(beta, p[1:])[: M]
    else:
        ca = fftconvolve(alpha, p)[: M]
        cb = fftconvolve(beta, p[1:])[: M]
    out[1:] = problem.a + ca + cb
    return out


def apply_S(problem, f):
    """Evaluate S[a, f] on the problem grid."""
    _check_on_grid(problem, f)
    _check_monotone_P(problem)
    return GridFunction(f.t.copy(), _S_values(problem, f.values))


class PicardResult(NamedTuple):
    solution: GridFunction
    iterations: int
    residual: float
    increments: np.ndarray


def picard_from(problem, start, side="sub", max_iter=1000, tol=1e-12,
                blowup_threshold=1e12, slack=None):
    """Monotone Picard iteration g_{n+1} = S[a, g_n] from a sub- or supersolution.

    Iterates are non-decreasing from a subsolution and non-increasing from a
    supersolution; a violation beyond ``slack`` raises MonotonicityError.
    Returns (solution, iterations, residual sup|f - S[a, f]|, increments).
    """
    if side not in ("sub", "super"):
        raise ValueError("side must be 'sub' or 'super'")
    _check_on_grid(problem, start)
    _check_monotone_P(problem)
    w = problem.weights()
    g = start.values.copy()
    increments = []
    sign = 1.0 if side == "sub" else -1.0
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            new = _S_values(problem, g, w)
        idx = detect_blowup(GridFunction(start.t, new), blowup_threshold)
        if idx is not None:
            raise BlowupError(f"iterate {it} exceeds {blowup_threshold:g} at t={start.t[idx]:.6g}",
                              idx, float(start.t[idx]))
        step = new - g
        tol_mono = (slack if slack is not None else 0.0) + 1e-12 * max(1.0, float(np.max(np.abs(new))))
        if np.any(sign * step < -tol_mono):
            bad = int(np.argmax(sign * step < -tol_mono))
            raise MonotonicityError(
                f"{side}solution iterate {it} moved the wrong way at t={start.t[bad]:.6g} "
                f"by {abs(step[bad]):.3e}")
        inc = float(np.max(np.abs(step)))
        increments.append(inc)
        g = new
        if inc <= tol * max(1.0, float(np.max(np.abs(g)))):
            residual = float(np.max(np.abs(g - _S_values(problem, g, w))))
            return PicardResult(GridFunction(start.t.copy(), g), it, residual, np.array(increments))
    raise ConvergenceError(f"no convergence after {max_iter} iterations (last increment {increments[-1]:.3e})")


# ---------------------------------------------------------------------------
# sub/supersolutions and the comparison principle


def default_slack(problem, f, c_q=1.0):
    """Quadrature slack c_q h^p L sup|f| (p = 2 exact moments, 1 tabulated).

    Non-Lipschitz P (L = inf) falls back to c_q h^p max(1, sup|P(f)|).
    """
    order = 2 if problem.kernel.exact_moments else 1
    L = problem.P.lipschitz
    sup_f = max(float(np.max(np.abs(f.values))), 1.0)
    if not np.isfinite(L):
        return c_q * problem.h**order * max(1.0, float(np.max(np.abs(problem.P(f.values)))))
    return c_q * problem.h**order * max(L, 1.0) * sup_f


def check_subsolution(problem, f, slack=None):
    s = apply_S(problem, f).values
    slack = default_slack(problem, f) if slack is None else slack
    return bool(np.all(f.values <= s + slack))


def check_supersolution(problem, g, slack=None):
    s = apply_S(problem, g).values
    slack = default_slack(problem, g) if slack is None else slack
    return bool(np.all(s <= g.values + slack))


def vmax_check(problem, f_sub, g_super, slack=None):
    """True iff f_sub <= g_super (+ slack) on the whole grid.

    Raises PreconditionError when f_sub is not a subsolution or g_super not a
    supersolution, or P is not Lipschitz and nondecreasing.
    """
    if not problem.P.monotone or not np.isfinite(problem.P.lipschitz):
        raise PreconditionError("comparison principle needs a Lipschitz nondecreasing P")
    if not check_subsolution(problem, f_sub, slack):
        raise PreconditionError("f_sub is not a subsolution")
    if not check_supersolution(problem, g_super, slack):
        raise PreconditionError("g_super is not a supersolution")
    s = max(default_slack(problem, f_sub), default_slack(problem, g_super)) if slack is None else slack
    return bool(np.all(f_sub.values <= g_super.values + s))


def constant_supersolution_horizon(a, G, kernel, P, T=1.0, M=1024):
    """Largest grid time tau with a + P(G) int_0^tau K <= G (0 if none)."""
    _check_monotone_P_only(P)
    h = T / M
    m0, _ = kernel.moments(h, M)
    pg = float(P(np.asarray(G)))
    if pg <= 0.0:
        return T if a <= G else 0.0
    ok = a + pg * m0 <= G * (1 + 1e-14)
    if not ok[0]:
        return 0.0
    # m0 is nondecreasing, so the admissible set is a prefix
    last = int(np.argmin(ok)) - 1 if not ok.all() else M
    return last * h


def _check_monotone_P_only(P):
    if P.monotone and not P.check()[0]:
        raise ValueError(f"nonlinearity {P.name} is flagged monotone but is not")


def detect_blowup(f, threshold):
    """First index where |f| > threshold or f is not finite, else None.

    Also records the index on ``f`` so later values read as invalid.
    """
    v = f.values
    if v.size == 0:
        return None
    bad = ~np.isfinite(v) | (np.abs(np.nan_to_num(v, nan=np.inf)) > threshold)
    if not bad.any():
        return None
    idx = int(np.argmax(bad))
    f.blowup_index = idx
    return idx


# ---------------------------------------------------------------------------
# estimator wrapper


class VolterraSolver(BaseEstimator):
    """Estimator-style front end: ``fit()`` runs the Picard iteration.

    Parameters mirror VolterraProblem; ``start`` is ``"zero"`` (subsolution),
    a float (constant start) or a callable of t.
    """

    def __init__(self, kernel=None, nonlinearity=None, a=1.0, T=1.0, n_intervals=1024,
                 side="sub", start="zero", tol=1e-12, max_iter=2000):
        self.kernel = kernel
        self.nonlinearity = nonlinearity
        self.a = a
        self.T = T
        self.n_intervals = n_intervals
        self.side = side
        self.start = start
        self.tol = tol
        self.max_iter = max_iter

    def _problem(self):
        kernel = self.kernel if self.kernel is not None else VolterraKernel.constant(1.0)
        P = self.nonlinearity if self.nonlinearity is not None else Nonlinearity.linear()
        return VolterraProblem(self.a, self.T, kernel, P, self.n_intervals)

    def fit(self, X=None, y=None):
        problem = self._problem()
        if isinstance(self.start, str) and self.start == "zero":
            g0 = problem.constant(0.0)
        elif callable(self.start):
            g0 = problem.from_callable(self.start)
        else:
            g0 = problem.constant(float(self.start))
        res = picard_from(problem, g0, self.side, self.max_iter, self.tol)
        self.problem_ = problem
        self.solution_ = res.solution
        self.n_iter_ = res.iterations
        self.residual_ = res.residual
        self.increments_ = res.increments
        return self

    def predict(self, t):
        check_is_fitted(self, "solution_")
        return self.solution_(np.asarray(t, dtype=float))
