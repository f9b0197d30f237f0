"""Regularized eddy-viscosity Navier-Stokes on a periodic box.

The system solved is

    d_t u + div X - nu Lap u + grad p = 0,   div u = 0,   u(0) = bar(u0),
    X_ij = u_i bar(u)_j - bar(A d_j bar(u)_i),

so that div X = bar(u) . grad u - div bar(A grad bar(u)).  Time stepping is
the exponential-integrator (Lawson) trapezoid rule applied to the Duhamel
form, with the implicit stage resolved by fixed-point (Picard) iteration:

    u_{n+1} = E u_n + dt/2 (E F(u_n) + F(u_{n+1})),   E = exp(-nu |k|^2 dt),
    F(u) = -Pi (i k_j X_ij)^   (dealiased, Pi the Leray multiplier).

The heat propagator composed with Leray projection and divergence is the
spectral action of the Oseen tensor gradient, so each step is a discrete
Duhamel/Oseen representation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import spectral_field as sp
from ._validation import check_decreasing, check_field, check_nonnegative, check_positive
from .mollifier import check_resolution, make_bar

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A time step failed; ``time`` is where it happened."""

    def __init__(self, message, time=None, ratios=None):
        super().__init__(message)
        self.time = time
        self.ratios = ratios or []


# ---------------------------------------------------------------------------
# eddy viscosity


@dataclass(frozen=True)
class EddyViscosity:
    """Nonnegative coefficient A(t, x) supported in the ball |x - center| < radius.

    ``kind="bump"`` gives amplitude * exp(1 - 1/(1 - r^2/radius^2)), a
    smooth bump with peak value ``amplitude``; ``time_factor`` (a callable
    of t with values in [0, 1]) makes it time dependent.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    radius: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    time_factor: object = None

    def __post_init__(self):
        if self.kind not in ("zero", "bump"):
            raise ValueError(f"unknown A kind {self.kind!r}")
        check_nonnegative(self.amplitude, "A amplitude")
        check_positive(self.radius, "A radius")

    @property
    def is_zero(self):
        return self.kind == "zero" or self.amplitude == 0.0

    @property
    def sup_bound(self):
        """N_A: an upper bound for sup A."""
        return 0.0 if self.is_zero else float(self.amplitude)

    def profile(self, grid):
        if self.is_zero:
            return np.zeros((grid.N,) * 3)
        c = np.asarray(self.center, dtype=float).reshape(3, 1, 1, 1)
        s2 = np.sum((grid.coords - c) ** 2, axis=0) / self.radius**2
        out = np.zeros_like(s2)
        inside = s2 < 1.0
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
        return out

    def __call__(self, t, grid):
        base = self.profile(grid)
        if self.time_factor is None:
            return base
        return base * float(self.time_factor(t))

    @property
    def time_constant(self):
        return self.time_factor is None


# ---------------------------------------------------------------------------
# configuration


@dataclass
class SolverConfig:
    nu: float = 0.1
    eps: float = 0.4
    N: int = 32
    L: float = 2 * np.pi
    T: float = 0.5
    dt: float = 1.0 / 256
    picard_tol: float = 1e-12
    picard_max: int = 50
    dealias: bool = True
    enforce_dt_guard: bool = True

    def __post_init__(self):
        check_positive(self.nu, "nu")
        check_positive(self.T, "T")
        check_positive(self.dt, "dt")
        check_positive(self.picard_tol, "picard_tol")
        if int(self.picard_max) < 1:
            raise ValueError("picard_max must be >= 1")
        self.grid = sp.Grid3(int(self.N), float(self.L))
        check_resolution(self.eps, self.grid)

    @property
    def n_steps(self):
        n = int(round(self.T / self.dt))
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"T={self.T} is not a multiple of dt={self.dt}")
        return n

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def dt_guard(ub_sup, grid):
    """Advective part of the step-size guard: 0.5 h / max(1, ||u_bar||_inf)."""
    return 0.5 * grid.h / max(1.0, ub_sup)


# ---------------------------------------------------------------------------
# initial data


def shear_mode(grid, amplitude=1.0, n=1):
    """(a sin(k x2), 0, 0) with k = 2 pi n / L; an exact solution of the advection-free problem."""
    k = 2 * np.pi * n / grid.L
    u = np.zeros((3,) + (grid.N,) * 3)
    u[0] = amplitude * np.sin(k * grid.coords[1])
    return u


def taylor_green(grid, amplitude=1.0):
    x, y, z = grid.coords * (2 * np.pi / grid.L)
    return amplitude * np.stack([
        np.sin(x) * np.cos(y) * np.cos(z),
        -np.cos(x) * np.sin(y) * np.cos(z),
        np.zeros_like(x),
    ])


def compact_swirl(grid, radius, amplitude=1.0):
    """curl(0, 0, phi(r)) with phi a smooth bump of the given radius; supported in r < radius."""
    s2 = grid.radius**2 / radius**2
    phi = np.zeros_like(s2)
    inside = s2 < 1.0
    phi[inside] = np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
    # closed-form gradient of the bump keeps the support exact on the grid
    dphi_dr2 = np.zeros_like(s2)
    dphi_dr2[inside] = -phi[inside] / (1.0 - s2[inside]) ** 2 / radius**2
    x, y, _ = grid.coords
    u = np.stack([2 * y * dphi_dr2, -2 * x * dphi_dr2, np.zeros_like(x)])
    return amplitude * u / max(sp.sup_norm(u), 1e-300)


def random_solenoidal(grid, rng, n_max=4, amplitude=1.0):
    """Divergence-free random field built from modes with |n_i| <= n_max."""
    rng = np.random.default_rng(rng)
    uh = sp.transform(rng.standard_normal((3,) + (grid.N,) * 3), grid)
    nx, ny, nz = grid.index
    band = (np.abs(nx) <= n_max) & (np.abs(ny) <= n_max) & (np.abs(nz) <= n_max)
    uh = sp.leray_multiplier_apply(uh * band, grid)
    uh[:, 0, 0, 0] = 0.0
    u = sp.inverse_transform(uh, grid)
    return amplitude * u / max(sp.sup_norm(u), 1e-300)


INITIAL_DATA = ("zero", "shear", "taylor_green", "compact_swirl", "random")


def make_initial(kind, grid, rng=None, amplitude=1.0, radius=None):
    if kind == "zero":
        return np.zeros((3,) + (grid.N,) * 3)
    if kind == "shear":
        return shear_mode(grid, amplitude)
    if kind == "taylor_green":
        return taylor_green(grid, amplitude)
    if kind == "compact_swirl":
        return compact_swirl(grid, radius or grid.L / 6, amplitude)
    if kind == "random":
        return random_solenoidal(grid, rng, amplitude=amplitude)
    raise ValueError(f"unknown u0 kind {kind!r}; expected one of {INITIAL_DATA}")


# ---------------------------------------------------------------------------
# the flux tensor and right-hand side


class _Operator:
    """Caches grid-dependent multipliers for one (config, A) pair."""

    def __init__(self, config, A):
        self.config = config
        self.grid = config.grid
        self.bar = make_bar(config.eps, self.grid)
        self.mult = self.bar.multiplier_
        self.mask = self.grid.dealias_mask if config.dealias else np.ones(self.grid.spectral_shape, bool)
        self.A = A if isinstance(A, EddyViscosity) else None
        self._A_cache = None
        self._A_field = None if isinstance(A, EddyViscosity) else (None if A is None else np.asarray(A, float))
        self.E = np.exp(-config.nu * self.grid.k2 * config.dt)

    def A_at(self, t):
        if self._A_field is not None:
            return self._A_field
        if self.A is None or self.A.is_zero:
            return None
        if self.A.time_constant:
            if self._A_cache is None:
                self._A_cache = self.A(t, self.grid)
            return self._A_cache
        return self.A(t, self.grid)

    def flux_spectral(self, uh, A_field):
        """Return (X_hat, grad bar u) for a velocity spectrum."""
        g = self.grid
        ubh = uh * self.mult
        u = sp.inverse_transform(uh, g)
        ub = sp.inverse_transform(ubh, g)
        Xh = sp.transform(u[:, None] * ub[None, :], g)
        gradb = None
        if A_field is not None:
            gradb = sp.inverse_transform(1j * ubh[:, None] * g.kvec[None, :], g)
            Xh = Xh - self.mult * sp.transform(A_field * gradb, g)
        return Xh, gradb

    def rhs(self, uh, t):
        A_field = self.A_at(t)
        Xh, gradb = self.flux_spectral(uh, A_field)
        divh = np.sum(1j * self.grid.kvec[None, :] * Xh, axis=1)
        F = -sp.leray_multiplier_apply(divh, self.grid) * self.mask
        return F, gradb, A_field


def compute_X(u, A, bar, dealias=True):
    """Flux tensor X_ij = u_i bar(u)_j - bar(A d_j bar(u)_i), shape (3, 3, N, N, N)."""
    grid = bar.grid_
    u = check_field(u, grid.N, 3, "u")
    uh = sp.transform(u, grid)
    ubh = uh * bar.multiplier_
    ub = sp.inverse_transform(ubh, grid)
    Xh = sp.transform(u[:, None] * ub[None, :], grid)
    if A is not None and np.any(A):
        gradb = sp.inverse_transform(1j * ubh[:, None] * grid.kvec[None, :], grid)
        Xh = Xh - bar.multiplier_ * sp.transform(A * gradb, grid)
    if dealias:
        Xh = sp.dealias(Xh, grid)
    return sp.inverse_transform(Xh, grid)


def eddy_power(u, A, bar):
    """<-div bar(A grad bar u), u>; equals int A |grad bar u|^2 >= 0."""
    grid = bar.grid_
    ubh = sp.transform(u, grid) * bar.multiplier_
    gradb = sp.inverse_transform(1j * ubh[:, None] * grid.kvec[None, :], grid)
    Yh = bar.multiplier_ * sp.transform(A * gradb, grid)
    term = sp.inverse_transform(np.sum(1j * grid.kvec[None, :] * Yh, axis=1), grid)
    return -sp.inner(term, u, grid)


def convection_power(u, bar):
    """<bar(u) . grad u, u>; zero for divergence-free fields."""
    grid = bar.grid_
    ub = bar.transform(u)
    gu = sp.gradient(u, grid)
    return sp.inner(np.einsum("jxyz,ijxyz->ixyz", ub, gu), u, grid)


def pressure_from_flux(Xh, grid):
    """p_hat = -k_i k_j X_ij / |k|^2 with p_hat(0) = 0, i.e. Lap p = -div div X."""
    k = grid.kvec
    num = np.einsum("ixyz,jxyz,ijxyz->xyz", k, k, Xh)
    k2 = grid.k2
    return np.where(k2 > 0, -num / np.where(k2 > 0, k2, 1.0), 0.0)


def pressure(u, A, bar, dealias=True):
    grid = bar.grid_
    Xh = sp.transform(compute_X(u, A, bar, dealias=dealias), grid)
    return sp.inverse_transform(pressure_from_flux(Xh, grid), grid)


def momentum_residual(u, A, bar, p, nu=1.0):
    """Sup norm of the momentum residual minus its Leray projection.

    With u_t = Pi(-div X) + nu Lap u the residual u_t + div X - nu Lap u + grad p
    is (I - Pi) div X + grad p, which vanishes exactly when p is the pressure.
    """
    grid = bar.grid_
    Xh = sp.transform(compute_X(u, A, bar), grid)
    divh = np.sum(1j * grid.kvec[None, :] * Xh, axis=1)
    gradp = 1j * grid.kvec * sp.transform(p, grid)
    res = divh - sp.leray_multiplier_apply(divh, grid) + gradp
    return sp.sup_norm(sp.inverse_transform(res, grid))


def poisson_residual(p, u, A, bar):
    """Spectral-norm residual of Lap p + div div X = 0, relative to ||div div X||."""
    grid = bar.grid_
    Xh = sp.transform(compute_X(u, A, bar), grid)
    k = grid.kvec
    ddX = -np.einsum("ixyz,jxyz,ijxyz->xyz", k, k, Xh)
    lap_p = -grid.k2 * sp.transform(p, grid)
    num = np.sqrt(sp.spectral_norm2(lap_p + ddX, grid))
    den = np.sqrt(sp.spectral_norm2(ddX, grid))
    return num / den if den > 0 else num


# ---------------------------------------------------------------------------
# trajectory


@dataclass
class StepRecord:
    iterations: int
    increments: list
    ratios: list


@dataclass
class Trajectory:
    """Time series produced by :func:`solve`.

    ``t`` and the diagnostic arrays cover every step; ``snapshots`` and
    ``pressures`` are stored only at ``save_times``.
    """

    config: SolverConfig
    t: np.ndarray
    W: np.ndarray
    J: np.ndarray
    K2: np.ndarray
    K2_A: np.ndarray
    V: np.ndarray
    eddy_power: np.ndarray
    div_max: np.ndarray
    tail: np.ndarray
    save_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    pressures: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    W0_raw: float = float("nan")
    tail_radius: float = None

    @property
    def W_eps0(self):
        return float(self.W[0])

    @property
    def picard_ratios(self):
        return np.array([r for s in self.steps for r in s.ratios])

    @property
    def picard_iterations(self):
        return np.array([s.iterations for s in self.steps])

    def snapshot(self, t):
        idx = int(np.argmin(np.abs(np.asarray(self.save_times) - t)))
        if abs(self.save_times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot stored at t={t}")
        return self.snapshots[idx]

    def balance_residual(self):
        return energy_balance_residual(self, self.W_eps0)


def _trapz_cumulative(y, t):
    out = np.zeros_like(y, dtype=float)
    if len(y) > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def energy_balance_residual(trajectory, W_eps0):
    """r(t) = W/2 + nu int J^2 + int K^2 - W_eps(0)/2 (trapezoid in time)."""
    tr = trajectory
    nu = tr.config.nu
    return (0.5 * tr.W + nu * _trapz_cumulative(tr.J**2, tr.t)
            + _trapz_cumulative(tr.K2, tr.t) - 0.5 * W_eps0)


def energy_inequality_residual(trajectory, W0):
    """W/2 + nu int J^2 + int K_A^2 - W(0)/2 with the unmollified eddy term.

    Nonpositive (up to time-discretization error) for a limit candidate.
    """
    tr = trajectory
    return (0.5 * tr.W + tr.config.nu * _trapz_cumulative(tr.J**2, tr.t)
            + _trapz_cumulative(tr.K2_A, tr.t) - 0.5 * W0)


# ---------------------------------------------------------------------------
# time stepping


def prepare_initial(u0, op):
    """Mollify, Leray-project and dealias u0; returns the spectrum."""
    grid = op.grid
    u0 = check_field(u0, grid.N, 3, "u0")
    uh = sp.transform(u0, grid) * op.mult
    uh = sp.leray_multiplier_apply(uh, grid) * op.mask
    return uh


def _l2(uh, grid):
    return np.sqrt(max(sp.spectral_norm2(uh, grid), 0.0))


def duhamel_step(uh, F_n, op, t, noise_floor=1e-11):
    """Advance one step; returns (u_hat_{n+1}, StepRecord).

    Increment ratios are recorded only while both increments exceed
    ``noise_floor`` times the field norm, so round-off does not pollute them.
    """
    cfg = op.config
    grid = op.grid
    dt = cfg.dt
    base = op.E * uh + 0.5 * dt * op.E * F_n
    guess = op.E * uh + dt * op.E * F_n
    scale = max(_l2(uh, grid), 1e-300)
    increments, ratios = [], []
    for it in range(1, cfg.picard_max + 1):
        F_new, _, _ = op.rhs(guess, t + dt)
        new = base + 0.5 * dt * F_new
        inc = _l2(new - guess, grid)
        increments.append(inc)
        if len(increments) > 1 and increments[-2] > noise_floor * scale and inc > noise_floor * scale:
            ratios.append(inc / increments[-2])
        guess = new
        if inc <= cfg.picard_tol * scale or scale <= 1e-300:
            return guess, StepRecord(it, increments, ratios)
        if not np.isfinite(inc):
            break
    raise SolverError(
        f"Picard iteration did not converge in {cfg.picard_max} iterations at t={t + dt:.6g} "
        f"(last ratios {['%.3g' % r for r in ratios[-3:]]}); reduce dt",
        time=t + dt, ratios=ratios)


def _record(op, uh, t, A_field, gradb, tail_radius):
    grid = op.grid
    u = sp.inverse_transform(uh, grid)
    W = sp.spectral_norm2(uh, grid)
    gh = 1j * uh[:, None] * grid.kvec[None, :]
    J = np.sqrt(max(sp.spectral_norm2(gh, grid), 0.0))
    if A_field is None:
        K2 = K2A = power = 0.0
    else:
        K2 = float(np.sum(A_field * np.sum(gradb**2, axis=(0, 1)))) * grid.cell_volume
        gu = sp.inverse_transform(gh, grid)
        K2A = float(np.sum(A_field * np.sum(gu**2, axis=(0, 1)))) * grid.cell_volume
        Yh = op.mult * sp.transform(A_field * gradb, grid)
        term = sp.inverse_transform(np.sum(1j * grid.kvec[None, :] * Yh, axis=1), grid)
        power = -sp.inner(term, u, grid)
    divmax = float(np.max(np.abs(sp.inverse_transform(np.sum(1j * grid.kvec * uh, axis=0), grid))))
    tail = sp.tail_energy(u, tail_radius, grid) if tail_radius is not None else float("nan")
    return u, (t, W, J, K2, K2A, sp.sup_norm(u), power, divmax, tail)


def solve(u0, A, config, save_times=None, tail_radius=None, mode="step", global_max=200):
    """Integrate from bar(u0) to T.

    Parameters
    ----------
    u0 : (3, N, N, N) array
    A : EddyViscosity, array, or None
    config : SolverConfig
    save_times : times at which velocity and pressure snapshots are kept
        (must be multiples of dt; default: 0 and T).
    tail_radius : radius for the tail-energy series, optional.
    mode : ``"step"`` (per-step Picard) or ``"global"`` (Picard over the whole
        horizon, a slow verification mode for short runs).
    """
    op = _Operator(config, A)
    grid = op.grid
    n = config.n_steps
    dt = config.dt
    save_times = [0.0, config.T] if save_times is None else sorted(save_times)
    save_idx = {}
    for s in save_times:
        i = int(round(s / dt))
        if abs(i * dt - s) > 1e-9 * max(1.0, s) or not 0 <= i <= n:
            raise ValueError(f"save time {s} is not a step time in [0, T]")
        save_idx[i] = s

    uh = prepare_initial(u0, op)
    W0_raw = sp.kinetic_energy(np.asarray(u0, float), grid)

    if config.enforce_dt_guard:
        ub_sup = sp.sup_norm(sp.inverse_transform(uh * op.mult, grid))
        guard = dt_guard(ub_sup, grid)
        if dt > guard:
            raise ValueError(f"dt={dt:.6g} exceeds the advective guard {guard:.6g}")

    if mode == "global":
        states, steps = _global_picard(uh, op, n, global_max)
    elif mode == "step":
        states, steps = None, []
    else:
        raise ValueError(f"unknown mode {mode!r}")

    rows, snaps, press = [], [], []
    F, gradb, A_field = op.rhs(uh, 0.0)
    for i in range(n + 1):
        t = i * dt
        if i > 0:
            if states is None:
                uh, rec = duhamel_step(uh, F, op, t - dt)
                steps.append(rec)
            else:
                uh = states[i]
            F, gradb, A_field = op.rhs(uh, t)
        u, row = _record(op, uh, t, A_field, gradb, tail_radius)
        rows.append(row)
        if not np.isfinite(row[1]):
            raise SolverError(f"non-finite energy at t={t:.6g}", time=t)
        if i in save_idx:
            snaps.append(u)
            Xh, _ = op.flux_spectral(uh, A_field)
            press.append(sp.inverse_transform(pressure_from_flux(Xh * op.mask, grid), grid))

    cols = np.array(rows).T
    return Trajectory(
        config=config, t=cols[0], W=cols[1], J=cols[2], K2=cols[3], K2_A=cols[4], V=cols[5],
        eddy_power=cols[6], div_max=cols[7], tail=cols[8],
        save_times=[save_idx[i] for i in sorted(save_idx)], snapshots=snaps, pressures=press,
        steps=steps, W0_raw=W0_raw, tail_radius=tail_radius)


def _global_picard(uh0, op, n, max_sweeps):
    """Picard iteration of the discrete Duhamel map over the whole horizon."""
    cfg = op.config
    dt = cfg.dt
    grid = op.grid
    states = [uh0] * (n + 1)
    scale = max(_l2(uh0, grid), 1e-300)
    increments, ratios = [], []
    for sweep in range(1, max_sweeps + 1):
        Fs = [op.rhs(s, i * dt)[0] for i, s in enumerate(states)]
        new = [uh0]
        for i in range(n):
            new.append(op.E * new[-1] + 0.5 * dt * (op.E * Fs[i] + Fs[i + 1]))
        inc = max(_l2(a - b, grid) for a, b in zip(new, states))
        if increments and increments[-1] > 1e-11 * scale and inc > 1e-11 * scale:
            ratios.append(inc / increments[-1])
        increments.append(inc)
        states = new
        if inc <= cfg.picard_tol * scale:
            return states, [StepRecord(sweep, increments, ratios)]
    raise SolverError(f"global Picard did not converge in {max_sweeps} sweeps", ratios=ratios)


# ---------------------------------------------------------------------------
# reports


def hm_monitor(trajectory, m_max=2):
    """Rows (t, m, ||u||_{m,2}, V_m, normalized H^m, normalized V_m) for stored snapshots.

    Normalizations: ||u||_{m,2} eps^m / sqrt(W(0)) and V_m eps^(m+3/2) / sqrt(W(0)).
    """
    cfg = trajectory.config
    grid = cfg.grid
    sw = np.sqrt(trajectory.W_eps0)
    rows = []
    for t, u in zip(trajectory.save_times, trajectory.snapshots):
        uh = sp.transform(u, grid)
        hm = 0.0
        for m in range(m_max + 1):
            mag = sp.derivative_magnitude(u, grid, m, uh)
            hm += np.sqrt(np.sum(mag**2) * grid.cell_volume)
            vm = float(np.max(mag))
            if sw > 0:
                rows.append((t, m, hm, vm, hm * cfg.eps**m / sw, vm * cfg.eps ** (m + 1.5) / sw))
            else:
                rows.append((t, m, hm, vm, 0.0, 0.0))
    return rows


@dataclass
class SweepReport:
    eps: list
    trajectories: list
    sample_times: list
    distances: np.ndarray  # (len(eps) - 1, len(sample_times))
    inequality_residual: np.ndarray  # for the smallest eps, over time
    W0: float
    W_eps0: list
    errors: dict

    @property
    def cauchy_decreasing(self):
        d = self.distances
        return bool(d.shape[0] < 2 or np.all(d[1:] < d[:-1]))

    @property
    def energy_ok(self):
        return all(w <= self.W0 * (1 + 1e-12) for w in self.W_eps0)


def eps_sweep(u0, A, config, eps_list, sample_times, ball_radius=None, tol=1e-4):
    """Solve for each eps (decreasing) and measure Cauchy behaviour of the family."""
    eps_list = check_decreasing(eps_list, "eps_list")
    grid = config.grid
    for e in eps_list:
        check_resolution(e, grid)
    weight = 1.0 if ball_radius is None else (grid.radius < ball_radius).astype(float)
    trajs, errors = [], {}
    for e in eps_list:
        cfg = SolverConfig(**{**config.to_dict(), "eps": e})
        try:
            trajs.append(solve(u0, A, cfg, save_times=[0.0] + list(sample_times)))
        except SolverError as exc:
            errors[e] = str(exc)
            trajs.append(None)
    dist = np.full((len(eps_list) - 1, len(sample_times)), np.nan)
    for i in range(len(eps_list) - 1):
        a, b = trajs[i], trajs[i + 1]
        if a is None or b is None:
            continue
        for j, t in enumerate(sample_times):
            d = a.snapshot(t) - b.snapshot(t)
            dist[i, j] = np.sqrt(float(np.sum(weight * d**2)) * grid.cell_volume)
    W0 = sp.kinetic_energy(np.asarray(u0, float), grid)
    last = trajs[-1]
    ineq = energy_inequality_residual(last, W0) if last is not None else np.array([np.nan])
    return SweepReport(list(eps_list), trajs, list(sample_times), dist, ineq, W0,
                       [tr.W_eps0 if tr is not None else np.nan for tr in trajs], errors)


@dataclass
class TailReport:
    R1: float
    R2_values: list
    initial_tail: float
    max_tail: list
    C: float
    fit_residual: float
    series: np.ndarray  # tail(t) at the nominal R2

    def bound(self, R2):
        return self.initial_tail + self.C / (R2 - self.R1)


def tail_report(trajectory, R1, R2, R2_fit=None):
    """Tail energy beyond R2 against initial tail beyond R1 plus C / (R2 - R1).

    C is fitted as the smallest constant bounding the excess over the
    radii in ``R2_fit`` (default: five radii between R1 and L/2 excluding R2);
    the bound is then checked at R2.  Requires stored snapshots.
    """
    grid = trajectory.config.grid
    if not R1 < R2 < grid.L / 2:
        raise ValueError("need R1 < R2 < L/2")
    if R2_fit is None:
        R2_fit = [r for r in np.linspace(R1, grid.L / 2, 7)[1:-1] if abs(r - R2) > 1e-9]
    snaps = trajectory.snapshots
    tail0 = sp.tail_energy(snaps[0], R1, grid)
    excess = []
    for r in R2_fit:
        m = max(sp.tail_energy(u, r, grid) for u in snaps)
        excess.append(max(m - tail0, 0.0) * (r - R1))
    C = max(excess) if excess else 0.0
    fitted = np.array([tail0 + C / (r - R1) for r in R2_fit])
    observed = np.array([max(sp.tail_energy(u, r, grid) for u in snaps) for r in R2_fit])
    resid = float(np.sqrt(np.mean((fitted - observed) ** 2))) if len(R2_fit) else 0.0
    series = np.array([sp.tail_energy(u, R2, grid) for u in snaps])
    return TailReport(R1, list(R2_fit), tail0, list(observed), C, resid, series)


# ---------------------------------------------------------------------------
# estimator


class RegularizedNSE(BaseEstimator):
    """Estimator wrapper around :func:`solve`.

    ``fit(u0)`` integrates from the mollified data and stores ``trajectory_``;
    ``predict(t)`` returns the stored velocity at a saved time.
    """

    def __init__(self, nu=0.1, eps=0.4, N=32, L=2 * np.pi, T=0.5, dt=1.0 / 256,
                 picard_tol=1e-12, picard_max=50, A_kind="zero", A_radius=None,
                 A_amplitude=0.0, save_times=None, tail_radius=None):
        self.nu = nu
        self.eps = eps
        self.N = N
        self.L = L
        self.T = T
        self.dt = dt
        self.picard_tol = picard_tol
        self.picard_max = picard_max
        self.A_kind = A_kind
        self.A_radius = A_radius
        self.A_amplitude = A_amplitude
        self.save_times = save_times
        self.tail_radius = tail_radius

    def _config(self):
        return SolverConfig(nu=self.nu, eps=self.eps, N=self.N, L=self.L, T=self.T, dt=self.dt,
                            picard_tol=self.picard_tol, picard_max=self.picard_max)

    def eddy_viscosity(self):
        radius = self.A_radius if self.A_radius is not None else self.L / 8
        return EddyViscosity(self.A_kind, self.A_amplitude, radius)

    def fit(self, X, y=None):
        cfg = self._config()
        self.config_ = cfg
        self.A_ = self.eddy_viscosity()
        self.trajectory_ = solve(X, self.A_, cfg, save_times=self.save_times,
                                 tail_radius=self.tail_radius)
        self.balance_residual_ = self.trajectory_.balance_residual()
        return self

    def predict(self, t):
        check_is_fitted(self, "trajectory_")
        return self.trajectory_.snapshot(t)
