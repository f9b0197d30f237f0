"""Compactly supported smoothing kernels and the periodic bar operator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import spectral_field as sp
from ._validation import check_positive


class ResolutionError(ValueError):
    """Smoothing radius is too small for the grid or too large for the box."""


@dataclass(frozen=True)
class MollifierKernel:
    """Even, nonnegative bump supported in the unit ball.

    ``profile(r) = exp(-1 / (1 - r^2))`` for r < 1 and 0 otherwise; the
    normalizing constant is applied on the grid (see :meth:`sample`).
    """

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
        return out

    def sample(self, grid, eps):
        """rho_eps on the grid, centred at index 0 (periodic minimum image).

        Discretely renormalized so that Sum rho_eps h^3 = 1 exactly.
        """
        d = np.minimum(np.arange(grid.N), grid.N - np.arange(grid.N)) * grid.h
        r = np.sqrt(d[:, None, None] ** 2 + d[None, :, None] ** 2 + d[None, None, :] ** 2)
        rho = self.profile(r / eps)
        total = rho.sum() * grid.cell_volume
        if total <= 0:
            raise ResolutionError(f"eps={eps} does not cover any grid point")
        return rho / total

    def multiplier(self, grid, eps):
        """Real Fourier multiplier of rho_eps on the grid; equals 1 at k = 0."""
        mh = np.fft.rfftn(self.sample(grid, eps)) * grid.cell_volume
        return mh.real


def check_resolution(eps, grid, factor=2.0):
    eps = check_positive(eps, "eps")
    if eps < factor * grid.h * (1 - 1e-12):
        raise ResolutionError(f"eps={eps:.6g} is below the resolution guard {factor}h={factor * grid.h:.6g}")
    if eps > grid.L / 2 * (1 + 1e-12):
        raise ResolutionError(f"eps={eps:.6g} exceeds half the box L/2={grid.L / 2:.6g}")
    return eps


class Mollifier(TransformerMixin, BaseEstimator):
    """Bar operator U -> rho_eps * U on a periodic grid.

    Parameters
    ----------
    eps : float
        Support radius of the smoothing kernel; must be at least ``2 h``.
    N, L : grid size and box side.

    Examples
    --------
    >>> import numpy as np
    >>> bar = Mollifier(eps=1.0, N=16).fit()
    >>> np.allclose(bar.transform(np.ones((16, 16, 16))), 1.0)
    True
    """

    def __init__(self, eps=0.5, N=32, L=2 * np.pi):
        self.eps = eps
        self.N = N
        self.L = L

    def fit(self, X=None, y=None):
        self.grid_ = sp.Grid3(int(self.N), float(self.L))
        check_resolution(self.eps, self.grid_)
        self.kernel_ = MollifierKernel()
        self.multiplier_ = self.kernel_.multiplier(self.grid_, self.eps)
        return self

    def transform(self, X):
        check_is_fitted(self, "multiplier_")
        return sp.inverse_transform(self.apply_spectral(sp.transform(X, self.grid_)), self.grid_)

    def apply_spectral(self, Xh):
        check_is_fitted(self, "multiplier_")
        return Xh * self.multiplier_


def make_bar(eps, grid):
    return Mollifier(eps=eps, N=grid.N, L=grid.L).fit()


def mollify(u, bar):
    return bar.transform(u)


def verify_derivative_bound(u, bar, m):
    """||D^m u_bar||_inf * eps^(3/2 + m) / ||u||_{0,2}; 0 for u = 0."""
    if not 0 <= m <= 4:
        raise ValueError("m must be in 0..4")
    grid = bar.grid_
    l2 = np.sqrt(sp.kinetic_energy(u, grid))
    if l2 == 0:
        return 0.0
    sup = sp.seminorm_sup(bar.transform(u), grid, m)
    return sup * bar.eps ** (1.5 + m) / l2


def verify_approximation(u, bar, m):
    """||u_bar - u||_{m,2} / (eps ||u||_{m-1,2}); 0 when u_bar = u."""
    if m < 1:
        raise ValueError("m must be >= 1")
    grid = bar.grid_
    num, _ = sp.norms(bar.transform(u) - u, grid, m)
    if num <= 1e-14 * max(1.0, np.sqrt(sp.kinetic_energy(u, grid))):
        return 0.0
    den, _ = sp.norms(u, grid, m - 1)
    return num / (bar.eps * den)


def extremal_field(bar, alpha=(0, 0, 0)):
    """The unit-free field attaining sup |D^alpha u_bar(0)| / ||u||_{0,2}.

    By Cauchy-Schwarz the maximizer is the reflection of D^alpha rho_eps.
    """
    grid = bar.grid_
    rho_h = sp.transform(bar.kernel_.sample(grid, bar.eps), grid)
    kx, ky, kz = grid.k
    mult = (1j * kx) ** alpha[0] * (1j * ky) ** alpha[1] * (1j * kz) ** alpha[2]
    return sp.inverse_transform(np.conj(rho_h * mult), grid)


def derivative_bound_constant(bar, m):
    """Sharp constant of the sup-norm derivative bound for this bar operator.

    Equals max over |alpha| = m of eps^(3/2 + m) ||D^alpha rho_eps||_{0,2},
    the supremum of :func:`verify_derivative_bound` over scalar fields.
    """
    grid = bar.grid_
    best = 0.0
    for alpha in sp.multi_indices(m):
        best = max(best, verify_derivative_bound(extremal_field(bar, alpha), bar, m))
    return best
