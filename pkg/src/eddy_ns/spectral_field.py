"""Periodic-grid field algebra.

Fields are plain numpy arrays: scalars (N, N, N), vectors (3, N, N, N),
tensors (3, 3, N, N, N), with axis order (x1, x2, x3) and
x_n = -L/2 + n h so the box is centred on the origin.  Spectral arrays
are ``numpy.fft.rfftn`` of the last three axes (unnormalized forward
transform), so Sum |u|^2 h^3 = (h^3 / N^3) Sum' |u_hat|^2 where Sum'
counts the half-spectrum with Hermitian multiplicity.

Tensor convention: (grad u)[i, j] = d_j u_i and (div V)_i = d_j V[i, j].
"""
from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.fft import irfftn, rfftn

from ._validation import check_positive

_AXES = (-3, -2, -1)


@dataclass(frozen=True)
class Grid3:
    """Cubic periodic box of side L with N points per axis."""

    N: int
    L: float = 2 * np.pi

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 4, got {self.N}")
        check_positive(self.L, "L")

    @property
    def h(self):
        return self.L / self.N

    @property
    def cell_volume(self):
        return self.h**3

    @property
    def volume(self):
        return self.L**3

    @property
    def spectral_shape(self):
        return (self.N, self.N, self.N // 2 + 1)

    @cached_property
    def x1d(self):
        return -self.L / 2 + self.h * np.arange(self.N)

    @cached_property
    def coords(self):
        """Coordinate arrays (3, N, N, N)."""
        return np.stack(np.meshgrid(self.x1d, self.x1d, self.x1d, indexing="ij"))

    @cached_property
    def radius(self):
        return np.sqrt(np.sum(self.coords**2, axis=0))

    @cached_property
    def index(self):
        """Integer wavenumber indices broadcastable to the spectral shape."""
        n = np.fft.fftfreq(self.N, 1.0 / self.N)
        nz = np.fft.rfftfreq(self.N, 1.0 / self.N)
        return n[:, None, None], n[None, :, None], nz[None, None, :]

    @cached_property
    def k(self):
        """Derivative wavenumbers (3 arrays); the Nyquist mode is zeroed."""
        out = []
        for n in self.index:
            kk = (2 * np.pi / self.L) * n
            kk = np.where(np.abs(n) == self.N // 2, 0.0, kk)
            out.append(kk)
        return tuple(out)

    @cached_property
    def k2(self):
        kx, ky, kz = self.k
        return kx**2 + ky**2 + kz**2

    @cached_property
    def kvec(self):
        return np.stack(np.broadcast_arrays(*self.k))

    @cached_property
    def hermitian_weight(self):
        """Multiplicity of each rfft mode in the full spectrum."""
        w = np.full(self.N // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w[None, None, :]

    @cached_property
    def dealias_mask(self):
        """2/3 rule: keep modes with every |n_i| <= N/3."""
        cut = self.N / 3.0
        nx, ny, nz = self.index
        return (np.abs(nx) <= cut) & (np.abs(ny) <= cut) & (np.abs(nz) <= cut)


# ---------------------------------------------------------------------------
# transforms


def transform(u, grid=None):
    """Forward rfft over the three spatial axes."""
    u = np.asarray(u, dtype=float)
    if grid is not None and u.shape[-3:] != (grid.N,) * 3:
        raise ValueError(f"field shape {u.shape[-3:]} does not match grid N={grid.N}")
    return rfftn(u, axes=_AXES, workers=-1)


def inverse_transform(uh, grid):
    if uh.shape[-3:] != grid.spectral_shape:
        raise ValueError(f"spectral shape {uh.shape[-3:]} does not match grid N={grid.N}")
    return irfftn(uh, s=(grid.N,) * 3, axes=_AXES, workers=-1)


def spectral_inner(ah, bh, grid):
    """<a, b>_{L^2} from spectra, summed over leading component axes."""
    w = grid.hermitian_weight
    s = np.sum(w * np.real(ah * np.conj(bh)))
    return float(s) * grid.cell_volume / grid.N**3


def spectral_norm2(uh, grid):
    """||u||_{0,2}^2 from the spectrum (Parseval)."""
    return spectral_inner(uh, uh, grid)


def inner(a, b, grid):
    return float(np.sum(a * b)) * grid.cell_volume


# ---------------------------------------------------------------------------
# differential operators


def gradient(f, grid):
    """Spectral gradient: scalar -> vector, vector -> tensor [i, j] = d_j f_i."""
    fh = transform(f, grid)
    kv = grid.kvec
    gh = 1j * fh[..., None, :, :, :] * kv
    return inverse_transform(gh, grid)


def divergence(V, grid):
    """Spectral divergence: vector -> scalar, tensor -> vector (contract last index)."""
    Vh = transform(V, grid)
    if Vh.shape[-4] != 3:
        raise ValueError("last component axis must have size 3")
    dh = np.sum(1j * grid.kvec * Vh, axis=-4)
    return inverse_transform(dh, grid)


def laplacian(f, grid):
    return inverse_transform(-grid.k2 * transform(f, grid), grid)


def curl(u, grid):
    uh = transform(u, grid)
    kx, ky, kz = grid.k
    ch = np.stack([
        1j * (ky * uh[2] - kz * uh[1]),
        1j * (kz * uh[0] - kx * uh[2]),
        1j * (kx * uh[1] - ky * uh[0]),
    ])
    return inverse_transform(ch, grid)


def leray_multiplier_apply(uh, grid):
    """Apply I - k k^T / |k|^2 to a vector spectrum; the zero mode is untouched."""
    kv = grid.kvec
    k2 = grid.k2
    safe = np.where(k2 > 0, k2, 1.0)
    kdotu = np.sum(kv * uh, axis=0)
    return uh - kv * np.where(k2 > 0, kdotu / safe, 0.0)


def leray_project(u, grid):
    return inverse_transform(leray_multiplier_apply(transform(u, grid), grid), grid)


def dealias(uh, grid):
    """Zero every mode with some |n_i| > N/3 (spectral input and output)."""
    return uh * grid.dealias_mask


# ---------------------------------------------------------------------------
# norms and diagnostics


def multi_indices(m):
    return [a for a in itertools.product(range(m + 1), repeat=3) if sum(a) == m]


def derivative_magnitude(u, grid, m, uh=None):
    """Pointwise |D^m u| = max over |alpha| = m of the Euclidean norm of D^alpha u."""
    uh = transform(u, grid) if uh is None else uh
    if m == 0:
        v = inverse_transform(uh, grid)
        return np.abs(v) if v.ndim == 3 else np.sqrt(np.sum(v**2, axis=0))
    kx, ky, kz = grid.k
    best = None
    for a in multi_indices(m):
        mult = (1j * kx) ** a[0] * (1j * ky) ** a[1] * (1j * kz) ** a[2]
        d = inverse_transform(uh * mult, grid)
        mag = np.abs(d) if d.ndim == 3 else np.sqrt(np.sum(d**2, axis=0))
        best = mag if best is None else np.maximum(best, mag)
    return best


def norms(u, grid, m):
    """Return (||u||_{m,2}, ||u||_{m,inf}) with ||w||_{m,p} = sum_j ||D^j w||_p."""
    uh = transform(u, grid)
    h2 = 0.0
    hinf = 0.0
    for j in range(m + 1):
        mag = derivative_magnitude(u, grid, j, uh)
        h2 += np.sqrt(np.sum(mag**2) * grid.cell_volume)
        hinf += float(np.max(mag))
    return float(h2), hinf


def seminorm_sup(u, grid, m):
    """V_m = ||D^m u||_{0,inf}."""
    return float(np.max(derivative_magnitude(u, grid, m)))


def kinetic_energy(u, grid):
    """W = ||u||_{0,2}^2."""
    return float(np.sum(u**2)) * grid.cell_volume


def gradient_norm(u, grid):
    """J = ||grad u||_{0,2} with the Frobenius norm of grad u."""
    g = gradient(u, grid)
    return np.sqrt(float(np.sum(g**2)) * grid.cell_volume)


def sup_norm(u):
    u = np.asarray(u)
    return float(np.max(np.sqrt(np.sum(u**2, axis=0)))) if u.ndim == 4 else float(np.max(np.abs(u)))


def eddy_dissipation(u, A, grid, bar=None):
    """K_{A,eps} = (int A |grad u_bar|^2)^{1/2}; K_A when bar is None."""
    ub = u if bar is None else bar.transform(u)
    g = gradient(ub, grid)
    val = float(np.sum(A * np.sum(g**2, axis=(0, 1)))) * grid.cell_volume
    return np.sqrt(max(val, 0.0))


@dataclass(frozen=True)
class Diagnostics:
    W: float
    J: float
    V: float
    K_Aeps: float
    N_A: float
    tail: float = float("nan")


def diagnostics(u, A, grid, bar=None, tail_radius=None):
    A = np.zeros((grid.N,) * 3) if A is None else A
    tail = tail_energy(u, tail_radius, grid) if tail_radius is not None else float("nan")
    return Diagnostics(
        W=kinetic_energy(u, grid),
        J=gradient_norm(u, grid),
        V=sup_norm(u),
        K_Aeps=eddy_dissipation(u, A, grid, bar),
        N_A=float(np.max(np.abs(A))),
        tail=tail,
    )


def tail_energy(u, R, grid, R_inner=None):
    """1/2 int_{|x| >= R} |u|^2; with R_inner the piecewise-linear cutoff profile.

    The profile is 0 inside R_inner, 1 outside R and linear in |x| between.
    """
    if R >= grid.L / 2:
        raise ValueError(f"tail radius {R} must be < L/2 = {grid.L / 2}")
    r = grid.radius
    if R_inner is None:
        weight = (r >= R).astype(float)
    else:
        if not 0 < R_inner < R:
            raise ValueError("need 0 < R_inner < R")
        weight = np.clip((r - R_inner) / (R - R_inner), 0.0, 1.0)
    e = np.sum(u**2, axis=0) if u.ndim == 4 else u**2
    return 0.5 * float(np.sum(weight * e)) * grid.cell_volume


# ---------------------------------------------------------------------------
# flat binary snapshots

# header: int64 N, float64 L, int64 component count; little-endian float64 data, x fastest
_HEADER = struct.Struct("<qdq")


def write_field(path, u, grid):
    u = np.asarray(u, dtype="<f8")
    ncomp = 1 if u.ndim == 3 else u.shape[0]
    data = u.reshape((ncomp,) + (grid.N,) * 3)
    # array axes are (x1, x2, x3); x-fastest ordering means x1 varies fastest
    data = np.ascontiguousarray(data.transpose(0, 3, 2, 1))
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(grid.N, grid.L, ncomp))
        fh.write(data.astype("<f8").tobytes())
    return path


def read_field(path):
    """Return (field, grid); scalars come back as (N, N, N)."""
    raw = Path(path).read_bytes()
    N, L, ncomp = _HEADER.unpack_from(raw)
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != ncomp * N**3:
        raise ValueError("truncated field file")
    u = data.reshape(ncomp, N, N, N).transpose(0, 3, 2, 1).copy()
    return (u[0] if ncomp == 1 else u), Grid3(int(N), float(L))
