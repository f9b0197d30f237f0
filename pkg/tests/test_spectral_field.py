import struct

import numpy as np
import pytest

from eddy_ns import spectral_field as sp
from eddy_ns.spectral_field import Grid3

G16 = Grid3(16)


def random_field(grid, ncomp=3, seed=0):
    rng = np.random.default_rng(seed)
    shape = (grid.N,) * 3 if ncomp == 1 else (ncomp,) + (grid.N,) * 3
    return rng.standard_normal(shape)


def test_grid_validation():
    for bad in (3, 12, 2, 0):
        with pytest.raises(ValueError):
            Grid3(bad)
    with pytest.raises(ValueError):
        Grid3(8, L=-1.0)


def test_grid_is_centred():
    g = Grid3(8, L=4.0)
    assert g.x1d[0] == -2.0 and g.x1d[-1] == pytest.approx(1.5)
    assert g.h == 0.5 and g.cell_volume == 0.125


def test_round_trip():
    u = random_field(G16)
    np.testing.assert_allclose(sp.inverse_transform(sp.transform(u, G16), G16), u, atol=1e-13)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        sp.transform(np.zeros((8, 8, 8)), G16)


def test_parseval_with_hermitian_weights():
    u = random_field(G16, seed=1)
    assert sp.spectral_norm2(sp.transform(u, G16), G16) == pytest.approx(sp.kinetic_energy(u, G16), rel=1e-12)
    v = random_field(G16, seed=2)
    assert sp.spectral_inner(sp.transform(u, G16), sp.transform(v, G16), G16) == pytest.approx(
        sp.inner(u, v, G16), rel=1e-10)


def test_gradient_of_single_mode():
    g = Grid3(16, L=2 * np.pi)
    x1, x2, _ = g.coords
    f = np.sin(3 * x1) * np.cos(2 * x2)
    grad = sp.gradient(f, g)
    np.testing.assert_allclose(grad[0], 3 * np.cos(3 * x1) * np.cos(2 * x2), atol=1e-12)
    np.testing.assert_allclose(grad[1], -2 * np.sin(3 * x1) * np.sin(2 * x2), atol=1e-12)
    np.testing.assert_allclose(grad[2], 0, atol=1e-12)
    np.testing.assert_allclose(sp.laplacian(f, g), -13 * f, atol=1e-11)


def test_tensor_gradient_convention():
    g = Grid3(8)
    x1 = g.coords[0]
    u = np.stack([np.zeros_like(x1), np.sin(x1), np.zeros_like(x1)])
    T = sp.gradient(u, g)
    # (grad u)[i, j] = d_j u_i
    np.testing.assert_allclose(T[1, 0], np.cos(x1), atol=1e-12)
    np.testing.assert_allclose(T[0, 1], 0, atol=1e-12)


def test_div_curl_and_curl_grad_vanish():
    u = random_field(G16, seed=3)
    assert np.max(np.abs(sp.divergence(sp.curl(u, G16), G16))) < 1e-10
    f = random_field(G16, ncomp=1, seed=4)
    assert np.max(np.abs(sp.curl(sp.gradient(f, G16), G16))) < 1e-10


def test_leray_projection_properties():
    u = random_field(G16, seed=5)
    Pu = sp.leray_project(u, G16)
    np.testing.assert_allclose(sp.leray_project(Pu, G16), Pu, atol=1e-12)
    assert np.max(np.abs(sp.divergence(Pu, G16))) < 1e-10
    # orthogonal complement: P u is orthogonal to u - P u
    assert abs(sp.inner(Pu, u - Pu, G16)) < 1e-9 * sp.kinetic_energy(u, G16)
    f = random_field(G16, ncomp=1, seed=6)
    assert np.max(np.abs(sp.leray_project(sp.gradient(f, G16), G16))) < 1e-10


def test_leray_keeps_mean():
    u = np.ones((3,) + (8,) * 3)
    np.testing.assert_allclose(sp.leray_project(u, Grid3(8)), u)


def test_dealias_mask_and_product():
    g = Grid3(16)
    mask = g.dealias_mask
    assert mask[5, 0, 0] and not mask[6, 0, 0]
    assert mask[0, 0, 5] and not mask[0, 0, 6]
    uh = sp.transform(random_field(g, ncomp=1), g)
    once = sp.dealias(uh, g)
    np.testing.assert_array_equal(sp.dealias(once, g), once)
    # a product of two retained modes aliases back only past the cutoff
    x1 = g.coords[0]
    prod = np.cos(5 * x1) * np.cos(5 * x1)  # = 1/2 + cos(10 x)/2
    kept = sp.inverse_transform(sp.dealias(sp.transform(prod, g), g), g)
    np.testing.assert_allclose(kept, 0.5, atol=1e-13)


def test_single_mode_energy_and_norms():
    g = Grid3(16, L=2 * np.pi)
    a = 0.7
    x3 = g.coords[2]
    u = np.stack([a * np.sin(x3), np.zeros_like(x3), np.zeros_like(x3)])
    L = g.L
    assert sp.kinetic_energy(u, g) == pytest.approx(a**2 * L**3 / 2, rel=1e-12)
    assert sp.gradient_norm(u, g) == pytest.approx(np.sqrt(a**2 * L**3 / 2), rel=1e-12)
    assert sp.sup_norm(u) == pytest.approx(a, rel=1e-12)
    h2, hinf = sp.norms(u, g, 2)
    assert h2 == pytest.approx(3 * np.sqrt(a**2 * L**3 / 2), rel=1e-12)
    assert hinf == pytest.approx(3 * a, rel=1e-12)
    assert sp.seminorm_sup(u, g, 3) == pytest.approx(a, rel=1e-12)


def test_derivative_magnitude_takes_max_over_multi_indices():
    g = Grid3(16)
    x1, x2, _ = g.coords
    f = np.sin(2 * x1) + np.sin(x2)
    # d11 f = -4 sin 2x1, d22 f = -sin x2, d12 f = 0
    assert sp.seminorm_sup(f, g, 2) == pytest.approx(4, rel=1e-12)
    assert len(sp.multi_indices(2)) == 6


def test_eddy_dissipation_uniform_A():
    g = Grid3(16)
    u = sp.leray_project(random_field(g, seed=7), g)
    A = np.full((16,) * 3, 0.25)
    assert sp.eddy_dissipation(u, A, g) == pytest.approx(0.5 * sp.gradient_norm(u, g), rel=1e-12)
    assert sp.eddy_dissipation(u, np.zeros_like(A), g) == 0.0


def test_tail_energy_cases():
    g = Grid3(16, L=2 * np.pi)
    ones = np.ones((3,) + (16,) * 3)
    outside = np.count_nonzero(g.radius >= 1.0)
    assert sp.tail_energy(ones, 1.0, g) == pytest.approx(0.5 * 3 * outside * g.cell_volume)
    zero_out = np.where(g.radius < 1.0, 1.0, 0.0) * ones
    assert sp.tail_energy(zero_out, 1.0, g) == 0.0
    # soft profile lies between the hard tails at its two radii
    u = random_field(g, seed=8)
    soft = sp.tail_energy(u, 2.0, g, R_inner=1.0)
    assert sp.tail_energy(u, 2.0, g) <= soft <= sp.tail_energy(u, 1.0, g)
    with pytest.raises(ValueError):
        sp.tail_energy(u, g.L / 2, g)
    with pytest.raises(ValueError):
        sp.tail_energy(u, 2.0, g, R_inner=3.0)


def test_snapshot_round_trip_and_layout(tmp_path):
    g = Grid3(4, L=3.0)
    u = random_field(g, seed=9)
    path = sp.write_field(tmp_path / "u.bin", u, g)
    raw = path.read_bytes()
    N, L, ncomp = struct.unpack_from("<qdq", raw)
    assert (N, L, ncomp) == (4, 3.0, 3)
    data = np.frombuffer(raw, dtype="<f8", offset=24)
    assert data.size == 3 * 64
    # x1 varies fastest: consecutive values step along the first spatial axis
    np.testing.assert_array_equal(data[:4], u[0, :, 0, 0])
    np.testing.assert_array_equal(data[4:8], u[0, :, 1, 0])
    back, g2 = sp.read_field(path)
    np.testing.assert_array_equal(back, u)
    assert g2 == g


def test_snapshot_scalar_and_truncation(tmp_path):
    g = Grid3(4)
    p = random_field(g, ncomp=1)
    path = sp.write_field(tmp_path / "p.bin", p, g)
    back, _ = sp.read_field(path)
    assert back.shape == (4, 4, 4)
    np.testing.assert_array_equal(back, p)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        sp.read_field(path)


def test_diagnostics_bundle():
    g = Grid3(8)
    u = random_field(g, seed=10)
    d = sp.diagnostics(u, None, g)
    assert d.W == pytest.approx(sp.kinetic_energy(u, g))
    assert d.K_Aeps == 0.0 and d.N_A == 0.0 and np.isnan(d.tail)
