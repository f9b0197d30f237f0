import numpy as np
import pytest
from sklearn.base import clone

from eddy_ns import spectral_field as sp
from eddy_ns.mollifier import (Mollifier, MollifierKernel, ResolutionError, check_resolution,
                               derivative_bound_constant, extremal_field, make_bar, mollify,
                               verify_approximation, verify_derivative_bound)
from eddy_ns.spectral_field import Grid3

G = Grid3(32)
BAR = make_bar(4 * G.h, G)


def noise(seed=0, ncomp=3, grid=G):
    rng = np.random.default_rng(seed)
    shape = (grid.N,) * 3 if ncomp == 1 else (ncomp,) + (grid.N,) * 3
    return rng.standard_normal(shape)


def test_kernel_profile():
    k = MollifierKernel()
    assert k.profile(np.array([0.0]))[0] == pytest.approx(np.exp(-1))
    assert np.all(k.profile(np.array([1.0, 1.5])) == 0)


def test_kernel_sample_nonnegative_even_unit_mass():
    rho = MollifierKernel().sample(G, 0.8)
    assert np.all(rho >= 0)
    assert rho.sum() * G.cell_volume == pytest.approx(1.0, rel=1e-14)
    # even about index 0 under periodic reflection
    refl = np.roll(rho[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))
    np.testing.assert_array_equal(rho, refl)
    # support is the eps ball (minimum image)
    d = np.minimum(np.arange(G.N), G.N - np.arange(G.N)) * G.h
    r = np.sqrt(d[:, None, None] ** 2 + d[None, :, None] ** 2 + d[None, None, :] ** 2)
    assert np.all(rho[r >= 0.8] == 0)


def test_multiplier_real_and_unit_at_zero():
    m = BAR.multiplier_
    assert m.dtype == np.float64
    assert m[0, 0, 0] == pytest.approx(1.0, rel=1e-14)
    assert np.all(np.abs(m) <= 1 + 1e-14)


def test_constant_preserved():
    c = np.full((3,) + (32,) * 3, 2.5)
    np.testing.assert_allclose(BAR.transform(c), c, rtol=1e-13)


def test_self_adjoint():
    u, v = noise(1), noise(2)
    lhs = sp.inner(BAR.transform(u), v, G)
    rhs = sp.inner(u, BAR.transform(v), G)
    assert lhs == pytest.approx(rhs, rel=1e-11)


def test_sup_and_energy_contraction():
    u = noise(3)
    ub = mollify(u, BAR)
    assert np.max(np.abs(ub)) <= np.max(np.abs(u))
    assert sp.kinetic_energy(ub, G) <= sp.kinetic_energy(u, G)


def test_commutes_with_derivatives_and_projection():
    u = noise(4)
    np.testing.assert_allclose(BAR.transform(sp.gradient(u, G)), sp.gradient(BAR.transform(u), G), atol=1e-10)
    np.testing.assert_allclose(BAR.transform(sp.leray_project(u, G)),
                               sp.leray_project(BAR.transform(u), G), atol=1e-12)


def test_resolution_guard():
    with pytest.raises(ResolutionError):
        make_bar(1.5 * G.h, G)
    with pytest.raises(ResolutionError):
        make_bar(G.L, G)
    assert check_resolution(2 * G.h, G) == 2 * G.h
    with pytest.raises(ValueError):
        check_resolution(-1.0, G)


def test_estimator_interface():
    est = Mollifier(eps=1.0, N=16)
    assert est.get_params() == {"eps": 1.0, "N": 16, "L": 2 * np.pi}
    c = clone(est).set_params(eps=1.2)
    assert c.eps == 1.2
    with pytest.raises(Exception):
        est.transform(np.zeros((16,) * 3))
    out = est.fit_transform(np.ones((16,) * 3))
    np.testing.assert_allclose(out, 1.0)


def test_zero_field_ratios():
    z = np.zeros((3,) + (32,) * 3)
    assert verify_derivative_bound(z, BAR, 1) == 0.0
    assert verify_approximation(z, BAR, 1) == 0.0
    with pytest.raises(ValueError):
        verify_approximation(z, BAR, 0)
    with pytest.raises(ValueError):
        verify_derivative_bound(z, BAR, 5)


@pytest.mark.parametrize("m", [0, 1, 2])
def test_noise_below_sharp_constant(m):
    C = derivative_bound_constant(BAR, m)
    for s in range(5):
        assert verify_derivative_bound(noise(s, ncomp=1), BAR, m) <= C * (1 + 1e-10)


def test_single_mode_derivative_ratio_closed_form():
    # u = sin(3 x1): bar u = m(k) u, so ||D bar u||_inf = m(k) |k| and ||u||_2 = sqrt(L^3 / 2)
    u = np.sin(3 * G.coords[0])
    mk = BAR.multiplier_[3, 0, 0]
    expected = mk * 3 * BAR.eps**2.5 / np.sqrt(G.L**3 / 2)
    assert verify_derivative_bound(u, BAR, 1) == pytest.approx(expected, rel=1e-10)
    assert verify_derivative_bound(u, BAR, 1) <= derivative_bound_constant(BAR, 1)


def test_extremal_field_attains_constant():
    f = extremal_field(BAR)
    # (bar f)(0) = ||rho||^2, attained at the grid point with index 0
    fb = BAR.transform(f)
    rho = BAR.kernel_.sample(G, BAR.eps)
    assert fb[0, 0, 0] == pytest.approx(np.sum(rho**2) * G.cell_volume, rel=1e-12)
    assert np.argmax(fb) == 0


def test_sharp_constant_invariant_under_eps():
    g = Grid3(64)
    cs = [derivative_bound_constant(make_bar(k * g.h, g), 1) for k in (4, 8, 16)]
    assert max(cs) / min(cs) - 1 < 0.05


def test_approximation_shrinks_with_eps():
    g = Grid3(32)
    x1, x2, x3 = g.coords
    u = np.stack([np.sin(x2), np.sin(x3), np.sin(x1)])
    errs = [sp.kinetic_energy(make_bar(k * g.h, g).transform(u) - u, g) for k in (8, 4, 2)]
    assert errs[0] > errs[1] > errs[2]
    # for a smooth field the error is O(eps^2), so the normalized ratio still shrinks
    r = [verify_approximation(u, make_bar(k * g.h, g), 1) for k in (8, 4)]
    assert r[1] < r[0]


def test_energy_never_increases_for_any_eps():
    u = noise(9)
    W = sp.kinetic_energy(u, G)
    for k in (2, 3, 6, 10):
        assert sp.kinetic_energy(make_bar(k * G.h, G).transform(u), G) <= W
