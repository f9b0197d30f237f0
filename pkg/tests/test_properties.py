import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eddy_ns import spectral_field as sp
from eddy_ns.mollifier import make_bar
from eddy_ns.volterra import (GridFunction, Nonlinearity, VolterraKernel, VolterraProblem, apply_S,
                              picard_from)

M = 48
KERNELS = [VolterraKernel.constant(1.0), VolterraKernel.inverse_sqrt(1.0, 1.0)]
G8 = sp.Grid3(8)
BAR8 = make_bar(2 * G8.h, G8)
finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
fields8 = arrays(np.float64, (3, 8, 8, 8), elements=finite)
scalars8 = arrays(np.float64, (8, 8, 8), elements=finite)
grid_vals = arrays(np.float64, M + 1, elements=st.floats(-3, 3, allow_nan=False))
quiet = settings(max_examples=40, deadline=None)


def problem(kernel_idx, a=0.5, P=None):
    return VolterraProblem(a, 1.0, KERNELS[kernel_idx], P or Nonlinearity.linear(0.0, 0.7), M)


@quiet
@given(st.integers(0, 1), grid_vals, grid_vals, st.floats(0, 2))
def test_S_is_monotone(k, f, d, a):
    # f <= g pointwise implies S[f] <= S[g] for nondecreasing P
    prob = problem(k, a, Nonlinearity.clipped_quadratic(1.0, 0.5, 3.0))
    t = prob.grid
    g = f + np.abs(d)
    sf = apply_S(prob, GridFunction(t, f)).values
    sg = apply_S(prob, GridFunction(t, g)).values
    assert np.all(sf <= sg + 1e-12 * max(1.0, np.max(np.abs(sg))))


@quiet
@given(st.integers(0, 1), st.floats(0.05, 1.0), st.floats(0.5, 3.0))
def test_picard_bracketing(k, a, top):
    # iterating up from 0 and down from a constant supersolution brackets one solution;
    # with P(z) = 0.3 z and int_0^1 K <= 2, any constant G >= 2.5 a is a supersolution
    prob = problem(k, a, Nonlinearity.linear(0.0, 0.3))
    lo = picard_from(prob, prob.constant(0.0), side="sub").solution.values
    hi = picard_from(prob, prob.constant(2.5 * a + top), side="super").solution.values
    assert np.all(lo <= hi + 1e-10)
    np.testing.assert_allclose(lo, hi, atol=1e-9)


@quiet
@given(st.integers(0, 1), grid_vals)
def test_S_of_zero_source_is_offset(k, f):
    prob = problem(k, 0.3, Nonlinearity.linear(0.0, 0.0))
    np.testing.assert_allclose(apply_S(prob, GridFunction(prob.grid, f)).values, 0.3)


@quiet
@given(fields8)
def test_mollifier_sup_contraction(u):
    ub = BAR8.transform(u)
    assert np.max(np.abs(ub)) <= np.max(np.abs(u)) * (1 + 1e-12) + 1e-14


@quiet
@given(scalars8, scalars8)
def test_mollifier_self_adjoint(u, v):
    lhs = sp.inner(BAR8.transform(u), v, G8)
    rhs = sp.inner(u, BAR8.transform(v), G8)
    scale = 1.0 + np.sqrt(sp.inner(u, u, G8) * sp.inner(v, v, G8))
    assert abs(lhs - rhs) <= 1e-12 * scale


@quiet
@given(fields8)
def test_mollifier_energy_contraction(u):
    assert sp.kinetic_energy(BAR8.transform(u), G8) <= sp.kinetic_energy(u, G8) * (1 + 1e-12) + 1e-14


@quiet
@given(fields8)
def test_leray_idempotent_and_solenoidal(u):
    Pu = sp.leray_project(u, G8)
    scale = 1.0 + np.max(np.abs(u))
    assert np.max(np.abs(sp.leray_project(Pu, G8) - Pu)) <= 1e-12 * scale
    assert np.max(np.abs(sp.divergence(Pu, G8))) <= 1e-11 * scale
    assert sp.kinetic_energy(Pu, G8) <= sp.kinetic_energy(u, G8) * (1 + 1e-12) + 1e-14


@quiet
@given(scalars8)
def test_parseval(u):
    W = sp.kinetic_energy(u, G8)
    assert abs(sp.spectral_norm2(sp.transform(u, G8), G8) - W) <= 1e-12 * (1 + W)
