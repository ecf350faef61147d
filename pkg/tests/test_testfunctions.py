import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from ifs_response import AffinePullback, CappedPolynomial, PowerMoment, SmoothBump
from ifs_response import jets
from ifs_response.testfunctions import (
    Plateau,
    PlateauFunction,
    WitnessBacked,
    merge_plateaus,
    ramp_integral,
    ramp_jet,
)


def _fd(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)


def test_jet_exp_and_div():
    x = np.array([0.3, -1.2])
    v = jets.variable(x, 4)
    e = jets.to_derivatives(jets.exp(v))
    assert np.allclose(e, np.exp(x)[None, :])
    inv = jets.to_derivatives(jets.reciprocal(v))
    for k in range(5):
        expected = (-1) ** k * np.prod(np.arange(1, k + 1)) / x ** (k + 1)
        assert np.allclose(inv[k], expected)


def test_jet_scalar_product():
    a = jets.variable(2.0, 3)
    sq = jets.to_derivatives(jets.mul(a, a))
    assert list(sq) == [4.0, 4.0, 2.0, 0.0]


def test_ramp_values_and_symmetry():
    t = np.linspace(-0.5, 1.5, 401)
    psi = ramp_jet(t, 0)[0]
    assert np.all((psi >= 0) & (psi <= 1))
    assert np.all(psi[t <= 0] == 0) and np.all(psi[t >= 1] == 1)
    assert np.allclose(psi + ramp_jet(1 - t, 0)[0], 1.0)
    assert ramp_integral(1.0) == pytest.approx(0.5, abs=1e-13)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_ramp_derivatives_match_difference(k):
    t = np.linspace(0.05, 0.95, 19)
    d = ramp_jet(t, k)
    assert np.allclose(d[k], _fd(lambda s: ramp_jet(s, k - 1)[k - 1], t), rtol=1e-5, atol=1e-7)


def test_bump_support_and_plateau():
    bump = SmoothBump(5.0, 1.0, 2.0)
    x = np.array([5.0, 4.0, 6.0, 2.9, 7.1, 2.0, 8.0])
    vals = bump(x)
    assert list(vals[:3]) == [1.0, 1.0, 1.0]
    assert list(vals[3:]) == [0.0, 0.0, 0.0, 0.0]


def test_bump_derivatives_match_difference():
    bump = SmoothBump(5.0, 1.0, 2.0)
    x = np.linspace(3.05, 6.95, 41)
    d = bump.derivatives(x, 3)
    for k in (1, 2, 3):
        assert np.allclose(d[k], _fd(lambda s: bump.derivatives(s, k - 1)[k - 1], x),
                           rtol=1e-4, atol=1e-6)


def test_plateau_antiderivative_matches_quadrature():
    f = PlateauFunction([Plateau.around(2.0, 0.3, 0.7), Plateau.around(5.0, 0.2, 0.5)])
    for x in (1.0, 1.8, 2.5, 3.0, 4.7, 6.0):
        ref, _ = integrate.quad(lambda s: float(f(np.array([s]))[0]), 0.0, x, limit=200,
                                points=[1.3, 1.7, 2.3, 2.7, 4.5, 4.8, 5.2, 5.5])
        assert f.antiderivative(np.array([x]))[0] == pytest.approx(ref, abs=1e-9)
    assert f.l1_norm == pytest.approx(f.antiderivative(np.array([10.0]))[0], rel=1e-12)


def test_merge_overlapping_pieces():
    merged = merge_plateaus([Plateau.around(1.0, 0.2, 0.5), Plateau.around(1.6, 0.2, 0.5),
                             Plateau.around(5.0, 0.2, 0.5)])
    assert len(merged) == 2
    assert merged[0].lo_outer == pytest.approx(0.5) and merged[0].hi_outer == pytest.approx(2.1)


def test_witness_backed_derivatives():
    plateau = PlateauFunction([Plateau.around(3.0, 0.5, 1.0)])
    phi = WitnessBacked(plateau)
    x = np.linspace(1.0, 5.0, 9)
    d = phi.derivatives(x, 2)
    assert np.allclose(d[0], plateau.antiderivative(x))
    assert np.allclose(d[1], plateau(x))
    assert np.allclose(d[2], plateau.derivatives(x, 1)[1])


def test_power_moment_derivatives():
    phi = PowerMoment(1.5)
    x = np.array([1.0, 2.0, 7.0])
    d = phi.derivatives(x, 3)
    assert np.allclose(d[1], 1.5 * x**0.5)
    assert np.allclose(d[3], 1.5 * 0.5 * -0.5 * x**-1.5)
    assert np.all(PowerMoment(2).derivatives(x, 4)[3:] == 0)


def test_capped_polynomial():
    phi = CappedPolynomial(2, 10.0)
    x = np.array([1.0, 5.0, 10.0])
    assert np.allclose(phi(x), x**2)
    far = np.linspace(25, 1e4, 50)
    d2 = phi.derivatives(far, 2)[2]
    assert np.all(np.abs(d2) <= 2 + 1e-12)
    xs = np.linspace(5, 30, 51)
    d = phi.derivatives(xs, 2)
    assert np.allclose(d[1], _fd(lambda s: phi.derivatives(s, 0)[0], xs), rtol=1e-6)
    assert np.allclose(d[2], _fd(lambda s: phi.derivatives(s, 1)[1], xs), rtol=1e-5, atol=1e-8)


def test_capped_bounded_top_derivative():
    phi = CappedPolynomial(3, 4.0)
    x = np.linspace(0, 100, 2001)
    assert np.max(np.abs(phi.derivatives(x, 3)[3])) <= 6 + 1e-12


def test_affine_pullback():
    base = PowerMoment(2)
    phi = AffinePullback(base, 2.0, 1.0)
    x = np.array([1.0, 3.0])
    d = phi.derivatives(x, 2)
    assert np.allclose(d[0], (2 * x + 1) ** 2)
    assert np.allclose(d[1], 4 * (2 * x + 1))
    assert np.allclose(d[2], 8.0)


pieces = st.lists(
    st.tuples(st.floats(0, 100), st.floats(0.01, 2.0), st.floats(1.05, 3.0)),
    min_size=1, max_size=8)


@given(pieces)
def test_plateau_function_invariants(spec):
    f = PlateauFunction([Plateau.around(c, r, r * k) for c, r, k in spec])
    lo, hi = f.support
    x = np.linspace(lo - 5, hi + 5, 3001)
    vals = f(x)
    assert np.all(vals >= 0) and np.all(vals <= 1)
    for c, r, _ in spec:
        assert f(np.array([c, c - r, c + r])).tolist() == [1.0, 1.0, 1.0]
    assert np.all(f(np.array([lo - 1e-9, hi + 1e-9])) == 0)
    anti = f.antiderivative(x)
    assert np.all(np.diff(anti) >= -1e-12)
    assert f.l1_norm <= sum(2 * r * k for _, r, k in spec) + 1e-9
