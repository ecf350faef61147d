import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ifs_response import (
    MomentDiverges,
    ProbabilisticIFS,
    Ratio,
    Translation,
    binomial_identity,
    exact_moment,
    exact_moment_derivative,
    expected_formal_derivative,
    moment_table,
)
from ifs_response.errors import UnsupportedIFS
from ifs_response.moments import expected_weighted_product, finite_moment_orders


def test_first_moment(ifs_05_12):
    assert exact_moment(ifs_05_12, 1) == pytest.approx(20 / 3, rel=1e-14)


def test_second_moment(ifs_05_12):
    expected = (1 + 1.7 * 20 / 3) / 0.155
    assert exact_moment(ifs_05_12, 2) == pytest.approx(expected, rel=1e-14)
    assert exact_moment(ifs_05_12, 2) == pytest.approx(79.5699, abs=5e-5)


def test_second_moment_diverges():
    with pytest.raises(MomentDiverges):
        exact_moment(ProbabilisticIFS.from_params([0.5, 1.5]), 2)


def test_moment_derivative_examples(ifs_05_12):
    assert exact_moment_derivative(ifs_05_12, 1, Ratio(0), 1) == pytest.approx(200 / 9)
    assert exact_moment_derivative(ifs_05_12, 1, Translation(0), 1) == pytest.approx(10 / 3)
    for k in (1, 2):
        assert exact_moment_derivative(ifs_05_12, k, Ratio(0), 0) == exact_moment(ifs_05_12, k)


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("direction", [Ratio(0), Ratio(1), Translation(0), Translation(1)])
def test_moment_derivative_matches_difference(k, direction):
    ifs = ProbabilisticIFS.from_params([0.5, 1.1], [1.0, 1.3])
    h = 1e-6
    plus = ifs.replace(**_shift(ifs, direction, h))
    minus = ifs.replace(**_shift(ifs, direction, -h))
    fd = (exact_moment(plus, k) - exact_moment(minus, k)) / (2 * h)
    assert exact_moment_derivative(ifs, k, direction, 1) == pytest.approx(fd, rel=1e-6)


def _shift(ifs, direction, h):
    if direction.kind == "ratio":
        r = ifs.ratios.copy()
        r[direction.index] += h
        return {"ratios": r}
    d = ifs.translations.copy()
    d[direction.index] += h
    return {"translations": d}


def test_third_derivative_of_mean_closed_form(ifs_05_12):
    # E[X] = 1 / (1 - (l1 + l2) / 2): third l1-derivative is 6 (1/2)^3 / (1 - a)^4
    expected = 6 * 0.125 / 0.15**4
    assert exact_moment_derivative(ifs_05_12, 1, Ratio(0), 3) == pytest.approx(expected, rel=1e-12)


def test_moment_table_variance(ifs_05_12):
    table = moment_table(ifs_05_12, 2)
    assert table.values[1] >= table.values[0] ** 2


def test_finite_moment_orders(ifs_05_12):
    assert finite_moment_orders(ifs_05_12) == 3


def test_weighted_product_examples(ifs_05_12):
    assert expected_weighted_product(ifs_05_12, 5, 0) == pytest.approx(0.85**5)
    assert expected_weighted_product(ifs_05_12, 2, 1) == pytest.approx(0.425)
    assert expected_weighted_product(ifs_05_12, 2, 3) == 0.0


def test_weighted_product_by_enumeration(ifs_05_12):
    from itertools import product

    l = ifs_05_12.ratios
    for m in range(1, 7):
        for j in range(0, m + 1):
            total = 0.0
            for word in product((0, 1), repeat=m):
                lam = math.prod(l[s] for s in word)
                total += lam * math.comb(word.count(0), j) / 2**m
            assert expected_weighted_product(ifs_05_12, m, j) == pytest.approx(total, rel=1e-12)


def test_weighted_product_needs_two_uniform_maps():
    ifs = ProbabilisticIFS.from_params([0.5, 1.2, 0.3])
    with pytest.raises(UnsupportedIFS):
        expected_weighted_product(ifs, 2, 1)


def test_expected_formal_derivative(ifs_05_12):
    assert expected_formal_derivative(ifs_05_12, 1) == pytest.approx(200 / 9, rel=1e-14)
    assert expected_formal_derivative(ifs_05_12, 1) == pytest.approx(
        exact_moment_derivative(ifs_05_12, 1, Ratio(0), 1), rel=1e-13)


@pytest.mark.parametrize("j", [1, 2, 3, 4])
def test_expected_formal_derivative_is_derivative_of_mean(ifs_05_12, j):
    assert expected_formal_derivative(ifs_05_12, j) == pytest.approx(
        exact_moment_derivative(ifs_05_12, 1, Ratio(0), j), rel=1e-12)


def test_expected_formal_derivative_series(ifs_05_12):
    l1 = ifs_05_12.ratios[0]
    for j in (1, 2, 3):
        series = math.fsum(
            math.factorial(j) / l1**j * expected_weighted_product(ifs_05_12, m, j)
            for m in range(j, 800))
        assert expected_formal_derivative(ifs_05_12, j) == pytest.approx(series, rel=1e-12)


def test_binomial_identity_examples():
    lhs, rhs = binomial_identity(2, 1, 0.4, 1.3)
    assert lhs == pytest.approx(2 * 1.3 + 2 * 0.4) and rhs == pytest.approx(2 * 1.7)
    lhs, rhs = binomial_identity(9, 0, 0.4, 1.3)
    assert lhs == pytest.approx(1.7**9, rel=1e-14) and rhs == pytest.approx(1.7**9, rel=1e-14)
    lhs, rhs = binomial_identity(20, 7, 0.3, 1.7)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_binomial_identity_bounds():
    with pytest.raises(ValueError):
        binomial_identity(61, 0, 1.0, 1.0)


@given(st.floats(1e-3, 5.0), st.floats(1e-3, 5.0), st.integers(0, 40), st.data())
def test_binomial_identity_property(l1, l2, j, data):
    t = data.draw(st.integers(0, j))
    lhs, rhs = binomial_identity(j, t, l1, l2)
    assert lhs == pytest.approx(rhs, rel=1e-12)


@given(st.floats(0.05, 0.7), st.floats(1.01, 1.4), st.integers(1, 4))
def test_moment_variance_property(l1, l2, k):
    ifs = ProbabilisticIFS.from_params([l1, l2])
    if finite_moment_orders(ifs, 2 * k) < 2 * k:
        return
    assert exact_moment(ifs, 2 * k) >= exact_moment(ifs, k) ** 2 * (1 - 1e-12)


def test_expected_formal_derivative_diverges_when_mean_ratio_reaches_one():
    with pytest.raises(MomentDiverges):
        expected_formal_derivative(ProbabilisticIFS.from_params([0.1, 2.0]), 3)
