import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ifs_response import (
    InadmissiblePerturbation,
    OrderTooLarge,
    PowerMoment,
    ProbabilisticIFS,
    Ratio,
    RegimeViolation,
    SmoothBump,
    compare_response,
    exact_moment_derivative,
    faa_di_bruno_terms,
    response_check,
    response_finite_difference,
    response_formula,
)
from ifs_response.response import faa_di_bruno_combine, regime_issues, stencil
from ifs_response.sampler import MCEstimate

from partitions import block_profile_counts

BELL = [1, 2, 5, 15, 52, 203, 877, 4140]


def _est(mean, se):
    return MCEstimate(mean, se, 1000, 200, 0)


def test_first_order_terms():
    (term,) = faa_di_bruno_terms(1)
    assert term.multiplicities == (1,) and term.coefficient == 1 and term.total_blocks == 1


def test_third_order_terms():
    got = {t.multiplicities: t.coefficient for t in faa_di_bruno_terms(3)}
    assert got == {(3, 0, 0): 1, (1, 1, 0): 3, (0, 0, 1): 1}


@pytest.mark.parametrize("l", range(1, 9))
def test_terms_match_set_partitions(l):
    got = {t.multiplicities: t.coefficient for t in faa_di_bruno_terms(l)}
    assert got == dict(block_profile_counts(l))
    assert sum(got.values()) == BELL[l - 1]


def test_terms_sorted():
    for l in range(1, 9):
        mults = [t.multiplicities for t in faa_di_bruno_terms(l)]
        assert mults == sorted(mults)


@pytest.mark.parametrize("l", [0, 9])
def test_order_out_of_range(l):
    with pytest.raises(OrderTooLarge):
        faa_di_bruno_terms(l)


@pytest.mark.parametrize("l", [1, 2, 3, 4])
def test_chain_rule_on_deterministic_path(l):
    # g(eps) = 1 + 0.7 eps + 0.3 eps^2 - 0.2 eps^3 + 0.05 eps^4 stands in for X(eps)
    coeffs = [1.0, 0.7, 0.3, -0.2, 0.05]
    scale = 0.4
    inner = np.array([math.factorial(j) * coeffs[j] for j in range(1, l + 1)])
    phi = np.array([scale**k * math.exp(scale * coeffs[0]) for k in range(l + 1)])
    value = faa_di_bruno_combine(phi, inner, l)
    mpmath.mp.dps = 40
    g = lambda e: sum(c * e**k for k, c in enumerate(coeffs))
    ref = float(mpmath.diff(lambda e: mpmath.exp(scale * g(e)), 0, l))
    assert value == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("l, scheme", [(1, "central-2point"), (2, "central-2point"),
                                       (3, "central-2point"), (2, "central-4point"),
                                       (4, "central-4point")])
def test_stencil_exact_on_polynomials(l, scheme):
    weights = stencil(l, scheme)
    degree = l + (2 if scheme == "central-2point" else 4) - 1
    for p in range(degree + 1):
        total = sum(w * o**p for o, w in weights)
        assert total == pytest.approx(math.factorial(l) if p == l else 0.0, abs=1e-12)


def test_constant_on_support_gives_zero(ifs_05_12):
    bump = SmoothBump(-100.0, 1.0, 2.0)
    for l in (1, 2):
        est = response_formula(ifs_05_12, bump, l, replicas=2000)
        assert est.mean == 0.0 and est.std_error == 0.0


def test_identity_gives_mean_derivative(ifs_05_12):
    est = response_formula(ifs_05_12, PowerMoment(1), 1, replicas=200_000, master_seed=1)
    assert abs(est.mean - 200 / 9) <= 4 * est.std_error


def test_square_matches_moment_derivative(ifs_05_11):
    est = response_formula(ifs_05_11, PowerMoment(2), 1, replicas=200_000, master_seed=2)
    exact = exact_moment_derivative(ifs_05_11, 2, Ratio(0), 1)
    assert abs(est.mean - exact) <= 4 * est.std_error


def test_fd_of_identity(ifs_05_12):
    fd = response_finite_difference(ifs_05_12, PowerMoment(1), 1, steps=(1e-4,),
                                    replicas=200_000, master_seed=3)
    assert abs(fd.estimate.mean - 200 / 9) <= max(4 * fd.estimate.std_error, 1e-4)


def test_zero_step_rejected(ifs_05_12):
    with pytest.raises(InadmissiblePerturbation):
        response_finite_difference(ifs_05_12, PowerMoment(1), 1, steps=(0.0,), replicas=10)


def test_step_leaving_admissible_set(ifs_05_12):
    # (0.5 + 0.4) * 1.2 > 1: no stationary measure at the perturbed parameter
    with pytest.raises(InadmissiblePerturbation):
        response_finite_difference(ifs_05_12, PowerMoment(1), 1, steps=(0.4,), replicas=10,
                                   richardson=False)


def test_step_sign_symmetry(ifs_05_12):
    kw = dict(replicas=5000, master_seed=4, richardson=False)
    a = response_finite_difference(ifs_05_12, PowerMoment(2), 1, steps=(1e-3,), **kw)
    b = response_finite_difference(ifs_05_12, PowerMoment(2), 1, steps=(-1e-3,), **kw)
    assert a.estimate.mean == b.estimate.mean and a.estimate.std_error == b.estimate.std_error


def test_compare_examples():
    assert compare_response(_est(22.22, 0.02), _est(22.22, 0.02)).passed
    assert compare_response(_est(22.22, 0.02), _est(22.25, 0.02)).verdict == "pass"
    assert compare_response(_est(22.22, 0.01), _est(30.0, 0.01)).verdict == "fail"


def test_regime_issue_reported():
    ifs = ProbabilisticIFS.from_params([0.5, 1.5])
    assert regime_issues(ifs, PowerMoment(2), 1)
    with pytest.warns(RegimeViolation):
        response_formula(ifs, PowerMoment(2), 1, replicas=100)


def test_bump_first_order_gate(ifs_05_12):
    res = response_check(ifs_05_12, SmoothBump(4.0, 1.0, 3.0), 1, replicas=100_000,
                         master_seed=5)
    assert res.agreement.passed and res.regime_ok


@given(st.floats(-5, 5), st.floats(1e-3, 2.0), st.floats(1e-3, 2.0), st.floats(1e-3, 2.0))
def test_gate_is_symmetric(a, b, sa, sb):
    x = compare_response(_est(a, sa), _est(b, sb))
    y = compare_response(_est(b, sb), _est(a, sa))
    assert x.passed == y.passed and x.threshold == y.threshold
