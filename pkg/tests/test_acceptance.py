"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import random
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from ifs_response import (
    AffinePullback,
    CappedPolynomial,
    PowerMoment,
    ProbabilisticIFS,
    Ratio,
    SmoothBump,
    binomial_identity,
    conjugate_to_unit_translations,
    detect_regime,
    divergence_report,
    exact_moment,
    exact_moment_derivative,
    faa_di_bruno_terms,
    derivative_floor_constant,
    median_r,
    response_check,
    response_formula,
    tail_exponent,
)
from ifs_response.cli import run
from ifs_response.sampler import (
    _moments,
    converged_truncation,
    map_chunks,
    summarize,
    tilted_tail,
)
from ifs_response.witness import find_M, first_feasible_N

from acceptance_log import record
from partitions import set_partitions

Z = 4.0
BASE = ProbabilisticIFS.from_params([0.5, 1.2])
# second moments of the response integrands need sum p_i ratio_i^3 < 1, which
# (0.5, 1.2) misses; (0.5, 1.1) has sum p_i ratio_i^4 = 0.76
FINITE_VARIANCE = ProbabilisticIFS.from_params([0.5, 1.1])
REGIME_A = ProbabilisticIFS.from_params([0.1, 2.0])
REGIME_B = ProbabilisticIFS.from_params([1 / 11, 10.0])


def _gate(ifs, phi, l, step, replicas, seed):
    res = response_check(ifs, phi, l, step=step, replicas=replicas, master_seed=seed, z=Z)
    return res, (f"l={l} formula {res.formula_value.mean:.6g}±{res.formula_value.std_error:.2g}"
                 f" fd {res.fd_value.estimate.mean:.6g}±{res.fd_value.estimate.std_error:.2g}")


def test_criterion_01_moment_oracle():
    start = time.perf_counter()

    def fn(batch):
        return _moments(batch.x), _moments(batch.x**2)

    parts = map_chunks(BASE, fn, 200, 10**6, 101)
    m1, se1, _ = summarize([p[0] for p in parts])
    m2, se2, _ = summarize([p[1] for p in parts])
    elapsed = time.perf_counter() - start
    e1, e2 = exact_moment(BASE, 1), exact_moment(BASE, 2)
    ok = abs(m1 - 20 / 3) <= Z * se1 and abs(m2 - e2) <= Z * se2 and elapsed < 30
    ok = ok and e2 == pytest.approx(79.5699, abs=5e-5) and e1 == pytest.approx(20 / 3)
    record(1, ok, f"E[X] {m1:.5f}±{se1:.1e} vs {e1:.5f}; E[X^2] {m2:.4f}±{se2:.1e} vs "
                  f"{e2:.4f}; {elapsed:.1f}s")
    assert ok


def test_criterion_02_integer_power_response():
    ifs = FINITE_VARIANCE
    exact = exact_moment_derivative(ifs, 2, Ratio(0), 1)
    res, detail = _gate(ifs, PowerMoment(2), 1, 1e-4, 10**6, 102)
    formula = res.formula_value
    ok = abs(formula.mean - exact) <= Z * formula.std_error and res.agreement.passed
    record(2, ok, f"{detail} exact {exact:.6g}")
    assert ok


def test_criterion_03_fractional_power_response():
    ifs = FINITE_VARIANCE
    assert (0.5**1.5 + 1.1**1.5) / 2 < 1
    lines, ok = [], True
    for l, step in ((1, 1e-4), (2, 1e-3)):
        res, detail = _gate(ifs, PowerMoment(1.5), l, step, 10**6, 103 + l)
        ok &= res.agreement.passed
        lines.append(detail)
    record(3, ok, "; ".join(lines))
    assert ok


def test_criterion_04_smooth_bump_response():
    bump = SmoothBump(3.0, 1.0, 3.0)
    lines, ok = [], True
    for l, step in ((1, 1e-4), (2, 1e-3), (3, 1e-2)):
        res, detail = _gate(BASE, bump, l, step, 10**6, 110 + l)
        ok &= res.agreement.passed
        lines.append(detail)
    record(4, ok, "; ".join(lines))
    assert ok


def test_criterion_05_capped_polynomial_response():
    ifs = FINITE_VARIANCE
    assert (0.5**2 + 1.1**2) / 2 < 1
    phi = CappedPolynomial.for_ifs(ifs, 2)
    lines, ok = [], True
    for l, step in ((1, 1e-4), (2, 1e-3)):
        res, detail = _gate(ifs, phi, l, step, 10**6, 120 + l)
        ok &= res.agreement.passed
        lines.append(detail)
    record(5, ok, "; ".join(lines))
    assert ok


def test_criterion_06_tail_bound():
    s0 = tail_exponent(BASE)
    levels = np.logspace(4, 7, 13)
    points = tilted_tail(BASE, levels, 10**7, 106)
    scaled = np.array([p.probability * p.threshold**s0 for p in points])
    tau, p_value = stats.kendalltau(np.arange(len(scaled)), scaled, alternative="greater")
    ok = p_value >= 0.05 and all(p.unfinished == 0 for p in points)
    record(6, ok, f"P(X>R) R^s0 over R in [1e4, 1e7]: {scaled.min():.0f}..{scaled.max():.0f},"
                  f" Mann-Kendall tau {tau:.2f} p {p_value:.2f}")
    assert ok


def test_criterion_07_lower_bound_on_first_derivative():
    lines, ok = [], True
    for ifs in (BASE, REGIME_A):
        n = converged_truncation(ifs)
        c = derivative_floor_constant(ifs)

        def fn(batch):
            conv = batch.lam <= 1e-30
            x1 = batch.derivs[:, 0]
            bad = conv & (x1 < c * batch.x * (1 - 1e-9))
            return int(np.count_nonzero(conv)), int(np.count_nonzero(bad))

        parts = map_chunks(ifs, fn, n, 10**5, 107, order=1, direction=Ratio(0))
        conv = sum(p[0] for p in parts)
        bad = sum(p[1] for p in parts)
        ok &= bad == 0 and conv >= 0.99 * 10**5
        lines.append(f"{tuple(float(v) for v in ifs.ratios)} c={c:.4f} converged {conv} violations {bad}")
    record(7, ok, "; ".join(lines))
    assert ok


def test_criterion_08_binomial_identity():
    rnd = random.Random(108)
    worst = 0.0
    for _ in range(100):
        l1, l2 = rnd.uniform(0.01, 5.0), rnd.uniform(0.01, 5.0)
        for j in range(41):
            for t in range(j + 1):
                lhs, rhs = binomial_identity(j, t, l1, l2)
                worst = max(worst, abs(lhs - rhs) / abs(rhs))
    ok = worst <= 1e-12
    record(8, ok, f"max relative gap {worst:.1e} over 100 ratio pairs, j<=40")
    assert ok


def test_criterion_09_bell_numbers():
    bell = [sum(1 for _ in set_partitions(list(range(l)))) for l in range(1, 9)]
    sums = [sum(t.coefficient for t in faa_di_bruno_terms(l)) for l in range(1, 9)]
    ok = sums == bell == [1, 2, 5, 15, 52, 203, 877, 4140]
    record(9, ok, f"coefficient sums {sums}")
    assert ok


def test_criterion_10_regime_a_witness():
    reg = detect_regime(REGIME_A)
    r = median_r(REGIME_A, 10**6, 0)
    first = first_feasible_N(REGIME_A, reg.a.rho, reg.a.delta, r, stop=14)
    Ns = [N for N in range(8, 15) if first is not None and N >= first]
    feasible = all(find_M(REGIME_A, N, reg.a.rho, reg.a.delta, r) for N in Ns)
    rep = divergence_report(REGIME_A, Ns, replicas=2000, master_seed=110, r=r)
    h_ok = all(row.h_prime >= row.lower_bound - Z * row.h_prime_se for row in rep.rows)
    ball_ok = all(row.ball_probability >= row.ball_bound - Z * row.ball_probability_se
                  for row in rep.rows)
    l1_ok = rep.l1_total <= rep.l1_bound_total
    ok = bool(Ns) and feasible and h_ok and ball_ok and l1_ok and len(rep.rows) == len(Ns)
    mins = min(row.h_prime - row.lower_bound for row in rep.rows)
    record(10, ok, f"N={Ns[0]}..{Ns[-1]} (first feasible {first}), r={r:.4f}; "
                   f"min h'-bound {mins:.3f}; sum L1 {rep.l1_total:.2f} <= {rep.l1_bound_total:.2f}")
    assert ok


def test_criterion_11_regime_b_witness():
    reg = detect_regime(REGIME_B)
    # 1e5 replicas of a 25600-term series; r only sets the witness scale
    r = median_r(REGIME_B, 10**5, 0)
    rep = divergence_report(REGIME_B, range(2, 9), replicas=20_000, master_seed=111, r=r,
                            with_ball=False)
    bound_ok = all(row.h_prime >= row.lower_bound - Z * row.h_prime_se for row in rep.rows)
    ratios, ratio_ok = [], True
    for a, b in zip(rep.rows, rep.rows[1:]):
        ratio = b.h_prime / a.h_prime
        se = abs(ratio) * math.hypot(a.h_prime_se / a.h_prime, b.h_prime_se / b.h_prime)
        ratios.append(ratio)
        ratio_ok &= ratio >= 1 - Z * se
    ok = reg.kind == "B" and bound_ok and ratio_ok
    record(11, ok, f"regime {reg.kind}, r={r:.3g}; bounds {'met' if bound_ok else 'missed'}; "
                   f"consecutive ratios {', '.join(f'{q:.2f}' for q in ratios)}")
    assert ok


def test_criterion_12_conjugation_invariance():
    tilde = ProbabilisticIFS.from_params([0.5, 1.2], [2.0, 3.0])
    canon, c = conjugate_to_unit_translations(tilde)
    center = c(20 / 3)
    phis = [SmoothBump(center, 2.0, 6.0), SmoothBump(c(3.0), 1.0, 4.0), PowerMoment(1)]
    lines, ok = [], True
    for i, phi in enumerate(phis):
        def direct_fn(batch, phi=phi):
            return _moments(phi(batch.x))

        mean_d, se_d, _ = summarize(map_chunks(tilde, direct_fn, 200, 10**6, 1120 + i))
        pulled = AffinePullback(phi, c.scale, c.offset)

        def pulled_fn(batch, pulled=pulled):
            return _moments(pulled(batch.x))

        mean_c, se_c, _ = summarize(map_chunks(canon, pulled_fn, 200, 10**6, 1130 + i))
        good = abs(mean_d - mean_c) <= Z * math.hypot(se_d, se_c)
        ok &= good
        lines.append(f"{phi.kind} {mean_d:.5g} vs {mean_c:.5g}")
    record(12, ok, "; ".join(lines))
    assert ok


def test_criterion_13_cli_determinism(tmp_path):
    golden = Path(__file__).parent / "golden"
    commands = ["analyze", "moments", "response", "tail", "nondiff", "sample"]
    ok = True
    for command in commands:
        outs = []
        for threads in (1, 8):
            out = tmp_path / f"{command}-{threads}"
            code = run([command, "--config", str(golden / f"{command}.ini"), "--out", str(out),
                        "--json", "--threads", str(threads)])
            ok &= code == 0
            outs.append({p.name: p.read_bytes() for p in out.iterdir()})
        expected = {p.name: p.read_bytes() for p in (golden / "expected" / command).iterdir()}
        ok &= outs[0] == outs[1] == expected
    record(13, ok, f"{len(commands)} golden configs byte-identical across --threads 1, 8")
    assert ok
