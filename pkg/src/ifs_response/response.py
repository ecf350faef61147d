"""Response of ``h(eps) = E[phi(X(eps))]`` to a parameter shift.

Two independent estimators of ``h^(l)(0)``:

* the formula estimator averages the Faa di Bruno expansion
  ``sum L(k_1..k_l) phi^(k)(X) prod_j (X^(j))^(k_j)`` over sampled paths,
  using analytic derivatives of ``phi`` and the formal series ``X^(j)``;
* the finite-difference estimator differences ``phi(X_n(eps))`` across a
  symmetric stencil of parameter values, evaluated on the same symbol paths
  for every ``eps`` (common random numbers), and reports the standard error
  of the per-path differenced values.

``compare_response`` gates agreement between the two.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import InadmissiblePerturbation, OrderTooLarge, RegimeViolation
from .ifs import ProbabilisticIFS, moment_growth
from .sampler import (
    DEFAULT_TRUNCATION,
    MCEstimate,
    ParamDirection,
    PathBatch,
    Ratio,
    _moments,
    map_chunks,
    perturbed_ifs,
    summarize,
)
from .testfunctions import (
    AffinePullback,
    CappedPolynomial,
    PlateauFunction,
    PowerMoment,
    TestFunction,
    WitnessBacked,
)

MAX_ORDER = 8
SCHEMES = {"central-2point": 2, "central-4point": 4}


@dataclass(frozen=True)
class FaaDiBrunoTerm:
    multiplicities: tuple[int, ...]  # (k_1, ..., k_l)
    coefficient: int
    total_blocks: int  # k = k_1 + ... + k_l


@lru_cache(maxsize=None)
def _terms(l: int) -> tuple[FaaDiBrunoTerm, ...]:
    out = []

    def rec(j, remaining, acc):
        # choose k_j for j = 1..l with sum j*k_j = l
        if j > l:
            if remaining == 0:
                out.append(tuple(acc))
            return
        for kj in range(remaining // j + 1):
            rec(j + 1, remaining - j * kj, acc + [kj])

    rec(1, l, [])
    terms = []
    for ks in sorted(out):
        denom = 1
        for j, kj in enumerate(ks, start=1):
            denom *= math.factorial(kj) * math.factorial(j) ** kj
        coef = Fraction(math.factorial(l), denom)
        assert coef.denominator == 1
        terms.append(FaaDiBrunoTerm(ks, int(coef), sum(ks)))
    return tuple(terms)


def faa_di_bruno_terms(l: int) -> list[FaaDiBrunoTerm]:
    """All terms of the l-th derivative of a composition, ordered
    lexicographically by multiplicities."""
    if not 1 <= l <= MAX_ORDER:
        raise OrderTooLarge(f"order must lie in 1..{MAX_ORDER}, got {l}")
    return list(_terms(l))


def faa_di_bruno_combine(phi_derivs: np.ndarray, inner_derivs: np.ndarray, l: int) -> np.ndarray:
    """``d^l/de^l phi(g(e))`` from ``phi_derivs[k] = phi^(k)(g)`` (k = 0..l) and
    ``inner_derivs[j-1] = g^(j)`` (j = 1..l); trailing axes are broadcast."""
    total = np.zeros(np.broadcast_shapes(phi_derivs[0].shape, inner_derivs[0].shape))
    for term in faa_di_bruno_terms(l):
        prod = term.coefficient * phi_derivs[term.total_blocks]
        for j, kj in enumerate(term.multiplicities, start=1):
            if kj:
                prod = prod * inner_derivs[j - 1] ** kj
        total = total + prod
    return total


def regime_issues(ifs: ProbabilisticIFS, phi: TestFunction, l: int) -> list[str]:
    """Reasons the response formula is not known to hold for this input."""
    issues = []
    if isinstance(phi, AffinePullback):
        phi = phi.base
    if isinstance(phi, PowerMoment):
        g = moment_growth(ifs, phi.t)
        if not g < 1:
            issues.append(f"power moment needs sum p_i ratio_i^t < 1, got {g:.6g}")
    elif isinstance(phi, CappedPolynomial):
        g = moment_growth(ifs, phi.r)
        if not g < 1:
            issues.append(f"capped polynomial needs sum p_i ratio_i^r < 1, got {g:.6g}")
        if l > phi.r:
            issues.append(f"order {l} exceeds the smoothness index r={phi.r}")
    elif isinstance(phi, WitnessBacked):
        if l > 1:
            issues.append("witness functions are only covered at first order")
    elif not isinstance(phi, PlateauFunction):
        issues.append(f"no validity regime known for test function kind {phi.kind!r}")
    return issues


def _warn_regime(ifs, phi, l):
    issues = regime_issues(ifs, phi, l)
    for msg in issues:
        warnings.warn(msg, RegimeViolation, stacklevel=3)
    return not issues


def default_truncation(step: float) -> int:
    """Truncation depth growing like log(1/step)."""
    return max(DEFAULT_TRUNCATION, math.ceil(80 * math.log10(1.0 / abs(step))))


def formula_values(batch: PathBatch, phi: TestFunction, l: int) -> np.ndarray:
    phi_d = phi.derivatives(batch.x, l)
    return faa_di_bruno_combine(phi_d, batch.derivs.T, l)


def response_formula(ifs: ProbabilisticIFS, phi: TestFunction, l: int,
                     direction: ParamDirection | None = None, n: int = DEFAULT_TRUNCATION,
                     replicas: int = 100_000, master_seed: int = 0,
                     threads: int = 1) -> MCEstimate:
    """Monte Carlo estimate of ``h^(l)(0)`` by the Faa di Bruno formula."""
    from .sampler import estimate_expectation

    faa_di_bruno_terms(l)
    phi.check_order(l)
    direction = direction or Ratio(0)
    _warn_regime(ifs, phi, l)
    return estimate_expectation(ifs, lambda b: formula_values(b, phi, l), n, replicas,
                                master_seed, threads, order=l, direction=direction)


@lru_cache(maxsize=None)
def stencil(l: int, scheme: str = "central-2point") -> tuple[tuple[int, float], ...]:
    """Offsets and weights of the central difference for the l-th derivative
    with error ``O(h^2)`` (central-2point) or ``O(h^4)`` (central-4point).

    Returns ``((offset, weight), ...)`` for nonzero weights; the derivative is
    ``sum weight * f(offset * h) / h**l``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")
    half = (l + 1) // 2 + (SCHEMES[scheme] // 2 - 1)
    offsets = list(range(-half, half + 1))
    size = len(offsets)
    # exact rational solve of sum_i w_i o_i^k = k! [k == l]
    a = [[Fraction(o) ** k for o in offsets] + [Fraction(math.factorial(l) if k == l else 0)]
         for k in range(size)]
    for c in range(size):
        piv = next(r for r in range(c, size) if a[r][c] != 0)
        a[c], a[piv] = a[piv], a[c]
        for r in range(size):
            if r != c and a[r][c] != 0:
                f = a[r][c] / a[c][c]
                a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    weights = [a[i][size] / a[i][i] for i in range(size)]
    return tuple((o, float(w)) for o, w in zip(offsets, weights) if w != 0)


def _paired_difference(phis: dict, stencil_: tuple, step: float, l: int) -> np.ndarray:
    """Stencil sum evaluated in +/- pairs on ``|step|``.

    Central differences are even in the step, so ``-h`` and ``h`` name the same
    estimator and give bit-identical values.
    """
    h = abs(step)
    weights = dict(stencil_)
    total = weights[0] * phis[0] if 0 in weights else 0.0
    for o in sorted(k for k in weights if k > 0):
        plus, minus = phis[o * h], phis[-o * h]
        if l % 2:
            total = total + weights[o] * (plus - minus)
        else:
            total = total + weights[o] * (plus + minus)
    return total / h**l


@dataclass(frozen=True)
class FiniteDifference:
    estimate: MCEstimate  # at the primary (smallest) step
    step: float
    scheme: str
    steps: tuple[float, ...]
    per_step: tuple[MCEstimate, ...]
    bias_coefficient: float  # C in D(h) = a + C h^p
    bias_allowance: float  # |C| h^p at the primary step

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate.to_dict(),
            "step": self.step,
            "scheme": self.scheme,
            "steps": list(self.steps),
            "per_step_means": [e.mean for e in self.per_step],
            "bias_coefficient": self.bias_coefficient,
            "bias_allowance": self.bias_allowance,
        }


def _richardson(steps, means, power):
    if len(steps) < 3:
        return 0.0
    hs = np.abs(np.asarray(steps)) ** power
    design = np.column_stack([np.ones_like(hs), hs])
    coef, *_ = np.linalg.lstsq(design, np.asarray(means), rcond=None)
    return float(coef[1])


def _fd_plan(ifs, l, direction, steps, scheme):
    if not steps:
        raise ValueError("need at least one step")
    for s in steps:
        if s == 0 or not math.isfinite(s):
            raise InadmissiblePerturbation(f"finite-difference step must be nonzero, got {s}")
    sten = stencil(l, scheme)
    points = sorted({o * s for s in steps for o, _ in sten} | {o * -s for s in steps for o, _ in sten})
    points = [p for p in points if p != 0]
    param_sets = []
    for p in points:
        pert = perturbed_ifs(ifs, p, direction)
        param_sets.append((pert.ratios, pert.translations))
    # set 0 is the unperturbed system
    index = {0.0: 0}
    index.update({p: i + 1 for i, p in enumerate(points)})
    return sten, param_sets, index


def _fd_from_batch(batch, phi, l, steps, sten, index):
    phis = {p: phi(batch.x_sets[:, i]) for p, i in index.items()}
    return [_paired_difference(phis, sten, s, l) for s in steps]


def _assemble_fd(parts, steps, scheme, n, replicas, master_seed):
    ests = []
    for i in range(len(steps)):
        mean, se, cnt = summarize([p[i] for p in parts])
        ests.append(MCEstimate(mean, se, cnt, n, master_seed))
    power = SCHEMES[scheme]
    primary = int(np.argmin(np.abs(steps)))
    c = _richardson(steps, [e.mean for e in ests], power)
    h = abs(steps[primary])
    return FiniteDifference(ests[primary], h, scheme, tuple(steps), tuple(ests), c,
                            abs(c) * h**power)


def _expand_steps(steps, richardson):
    steps = [float(s) for s in np.atleast_1d(steps)]
    if richardson and len(steps) == 1:
        h = steps[0]
        steps = [h, 2 * h, 4 * h]
    return steps


def response_finite_difference(ifs: ProbabilisticIFS, phi: TestFunction, l: int,
                               direction: ParamDirection | None = None, steps=(1e-4,),
                               scheme: str = "central-2point", n: int | None = None,
                               replicas: int = 100_000, master_seed: int = 0,
                               threads: int = 1, richardson: bool = True) -> FiniteDifference:
    """Central finite difference of ``eps -> E[phi(X_n(eps))]`` with common
    random numbers.

    A single step ``h`` is expanded to ``(h, 2h, 4h)`` when ``richardson`` is
    set; the fitted ``D(h) = a + C h^p`` supplies the bias allowance.
    """
    faa_di_bruno_terms(l)
    direction = direction or Ratio(0)
    direction.check(ifs)
    steps = _expand_steps(steps, richardson)
    sten, param_sets, index = _fd_plan(ifs, l, direction, steps, scheme)
    if n is None:
        n = default_truncation(min(abs(s) for s in steps))

    def fn(batch):
        return [_moments(v) for v in _fd_from_batch(batch, phi, l, steps, sten, index)]

    parts = map_chunks(ifs, fn, n, replicas, master_seed, threads, param_sets=param_sets)
    return _assemble_fd(parts, steps, scheme, n, replicas, master_seed)


@dataclass(frozen=True)
class AgreementReport:
    passed: bool
    difference: float
    combined_se: float
    z: float
    bias_allowance: float
    threshold: float

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "difference": self.difference,
            "combined_se": self.combined_se,
            "z": self.z,
            "bias_allowance": self.bias_allowance,
            "threshold": self.threshold,
        }


def compare_response(formula: MCEstimate, fd, z: float = 4.0,
                     bias_allowance: float | None = None) -> AgreementReport:
    """Pass iff ``|formula - fd| <= z * sqrt(se_f^2 + se_fd^2) + allowance``.

    ``fd`` is an :class:`MCEstimate` or a :class:`FiniteDifference`; in the
    latter case its Richardson allowance is used unless one is given.
    """
    if isinstance(fd, FiniteDifference):
        if bias_allowance is None:
            bias_allowance = fd.bias_allowance
        fd = fd.estimate
    bias_allowance = 0.0 if bias_allowance is None else float(bias_allowance)
    diff = abs(formula.mean - fd.mean)
    se = math.hypot(formula.std_error, fd.std_error)
    threshold = z * se + bias_allowance
    return AgreementReport(bool(diff <= threshold), diff, se, z, bias_allowance, threshold)


@dataclass(frozen=True)
class ResponseEstimate:
    order: int
    formula_value: MCEstimate
    fd_value: FiniteDifference | None
    fd_step: float | None
    agreement: AgreementReport | None
    regime_ok: bool = True
    issues: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "formula": self.formula_value.to_dict(),
            "finite_difference": None if self.fd_value is None else self.fd_value.to_dict(),
            "fd_step": self.fd_step,
            "agreement": None if self.agreement is None else self.agreement.to_dict(),
            "regime_ok": self.regime_ok,
            "issues": list(self.issues),
        }


def response_check(ifs: ProbabilisticIFS, phi: TestFunction, l: int,
                   direction: ParamDirection | None = None, step: float = 1e-4,
                   scheme: str = "central-2point", n: int | None = None,
                   replicas: int = 100_000, master_seed: int = 0, threads: int = 1,
                   z: float = 4.0) -> ResponseEstimate:
    """Formula and finite-difference estimates from one pass over the same
    paths, plus the agreement gate."""
    faa_di_bruno_terms(l)
    phi.check_order(l)
    direction = direction or Ratio(0)
    direction.check(ifs)
    issues = tuple(regime_issues(ifs, phi, l))
    for msg in issues:
        warnings.warn(msg, RegimeViolation, stacklevel=2)
    steps = _expand_steps(step, True)
    sten, param_sets, index = _fd_plan(ifs, l, direction, steps, scheme)
    if n is None:
        n = default_truncation(step)

    def fn(batch):
        f = _moments(formula_values(batch, phi, l))
        return f, [_moments(v) for v in _fd_from_batch(batch, phi, l, steps, sten, index)]

    parts = map_chunks(ifs, fn, n, replicas, master_seed, threads, order=l,
                       direction=direction, param_sets=param_sets)
    mean, se, cnt = summarize([p[0] for p in parts])
    formula = MCEstimate(mean, se, cnt, n, master_seed)
    fd = _assemble_fd([p[1] for p in parts], steps, scheme, n, replicas, master_seed)
    report = compare_response(formula, fd, z)
    return ResponseEstimate(l, formula, fd, fd.step, report, not issues, issues)
