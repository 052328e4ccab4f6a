"""Closed-form capacity and crosstalk predictions.

All logs are natural.  Capacities are returned as reals; callers floor them to
integers when seeding searches.  Formulas cover the SeqNet / polynomial /
exponential transition-to-next-pattern rules, the autoassociative baseline,
and the mixed (symmetric + asymmetric) rule with its bimodal crosstalk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .numerics import double_factorial, gaussian_tail, gaussian_tail_inv
from .rules import InteractionFunction

# Base of the exponential-rule capacity scaling, exp(2)/cosh(2) = 1.96403...
BETA = math.exp(2.0) / math.cosh(2.0)

TRANSITION = "transition"
SEQUENCE = "sequence"
_KINDS = (TRANSITION, SEQUENCE)


@dataclass(frozen=True)
class TheoryPrediction:
    """One evaluated formula, echoed with its inputs (CLI output unit)."""

    formula_id: str
    inputs: dict
    value: float


def _check_kind(kind: str) -> None:
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")


def poly_densenet_capacity(n: int, d: int, kind: str = TRANSITION) -> float:
    """Polynomial-rule capacity N^d / (2 (2d-1)!! ln N); sequence adds 1/(d+1)."""
    _check_kind(kind)
    if n < 3 or d < 1:
        raise ValueError("need n >= 3 and d >= 1")
    value = n ** d / (2.0 * double_factorial(2 * d - 1) * math.log(n))
    if kind == SEQUENCE:
        value /= d + 1
    return value


def exp_densenet_capacity(n: int, kind: str = TRANSITION) -> float:
    """Exponential-rule capacity beta^(N-1)/(2 ln N), or /(2 N ln beta)."""
    _check_kind(kind)
    if n < 3:
        raise ValueError("need n >= 3")
    growth = BETA ** (n - 1)
    if kind == TRANSITION:
        return growth / (2.0 * math.log(n))
    return growth / (2.0 * n * math.log(BETA))


def gamma_factor(d_s: int, d_a: int, lam: float) -> float:
    """Variance prefactor of the mixed rule's crosstalk, by degree ordering."""
    if d_s < 1 or d_a < 1:
        raise ValueError("degrees must be >= 1")
    if d_s < d_a:
        return float(double_factorial(2 * d_s - 1))
    if d_s == d_a:
        even_term = 0.0
        if d_s % 2 == 0:
            even_term = 2.0 * lam * double_factorial(d_s - 1) ** 2
        return (lam * lam + 1.0) * double_factorial(2 * d_s - 1) + even_term
    return lam * lam * double_factorial(2 * d_a - 1)


def mixed_poly_capacity(n: int, d_s: int, d_a: int, lam: float,
                        kind: str = TRANSITION) -> float:
    """Mixed polynomial rule capacity; scales with N^min(d_s, d_a)."""
    _check_kind(kind)
    if lam <= 1.0:
        raise ValueError("the transition term must dominate: lam > 1")
    d_min = min(d_s, d_a)
    value = ((lam - 1.0) ** 2 / (2.0 * gamma_factor(d_s, d_a, lam))
             * n ** d_min / math.log(n))
    if kind == SEQUENCE:
        value /= d_min + 1
    return value


def mixed_exp_capacity(n: int, lam: float, kind: str = TRANSITION) -> float:
    """Mixed exponential rule: the exponential capacity times (lam-1)^2/(lam^2+1)."""
    if lam <= 1.0:
        raise ValueError("the transition term must dominate: lam > 1")
    factor = (lam - 1.0) ** 2 / (lam * lam + 1.0)
    return factor * exp_densenet_capacity(n, kind)


def interaction_mean(f: InteractionFunction, n: int) -> float:
    """Leading-order E[f(Xi)] for Xi the mean of N-1 fair signs."""
    if f.kind == "exp":
        return (math.cosh(1.0) / math.e) ** (n - 1)
    d = f.degree
    if d % 2 == 1:
        return 0.0
    return double_factorial(d - 1) / n ** (d / 2.0)


def interaction_second_moment(f: InteractionFunction, n: int) -> float:
    """Leading-order E[f(Xi)^2]; this is the per-pattern crosstalk variance."""
    if f.kind == "exp":
        return BETA ** (-(n - 1))
    return double_factorial(2 * f.degree - 1) / n ** f.degree


def crosstalk_variance_theory(f: InteractionFunction, n: int) -> float:
    """Variance of one crosstalk term chi = xi * f(Xi)."""
    return interaction_second_moment(f, n)


def crosstalk_kurtosis_theory(f: InteractionFunction, n: int, p: int) -> float:
    """Excess kurtosis of the summed crosstalk over P-1 terms."""
    if p < 2:
        raise ValueError("kurtosis needs p >= 2")
    if f.kind == "exp":
        bracket = (math.cosh(4.0) / math.cosh(2.0) ** 2) ** (n - 1) - 3.0
    else:
        d = f.degree
        bracket = (double_factorial(4 * d - 1)
                   / double_factorial(2 * d - 1) ** 2 - 3.0)
    return bracket / (p - 1)


@dataclass(frozen=True)
class MixedCrosstalkPrediction:
    """Conditional moments of the mixed rule's bimodal crosstalk."""

    mean_plus: float       # E[C | xi = +1]
    mean_minus: float      # E[C | xi = -1]
    variance: float        # conditional variance (same for both branches)


def mixed_crosstalk_theory(f_s: InteractionFunction, f_a: InteractionFunction,
                           lam: float, n: int, p: int) -> MixedCrosstalkPrediction:
    """Exact pre-asymptotic conditional mean and variance of the mixed crosstalk."""
    if p < 2:
        raise ValueError("need p >= 2")
    es = interaction_mean(f_s, n)
    ea = interaction_mean(f_a, n)
    es2 = interaction_second_moment(f_s, n)
    ea2 = interaction_second_moment(f_a, n)
    shift = 1.0 + lam * ea
    var = ((p - 1) * (es2 + 2.0 * lam * es * ea + lam * lam * ea2)
           - es * es - lam * lam * ea * ea)
    return MixedCrosstalkPrediction(mean_plus=shift + es, mean_minus=-shift + es,
                                    variance=var)


@dataclass(frozen=True)
class BitflipPrediction:
    """Gaussian-approximation single-bitflip probability, with a regime flag.

    ``in_regime`` is False when the predicted crosstalk variance is not small
    (the approximation is then unreliable); the value is still returned.
    """

    probability: float
    in_regime: bool


def bitflip_probability(f: InteractionFunction, n: int, p: int) -> BitflipPrediction:
    """P[one neuron flips during a transition], Gaussian approximation."""
    var = crosstalk_variance_theory(f, n) * (p - 1)
    prob = float(gaussian_tail(1.0 / math.sqrt(var))) if var > 0 else 0.0
    return BitflipPrediction(probability=prob, in_regime=var < 1.0)


def mixed_bitflip_probability(f_s: InteractionFunction, f_a: InteractionFunction,
                              lam: float, n: int, p: int) -> BitflipPrediction:
    """Mixed-rule bitflip probability: equal-weight mixture of two Gaussians."""
    if lam <= 1.0:
        raise ValueError("lam > 1 required for transitions to dominate")
    pred = mixed_crosstalk_theory(f_s, f_a, lam, n, p)
    sigma = math.sqrt(pred.variance)
    lo = float(gaussian_tail((lam + pred.mean_minus) / sigma))
    hi = float(gaussian_tail((lam + pred.mean_plus) / sigma))
    return BitflipPrediction(probability=0.5 * lo + 0.5 * hi,
                             in_regime=pred.variance < (lam - 1.0) ** 2)


def finite_c_capacity(n: int, c: float, f: InteractionFunction,
                      kind: str = TRANSITION, max_iter: int = 1000) -> float:
    """Capacity at finite error tolerance c, from the union-bound equation.

    Transition kind solves P = 1 + 1/(Var(chi) [H^-1(c/N)]^2) directly;
    sequence kind solves the self-consistent P = 1 + 1/(Var [H^-1(c/(N P))]^2)
    by bracketed root finding.  The classic autoassociative baseline is the
    d = 1 polynomial with the sequence-style union over all patterns.
    """
    _check_kind(kind)
    if not 0.0 < c < 1.0:
        raise ValueError("c must lie in (0, 1)")
    var = crosstalk_variance_theory(f, n)
    if kind == TRANSITION:
        return 1.0 + 1.0 / (var * gaussian_tail_inv(c / n) ** 2)

    def residual(p: float) -> float:
        return p - 1.0 - 1.0 / (var * gaussian_tail_inv(c / (n * p)) ** 2)

    lo = 2.0
    if residual(lo) >= 0.0:
        return lo
    hi = lo
    for _ in range(max_iter):
        hi *= 2.0
        if residual(hi) > 0.0:
            break
    else:
        raise RuntimeError("finite_c_capacity failed to bracket a solution")
    return float(brentq(residual, lo, hi, maxiter=max_iter, rtol=1e-12))


def hopfield_hoeffding_bound(n: int, p: int) -> float:
    """Hoeffding bound exp(-(N-1)/(2(P-1))) on the autoassociative bitflip."""
    if n < 2 or p < 2:
        raise ValueError("need n >= 2 and p >= 2")
    return math.exp(-0.5 * (n - 1) / (p - 1))


@dataclass(frozen=True)
class DegreeProfile:
    """Transition capacity across polynomial degrees, in log10 (they overflow)."""

    degrees: np.ndarray
    log10_capacity: np.ndarray
    argmax_degree: int


def _log_double_factorial_odd(d: int) -> float:
    # ln((2d-1)!!) via ln((2d)!) - ln(2^d d!)
    return math.lgamma(2 * d + 1) - d * math.log(2.0) - math.lgamma(d + 1)


def max_degree_profile(n: int) -> DegreeProfile:
    """Per-degree transition capacity for d = 1..N and the maximizing degree.

    Successive capacities have ratio N/(2d+1), so the profile is unimodal with
    its peak within one of (N-1)/2.
    """
    if n < 5:
        raise ValueError("need n >= 5")
    degrees = np.arange(1, n + 1)
    log_caps = np.array([
        d * math.log(n) - math.log(2.0) - _log_double_factorial_odd(int(d))
        - math.log(math.log(n))
        for d in degrees
    ])
    log10 = log_caps / math.log(10.0)
    return DegreeProfile(degrees=degrees, log10_capacity=log10,
                         argmax_degree=int(degrees[int(np.argmax(log10))]))
