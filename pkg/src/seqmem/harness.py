"""Experiment protocols: capacity searches, crosstalk sampling, bias sweeps.

The capacity search follows the decaying protocol: start well above the
predicted capacity, draw fresh sequences every round, shrink the sequence
length by one percent whenever any bit error shows up, and stop at the first
error-free round.  The whole search repeats from scratch for error bars.

Every (protocol, repeat, round, sequence) tuple gets its own counter-based
RNG substream, so estimates are reproducible bit for bit regardless of how
the repeats are distributed over workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import theory
from ._engine import check_pattern_map
from .numerics import MomentAccumulator, kahan_sum
from .patterns import PatternDistribution, generate_patterns, substream
from .rules import RuleConfig, Trajectory

_TRANSITION_TAG = 0
_SEQUENCE_TAG = 1
_BIAS_TAG = 2


class ProtocolError(RuntimeError):
    """A capacity search could not terminate within its configured bounds."""


@dataclass(frozen=True)
class CapacityProtocolConfig:
    """Knobs of the decaying capacity search."""

    n_sequences: int = 100
    n_repeats: int = 20
    decay: float = 0.99
    p0_multiplier: float = 2.0
    max_rounds: int = 20_000
    p0_override: Optional[int] = None  # bypass the theory seed when set

    def __post_init__(self):
        if self.n_sequences < 1 or self.n_repeats < 1:
            raise ValueError("need at least one sequence and one repeat")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.p0_multiplier <= 0.0:
            raise ValueError("p0_multiplier must be positive")


@dataclass
class CapacityEstimate:
    """Per-repeat capacities plus summary statistics and run metadata."""

    capacities: np.ndarray
    mean: float
    std: float
    rule: str
    n_neurons: int
    kind: str
    seed: int
    eps: float = 0.0

    @classmethod
    def from_capacities(cls, caps, **meta) -> "CapacityEstimate":
        caps = np.asarray(caps, dtype=np.int64)
        std = float(caps.std(ddof=1)) if caps.size > 1 else 0.0
        return cls(capacities=caps, mean=float(caps.mean()), std=std, **meta)

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "n_neurons": self.n_neurons,
            "kind": self.kind,
            "seed": self.seed,
            "eps": self.eps,
            "capacities": [int(c) for c in self.capacities],
            "mean": self.mean,
            "std": self.std,
        }


def theory_capacity(rule: RuleConfig, n: int, kind: str) -> float:
    """Closed-form capacity used to seed the search (P0 = multiplier x this).

    The GPI rule has no closed form here; linear independence holds up to
    P = N, so N is used as its seed.
    """
    if rule.kind == "gpi":
        return float(n)
    if rule.kind == "seqnet":
        return theory.poly_densenet_capacity(n, 1, kind)
    if rule.kind in ("densenet", "hopfield", "mhn"):
        f = rule.f
        if f.kind == "exp":
            return theory.exp_densenet_capacity(n, kind)
        d = 1 if f.kind == "identity" else f.degree
        return theory.poly_densenet_capacity(n, d, kind)
    if rule.kind == "mixednet":
        if rule.f_s.kind == "exp" and rule.f_a.kind == "exp":
            return theory.mixed_exp_capacity(n, rule.lam, kind)
        if rule.f_s.kind != "exp" and rule.f_a.kind != "exp":
            d_s = 1 if rule.f_s.kind == "identity" else rule.f_s.degree
            d_a = 1 if rule.f_a.kind == "identity" else rule.f_a.degree
            return theory.mixed_poly_capacity(n, d_s, d_a, rule.lam, kind)
        raise ValueError("no capacity seed for mixed poly/exp interactions; "
                         "set p0_override")
    raise ValueError(f"no theory seed for rule kind {rule.kind!r}")


def _capacity_repeat(rule: RuleConfig, n: int, proto: CapacityProtocolConfig,
                     seed: int, repeat: int, stream_prefix: tuple,
                     dist: PatternDistribution, p0: int) -> int:
    """One full decaying search; returns the first error-free sequence length."""
    p = p0
    if p < 2:
        raise ProtocolError(f"initial sequence length {p} is below 2")
    p_cap = 2 ** min(n, 26)
    seen_failure = False
    for round_idx in range(proto.max_rounds):
        errored = False
        for s in range(proto.n_sequences):
            rng = substream(seed, *stream_prefix, repeat, round_idx, s)
            ps = generate_patterns(dist, n, p, rng=rng)
            if not check_pattern_map(ps, rule):
                errored = True
                break
        if not errored:
            if seen_failure:
                return p
            # First round already error-free: the seed was below capacity,
            # double the starting length and keep searching.
            p *= 2
            if p > p_cap:
                raise ProtocolError("search exceeded the representable range")
            continue
        seen_failure = True
        nxt = min(p - 1, math.floor(p * proto.decay))
        if nxt < 2:
            return 2  # protocol floor: lengths below 2 are not meaningful
        p = nxt
    raise ProtocolError(f"no error-free round within {proto.max_rounds} rounds")


def _repeat_task(args) -> tuple[int, int]:
    rule, n, proto, seed, repeat, prefix, dist, p0 = args
    return repeat, _capacity_repeat(rule, n, proto, seed, repeat, prefix, dist, p0)


def _estimate_capacity(rule: RuleConfig, n: int, proto: CapacityProtocolConfig,
                       seed: int, kind: str, stream_prefix: tuple,
                       dist: PatternDistribution,
                       n_workers: Optional[int] = None) -> CapacityEstimate:
    if rule.kind == "mixednet" and rule.tau != 1:
        raise ValueError("capacity protocols define the mixed rule at tau = 1")
    if proto.p0_override is not None:
        p0 = int(proto.p0_override)
    else:
        p0 = math.ceil(proto.p0_multiplier * theory_capacity(rule, n, kind))
    p0 = max(p0, 2)
    tasks = [(rule, n, proto, seed, r, stream_prefix, dist, p0)
             for r in range(proto.n_repeats)]
    workers = n_workers if n_workers is not None else (os.cpu_count() or 1)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_repeat_task, tasks))
    else:
        results = [_repeat_task(t) for t in tasks]
    results.sort()  # merge in repeat order, independent of scheduling
    caps = [c for _, c in results]
    return CapacityEstimate.from_capacities(
        caps, rule=rule.label(), n_neurons=n, kind=kind, seed=seed, eps=dist.eps)


def estimate_transition_capacity(
    rule: RuleConfig, n: int, proto: CapacityProtocolConfig, seed: int,
    dist: Optional[PatternDistribution] = None,
    n_workers: Optional[int] = None,
) -> CapacityEstimate:
    """Largest P whose one-step map has no bit error on n_sequences fresh draws.

    One update is applied from every pattern of every sequence; any bit error
    shrinks the length by the decay factor and redraws everything.
    """
    dist = dist or PatternDistribution()
    return _estimate_capacity(rule, n, proto, seed, theory.TRANSITION,
                              (_TRANSITION_TAG,), dist, n_workers)


def estimate_sequence_capacity(
    rule: RuleConfig, n: int, proto: CapacityProtocolConfig, seed: int,
    dist: Optional[PatternDistribution] = None,
    n_workers: Optional[int] = None,
) -> CapacityEstimate:
    """Like the transition search, but the network walks the whole sequence.

    The walk starts at the first pattern and any deviation at any step fails
    the round.  An error-free walk visits exactly the stored patterns, so the
    round outcome is computed with the same batched checker, scanning the
    transitions in walk order.
    """
    dist = dist or PatternDistribution()
    return _estimate_capacity(rule, n, proto, seed, theory.SEQUENCE,
                              (_SEQUENCE_TAG,), dist, n_workers)


@dataclass
class BranchStats:
    """Conditional crosstalk statistics for one sign of the anchor component."""

    count: int
    mean: float
    variance: float


@dataclass
class CrosstalkStats:
    """Empirical crosstalk moments next to their closed-form predictions."""

    rule: str
    n_neurons: int
    n_patterns: int
    n_samples: int
    mean: float
    variance: float
    excess_kurtosis: float
    theory_variance: float
    theory_excess_kurtosis: Optional[float]
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    branches: Optional[dict] = None       # mixed rule: {+1: BranchStats, -1: ...}
    theory_branch_means: Optional[tuple] = None  # (E[C|+1], E[C|-1])

    def to_dict(self) -> dict:
        out = {
            "rule": self.rule,
            "n_neurons": self.n_neurons,
            "n_patterns": self.n_patterns,
            "n_samples": self.n_samples,
            "mean": self.mean,
            "variance": self.variance,
            "excess_kurtosis": self.excess_kurtosis,
            "theory_variance": self.theory_variance,
            "theory_excess_kurtosis": self.theory_excess_kurtosis,
            "hist_counts": [int(c) for c in self.hist_counts],
            "hist_edges": [float(e) for e in self.hist_edges],
        }
        if self.branches is not None:
            out["branches"] = {
                str(k): {"count": b.count, "mean": b.mean, "variance": b.variance}
                for k, b in self.branches.items()
            }
            out["theory_branch_means"] = list(self.theory_branch_means)
        return out


def sample_crosstalk(rule: RuleConfig, n: int, p: int, n_samples: int,
                     seed: int, n_bins: int = 200) -> CrosstalkStats:
    """Monte Carlo crosstalk for fresh random patterns per sample.

    For the transition/autoassociative rules the crosstalk is a sum of P-1
    iid terms, each a signed interaction of the mean of N-1 fair signs; the
    sampler draws the counts directly.  For the mixed rule the sum keeps its
    boundary terms and is conditioned on the anchor component xi, which
    splits the distribution into its two branches.

    Moment estimates are meaningful from n_samples around 1e4 up; smaller
    counts are accepted for smoke testing only.
    """
    if n_samples < 1:
        raise ValueError("need n_samples >= 1")
    if p < 2:
        raise ValueError("need p >= 2")
    values = np.empty(n_samples, dtype=np.float64)
    mixed = rule.kind == "mixednet"
    if mixed and p < 4:
        raise ValueError("mixed-rule crosstalk sampling needs p >= 4")
    labels = np.empty(n_samples, dtype=np.int8) if mixed else None
    rng = substream(seed, 3, n, p)
    chunk = max(1, int(4_000_000 // max(p - 1, 1)))

    def f_of_counts(f, counts):
        # counts holds the number of +1 components among the N-1 summed signs
        if f.kind == "exp":
            return np.exp(-2.0 * ((n - 1) - counts))
        return f.apply((2.0 * counts - (n - 1)) / (n - 1), n)

    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        counts = rng.binomial(n - 1, 0.5, size=(m, p - 1))
        if not mixed:
            signs = rng.integers(0, 2, size=(m, p - 1)).astype(np.float64) * 2.0 - 1.0
            terms = signs * f_of_counts(rule.f, counts)
            values[done:done + m] = kahan_sum(terms, axis=1)
        else:
            lam = rule.lam
            xi1 = rng.integers(0, 2, size=m).astype(np.float64) * 2.0 - 1.0
            xis = rng.integers(0, 2, size=(m, p - 2)).astype(np.float64) * 2.0 - 1.0
            f_s = f_of_counts(rule.f_s, counts)
            f_a = f_s if rule.f_a == rule.f_s else f_of_counts(rule.f_a, counts)
            c1 = f_s[:, 0] + lam * xis[:, 0] * f_a[:, 0]
            c2 = xis[:, -1] * f_s[:, -1] + lam * xi1 * f_a[:, -1]
            bulk = (xis[:, 0:p - 3] * f_s[:, 1:p - 2]
                    + lam * xis[:, 1:p - 2] * f_a[:, 1:p - 2])
            values[done:done + m] = xi1 + c1 + c2 + kahan_sum(bulk, axis=1)
            labels[done:done + m] = xi1.astype(np.int8)
        done += m

    acc = MomentAccumulator()
    acc.push_many(values)
    counts, edges = np.histogram(values, bins=n_bins)
    branches = None
    theory_branch_means = None
    if mixed:
        branches = {}
        for sign in (1, -1):
            sel = values[labels == sign]
            b = MomentAccumulator()
            b.push_many(sel)
            branches[sign] = BranchStats(count=b.count, mean=b.mean,
                                         variance=b.variance)
        pred = theory.mixed_crosstalk_theory(rule.f_s, rule.f_a, rule.lam, n, p)
        theory_var = pred.variance
        theory_kurt = None
        theory_branch_means = (pred.mean_plus, pred.mean_minus)
    else:
        f = rule.f
        if rule.kind == "seqnet" or f.kind == "identity":
            from .rules import InteractionFunction
            f = InteractionFunction.poly(1)
        theory_var = theory.crosstalk_variance_theory(f, n) * (p - 1)
        theory_kurt = theory.crosstalk_kurtosis_theory(f, n, p)
    return CrosstalkStats(
        rule=rule.label(), n_neurons=n, n_patterns=p, n_samples=n_samples,
        mean=acc.mean, variance=acc.variance, excess_kurtosis=acc.excess_kurtosis,
        theory_variance=theory_var, theory_excess_kurtosis=theory_kurt,
        hist_counts=counts, hist_edges=edges,
        branches=branches, theory_branch_means=theory_branch_means)


def bias_sweep(rules: Sequence[RuleConfig], n: int, epsilons: Sequence[float],
               proto: CapacityProtocolConfig, seed: int,
               kind: str = theory.TRANSITION,
               n_workers: Optional[int] = None) -> dict:
    """Capacity of each rule under biased patterns, per correlation strength.

    Returns {(rule_label, eps): CapacityEstimate}.
    """
    out = {}
    for ri, rule in enumerate(rules):
        for ei, eps in enumerate(epsilons):
            dist = PatternDistribution("biased", eps=float(eps))
            prefix = (_BIAS_TAG, ri, ei,
                      _TRANSITION_TAG if kind == theory.TRANSITION else _SEQUENCE_TAG)
            out[(rule.label(), float(eps))] = _estimate_capacity(
                rule, n, proto, seed, kind, prefix, dist, n_workers)
    return out


@dataclass
class DwellAnalysis:
    """Trajectory segmentation by the best-aligned pattern."""

    segments: list            # [(pattern index, dwell length)], gaps dropped
    order_correct: bool       # consecutive segments advance by +1 mod P
    uniform_dwell: bool       # all interior dwell lengths equal
    lost: bool                # aligned less than half the time
    aligned_fraction: float


def dwell_analysis(trajectory: Trajectory, threshold: float = 0.9) -> DwellAnalysis:
    """Segment a trajectory into per-pattern dwells.

    A timestep is aligned when its best overlap reaches the threshold.
    Adjacent segments of the same pattern separated only by unaligned steps
    are merged (their gap steps are not counted as dwell time).
    """
    overlaps = trajectory.overlaps
    t_total, p = overlaps.shape
    best = np.argmax(overlaps, axis=1)
    aligned = overlaps[np.arange(t_total), best] >= threshold
    segments: list[list[int]] = []
    for t in range(t_total):
        if not aligned[t]:
            continue
        mu = int(best[t])
        if segments and segments[-1][0] == mu:
            segments[-1][1] += 1  # contiguous, or same pattern across a dip
        else:
            segments.append([mu, 1])
    merged = [(mu, length) for mu, length in segments]
    aligned_fraction = float(np.count_nonzero(aligned)) / t_total
    lost = aligned_fraction < 0.5
    order_correct = (not lost and len(merged) >= 2 and all(
        (merged[k + 1][0] - merged[k][0]) % p == 1 for k in range(len(merged) - 1)))
    interior = [length for _, length in merged[1:-1]]
    uniform = len(interior) > 0 and len(set(interior)) == 1
    return DwellAnalysis(segments=merged, order_correct=order_correct,
                         uniform_dwell=uniform, lost=lost,
                         aligned_fraction=aligned_fraction)
