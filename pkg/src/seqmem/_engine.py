"""Batched one-step checkers for the capacity protocols.

For a stored sequence, checking "does one update map every pattern to its
successor" only needs the pattern Gram matrix: starting from state xi^mu, the
agreement of the state with pattern nu is G[nu, mu], and excluding neuron i
shifts it by -xi_i^nu xi_i^mu.  So the interaction function takes one of two
values per (nu, mu) pair and the whole map check becomes a few (N x P) x
(P x b) matrix products over source blocks b.

float32 is used throughout: agreement counts are exact integers well inside
float32 range, and the couple-of-ulp wobble on the interaction sums is far
below the crosstalk scale that decides transitions.

A serial whole-sequence walk halts at its first wrong transition and visits
exact patterns until then, so "the walk makes no error" is the same event as
"every one-step transition is correct".  Both protocols therefore share this
checker; the sequence protocol just scans source blocks in sequence order.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import pseudoinverse_psd
from .patterns import PatternSet, overlap_matrix
from .rules import InteractionFunction, RuleConfig

_TARGET_BLOCK_ELEMS = 4_000_000


def _auto_block(p: int) -> int:
    return max(16, min(p, _TARGET_BLOCK_ELEMS // max(p, 1)))


def _tables_f32(f: InteractionFunction, g: np.ndarray, n: int,
                numerator: bool) -> tuple[np.ndarray, np.ndarray]:
    """Two-value interaction tables on an agreement block (see rules module)."""
    if f.kind == "exp":
        return np.exp(g - n), np.exp(g - n + np.float32(2.0))
    if numerator and f.kind == "poly" and f.degree * math.log(n) > 60.0:
        numerator = False  # n^d would leave float32 range; signs are unchanged
    up, dn = g - np.float32(1.0), g + np.float32(1.0)
    if not numerator:
        scale = np.float32(1.0 / (n - 1))
        up, dn = up * scale, dn * scale
    if f.kind == "poly":
        return up ** f.degree, dn ** f.degree
    return up, dn


def check_pattern_map(ps: PatternSet, rule: RuleConfig,
                      block: int | None = None) -> bool:
    """True if one update maps every stored pattern to its required image.

    The required image is the successor pattern for transition rules and the
    pattern itself for the autoassociative ones.  Aborts on the first block
    that contains an error, scanning blocks in pattern order.
    """
    return _pattern_map(ps, rule, block, count=False) == 0


def count_pattern_map_failures(ps: PatternSet, rule: RuleConfig,
                               block: int | None = None) -> int:
    """Number of stored patterns whose one-step image has any bit error."""
    return _pattern_map(ps, rule, block, count=True)


def _block_plan(p: int, block: int | None, count: bool) -> list[tuple[int, int]]:
    """Source-index ranges to scan: geometric growth so that rounds far above
    capacity (errors in the first few sources) abort after a cheap first block."""
    cap = block or _auto_block(p)
    spans = []
    lo, b = 0, (cap if count else min(64, cap))
    while lo < p:
        hi = min(lo + b, p)
        spans.append((lo, hi))
        lo, b = hi, min(b * 4, cap)
    return spans


def _pattern_map(ps: PatternSet, rule: RuleConfig,
                 block: int | None, count: bool) -> int:
    n, p = ps.n_neurons, ps.n_patterns
    f32 = ps.bipolar_f32
    bits = ps.bipolar > 0  # (P, N) bool, True = +1
    failures = 0

    kind = rule.kind
    if kind == "mixednet" and rule.tau < 1:
        raise ValueError("tau must be >= 1")

    nxt_f32 = pair_f32 = None
    if kind in ("seqnet", "densenet", "mixednet", "gpi"):
        nxt_f32 = np.roll(f32, -1, axis=0)
        next_bits = np.roll(bits, -1, axis=0)
    if kind in ("seqnet", "densenet", "mixednet"):
        pair_f32 = f32 * nxt_f32
    if kind == "gpi":
        o = overlap_matrix(ps)
        o_pinv = pseudoinverse_psd(o, rule.gpi_tol)
        decorrelated = (o_pinv @ o).astype(np.float32)

    for lo, hi in _block_plan(p, block, count):
        src = f32[lo:hi]  # (b, N)
        if kind == "gpi":
            fv = np.asarray(
                rule.f.apply(decorrelated[:, lo:hi].astype(np.float64), n),
                dtype=np.float32)
            h = nxt_f32.T @ fv
            expected = next_bits[lo:hi]
        else:
            g = f32 @ src.T  # (P, b) exact agreement counts
            if kind in ("seqnet", "densenet"):
                f = rule.f if kind == "densenet" else InteractionFunction.identity()
                fp, fm = _tables_f32(f, g, n, numerator=True)
                c = np.float32(0.5) * (fp + fm)
                d = np.float32(0.5) * (fp - fm)
                h = nxt_f32.T @ c + src.T * (pair_f32.T @ d)
                expected = next_bits[lo:hi]
            elif kind in ("hopfield", "mhn"):
                fp, fm = _tables_f32(rule.f, g, n, numerator=True)
                c = np.float32(0.5) * (fp + fm)
                d = np.float32(0.5) * (fp - fm)
                h = f32.T @ c + src.T * d.sum(axis=0)[None, :]
                expected = bits[lo:hi]
            elif kind == "mixednet":
                # Transition check: the network has dwelt at the source
                # pattern, so the smoothed state equals the state and both
                # interaction arguments coincide (the tau = 1 analysis form).
                fsp, fsm = _tables_f32(rule.f_s, g, n, numerator=False)
                fap, fam = _tables_f32(rule.f_a, g, n, numerator=False)
                lam = np.float32(rule.lam)
                cs = np.float32(0.5) * (fsp + fsm)
                ds = np.float32(0.5) * (fsp - fsm)
                ca = np.float32(0.5) * (fap + fam)
                da = np.float32(0.5) * (fap - fam)
                h = (f32.T @ cs + src.T * ds.sum(axis=0)[None, :]
                     + lam * (nxt_f32.T @ ca + src.T * (pair_f32.T @ da)))
                expected = next_bits[lo:hi]
            else:
                raise ValueError(f"no batched checker for rule kind {kind!r}")
        predicted = h >= 0  # sgn(0) = +1
        wrong = predicted != expected.T
        if count:
            failures += int(np.count_nonzero(wrong.any(axis=0)))
        elif wrong.any():
            return 1
    return failures
