"""Small dense linear-algebra and statistics kernels.

Everything in here is pure and stateless except MomentAccumulator, which is a
single-writer streaming accumulator that can be merged across workers.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc


class DegenerateVarianceError(ValueError):
    """Raised when a kurtosis is requested for a zero-variance stream."""


def pseudoinverse_psd(o: np.ndarray, tol_rel: float = 1e-10) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric positive-semidefinite matrix.

    Eigenvalues at or below ``tol_rel * lambda_max`` are treated as exact
    zeros and left out of the inversion.  Raises ValueError on non-symmetric
    input or on eigenvalues that are negative beyond numerical noise.
    """
    o = np.asarray(o, dtype=np.float64)
    if o.ndim != 2 or o.shape[0] != o.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {o.shape}")
    scale = max(1.0, float(np.abs(o).max(initial=0.0)))
    if np.abs(o - o.T).max(initial=0.0) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    w, v = np.linalg.eigh(o)
    norm = float(np.abs(w).max(initial=0.0))
    if norm == 0.0:
        return np.zeros_like(o)
    if w.min() < -1e-10 * norm:
        raise ValueError(f"matrix is not PSD: min eigenvalue {w.min():g}")
    w_max = float(w.max())
    inv = np.where(w > tol_rel * w_max, 1.0, 0.0)
    with np.errstate(divide="ignore"):
        inv = np.where(inv > 0.0, 1.0 / np.where(w > 0, w, 1.0), 0.0)
    pinv = (v * inv) @ v.T
    return (pinv + pinv.T) / 2.0


class MomentAccumulator:
    """Streaming central moments up to order four (Pebay update formulas).

    Merging two accumulators gives the same result as accumulating the
    concatenated stream, which is what makes per-worker accumulation safe.
    """

    __slots__ = ("count", "mean", "m2", "m3", "m4")

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.m3 = 0.0
        self.m4 = 0.0

    def push(self, x: float) -> None:
        n1 = self.count
        self.count += 1
        n = self.count
        delta = x - self.mean
        delta_n = delta / n
        delta_n2 = delta_n * delta_n
        term1 = delta * delta_n * n1
        self.mean += delta_n
        self.m4 += (
            term1 * delta_n2 * (n * n - 3 * n + 3)
            + 6 * delta_n2 * self.m2
            - 4 * delta_n * self.m3
        )
        self.m3 += term1 * delta_n * (n - 2) - 3 * delta_n * self.m2
        self.m2 += term1

    def push_many(self, values: np.ndarray) -> None:
        """Accumulate a whole array at once (vectorized, then merged in)."""
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size == 0:
            return
        other = MomentAccumulator()
        other.count = int(values.size)
        other.mean = float(values.mean())
        d = values - other.mean
        d2 = d * d
        other.m2 = float(d2.sum())
        other.m3 = float((d2 * d).sum())
        other.m4 = float((d2 * d2).sum())
        self.merge(other)

    def merge(self, other: "MomentAccumulator") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count = other.count
            self.mean = other.mean
            self.m2, self.m3, self.m4 = other.m2, other.m3, other.m4
            return
        na, nb = self.count, other.count
        n = na + nb
        delta = other.mean - self.mean
        delta2 = delta * delta
        m2 = self.m2 + other.m2 + delta2 * na * nb / n
        m3 = (
            self.m3
            + other.m3
            + delta ** 3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n
        )
        m4 = (
            self.m4
            + other.m4
            + delta2 * delta2 * na * nb * (na * na - na * nb + nb * nb) / (n ** 3)
            + 6.0 * delta2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n
        )
        self.mean += delta * nb / n
        self.count = n
        self.m2, self.m3, self.m4 = m2, m3, m4

    @property
    def variance(self) -> float:
        """Unbiased sample variance."""
        if self.count < 2:
            raise ValueError("variance needs at least two samples")
        return self.m2 / (self.count - 1)

    @property
    def excess_kurtosis(self) -> float:
        """Sample excess kurtosis m4/m2^2 - 3 (biased central moments)."""
        if self.count < 4:
            raise ValueError("kurtosis needs at least four samples")
        if self.m2 <= 0.0:
            raise DegenerateVarianceError("kurtosis undefined for zero variance")
        n = self.count
        return n * self.m4 / (self.m2 * self.m2) - 3.0


def moments(values: np.ndarray) -> tuple[float, float, float]:
    """Return (mean, unbiased variance, sample excess kurtosis) of a stream."""
    acc = MomentAccumulator()
    acc.push_many(values)
    return acc.mean, acc.variance, acc.excess_kurtosis


def gaussian_tail(x):
    """Upper tail of the standard normal, H(x) = erfc(x / sqrt(2)) / 2."""
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / math.sqrt(2.0))


def gaussian_tail_inv(p: float) -> float:
    """Inverse of gaussian_tail on p in (0, 0.5], by bracketed root finding."""
    if not 0.0 < p <= 0.5:
        raise ValueError(f"gaussian_tail_inv needs p in (0, 0.5], got {p}")
    if p == 0.5:
        return 0.0
    # H(40) underflows to 0 < p, so [0, 40] always brackets the root.
    return float(brentq(lambda x: float(gaussian_tail(x)) - p, 0.0, 40.0,
                        xtol=1e-14, rtol=4 * np.finfo(float).eps))


def double_factorial(k: int) -> int:
    """(k)!! for odd k >= -1, with (-1)!! = 1."""
    if k < -1 or k % 2 == 0:
        raise ValueError(f"double factorial defined here for odd k >= -1, got {k}")
    out = 1
    for j in range(1, k + 1, 2):
        out *= j
    return out


def kahan_sum(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Compensated summation along one axis (Neumaier's variant).

    Used for crosstalk sums whose terms span many orders of magnitude; the
    correction term also survives when the running total itself is the
    smaller operand.
    """
    a = np.asarray(a, dtype=np.float64)
    a = np.moveaxis(a, axis, -1)
    total = np.zeros(a.shape[:-1], dtype=np.float64)
    comp = np.zeros_like(total)
    for k in range(a.shape[-1]):
        x = a[..., k]
        t = total + x
        comp += np.where(np.abs(total) >= np.abs(x),
                         (total - t) + x, (x - t) + total)
        total = t
    return total + comp
