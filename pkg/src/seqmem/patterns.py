"""Bipolar pattern sequences and network states, bit-packed.

Patterns and states live in {-1, +1}^N.  They are stored with +1 mapped to a
set bit, least-significant bit first, rows padded out to 64-bit word
boundaries so a row can be viewed as little-endian machine words.  All overlap
arithmetic goes through XOR + popcount, so numerators are exact integers.

Pattern indices wrap modulo P: the pattern after the last one is the first
(periodic boundary).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

MAGIC = b"SQMEM1\x00\x00"
_HEADER_BYTES = 16


def row_bytes(n_neurons: int) -> int:
    """Bytes per packed row, padded to a 64-bit word boundary."""
    return 8 * ((n_neurons + 63) // 64)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for one documented substream of a master seed.

    The harness uses one substream per (protocol tag, repeat, round, sequence)
    so results do not depend on scheduling or worker count.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def pack_bipolar(values: np.ndarray) -> np.ndarray:
    """Pack an int array of {-1,+1} values into padded uint8 rows (+1 -> bit 1)."""
    values = np.asarray(values)
    if values.size and not np.isin(values, (-1, 1)).all():
        raise ValueError("bipolar values must be -1 or +1")
    bits = (values > 0).astype(np.uint8)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    pad = row_bytes(values.shape[-1]) - packed.shape[-1]
    if pad:
        packed = np.concatenate(
            [packed, np.zeros(packed.shape[:-1] + (pad,), dtype=np.uint8)], axis=-1
        )
    return packed


def unpack_bipolar(packed: np.ndarray, n_neurons: int) -> np.ndarray:
    """Unpack uint8 rows back to int8 values in {-1,+1}."""
    bits = np.unpackbits(packed, axis=-1, count=n_neurons, bitorder="little")
    return (2 * bits.astype(np.int8) - 1)


def _popcount_rows(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a).sum(axis=-1, dtype=np.int64)


def _get_bit(packed_row: np.ndarray, i: int) -> int:
    return int((packed_row[i >> 3] >> (i & 7)) & 1)


@dataclass(frozen=True)
class PatternDistribution:
    """How to draw pattern components: fair coin, biased coin, or real data."""

    kind: str = "rademacher"  # "rademacher" | "biased" | "from_data"
    eps: float = 0.0          # biased: P(+1) = (1 + eps) / 2, iid per component
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("rademacher", "biased", "from_data"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "biased" and not 0.0 <= self.eps < 1.0:
            # eps = 1 would make every component deterministically +1.
            raise ValueError(f"bias eps must lie in [0, 1), got {self.eps}")


class PatternSet:
    """An immutable ordered set of P bipolar patterns of N neurons each."""

    def __init__(self, packed: np.ndarray, n_neurons: int):
        packed = np.ascontiguousarray(packed, dtype=np.uint8)
        if packed.ndim != 2:
            raise ValueError("packed patterns must be a 2-D array of rows")
        if packed.shape[0] < 2:
            raise ValueError("a sequence needs at least two patterns")
        if packed.shape[1] != row_bytes(n_neurons):
            raise ValueError(
                f"row has {packed.shape[1]} bytes, expected {row_bytes(n_neurons)}"
            )
        if n_neurons % 8:
            mask = np.uint8((0xFF << (n_neurons % 8)) & 0xFF)
            if (packed[:, n_neurons // 8] & mask).any():
                raise ValueError("padding bits past n_neurons must be zero")
        if packed[:, (n_neurons + 7) // 8:].any():
            raise ValueError("padding bytes past n_neurons must be zero")
        packed.setflags(write=False)
        self._packed = packed
        self._n = int(n_neurons)
        self._bipolar: Optional[np.ndarray] = None
        self._f32: Optional[np.ndarray] = None

    @classmethod
    def from_bipolar(cls, values: np.ndarray) -> "PatternSet":
        values = np.asarray(values)
        return cls(pack_bipolar(values), values.shape[1])

    @property
    def n_neurons(self) -> int:
        return self._n

    @property
    def n_patterns(self) -> int:
        return self._packed.shape[0]

    @property
    def packed(self) -> np.ndarray:
        return self._packed

    @property
    def bipolar(self) -> np.ndarray:
        """Patterns as an int8 (P, N) array in {-1,+1} (cached)."""
        if self._bipolar is None:
            b = unpack_bipolar(self._packed, self._n)
            b.setflags(write=False)
            self._bipolar = b
        return self._bipolar

    @property
    def bipolar_f32(self) -> np.ndarray:
        """float32 view of the bipolar patterns, for matrix kernels (cached)."""
        if self._f32 is None:
            f = self.bipolar.astype(np.float32)
            f.setflags(write=False)
            self._f32 = f
        return self._f32

    def packed_row(self, mu: int) -> np.ndarray:
        return self._packed[mu % self.n_patterns]

    def state(self, mu: int) -> "StateVector":
        """The network state equal to pattern mu (indices wrap modulo P)."""
        return StateVector(self._n, self.packed_row(mu).copy())


@dataclass
class StateVector:
    """One bipolar network state, plus a short history for time-averaged rules.

    ``history`` holds packed copies of the most recent past states, newest
    first; it stays empty unless a rule with a temporal kernel maintains it.
    """

    n_neurons: int
    packed: np.ndarray
    history: tuple = ()

    @classmethod
    def from_bipolar(cls, values: np.ndarray) -> "StateVector":
        values = np.asarray(values)
        return cls(values.shape[-1], pack_bipolar(values))

    @property
    def bipolar(self) -> np.ndarray:
        return unpack_bipolar(self.packed, self.n_neurons)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, StateVector)
            and self.n_neurons == other.n_neurons
            and bool(np.array_equal(self.packed, other.packed))
        )


def generate_patterns(
    dist: PatternDistribution, n_neurons: int, n_patterns: int,
    rng: Optional[np.random.Generator] = None,
) -> PatternSet:
    """Draw a pattern sequence; deterministic in (dist.seed, N, P, kind, eps).

    An explicit ``rng`` (a substream) overrides the distribution's seed; the
    harness uses that to give every (repeat, round, sequence) its own stream.
    """
    if n_neurons < 2 or n_patterns < 2:
        raise ValueError("need n_neurons >= 2 and n_patterns >= 2")
    if dist.kind == "from_data":
        raise ValueError("from_data pattern sets are built by the datasets module")
    if rng is None:
        rng = substream(dist.seed)
    if dist.kind == "rademacher":
        bits = rng.integers(0, 2, size=(n_patterns, n_neurons), dtype=np.uint8)
    else:
        p_plus = (1.0 + dist.eps) / 2.0
        bits = (rng.random((n_patterns, n_neurons)) < p_plus).astype(np.uint8)
    values = (2 * bits.astype(np.int8) - 1)
    return PatternSet.from_bipolar(values)


def mismatch_count(state: StateVector, ps: PatternSet, mu: int) -> int:
    """Hamming distance between a state and pattern mu (0 iff equal)."""
    if state.n_neurons != ps.n_neurons:
        raise ValueError("state and pattern lengths differ")
    return int(_popcount_rows(state.packed ^ ps.packed_row(mu)))


def overlap(ps: PatternSet, mu: int, state: StateVector,
            exclude: Optional[int] = None) -> float:
    """Normalized overlap of a state with pattern mu.

    With ``exclude=i`` the sum skips neuron i and divides by N - 1 (the
    self-interaction-free overlap used inside the update rules); otherwise it
    runs over all neurons and divides by N.  Exact up to one final division.
    """
    n = ps.n_neurons
    row = ps.packed_row(mu)
    mism = int(_popcount_rows(state.packed ^ row))
    if exclude is None:
        return (n - 2 * mism) / n
    if not 0 <= exclude < n:
        raise IndexError(f"exclude index {exclude} out of range")
    differ = _get_bit(state.packed, exclude) ^ _get_bit(row, exclude)
    mism -= differ
    return ((n - 1) - 2 * mism) / (n - 1)


def overlap_all(ps: PatternSet, state: StateVector) -> np.ndarray:
    """Full-divisor overlaps of a state with every pattern, as a (P,) vector."""
    return agreements(ps, state) / ps.n_neurons


def agreements(ps: PatternSet, state: StateVector) -> np.ndarray:
    """Signed agreement counts sum_j xi_j^mu S_j for every mu, exact int64."""
    if state.n_neurons != ps.n_neurons:
        raise ValueError(
            f"state has {state.n_neurons} neurons, patterns have {ps.n_neurons}")
    mism = _popcount_rows(ps.packed ^ state.packed[None, :])
    return ps.n_neurons - 2 * mism


def overlap_matrix(ps) -> np.ndarray:
    """Gram matrix O[mu, nu] = (1/N) sum_j xi_j^mu xi_j^nu (symmetric, PSD).

    Accepts a PatternSet or a raw (P, N) bipolar array (the latter allows the
    degenerate single-pattern case).
    """
    if isinstance(ps, PatternSet):
        f, n = ps.bipolar_f32, ps.n_neurons
    else:
        arr = np.asarray(ps)
        if arr.ndim != 2:
            raise ValueError("expected a (P, N) array of bipolar values")
        f, n = arr.astype(np.float32), arr.shape[1]
    g = f @ f.T  # exact: integer-valued entries bounded by N
    return g.astype(np.float64) / n


def save_patterns(ps: PatternSet, path) -> None:
    """Write a pattern set to the packed binary format.

    Layout: 16-byte header (magic ``SQMEM1\\x00\\x00``, then N and P as 32-bit
    little-endian), followed by P row-major packed rows padded to 64-bit words.
    """
    header = MAGIC + np.array([ps.n_neurons, ps.n_patterns], dtype="<u4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(ps.packed.tobytes())


def load_patterns(path) -> PatternSet:
    """Read a pattern set written by save_patterns, validating the header."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER_BYTES)
        if len(header) < _HEADER_BYTES or header[:8] != MAGIC:
            raise ValueError(f"{path}: not a SQMEM1 pattern file")
        n, p = (int(x) for x in np.frombuffer(header[8:], dtype="<u4"))
        body = fh.read()
    expected = p * row_bytes(n)
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} data bytes, got {len(body)}")
    packed = np.frombuffer(body, dtype=np.uint8).reshape(p, row_bytes(n)).copy()
    return PatternSet(packed, n)
