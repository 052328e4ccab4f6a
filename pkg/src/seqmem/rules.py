"""Synchronous update rules for sequence recall.

Covers the plain temporally-asymmetric rule (SeqNet), its nonlinear
generalization (DenseNet), the autoassociative baselines (Hopfield / MHN),
the mixed symmetric + asymmetric rule with a temporal kernel (MixedNet, with
the TAN as its linear special case), the generalized-pseudoinverse transition
rule, and the equivalent two-layer visible/hidden formulation.

Conventions shared by every rule:

* sgn(0) := +1.  Ties are possible for even N - 1, and a fixed convention
  keeps runs reproducible.
* Self-exclusion (the sum over j != i) applies to SeqNet, DenseNet,
  Hopfield/MHN and MixedNet.  The GPI rule and the two-layer form use
  full-divisor overlaps with no exclusion; the source equations are written
  that way and the asymmetry is kept deliberately.
* The exponential interaction is evaluated in integer form: with h the
  mismatch count inside the (excluded) sum, (N-1)(m-1) = -2h, so f = e^(-2h)
  exactly.  No catastrophic cancellation and no overflow.
* For polynomial interactions the per-neuron decision reduces to signs of
  sums of exact small integers, so outcomes are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .patterns import PatternSet, StateVector, agreements, overlap_all, pack_bipolar

_EXP_ARG_MAX = 700.0  # exp() overflow guard for pseudoinverse-decorrelated args


@dataclass(frozen=True)
class InteractionFunction:
    """Separation nonlinearity applied to overlaps: identity, x^d, or e^((N-1)(x-1))."""

    kind: str = "identity"  # "identity" | "poly" | "exp"
    degree: int = 1

    def __post_init__(self):
        if self.kind not in ("identity", "poly", "exp"):
            raise ValueError(f"unknown interaction kind {self.kind!r}")
        if self.kind == "poly" and self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")

    @classmethod
    def identity(cls) -> "InteractionFunction":
        return cls("identity")

    @classmethod
    def poly(cls, degree: int) -> "InteractionFunction":
        return cls("poly", degree)

    @classmethod
    def exponential(cls) -> "InteractionFunction":
        return cls("exp")

    @classmethod
    def parse(cls, text: str) -> "InteractionFunction":
        """Parse 'identity', 'poly:D', or 'exp' (CLI flag syntax)."""
        text = text.strip().lower()
        if text == "identity":
            return cls.identity()
        if text == "exp":
            return cls.exponential()
        if text.startswith("poly:"):
            return cls.poly(int(text.split(":", 1)[1]))
        raise ValueError(f"cannot parse interaction function {text!r}")

    @property
    def name(self) -> str:
        return f"poly:{self.degree}" if self.kind == "poly" else self.kind

    def apply(self, x: np.ndarray, n_neurons: int) -> np.ndarray:
        """Evaluate f on overlap values (the exponential needs N for its scale)."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "identity":
            return x
        if self.kind == "poly":
            return x ** self.degree
        return np.exp(np.minimum((n_neurons - 1) * (x - 1.0), _EXP_ARG_MAX))


@dataclass(frozen=True)
class TemporalKernel:
    """Weights for the running average over the last tau states.

    The window covers taps rho = 0 .. tau-1 (current state included) and the
    weights sum to one; while fewer states exist the weights are renormalized
    over what is available.
    """

    kind: str = "uniform"  # "uniform" | "exp_decay"
    rate: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "exp_decay"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "exp_decay" and self.rate <= 0.0:
            raise ValueError("decay rate must be positive")

    def weights(self, n_taps: int) -> np.ndarray:
        if n_taps < 1:
            raise ValueError("need at least one tap")
        if self.kind == "uniform":
            return np.full(n_taps, 1.0 / n_taps)
        w = np.exp(-self.rate * np.arange(n_taps, dtype=np.float64))
        return w / w.sum()


@dataclass(frozen=True)
class RuleConfig:
    """Which update rule to run, plus its parameters.

    ``tan`` is accepted as shorthand for the linear MixedNet (identity
    interactions on both terms).
    """

    kind: str = "densenet"
    f: InteractionFunction = field(default_factory=InteractionFunction.identity)
    f_s: Optional[InteractionFunction] = None
    f_a: Optional[InteractionFunction] = None
    lam: float = 2.5
    tau: int = 1
    kernel: TemporalKernel = field(default_factory=TemporalKernel)
    gpi_tol: float = 1e-10

    _KINDS = ("seqnet", "densenet", "hopfield", "mhn", "mixednet", "tan", "gpi")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.kind == "tan":
            object.__setattr__(self, "kind", "mixednet")
            object.__setattr__(self, "f_s", InteractionFunction.identity())
            object.__setattr__(self, "f_a", InteractionFunction.identity())
        if self.kind == "hopfield":
            object.__setattr__(self, "f", InteractionFunction.identity())
        if self.kind == "mixednet":
            if self.f_s is None:
                object.__setattr__(self, "f_s", self.f)
            if self.f_a is None:
                object.__setattr__(self, "f_a", self.f)
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if not 0.0 < self.gpi_tol <= 1e-6:
            raise ValueError("gpi_tol must lie in (0, 1e-6]")

    def label(self) -> str:
        if self.kind in ("seqnet", "hopfield"):
            return self.kind
        if self.kind == "mixednet":
            return (f"mixednet(fs={self.f_s.name},fa={self.f_a.name},"
                    f"lam={self.lam:g},tau={self.tau})")
        return f"{self.kind}({self.f.name})"


def sign_bipolar(x: np.ndarray) -> np.ndarray:
    """sgn with the fixed tie convention sgn(0) = +1, as int8 in {-1,+1}."""
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


def _pair_tables(f: InteractionFunction, a: np.ndarray, n: int,
                 numerator: bool) -> tuple[np.ndarray, np.ndarray]:
    """f at the two possible excluded overlaps per pattern.

    ``a`` holds the full agreement counts sum_j xi_j S_j.  Excluding neuron i
    shifts the numerator by -xi_i S_i, so f(m_i) takes one of two values per
    pattern: f_plus when xi_i = S_i and f_minus when they differ.  With
    ``numerator`` the common positive denominator (N-1)^d is dropped, which
    keeps polynomial values as exact integers.
    """
    a = np.asarray(a, dtype=np.float64)
    if f.kind == "exp":
        # (N-1)(m-1) = a - xi*S - (N-1); mismatch form e^(-2h).
        return np.exp(a - n), np.exp(a - n + 2.0)
    if numerator and f.kind == "poly" and f.degree * math.log(n) > 600.0:
        numerator = False  # n^d would leave float64 range; signs are unchanged
    up, dn = a - 1.0, a + 1.0
    if not numerator:
        up, dn = up / (n - 1), dn / (n - 1)
    if f.kind == "poly":
        return up ** f.degree, dn ** f.degree
    return up, dn


def _next_matrix(ps: PatternSet) -> np.ndarray:
    """xi^(mu+1) as a float64 (P, N) matrix (row mu holds the next pattern)."""
    return np.roll(ps.bipolar, -1, axis=0).astype(np.float64)


def seqnet_update(state: StateVector, ps: PatternSet) -> StateVector:
    """One step of the linear temporally-asymmetric rule, in exact integers."""
    a = agreements(ps, state)
    bip = ps.bipolar.astype(np.int64)
    s = state.bipolar.astype(np.int64)
    pair_sum = (ps.bipolar * np.roll(ps.bipolar, -1, axis=0)).astype(np.int64).sum(axis=0)
    h = bip.T @ np.roll(a, 1) - s * pair_sum
    return StateVector(state.n_neurons, pack_bipolar(sign_bipolar(h)))


def densenet_update(state: StateVector, ps: PatternSet, f: InteractionFunction,
                    self_exclusion: bool = True) -> StateVector:
    """One step of the nonlinear transition rule sgn(sum_mu xi^(mu+1) f(m^mu)).

    With ``self_exclusion=False`` overlaps run over all neurons with divisor
    N, which is the form realized exactly by the two-layer network.
    """
    n = ps.n_neurons
    if not self_exclusion:
        s = state.bipolar.astype(np.float64)
        m = (ps.bipolar.astype(np.float64) @ s) / n
        fv = f.apply(m, n)
        h = _next_matrix(ps).T @ fv
        return StateVector(n, pack_bipolar(sign_bipolar(h)))
    a = agreements(ps, state)
    f_plus, f_minus = _pair_tables(f, a, n, numerator=True)
    c = 0.5 * (f_plus + f_minus)
    d = 0.5 * (f_plus - f_minus)
    bip = ps.bipolar.astype(np.float64)
    pair = (ps.bipolar * np.roll(ps.bipolar, -1, axis=0)).astype(np.float64)
    s = state.bipolar.astype(np.float64)
    h = bip.T @ np.roll(c, 1) + s * (pair.T @ d)
    return StateVector(n, pack_bipolar(sign_bipolar(h)))


def hopfield_update(state: StateVector, ps: PatternSet,
                    f: Optional[InteractionFunction] = None) -> StateVector:
    """Autoassociative update sgn(sum_mu xi^mu f(m^mu)); identity f is classic."""
    if f is None:
        f = InteractionFunction.identity()
    n = ps.n_neurons
    a = agreements(ps, state)
    f_plus, f_minus = _pair_tables(f, a, n, numerator=True)
    c = 0.5 * (f_plus + f_minus)
    d = 0.5 * (f_plus - f_minus)
    s = state.bipolar.astype(np.float64)
    # xi^nu * (xi^nu S_i) = S_i, so the correction collapses to a scalar.
    h = ps.bipolar.astype(np.float64).T @ c + s * d.sum()
    return StateVector(n, pack_bipolar(sign_bipolar(h)))


def _smoothed_state(state: StateVector, kernel: TemporalKernel, tau: int) -> np.ndarray:
    """Kernel-weighted average over the current state and its history."""
    taps = [state.bipolar.astype(np.float64)]
    for past in state.history[: tau - 1]:
        taps.append(np.unpackbits(past, count=state.n_neurons, bitorder="little")
                    .astype(np.float64) * 2.0 - 1.0)
    w = kernel.weights(len(taps))
    out = taps[0] * w[0]
    for weight, vec in zip(w[1:], taps[1:]):
        out += weight * vec
    return out


def mixednet_update(state: StateVector, ps: PatternSet, cfg: RuleConfig,
                    self_exclusion: bool = True) -> StateVector:
    """One step of the mixed rule: a symmetric hold term plus a delayed push.

    The hold term sees the instantaneous overlaps, the push term sees overlaps
    of the kernel-smoothed state.  The returned state carries the history ring
    needed for the next step (up to tau - 1 past states).
    """
    if cfg.kind != "mixednet":
        raise ValueError("mixednet_update needs a mixednet RuleConfig")
    n = ps.n_neurons
    f_s, f_a, lam = cfg.f_s, cfg.f_a, cfg.lam
    s = state.bipolar.astype(np.float64)
    if cfg.tau == 1:
        s_bar = s
    else:
        s_bar = _smoothed_state(state, cfg.kernel, cfg.tau)

    if not self_exclusion:
        bip = ps.bipolar.astype(np.float64)
        m = (bip @ s) / n
        m_bar = m if s_bar is s else (bip @ s_bar) / n
        if f_s == f_a and s_bar is s:
            combined = bip + lam * np.roll(bip, -1, axis=0)
            h = combined.T @ f_s.apply(m, n)
        else:
            h = bip.T @ f_s.apply(m, n) + lam * (_next_matrix(ps).T @ f_a.apply(m_bar, n))
    else:
        a = agreements(ps, state)
        fs_plus, fs_minus = _pair_tables(f_s, a, n, numerator=False)
        c_s = 0.5 * (fs_plus + fs_minus)
        d_s = 0.5 * (fs_plus - fs_minus)
        bip = ps.bipolar.astype(np.float64)
        sym = bip.T @ c_s + s * d_s.sum()
        a_bar = bip @ s_bar
        m_bar = (a_bar[:, None] - bip * s_bar[None, :]) / (n - 1)
        asym = np.einsum("pn,pn->n", np.roll(bip, -1, axis=0), f_a.apply(m_bar, n))
        h = sym + lam * asym

    if cfg.tau == 1:
        new_history = ()
    else:
        new_history = (state.packed.copy(),) + state.history[: cfg.tau - 2]
    return StateVector(n, pack_bipolar(sign_bipolar(h)), history=new_history)


def gpi_update(state: StateVector, ps: PatternSet, f: InteractionFunction,
               o_pinv: np.ndarray) -> StateVector:
    """Generalized pseudoinverse transition step.

    Overlaps here use the full divisor N with no self-exclusion; the
    pseudoinverse of the pattern Gram matrix decorrelates them before the
    interaction function is applied.
    """
    if o_pinv.shape != (ps.n_patterns, ps.n_patterns):
        raise ValueError("pseudoinverse shape does not match the pattern count")
    m = overlap_all(ps, state)
    decorrelated = o_pinv @ m
    fv = f.apply(decorrelated, ps.n_neurons)
    h = _next_matrix(ps).T @ fv
    return StateVector(ps.n_neurons, pack_bipolar(sign_bipolar(h)))


@dataclass(frozen=True)
class TwoLayerWeights:
    """Visible->hidden and hidden->visible weights of the bipartite form.

    ``w`` holds xi/N columns, ``m`` the (possibly mixed) output weights.  The
    exact bipolar patterns are kept alongside so the update can evaluate
    sum_j xi_j v_j / N in that order, which reproduces the direct rule bit for
    bit (summing xi_j/N terms directly would round differently).
    """

    w: np.ndarray
    m: np.ndarray
    n_neurons: int
    mixed: bool
    lam: float
    patterns: PatternSet


def build_two_layer(ps: PatternSet, cfg: RuleConfig) -> TwoLayerWeights:
    """Construct the two-layer weights for a DenseNet- or MixedNet-style rule."""
    bip = ps.bipolar.astype(np.float64)
    nxt = np.roll(bip, -1, axis=0)
    if cfg.kind == "mixednet":
        m = bip + cfg.lam * nxt
        mixed = True
    elif cfg.kind in ("densenet", "seqnet", "gpi"):
        m = nxt
        mixed = False
    else:
        raise ValueError(f"no two-layer construction for rule kind {cfg.kind!r}")
    return TwoLayerWeights(w=bip.T / ps.n_neurons, m=m, n_neurons=ps.n_neurons,
                           mixed=mixed, lam=cfg.lam, patterns=ps)


def two_layer_update(v: StateVector, weights: TwoLayerWeights,
                     f: InteractionFunction) -> StateVector:
    """Hidden pass h = f(W^T v) then visible pass v' = sgn(M^T h)."""
    n = weights.n_neurons
    bip = weights.patterns.bipolar.astype(np.float64)
    hidden = f.apply((bip @ v.bipolar.astype(np.float64)) / n, n)
    h = weights.m.T @ hidden
    return StateVector(n, pack_bipolar(sign_bipolar(h)))


@dataclass
class Trajectory:
    """A recorded run: states over time plus the full overlap traces m^mu(t)."""

    states: list
    overlaps: np.ndarray  # (steps + 1, P), full-divisor overlaps

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    def repeated_state_steps(self) -> list[int]:
        """Timesteps t whose update was a no-op (S(t+1) = S(t)), fixed points."""
        return [t for t in range(self.n_steps)
                if np.array_equal(self.states[t].packed, self.states[t + 1].packed)]


def make_pinv(ps: PatternSet, tol_rel: float = 1e-10) -> np.ndarray:
    """Pseudoinverse of the pattern Gram matrix (helper for the GPI rule)."""
    from .numerics import pseudoinverse_psd
    from .patterns import overlap_matrix
    return pseudoinverse_psd(overlap_matrix(ps), tol_rel=tol_rel)


def run_sequence(initial: StateVector, ps: PatternSet, cfg: RuleConfig,
                 steps: int) -> Trajectory:
    """Iterate a rule for ``steps`` updates, recording every overlap trace."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if cfg.kind == "gpi":
        o_pinv = make_pinv(ps, cfg.gpi_tol)

    def advance(s: StateVector) -> StateVector:
        if cfg.kind == "seqnet":
            return seqnet_update(s, ps)
        if cfg.kind == "densenet":
            return densenet_update(s, ps, cfg.f)
        if cfg.kind in ("hopfield", "mhn"):
            return hopfield_update(s, ps, cfg.f)
        if cfg.kind == "mixednet":
            return mixednet_update(s, ps, cfg)
        if cfg.kind == "gpi":
            return gpi_update(s, ps, cfg.f, o_pinv)
        raise ValueError(f"cannot run rule kind {cfg.kind!r}")

    states = [initial]
    overlaps = np.empty((steps + 1, ps.n_patterns), dtype=np.float64)
    overlaps[0] = overlap_all(ps, initial)
    for t in range(steps):
        states.append(advance(states[-1]))
        overlaps[t + 1] = overlap_all(ps, states[-1])
    return Trajectory(states=states, overlaps=overlaps)
