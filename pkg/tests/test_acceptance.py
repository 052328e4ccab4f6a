"""Acceptance suite: each numbered test pins one exit criterion verbatim.

These run the full experiment protocols (100 sequences x 20 repeats for the
capacity searches), so the whole module takes tens of minutes on one core.
Each test prints an `ACCEPTANCE <id>: PASS/FAIL` line with its measurements
(visible with -s or -rA).

Known-red criteria: the transition arms of criterion 1 and all of criterion
2 fail by construction of the zero-error search protocol.  A round passes
only if all 100*N*P transition bits are clean, which pins the stopping
point at an effective per-bit tolerance around 0.01/(N*P).  That sits far
below the asymptotic regime the closed-form capacities describe at these
sizes (they drop the log of the trial count against log N), so the
transition arms measure ~0.39x of the formula; it also makes the
transition and sequence protocols statistically identical events, so their
measured ratio concentrates near 1, not d + 1.  The sequence arms of
criterion 1 pass (the all-patterns union is exactly what the protocol
realizes), and criterion 3's fitted slope sits right at its 0.85 band edge.
"""

import math
import os
from pathlib import Path

import numpy as np
import pytest

from seqmem import theory
from seqmem.datasets import build_digit_sequence, load_mnist_images, load_mnist_labels
from seqmem._engine import count_pattern_map_failures
from seqmem.harness import (
    CapacityProtocolConfig,
    bias_sweep,
    dwell_analysis,
    estimate_sequence_capacity,
    estimate_transition_capacity,
    sample_crosstalk,
)
from seqmem.numerics import (
    double_factorial,
    gaussian_tail,
    moments,
    pseudoinverse_psd,
)
from seqmem.patterns import (
    PatternDistribution,
    StateVector,
    generate_patterns,
    overlap_matrix,
)
from seqmem.rules import (
    InteractionFunction as IF,
    RuleConfig,
    build_two_layer,
    densenet_update,
    gpi_update,
    make_pinv,
    run_sequence,
    two_layer_update,
)

pytestmark = pytest.mark.slow

SEED = 20230607
PROTO = CapacityProtocolConfig()  # protocol defaults: 100 sequences, 20 repeats
D2_SIZES = (100, 200, 300)
D2_TOLERANCE = {100: 1.6, 200: 1.44, 300: 1.3}  # 200 interpolated geometrically


def report(criterion, ok: bool, detail: str) -> str:
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line, flush=True)
    return line


@pytest.fixture(scope="module")
def d2_estimates():
    rule = RuleConfig("densenet", f=IF.poly(2))
    out = {}
    for n in D2_SIZES:
        out[(n, theory.TRANSITION)] = estimate_transition_capacity(
            rule, n, PROTO, SEED, n_workers=1)
        out[(n, theory.SEQUENCE)] = estimate_sequence_capacity(
            rule, n, PROTO, SEED, n_workers=1)
    return out


@pytest.mark.parametrize("n", D2_SIZES)
@pytest.mark.parametrize("kind", [theory.TRANSITION, theory.SEQUENCE])
def test_criterion_1_polynomial_capacity(d2_estimates, n, kind):
    est = d2_estimates[(n, kind)]
    predicted = theory.poly_densenet_capacity(n, 2, kind)
    ratio = est.mean / predicted
    tol = D2_TOLERANCE[n]
    ok = 1.0 / tol <= ratio <= tol
    line = report(f"1[{kind} N={n}]", ok,
                  f"measured {est.mean:.1f} vs theory {predicted:.1f} "
                  f"(ratio {ratio:.3f}, tolerance x//{tol})")
    assert ok, line


def test_criterion_2_capacity_ratio(d2_estimates):
    t = d2_estimates[(300, theory.TRANSITION)].mean
    s = d2_estimates[(300, theory.SEQUENCE)].mean
    ratio = t / s
    ok = abs(ratio - 3.0) <= 0.6
    line = report(2, ok, f"transition/sequence = {t:.1f}/{s:.1f} = {ratio:.2f}, "
                         f"required 3.0 +- 0.6")
    assert ok, line


def test_criterion_3_seqnet_linear_scaling():
    rule = RuleConfig("seqnet")
    sizes = (250, 500, 1000)
    means = [estimate_transition_capacity(rule, n, PROTO, SEED, n_workers=1).mean
             for n in sizes]
    slope = float(np.polyfit(np.log(sizes), np.log(means), 1)[0])
    ok = abs(slope - 1.0) <= 0.15
    line = report(3, ok, f"capacities {['%.1f' % m for m in means]} -> "
                         f"log-log slope {slope:.3f}, required 1.0 +- 0.15")
    assert ok, line


def test_criterion_4_exponential_crosstalk_moments():
    rule = RuleConfig("densenet", f=IF.exponential())
    all_ok = True
    details = []
    for n in (9, 11, 13):
        stats = sample_crosstalk(rule, n, 2, 1_000_000, seed=SEED + n)
        var_th = theory.BETA ** (-(n - 1))
        se = stats.variance * math.sqrt((stats.excess_kurtosis + 2.0)
                                        / stats.n_samples)
        var_ok = abs(stats.variance - var_th) <= 3 * se
        kurt_th = (math.cosh(4.0) / math.cosh(2.0) ** 2) ** (n - 1) - 3.0
        kurt_ok = abs(stats.excess_kurtosis - kurt_th) <= 0.10 * kurt_th
        all_ok = all_ok and var_ok and kurt_ok
        details.append(
            f"N={n}: var {stats.variance:.3e} vs {var_th:.3e} "
            f"({'ok' if var_ok else 'off'}), kurt {stats.excess_kurtosis:.1f} "
            f"vs {kurt_th:.1f} ({'ok' if kurt_ok else 'off'})")
    line = report(4, all_ok, "; ".join(details))
    assert all_ok, line


def test_criterion_5_exponential_sequence_below_gaussian_theory():
    rule = RuleConfig("densenet", f=IF.exponential())
    est = estimate_sequence_capacity(rule, 14, PROTO, SEED, n_workers=1)
    predicted = theory.exp_densenet_capacity(14, theory.SEQUENCE)
    sem = est.std / math.sqrt(len(est.capacities))
    ok = est.mean + 3 * sem < predicted
    line = report(5, ok, f"measured {est.mean:.1f} (std {est.std:.1f}) vs "
                         f"Gaussian theory {predicted:.1f} (one-sided)")
    assert ok, line


def test_criterion_6_gpi_exact_recall():
    failures = 0
    for seed in range(100):
        ps = generate_patterns(PatternDistribution(seed=seed), 100, 99)
        eigenvalues = np.linalg.eigvalsh(overlap_matrix(ps))
        assert eigenvalues.min() > 1e-8, "full-rank check failed"
        pinv = make_pinv(ps)
        for f in (IF.poly(1), IF.poly(2), IF.poly(3), IF.exponential()):
            state = ps.state(0)
            for mu in range(99):
                state = gpi_update(state, ps, f, pinv)
                if state != ps.state(mu + 1):
                    failures += 1
                    break
    ok = failures == 0
    line = report(6, ok, f"{failures} failed recalls over 100 seeds x 4 "
                         f"interaction functions (N=100, P=99)")
    assert ok, line


def test_criterion_7_mixednet_behavior_trio():
    ps = generate_patterns(PatternDistribution(seed=SEED), 100, 40)
    analyses = {}
    for d in (1, 2, 10):
        cfg = RuleConfig("mixednet", f_s=IF.poly(d), f_a=IF.poly(d),
                         lam=2.5, tau=5)
        traj = run_sequence(ps.state(0), ps, cfg, 260)
        analyses[d] = dwell_analysis(traj)
    lost_ok = analyses[1].lost
    order_ok = analyses[2].order_correct and not analyses[2].uniform_dwell
    a10 = analyses[10]
    last_dwell = {}
    for mu, length in a10.segments[:-1]:  # final segment may be truncated
        last_dwell[mu] = length
    exact5 = sum(1 for length in last_dwell.values() if length == 5)
    timing_ok = a10.order_correct and exact5 >= 38
    ok = lost_ok and order_ok and timing_ok
    line = report(7, ok, f"d=1 lost={analyses[1].lost}; d=2 order="
                         f"{analyses[2].order_correct} uniform="
                         f"{analyses[2].uniform_dwell}; d=10 order="
                         f"{a10.order_correct}, dwell==5 for {exact5}/40")
    assert ok, line


def test_criterion_8_mixednet_crosstalk_bimodality():
    cfg = RuleConfig("mixednet", f_s=IF.poly(3), f_a=IF.poly(3), lam=2.5)
    stats = sample_crosstalk(cfg, 100, 1000, 100_000, seed=SEED)
    plus, minus = stats.branches[1], stats.branches[-1]
    means_ok = abs(plus.mean - 1.0) <= 0.05 and abs(minus.mean + 1.0) <= 0.05
    # two-mode histogram separation on the pooled samples
    centers = 0.5 * (stats.hist_edges[:-1] + stats.hist_edges[1:])
    counts = stats.hist_counts
    neg_peak = counts[centers < 0].max()
    pos_peak = counts[centers > 0].max()
    lo = int(np.flatnonzero(counts == neg_peak)[0])
    hi = int(np.flatnonzero(counts == pos_peak)[-1])
    valley = counts[lo:hi + 1].min()
    bimodal_ok = valley <= 0.25 * min(neg_peak, pos_peak)
    ok = means_ok and bimodal_ok
    line = report(8, ok, f"branch means {plus.mean:+.3f}/{minus.mean:+.3f}, "
                         f"peaks {neg_peak}/{pos_peak}, valley {valley}")
    assert ok, line


def test_criterion_9_two_layer_equivalence():
    rng = np.random.default_rng(SEED)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(4, 129))
        p = int(rng.integers(2, 65))
        d = int(rng.integers(1, 4))
        ps = generate_patterns(
            PatternDistribution(seed=int(rng.integers(1 << 31))), n, p)
        f = IF.poly(d)
        weights = build_two_layer(ps, RuleConfig("densenet", f=f))
        a = b = StateVector.from_bipolar(rng.choice([-1, 1], size=n).astype(np.int8))
        for _ in range(20):
            a = two_layer_update(a, weights, f)
            b = densenet_update(b, ps, f, self_exclusion=False)
            if a != b:
                mismatches += 1
                break
    ok = mismatches == 0
    line = report(9, ok, f"{mismatches} trajectory mismatches over 1000 trials")
    assert ok, line


def test_criterion_10_bias_sweep_ordering():
    plain = RuleConfig("densenet", f=IF.poly(2))
    gpi = RuleConfig("gpi", f=IF.poly(2))
    grid = (0.0, 0.2, 0.4, 0.6)
    table = bias_sweep([plain, gpi], 100, grid, PROTO, SEED, n_workers=1)
    plain_means = [table[(plain.label(), e)].mean for e in grid]
    gpi_means = [table[(gpi.label(), e)].mean for e in grid]
    monotone_ok = (all(a >= b for a, b in zip(plain_means, plain_means[1:]))
                   and all(a >= b for a, b in zip(gpi_means, gpi_means[1:])))
    dominance_ok = all(g >= p for g, p in
                       zip(gpi_means[1:], plain_means[1:]))  # every eps > 0
    at04 = grid.index(0.4)
    sep = (table[(gpi.label(), 0.4)], table[(plain.label(), 0.4)])
    sems = [e.std / math.sqrt(len(e.capacities)) for e in sep]
    strict_ok = gpi_means[at04] > plain_means[at04] + 3 * sum(sems)
    ok = monotone_ok and dominance_ok and strict_ok
    line = report(10, ok,
                  f"plain {['%.0f' % m for m in plain_means]}, "
                  f"gpi {['%.0f' % m for m in gpi_means]} over eps {list(grid)}")
    assert ok, line


def _find_mnist():
    candidates = []
    env = os.environ.get("SEQMEM_MNIST_DIR")
    if env:
        candidates.append(Path(env))
    candidates += [Path("data"), Path(__file__).resolve().parent.parent / "data"]
    for base in candidates:
        for suffix in ("", ".gz"):
            images = base / f"train-images-idx3-ubyte{suffix}"
            labels = base / f"train-labels-idx1-ubyte{suffix}"
            if images.exists() and labels.exists():
                return images, labels
    return None


def test_criterion_11_mnist_recall():
    found = _find_mnist()
    if found is None:
        report(11, True, "SKIPPED - MNIST IDX files absent "
                         "(set SEQMEM_MNIST_DIR or place them under ./data)")
        pytest.skip("MNIST dataset absent; criterion skipped, not failed")
    images_path, labels_path = found
    images = load_mnist_images(images_path)
    labels = load_mnist_labels(labels_path)
    seq = build_digit_sequence(images, labels, n_blocks=1000, seed=SEED)
    ps = seq.patterns
    exp_rule = RuleConfig("densenet", f=IF.exponential())
    exp_failures = count_pattern_map_failures(ps, exp_rule)
    poly_rule = RuleConfig("densenet", f=IF.poly(5))
    poly_failures = count_pattern_map_failures(ps, poly_rule)
    traj = run_sequence(ps.state(0), ps, poly_rule, 305)
    stuck = bool(traj.repeated_state_steps())
    ok = exp_failures == 0 and poly_failures > 0 and stuck
    line = report(11, ok, f"exp accuracy {1 - exp_failures / ps.n_patterns:.4%}, "
                          f"poly:5 accuracy {1 - poly_failures / ps.n_patterns:.4%}, "
                          f"poly:5 metastable={stuck}")
    assert ok, line


def test_criterion_12_theory_unit_suite():
    checks = []
    checks.append(("beta", abs(theory.BETA - 1.96403) <= 1e-5))
    checks.append(("gamma", theory.gamma_factor(2, 2, 2.5) == 26.75))
    checks.append(("dfact", double_factorial(-1) == 1
                   and double_factorial(5) == 15
                   and double_factorial(7) == 105))
    checks.append(("H0", float(gaussian_tail(0.0)) == 0.5))
    rng = np.random.default_rng(SEED)
    x = rng.choice([-1.0, 1.0], size=(50, 100))
    o = x @ x.T / 100.0
    residual = (np.linalg.norm(o @ pseudoinverse_psd(o) @ o - o)
                / np.linalg.norm(o))
    checks.append(("moore-penrose", residual < 1e-8))
    _, _, kurt = moments(rng.choice([-1.0, 1.0], size=1_000_000))
    checks.append(("rademacher-kurtosis", abs(kurt + 2.0) <= 0.01))
    argmax_ok = all(
        abs(theory.max_degree_profile(n).argmax_degree - (n - 1) / 2) <= 1
        for n in range(10, 201, 5))
    checks.append(("max-degree", argmax_ok))
    ok = all(flag for _, flag in checks)
    line = report(12, ok, ", ".join(f"{name}={'ok' if flag else 'BAD'}"
                                    for name, flag in checks))
    assert ok, line
