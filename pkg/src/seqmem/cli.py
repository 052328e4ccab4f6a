"""Command-line interface: experiments and theory queries with file outputs.

Every output file embeds the resolved configuration, the seed, and the
package version; re-running a file's embedded config reproduces it byte for
byte.  Results go to --out-dir (or $SEQMEM_OUT_DIR, default ./results).
No plotting here; the CSV/JSON schemas are documented in docs/.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, datasets, theory
from ._engine import count_pattern_map_failures
from .harness import (
    CapacityProtocolConfig,
    bias_sweep,
    dwell_analysis,
    estimate_sequence_capacity,
    estimate_transition_capacity,
    sample_crosstalk,
)
from .patterns import PatternDistribution, PatternSet, generate_patterns, save_patterns
from .rules import InteractionFunction, RuleConfig, TemporalKernel, run_sequence

_EXIT_OK = 0
_EXIT_FAILURE = 1
_EXIT_USAGE = 2


def _rule_from_args(args) -> RuleConfig:
    kernel = TemporalKernel()
    if args.kernel:
        if args.kernel.startswith("expdecay:"):
            kernel = TemporalKernel("exp_decay", rate=float(args.kernel.split(":", 1)[1]))
        elif args.kernel != "uniform":
            raise ValueError(f"unknown kernel spec {args.kernel!r}")
    kwargs = dict(lam=args.lam, tau=args.tau, kernel=kernel)
    if args.rule == "mixednet":
        f_s = InteractionFunction.parse(args.fs) if args.fs else None
        f_a = InteractionFunction.parse(args.fa) if args.fa else None
        return RuleConfig("mixednet", f=InteractionFunction.parse(args.f),
                          f_s=f_s, f_a=f_a, **kwargs)
    return RuleConfig(args.rule, f=InteractionFunction.parse(args.f), **kwargs)


def parse_rule_spec(spec: str) -> RuleConfig:
    """Parse compact rule specs like 'densenet:poly:2', 'gpi:exp', 'seqnet'."""
    parts = spec.strip().split(":")
    kind = parts[0]
    if len(parts) == 1:
        return RuleConfig(kind)
    return RuleConfig(kind, f=InteractionFunction.parse(":".join(parts[1:])))


def _meta(args, skip=("config", "out_dir", "func", "command")) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items())
           if k not in skip and not callable(v)}
    return {"command": args.command, "config": cfg, "version": f"seqmem-{__version__}"}


def _out_dir(args) -> Path:
    out = args.out_dir or os.environ.get("SEQMEM_OUT_DIR") or "results"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() else "-" for ch in text).strip("-")


def cmd_capacity(args, parser) -> int:
    if args.n is None:
        parser.error("capacity requires --n")
    rule = _rule_from_args(args)
    proto = CapacityProtocolConfig(
        n_sequences=args.sequences, n_repeats=args.repeats, decay=args.decay,
        p0_multiplier=args.p0_multiplier, p0_override=args.p0)
    dist = (PatternDistribution("biased", eps=args.eps) if args.eps > 0
            else PatternDistribution())
    kinds = [args.kind] if args.kind != "both" else [theory.TRANSITION, theory.SEQUENCE]
    out = _out_dir(args)
    for kind in kinds:
        estimate = (estimate_transition_capacity if kind == theory.TRANSITION
                    else estimate_sequence_capacity)(
            rule, args.n, proto, args.seed, dist=dist, n_workers=args.threads)
        stem = f"capacity_{_slug(rule.label())}_{args.n}_{kind}"
        _write_json(out / f"{stem}.json",
                    {"meta": _meta(args), "result": estimate.to_dict()})
        _write_csv(out / f"{stem}.csv", ["repeat", "capacity"],
                   list(enumerate(int(c) for c in estimate.capacities)))
        print(f"{kind} capacity N={args.n} {rule.label()}: "
              f"mean={estimate.mean:.1f} std={estimate.std:.1f} -> {out / stem}.json")
    return _EXIT_OK


def cmd_crosstalk(args, parser) -> int:
    if args.n is None or args.p is None:
        parser.error("crosstalk requires --n and --p")
    rule = _rule_from_args(args)
    stats = sample_crosstalk(rule, args.n, args.p, args.samples, args.seed)
    out = _out_dir(args)
    stem = f"crosstalk_{_slug(rule.label())}_{args.n}_{args.p}"
    _write_json(out / f"{stem}.json", {"meta": _meta(args), "result": stats.to_dict()})
    rows = [(float(stats.hist_edges[i]), float(stats.hist_edges[i + 1]),
             int(stats.hist_counts[i])) for i in range(len(stats.hist_counts))]
    _write_csv(out / f"{stem}.csv", ["bin_lo", "bin_hi", "count"], rows)
    print(f"crosstalk N={args.n} P={args.p}: var={stats.variance:.4g} "
          f"(theory {stats.theory_variance:.4g}), kurtosis={stats.excess_kurtosis:.4g}"
          f" -> {out / stem}.json")
    return _EXIT_OK


def cmd_trace(args, parser) -> int:
    if args.n is None or args.p is None:
        parser.error("trace requires --n and --p")
    rule = _rule_from_args(args)
    dist = PatternDistribution(seed=args.seed)
    ps = generate_patterns(dist, args.n, args.p)
    traj = run_sequence(ps.state(args.start), ps, rule, args.steps)
    analysis = dwell_analysis(traj, threshold=args.dwell_threshold)
    out = _out_dir(args)
    stem = f"trace_{_slug(rule.label())}_{args.n}_{args.p}"
    rows = [(t, mu, float(traj.overlaps[t, mu]))
            for t in range(traj.overlaps.shape[0])
            for mu in range(traj.overlaps.shape[1])]
    _write_csv(out / f"{stem}.csv", ["t", "mu", "overlap"], rows)
    _write_json(out / f"{stem}.json", {
        "meta": _meta(args),
        "result": {
            "segments": [[int(mu), int(length)] for mu, length in analysis.segments],
            "order_correct": analysis.order_correct,
            "uniform_dwell": analysis.uniform_dwell,
            "lost": analysis.lost,
            "aligned_fraction": analysis.aligned_fraction,
            "repeated_state_steps": traj.repeated_state_steps()[:100],
        },
    })
    print(f"trace {rule.label()}: segments={len(analysis.segments)} "
          f"order={analysis.order_correct} lost={analysis.lost} -> {out / stem}.json")
    return _EXIT_OK


def cmd_bias_sweep(args, parser) -> int:
    if args.n is None:
        parser.error("bias-sweep requires --n")
    rules = [parse_rule_spec(s) for s in args.rules.split(",") if s.strip()]
    if not rules:
        parser.error("bias-sweep requires --rules")
    eps_grid = [float(e) for e in args.eps_grid.split(",")]
    proto = CapacityProtocolConfig(
        n_sequences=args.sequences, n_repeats=args.repeats, decay=args.decay,
        p0_multiplier=args.p0_multiplier, p0_override=args.p0)
    table = bias_sweep(rules, args.n, eps_grid, proto, args.seed,
                       kind=args.kind, n_workers=args.threads)
    out = _out_dir(args)
    stem = f"bias_sweep_{args.n}_{args.kind}"
    arms = [{"rule": label, "eps": eps, **est.to_dict()}
            for (label, eps), est in table.items()]
    _write_json(out / f"{stem}.json", {"meta": _meta(args), "result": {"arms": arms}})
    rows = [(label, eps, r, int(c))
            for (label, eps), est in table.items()
            for r, c in enumerate(est.capacities)]
    _write_csv(out / f"{stem}.csv", ["rule", "eps", "repeat", "capacity"], rows)
    for (label, eps), est in table.items():
        print(f"{label} eps={eps}: mean={est.mean:.1f} std={est.std:.1f}")
    print(f"-> {out / stem}.json")
    return _EXIT_OK


def cmd_mnist(args, parser) -> int:
    images_path, labels_path = args.images, args.labels
    if args.data_dir and not (images_path and labels_path):
        base = Path(args.data_dir)
        for cand in ("train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"):
            if (base / cand).exists():
                images_path = str(base / cand)
        for cand in ("train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz"):
            if (base / cand).exists():
                labels_path = str(base / cand)
    if not images_path or not labels_path:
        parser.error("mnist requires --images and --labels (or --data-dir)")
    rule = _rule_from_args(args)
    images = datasets.load_mnist_images(images_path)
    labels = datasets.load_mnist_labels(labels_path)
    seq = datasets.build_digit_sequence(images, labels, n_blocks=args.blocks,
                                        seed=args.seed, threshold=args.threshold)
    ps = seq.patterns
    failures = count_pattern_map_failures(ps, rule)
    accuracy = 1.0 - failures / ps.n_patterns

    dump_steps = sorted(int(t) for t in args.dump_steps.split(","))
    steps = max(args.steps, dump_steps[-1])
    traj = run_sequence(ps.state(0), ps, rule, steps)
    repeated = traj.repeated_state_steps()
    exact = [bool(np.array_equal(traj.states[t].packed, ps.packed_row(t % ps.n_patterns)))
             for t in range(steps + 1)]

    out = _out_dir(args)
    stem = f"mnist_{_slug(rule.label())}"
    dumped = np.stack([traj.states[t].bipolar for t in dump_steps])
    save_patterns(PatternSet.from_bipolar(dumped), out / f"{stem}_states.sqmem")
    _write_json(out / f"{stem}.json", {
        "meta": _meta(args),
        "result": {
            "n_patterns": ps.n_patterns,
            "n_neurons": ps.n_neurons,
            "transition_failures": int(failures),
            "transition_accuracy": accuracy,
            "trajectory_exact_fraction": sum(exact) / len(exact),
            "repeated_state_detected": bool(repeated),
            "first_repeated_step": (repeated[0] if repeated else None),
            "dump_steps": dump_steps,
            "state_dump_file": f"{stem}_states.sqmem",
        },
    })
    _write_csv(out / f"{stem}_trajectory.csv", ["t", "exact_match"],
               [(t, int(e)) for t, e in enumerate(exact)])
    print(f"mnist {rule.label()}: transition accuracy {accuracy:.4%} "
          f"({failures} failures), repeated state: {bool(repeated)} "
          f"-> {out / stem}.json")
    return _EXIT_OK


def _theory_value(args, parser):
    f = InteractionFunction.parse(args.f) if args.f else None
    f_s = InteractionFunction.parse(args.fs) if args.fs else None
    f_a = InteractionFunction.parse(args.fa) if args.fa else None
    name = args.formula
    need = lambda cond, what: None if cond else parser.error(
        f"theory formula {name!r} requires {what}")
    if name == "beta":
        return theory.BETA, {}
    if name == "poly_capacity":
        need(args.n and args.d, "--n and --d")
        return (theory.poly_densenet_capacity(args.n, args.d, args.kind),
                {"n": args.n, "d": args.d, "kind": args.kind})
    if name == "exp_capacity":
        need(args.n, "--n")
        return (theory.exp_densenet_capacity(args.n, args.kind),
                {"n": args.n, "kind": args.kind})
    if name == "mixed_poly_capacity":
        need(args.n and args.ds and args.da, "--n, --ds, --da")
        return (theory.mixed_poly_capacity(args.n, args.ds, args.da, args.lam, args.kind),
                {"n": args.n, "d_s": args.ds, "d_a": args.da, "lam": args.lam,
                 "kind": args.kind})
    if name == "mixed_exp_capacity":
        need(args.n, "--n")
        return (theory.mixed_exp_capacity(args.n, args.lam, args.kind),
                {"n": args.n, "lam": args.lam, "kind": args.kind})
    if name == "gamma":
        need(args.ds and args.da, "--ds and --da")
        return (theory.gamma_factor(args.ds, args.da, args.lam),
                {"d_s": args.ds, "d_a": args.da, "lam": args.lam})
    if name == "crosstalk_variance":
        need(args.n and f, "--n and --f")
        return (theory.crosstalk_variance_theory(f, args.n),
                {"n": args.n, "f": f.name})
    if name == "crosstalk_kurtosis":
        need(args.n and args.p and f, "--n, --p and --f")
        return (theory.crosstalk_kurtosis_theory(f, args.n, args.p),
                {"n": args.n, "p": args.p, "f": f.name})
    if name == "bitflip":
        need(args.n and args.p and f, "--n, --p and --f")
        pred = theory.bitflip_probability(f, args.n, args.p)
        return pred.probability, {"n": args.n, "p": args.p, "f": f.name,
                                  "in_regime": pred.in_regime}
    if name == "mixed_bitflip":
        need(args.n and args.p and f_s and f_a, "--n, --p, --fs, --fa")
        pred = theory.mixed_bitflip_probability(f_s, f_a, args.lam, args.n, args.p)
        return pred.probability, {"n": args.n, "p": args.p, "f_s": f_s.name,
                                  "f_a": f_a.name, "lam": args.lam,
                                  "in_regime": pred.in_regime}
    if name == "finite_c":
        need(args.n and args.c is not None and f, "--n, --c and --f")
        return (theory.finite_c_capacity(args.n, args.c, f, args.kind),
                {"n": args.n, "c": args.c, "f": f.name, "kind": args.kind})
    if name == "hoeffding":
        need(args.n and args.p, "--n and --p")
        return theory.hopfield_hoeffding_bound(args.n, args.p), {"n": args.n, "p": args.p}
    if name == "max_degree":
        need(args.n, "--n")
        profile = theory.max_degree_profile(args.n)
        return float(profile.argmax_degree), {"n": args.n}
    parser.error(f"unknown theory formula {name!r}")


def cmd_theory(args, parser) -> int:
    value, inputs = _theory_value(args, parser)
    pred = theory.TheoryPrediction(formula_id=args.formula, inputs=inputs,
                                   value=float(value))
    print(json.dumps(asdict(pred), sort_keys=True))
    return _EXIT_OK


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=0, help="master seed")
    sub.add_argument("--out-dir", default=None, help="output directory "
                     "(default $SEQMEM_OUT_DIR or ./results)")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker processes (default: available parallelism)")
    sub.add_argument("--config", default=None,
                     help="key=value file; command-line flags override it")


def _add_rule_flags(sub):
    sub.add_argument("--rule", default="densenet",
                     choices=["seqnet", "densenet", "hopfield", "mhn",
                              "mixednet", "tan", "gpi"])
    sub.add_argument("--f", default="identity", help="identity | poly:D | exp")
    sub.add_argument("--fs", default=None, help="mixednet hold interaction")
    sub.add_argument("--fa", default=None, help="mixednet push interaction")
    sub.add_argument("--lam", type=float, default=2.5)
    sub.add_argument("--tau", type=int, default=1)
    sub.add_argument("--kernel", default="uniform", help="uniform | expdecay:RATE")


def _add_protocol_flags(sub):
    sub.add_argument("--sequences", type=int, default=100)
    sub.add_argument("--repeats", type=int, default=20)
    sub.add_argument("--decay", type=float, default=0.99)
    sub.add_argument("--p0-multiplier", type=float, default=2.0)
    sub.add_argument("--p0", type=int, default=None, help="override the theory seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqmem",
        description="Sequence associative memory experiments and theory queries.")
    parser.add_argument("--version", action="version",
                        version=f"seqmem {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    cap = subs.add_parser("capacity", help="decaying capacity search")
    _add_rule_flags(cap)
    _add_protocol_flags(cap)
    cap.add_argument("--n", type=int, default=None, help="network size")
    cap.add_argument("--kind", default=theory.TRANSITION,
                     choices=[theory.TRANSITION, theory.SEQUENCE, "both"])
    cap.add_argument("--eps", type=float, default=0.0, help="pattern bias")
    _add_common(cap)
    cap.set_defaults(func=cmd_capacity)

    cross = subs.add_parser("crosstalk", help="Monte Carlo crosstalk moments")
    _add_rule_flags(cross)
    cross.add_argument("--n", type=int, default=None)
    cross.add_argument("--p", type=int, default=None)
    cross.add_argument("--samples", type=int, default=1_000_000)
    _add_common(cross)
    cross.set_defaults(func=cmd_crosstalk)

    trace = subs.add_parser("trace", help="record a recall trajectory")
    _add_rule_flags(trace)
    trace.add_argument("--n", type=int, default=None)
    trace.add_argument("--p", type=int, default=None)
    trace.add_argument("--steps", type=int, default=100)
    trace.add_argument("--start", type=int, default=0)
    trace.add_argument("--dwell-threshold", type=float, default=0.9)
    _add_common(trace)
    trace.set_defaults(func=cmd_trace)

    sweep = subs.add_parser("bias-sweep", help="capacity vs pattern correlation")
    sweep.add_argument("--rules", default="densenet:poly:2,gpi:poly:2",
                       help="comma-separated rule specs, e.g. densenet:poly:2")
    sweep.add_argument("--n", type=int, default=None)
    sweep.add_argument("--eps-grid", default="0,0.2,0.4,0.6")
    sweep.add_argument("--kind", default=theory.TRANSITION,
                       choices=[theory.TRANSITION, theory.SEQUENCE])
    _add_protocol_flags(sweep)
    _add_common(sweep)
    sweep.set_defaults(func=cmd_bias_sweep)

    mnist = subs.add_parser("mnist", help="digit-sequence recall experiment")
    _add_rule_flags(mnist)
    mnist.add_argument("--images", default=None, help="IDX image file (.gz ok)")
    mnist.add_argument("--labels", default=None, help="IDX label file (.gz ok)")
    mnist.add_argument("--data-dir", default=None,
                       help="directory with the canonical MNIST filenames")
    mnist.add_argument("--blocks", type=int, default=1000)
    mnist.add_argument("--threshold", type=int, default=128)
    mnist.add_argument("--steps", type=int, default=305)
    mnist.add_argument("--dump-steps", default="1,102,203,304")
    _add_common(mnist)
    mnist.set_defaults(func=cmd_mnist)

    theo = subs.add_parser("theory", help="evaluate one closed-form prediction")
    theo.add_argument("--formula", required=True)
    theo.add_argument("--n", type=int, default=None)
    theo.add_argument("--d", type=int, default=None)
    theo.add_argument("--ds", type=int, default=None)
    theo.add_argument("--da", type=int, default=None)
    theo.add_argument("--p", type=int, default=None)
    theo.add_argument("--c", type=float, default=None)
    theo.add_argument("--lam", type=float, default=2.5)
    theo.add_argument("--f", default=None)
    theo.add_argument("--fs", default=None)
    theo.add_argument("--fa", default=None)
    theo.add_argument("--kind", default=theory.TRANSITION,
                      choices=[theory.TRANSITION, theory.SEQUENCE])
    _add_common(theo)
    theo.set_defaults(func=cmd_theory)

    return parser


def load_config(path) -> dict:
    """Read a plain key=value config file (blank lines and # comments ok)."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        flags = []
        for key, value in load_config(args.config).items():
            flags.extend([f"--{key.replace('_', '-')}", value])
        at = argv.index(args.command)
        args = parser.parse_args(argv[: at + 1] + flags + argv[at + 1:])
    try:
        return args.func(args, parser)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"seqmem: error: {exc}", file=sys.stderr)
        return _EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
