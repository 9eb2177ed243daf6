"""Command line front end.

Subcommands: run (stream one experiment), generate (write a synthetic CSV),
sweep (run a batch of experiments from a JSON file), regret (frozen-boundary
regret accounting), profile (per-step timing across model sizes).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from . import backend as _backend
from .data import DataError
from .harness import (ALGORITHMS, ConfigError, ExperimentConfig, NumericError,
                      RegretOracleConfig, run_regret, run_stream,
                      timing_profile)
from .synth import KINDS, GeneratorSpec, iter_samples

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_run_flags(p, require_source=True):
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--depth", type=int, help="tree depth (fmp/ensemble)")
    p.add_argument("--separators", type=int, help="separator count (sp)")
    p.add_argument("--beta", type=float, help="regressor step size")
    p.add_argument("--eta", type=float, help="separator step size (default: beta)")
    p.add_argument("--eta-combiner", type=float, help="combination step size (default: eta)")
    p.add_argument("--epsilon", type=float, default=None,
                   help="inverse-matrix initialization (default: preset or 0.1)")
    p.add_argument("--epsilon-separators", type=float, default=None,
                   help="separate epsilon for separator matrices")
    p.add_argument("--data", help="CSV file (features..., target)")
    p.add_argument("--synthetic", choices=KINDS, help="named generator stream")
    p.add_argument("--n", type=int, help="sample count (synthetic) or row cap (CSV)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-variance", type=float, default=0.1)
    p.add_argument("--scale", choices=("minmax", "none"), default="minmax")
    p.add_argument("--out", help="output directory")
    p.add_argument("--snapshots", help="comma-separated iterations for checkpoints")
    p.add_argument("--log-every", type=int, default=1)
    p.add_argument("--skip-budget", type=int, default=100)
    p.add_argument("--init", choices=("axis", "random"), default="axis")
    p.add_argument("--resume", help="model checkpoint JSON to resume from")
    p.add_argument("--freeze-separators", action="store_true",
                   help="disable separator training (ablation)")
    p.add_argument("--backend", choices=_backend.VALID, default=None)


def _config_from_args(args) -> ExperimentConfig:
    snapshots = ()
    if getattr(args, "snapshots", None):
        try:
            snapshots = tuple(int(s) for s in args.snapshots.split(","))
        except ValueError:
            raise ConfigError(f"bad --snapshots list {args.snapshots!r}")
    return ExperimentConfig(
        algorithm=args.algo,
        depth=args.depth,
        separators=args.separators,
        beta=args.beta,
        eta=args.eta,
        eta_combiner=args.eta_combiner,
        epsilon=args.epsilon,
        epsilon_separators=args.epsilon_separators,
        data_csv=args.data,
        synthetic=args.synthetic,
        n=args.n,
        seed=args.seed,
        noise_variance=args.noise_variance,
        scale=args.scale,
        out_dir=args.out,
        snapshots=snapshots,
        log_every=args.log_every,
        skip_budget=args.skip_budget,
        init=args.init,
        resume_from=args.resume,
        update_separators=not args.freeze_separators,
        backend=args.backend,
    ).validate()


def _cmd_run(args):
    metrics = run_stream(_config_from_args(args))
    print(json.dumps(metrics.summary(), indent=2, sort_keys=True))
    return 0


def _cmd_generate(args):
    if args.config:
        with open(args.config) as f:
            spec = GeneratorSpec(**json.load(f))
    else:
        if args.kind is None or args.n is None:
            raise ConfigError("generate needs --kind and --n (or --config)")
        spec = GeneratorSpec(args.kind, args.n, args.seed, args.noise_variance)
    out = Path(args.out)
    with open(out, "w") as f:
        cols = ",".join(f"x{i + 1}" for i in range(spec.n_features))
        f.write(f"{cols},y\n")
        for x, yt in iter_samples(spec):
            f.write(",".join(repr(float(v)) for v in x) + f",{repr(float(yt))}\n")
    print(f"wrote {spec.n} samples to {out}")
    return 0


def _cmd_sweep(args):
    with open(args.config) as f:
        spec = json.load(f)
    runs = spec["runs"] if isinstance(spec, dict) else spec
    results = []
    for i, entry in enumerate(runs):
        cfg = ExperimentConfig(**{**entry, "snapshots": tuple(entry.get("snapshots", ()))})
        cfg.validate()
        if cfg.out_dir is None and args.out:
            cfg = dataclasses.replace(cfg, out_dir=str(Path(args.out) / f"run_{i:03d}"))
        metrics = run_stream(cfg)
        results.append({"run": i, "config": dataclasses.asdict(cfg),
                        "metrics": metrics.summary()})
        print(f"run {i}: nae={metrics.summary()['nae_final']!r} "
              f"final_window_mse={metrics.final_window_mse!r}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with open(Path(args.out) / "sweep_results.json", "w") as f:
            json.dump(results, f, indent=2, sort_keys=True)
    return 0


def _cmd_regret(args):
    cfg = _config_from_args(args)
    oracle = RegretOracleConfig(diameter=args.diameter,
                                exp_concavity=args.alpha,
                                grad_bound=args.grad_bound)
    report = run_regret(cfg, oracle)
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with open(Path(args.out) / "regret_report.json", "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
    ok = report["within_bound"] and report["nonincreasing_last_decade"]
    print(f"verdict: {'PASS' if ok else 'FAIL'} "
          f"(max ratio {report['max_ratio']:.3f} vs bound {report['bound']:.3f})")
    return 0


def _cmd_profile(args):
    sizes = [int(s) for s in args.sizes.split(",")]
    backends = ["py", "c"] if args.backend == "both" else [args.backend]
    all_rows = []
    for be in backends:
        try:
            rows = timing_profile(args.algo, sizes, m=args.m, seed=args.seed,
                                  backend=None if be == "auto" else be)
        except ImportError:
            print(f"backend {be!r} unavailable, skipping", file=sys.stderr)
            continue
        all_rows.extend(rows)
    hdr = f"{'algo':>9} {'size':>5} {'m':>3} {'backend':>8} {'us/step':>10} {'ratio':>7}"
    print(hdr)
    for r in all_rows:
        ratio = f"{r['ratio_vs_prev']:.2f}" if r["ratio_vs_prev"] else "-"
        print(f"{r['algorithm']:>9} {r['size']:>5} {r['m']:>3} {r['backend']:>8} "
              f"{r['median_step_us']:>10.2f} {ratio:>7}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with open(Path(args.out) / "profile.json", "w") as f:
            json.dump(all_rows, f, indent=2, sort_keys=True)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="softpart", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"softpart {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="stream one experiment")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("generate", help="write a synthetic stream as CSV")
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-variance", type=float, default=0.1)
    p.add_argument("--config", help="GeneratorSpec fields as JSON")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("sweep", help="run a batch of experiments from JSON")
    p.add_argument("--config", required=True,
                   help='JSON: {"runs": [run-config objects]}')
    p.add_argument("--out", help="directory for per-run outputs and the index")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("regret", help="frozen-boundary regret accounting")
    _add_run_flags(p)
    p.add_argument("--diameter", type=float, required=True, help="A constant")
    p.add_argument("--alpha", type=float, required=True, help="exp-concavity")
    p.add_argument("--grad-bound", type=float, help="G constant (default: measured)")
    p.set_defaults(func=_cmd_regret)

    p = sub.add_parser("profile", help="per-step timing across model sizes")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--sizes", required=True, help="comma-separated depths/counts")
    p.add_argument("--m", type=int, default=2, help="feature dimension")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("auto", "py", "c", "both"), default="auto")
    p.add_argument("--out", help="directory for profile.json")
    p.set_defaults(func=_cmd_profile)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
