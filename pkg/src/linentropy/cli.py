"""Command-line entry point: ``linentropy <subcommand> ...``.

Exit status is 0 on success, 1 for invalid input or usage, 2 for runtime
failures.  Each run writes a ``<out>.manifest.json`` next to its output.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .charfn import assumption_profile
from .errors import ValidationError
from .estimator import BandwidthSchedule, bandwidth, estimate, estimate_binned, estimate_naive
from .experiments import (
    ExperimentConfig,
    bias_sweep,
    clt_check,
    load_config,
    long_run_variance,
    rate_check_small_gamma,
    renyi_clt_check,
)
from .kernels import KERNEL_NAMES, get_kernel
from .linear_process import (
    ExplicitCoefficients,
    LinearProcessSpec,
    NormalLaw,
    SeriesSample,
    load_spec,
    simulate,
)
from .seeding import derive_seed

logger = logging.getLogger("linentropy")

DEFAULT_SEED = 42


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; usage errors are validation errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _write_json(path: Path, obj: Any) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def write_manifest(command: str, config: dict[str, Any], seed: int | None, started: str,
                   outputs: list[Path], out: Path) -> Path:
    mpath = manifest_path(out)
    missing = [str(p) for p in outputs if not Path(p).exists()]
    if missing:
        raise RuntimeError(f"outputs missing before manifest write: {missing}")
    manifest = {
        "subcommand": command,
        "config": config,
        "version": __version__,
        "seed": seed,
        "started": started,
        "finished": _now(),
        "outputs": [str(p) for p in outputs] + [str(mpath)],
    }
    _write_json(mpath, manifest)
    return mpath


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def _schedule_from_args(args) -> BandwidthSchedule:
    if args.h is not None:
        if args.schedule is not None:
            raise ValidationError("give either --h or --schedule, not both")
        return BandwidthSchedule.explicit(args.h)
    if args.schedule == "corollary":
        if args.gamma is None:
            raise ValidationError("--schedule corollary needs --gamma")
        return BandwidthSchedule.corollary(args.gamma, args.scale)
    if args.schedule == "power":
        if args.exponent is None:
            raise ValidationError("--schedule power needs --exponent")
        return BandwidthSchedule.power(args.exponent, args.scale)
    raise ValidationError("a bandwidth is required: --h or --schedule")


def cmd_simulate(args) -> tuple[dict, list[Path]]:
    spec = load_spec(args.spec)
    seed = DEFAULT_SEED if args.seed is None else args.seed
    sample = simulate(spec, args.n, seed, validate=not args.no_validate)
    paths = sample.to_csv(args.out)
    print(f"wrote {args.n} values to {args.out}")
    return {"spec": spec.to_dict(), "n": args.n, "seed": seed}, list(paths)


def cmd_estimate(args) -> tuple[dict, list[Path]]:
    sample = SeriesSample.from_csv(args.input)
    schedule = _schedule_from_args(args)
    h = bandwidth(schedule, sample.n)
    res = estimate(sample, args.kernel, h, args.path, args.bins)
    _write_json(args.out, res.to_dict())
    print(f"t_n = {res.t_n!r}  h = {res.h_used!r}  renyi = {res.renyi!r}")
    cfg = {"input": str(args.input), "kernel": args.kernel, "schedule": schedule.to_dict(),
           "path": args.path, "bins": args.bins}
    return cfg, [args.out]


def cmd_check_assumptions(args) -> tuple[dict, list[Path]]:
    spec = load_spec(args.spec)
    prof = assumption_profile(spec, args.gamma, args.kernel)
    _write_json(args.out, prof.to_dict())
    rows = [
        ("A1 coefficients", "holds" if prof.a1_ok else "fails", "; ".join(prof.a1_violations) or "-"),
        ("A2 cf regularity", "holds" if prof.a2_holds else "fails", f"empirical c_gamma = {prof.a2_constant:.6g}"),
        ("A3 integrability", f"variant {prof.a3_variant}", f"integral = {prof.a3_integral:.6g}"),
    ]
    print(f"gamma = {prof.gamma}")
    for name, verdict, detail in rows:
        print(f"  {name:<18}{verdict:<12}{detail}")
    return {"spec": spec.to_dict(), "gamma": args.gamma, "kernel": args.kernel}, [args.out]


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None and args.seed != cfg.master_seed:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "master_seed": args.seed})
    return cfg


def _experiment(runner):
    def cmd(args) -> tuple[dict, list[Path]]:
        cfg = _config(args)
        kwargs = {"threads": args.threads}
        if getattr(args, "n", None) is not None:
            kwargs["n"] = args.n
        report = runner(cfg, **kwargs)
        paths = report.write(args.out)
        _summarize(report)
        return cfg.to_dict(), paths
    return cmd


def _summarize(report) -> None:
    for row in report.per_n:
        print(f"n={row['n']:>7d}  mean={row['mean']:.6f}  se={row['se']:.2e}  bias={row['bias']:+.2e}")
    if report.fit is not None:
        print(f"slope {report.fit.slope:.3f} +/- {report.fit.stderr:.3f} (predicted {report.predicted_exponent})")
    elif report.fit_omitted:
        print(f"fit omitted: {report.fit_omitted}")
    if report.clt is not None:
        c = report.clt
        print(f"KS D={c.ks_statistic:.4f} p={c.p_value:.4f}  skew={c.skewness:.3f}  "
              f"kurt={c.excess_kurtosis:.3f}  var ratio={c.variance_ratio:.3f}")
    if report.rate is not None:
        print(f"note: {report.rate.note}")


def cmd_variance(args) -> tuple[dict, list[Path]]:
    if (args.config is None) == (args.spec is None):
        raise ValidationError("give exactly one of --config or --spec")
    if args.config is not None:
        cfg = _config(args)
        spec, seed, n_long = cfg.spec, cfg.master_seed, cfg.n_long
    else:
        spec = load_spec(args.spec)
        seed, n_long = (DEFAULT_SEED if args.seed is None else args.seed), 1_000_000
    if args.n_long is not None:
        n_long = args.n_long
    v = long_run_variance(spec, n_long, derive_seed(seed, "long_run_variance"),
                          method=args.method, validate=not args.no_validate)
    _write_json(args.out, v.to_dict())
    print(f"sigma2_hat = {v.sigma2_hat!r}  (se {v.standard_error:.3g}, {v.method}, window {v.window})")
    return {"spec": spec.to_dict(), "n_long": n_long, "method": args.method, "seed": seed}, [args.out]


def default_bench_spec() -> LinearProcessSpec:
    return LinearProcessSpec(ExplicitCoefficients((1.0, 0.5, 0.25)), NormalLaw(1.0))


def cmd_bench(args) -> tuple[dict, list[Path]]:
    if args.n < 1000:
        raise ValidationError("bench needs n >= 1000")
    spec = load_spec(args.spec) if args.spec else default_bench_spec()
    seed = DEFAULT_SEED if args.seed is None else args.seed
    kernel = get_kernel(args.kernel)
    sample = simulate(spec, args.n, derive_seed(seed, "bench"))
    binned = estimate_binned(sample, kernel, args.h, args.bins)
    naive = estimate_naive(sample, kernel, args.h)
    rel = abs(binned.t_n - naive.t_n) / abs(naive.t_n)
    table = {
        "n": args.n,
        "kernel": kernel.name,
        "h": args.h,
        "bins": binned.bin_count,
        "naive_t_n": naive.t_n,
        "binned_t_n": binned.t_n,
        "relative_difference": rel,
        "naive_seconds": naive.elapsed,
        "binned_seconds": binned.elapsed,
        "speedup": naive.elapsed / binned.elapsed if binned.elapsed > 0 else None,
        "passed": rel <= 1e-3,
    }
    print(f"{'path':<8}{'t_n':>22}{'seconds':>12}")
    print(f"{'naive':<8}{naive.t_n:>22.15g}{naive.elapsed:>12.4f}")
    print(f"{'binned':<8}{binned.t_n:>22.15g}{binned.elapsed:>12.4f}")
    print(f"relative difference {rel:.3e}  speedup {table['speedup']:.1f}x")
    outputs = []
    if args.out is not None:
        outputs.append(_write_json(args.out, table))
    if rel > 1e-3:
        raise RuntimeError(f"binned and naive disagree: relative difference {rel:.3e} > 1e-3")
    cfg = {"spec": spec.to_dict(), "n": args.n, "kernel": kernel.name, "h": args.h, "bins": args.bins}
    return cfg, outputs


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="linentropy", description="Quadratic functional and Renyi entropy estimation for linear processes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    def common(sp, out_required=True):
        sp.add_argument("--seed", type=int, default=None, help=f"master seed (default {DEFAULT_SEED})")
        sp.add_argument("--out", type=Path, required=out_required, help="output file")

    sp = sub.add_parser("simulate", help="simulate a linear process path to CSV")
    sp.add_argument("--spec", type=Path, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--no-validate", action="store_true", help="skip the coefficient checks")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="estimate the quadratic functional from a CSV sample")
    sp.add_argument("--input", type=Path, required=True)
    sp.add_argument("--kernel", default="gaussian", choices=KERNEL_NAMES)
    sp.add_argument("--h", type=float)
    sp.add_argument("--schedule", choices=("corollary", "power"))
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--exponent", type=float)
    sp.add_argument("--scale", type=float, default=1.0)
    sp.add_argument("--path", choices=("naive", "binned"), default="naive")
    sp.add_argument("--bins", type=int)
    common(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("check-assumptions", help="run the coefficient and innovation checks")
    sp.add_argument("--spec", type=Path, required=True)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--kernel", default="gaussian", choices=KERNEL_NAMES)
    common(sp)
    sp.set_defaults(func=cmd_check_assumptions)

    experiments = {
        "bias-sweep": (bias_sweep, "bias of T_n over the n grid with a log-log slope fit"),
        "clt": (clt_check, "normality of the standardized T_n"),
        "renyi-clt": (renyi_clt_check, "normality of the standardized Renyi plug-in"),
        "rate-check": (rate_check_small_gamma, "median error rate for a declared small gamma"),
    }
    for name, (runner, help_) in experiments.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, required=True)
        sp.add_argument("--threads", type=int, default=1)
        if name in ("clt", "renyi-clt"):
            sp.add_argument("--n", type=int, help="sample size (default: last of n_grid)")
        common(sp)
        sp.set_defaults(func=_experiment(runner))

    sp = sub.add_parser("variance", help="long-run variance of f(X_i) along one long path")
    sp.add_argument("--config", type=Path)
    sp.add_argument("--spec", type=Path)
    sp.add_argument("--n-long", type=int)
    sp.add_argument("--method", choices=("batch-means", "autocovariance"), default="batch-means")
    sp.add_argument("--no-validate", action="store_true", help="skip the coefficient checks")
    common(sp)
    sp.set_defaults(func=cmd_variance)

    sp = sub.add_parser("bench", help="time naive against binned estimation")
    sp.add_argument("--n", type=int, default=20000)
    sp.add_argument("--kernel", default="gaussian", choices=KERNEL_NAMES)
    sp.add_argument("--h", type=float, required=True)
    sp.add_argument("--bins", type=int)
    sp.add_argument("--spec", type=Path)
    common(sp, out_required=False)
    sp.set_defaults(func=cmd_bench)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = _now()
    t0 = time.perf_counter()
    try:
        config, outputs = args.func(args)
        out = args.out if args.out is not None else Path(f"{args.command}.json")
        seed = config.get("master_seed", config.get("seed")) if isinstance(config, dict) else None
        write_manifest(args.command, config, seed, started, outputs, out)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    logger.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
    return 0


def main() -> None:
    sys.exit(run())
