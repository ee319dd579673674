"""Monte Carlo harness for the bias rate, the CLTs and the small-gamma rate.

Replication ``r`` at sample size ``n`` simulates with the seed
``derive_seed(master_seed, "replication", n, r)``; every task is therefore
self-contained and the ordered reduction makes reports independent of the
number of worker threads.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import interpolate, stats

from .charfn import (
    AssumptionProfile,
    QuadraticFunctionalOracle,
    assumption_profile,
    density_oracle,
    process_width,
    quadratic_functional_oracle,
)
from .errors import OracleError, ValidationError
from .estimator import BandwidthSchedule, bandwidth, estimate, renyi_from_tn
from .kernels import KernelSpec, get_kernel
from .linear_process import LinearProcessSpec, NormalLaw, effective_truncation, simulate
from .seeding import derive_seed

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("n", "rep", "seed", "h", "t_n", "renyi", "elapsed_ms")
#: Keys that vary between otherwise identical runs.
RUNTIME_KEYS = frozenset({"elapsed_ms", "runtime_seconds", "elapsed", "started", "finished"})


@dataclass(frozen=True)
class ExperimentConfig:
    spec: LinearProcessSpec
    kernel: KernelSpec
    schedule: BandwidthSchedule
    n_grid: tuple[int, ...]
    replications: int
    master_seed: int = 42
    gamma: float = 1.0
    path: str = "naive"
    bins: int | None = None
    n_long: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "kernel", get_kernel(self.kernel))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if not self.n_grid:
            raise ValidationError("n_grid is empty")
        if any(n < 100 for n in self.n_grid):
            raise ValidationError("every n in n_grid must be >= 100")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValidationError("n_grid must be strictly increasing")
        if self.replications < 50:
            raise ValidationError("replications must be >= 50")
        if not (0.0 < self.gamma <= 1.0):
            raise ValidationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.path not in ("naive", "binned"):
            raise ValidationError(f"unknown estimator path {self.path!r}")
        if self.master_seed < 0:
            raise ValidationError("master_seed must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "spec": self.spec.to_dict(),
            "kernel": self.kernel.name,
            "schedule": self.schedule.to_dict(),
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "master_seed": self.master_seed,
            "gamma": self.gamma,
            "path": self.path,
            "bins": self.bins,
            "n_long": self.n_long,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        try:
            return cls(
                spec=LinearProcessSpec.from_dict(d["spec"]),
                kernel=get_kernel(d.get("kernel", "gaussian")),
                schedule=BandwidthSchedule.from_dict(d["schedule"]),
                n_grid=tuple(d["n_grid"]),
                replications=int(d["replications"]),
                master_seed=int(d.get("master_seed", 42)),
                gamma=float(d.get("gamma", 1.0)),
                path=d.get("path", "naive"),
                bins=d.get("bins"),
                n_long=int(d.get("n_long", 1_000_000)),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed experiment config: {exc}") from exc

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


# --------------------------------------------------------------------------
# Replications
# --------------------------------------------------------------------------


def replication_seed(master_seed: int, n: int, rep: int) -> int:
    return derive_seed(master_seed, "replication", n, rep)


def run_replication(config: ExperimentConfig, n: int, rep: int) -> dict[str, Any]:
    t0 = time.perf_counter()
    seed = replication_seed(config.master_seed, n, rep)
    sample = simulate(config.spec, n, seed)
    h = bandwidth(config.schedule, n)
    res = estimate(sample, config.kernel, h, config.path, config.bins)
    return {
        "n": n,
        "rep": rep,
        "seed": seed,
        "h": h,
        "t_n": res.t_n,
        "renyi": res.renyi,
        "elapsed_ms": 1e3 * (time.perf_counter() - t0),
    }


def run_replications(
    config: ExperimentConfig, n: int, threads: int = 1, replications: int | None = None
) -> list[dict[str, Any]]:
    """All replications at ``n``, ordered by replication index."""
    reps = range(config.replications if replications is None else replications)
    if threads <= 1:
        return [run_replication(config, n, r) for r in reps]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: run_replication(config, n, r), reps))


def _t_values(records: list[dict[str, Any]]) -> np.ndarray:
    return np.array([r["t_n"] for r in records], dtype=float)


# --------------------------------------------------------------------------
# Oracles used by the harness
# --------------------------------------------------------------------------


def autocovariances(spec: LinearProcessSpec) -> np.ndarray:
    """``Cov(X_0, X_k)`` for ``k = 0..M`` of the truncated process (finite variance laws)."""
    a = spec.coefficients.head(effective_truncation(spec))
    var = spec.innovations.variance
    if not math.isfinite(var):
        raise ValidationError("innovations have infinite variance")
    return var * np.correlate(a, a, mode="full")[a.size - 1 :]


def expected_tn_gaussian(spec: LinearProcessSpec, h: float, n: int) -> float:
    """Exact ``E T_n(h)`` for Gaussian innovations and the Gaussian kernel.

    ``X_i - X_j`` is centered normal with variance ``v = 2 (c_0 - c_|i-j|)``,
    so ``E K((X_i - X_j)/h) / h`` is the ``N(0, v + h^2)`` density at zero.
    """
    if not isinstance(spec.innovations, NormalLaw):
        raise ValidationError("closed-form mean needs Gaussian innovations")
    c = autocovariances(spec)
    lags = np.arange(1, n, dtype=float)
    v = np.full(n - 1, 2.0 * c[0])
    m = min(c.size - 1, n - 1)
    v[:m] = 2.0 * (c[0] - c[1 : m + 1])
    terms = (n - lags) / np.sqrt(2.0 * math.pi * (v + h * h))
    return 2.0 / (n * (n - 1.0)) * math.fsum(terms.tolist())


# --------------------------------------------------------------------------
# Long-run variance
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VarianceEstimate:
    sigma2_hat: float
    method: str
    window: int
    standard_error: float
    marginal_variance: float
    mean_f: float
    n_long: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def density_at(spec: LinearProcessSpec, x: np.ndarray, *, grid_points: int = 8193,
               grid_halfwidth: float | None = None, max_outside: float = 1e-3) -> np.ndarray:
    """``f(x)`` by cubic interpolation of a density tabulation.

    Points beyond the tabulated range are evaluated directly, but more than a
    fraction ``max_outside`` of them means the grid is too narrow.
    """
    half = 12.0 * process_width(spec) if grid_halfwidth is None else float(grid_halfwidth)
    outside = np.abs(x) > half
    if outside.mean() > max_outside:
        raise ValidationError(
            f"grid too narrow: {outside.mean():.3%} of points beyond +/-{half:.4g}"
        )
    table = density_oracle(spec, np.linspace(-half, half, grid_points))
    fx = interpolate.CubicSpline(table.x, table.f)(x)
    if outside.any():
        fx[outside] = density_oracle(spec, x[outside]).f
    return fx


def _batch_means(y: np.ndarray) -> tuple[float, int, float]:
    b = int(math.isqrt(y.size))
    k = y.size // b
    means = y[: k * b].reshape(k, b).mean(axis=1)
    s2 = b * float(np.var(means, ddof=1))
    return s2, b, s2 * math.sqrt(2.0 / (k - 1))


def _truncated_autocov(y: np.ndarray, window: int) -> tuple[float, float]:
    n = y.size
    d = y - y.mean()
    m = 1 << math.ceil(math.log2(2 * n))
    fd = np.fft.rfft(d, m)
    acov = np.fft.irfft(fd * np.conj(fd), m)[: window + 1] / n
    s2 = max(0.0, float(acov[0] + 2.0 * acov[1:].sum()))
    return s2, s2 * math.sqrt((4.0 * window + 2.0) / n)


def long_run_variance(
    spec: LinearProcessSpec,
    n_long: int = 1_000_000,
    seed: int = 42,
    *,
    method: str = "batch-means",
    window: int | None = None,
    validate: bool = True,
    **grid_kwargs,
) -> VarianceEstimate:
    """Long-run variance of ``f(X_i)`` along one simulated path.

    The CLT variance of ``sqrt(n) T_n`` is four times this value.
    """
    x = simulate(spec, n_long, seed, validate=validate).values
    y = density_at(spec, x, **grid_kwargs)
    if method == "batch-means":
        s2, w, se = _batch_means(y)
    elif method == "autocovariance":
        w = int(round(n_long ** (1.0 / 3.0))) if window is None else int(window)
        s2, se = _truncated_autocov(y, w)
    else:
        raise ValidationError(f"unknown variance method {method!r}")
    return VarianceEstimate(s2, method, w, se, float(np.var(y, ddof=1)), float(y.mean()), n_long)


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    ci_low: float
    ci_high: float
    points: int

    def to_dict(self):
        return asdict(self)


def fit_loglog(n: np.ndarray, y: np.ndarray, level: float = 0.95) -> SlopeFit | None:
    """Least-squares slope of ``log y`` against ``log n``; ``None`` below two points."""
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float)
    if n.size < 2:
        return None
    if np.any(y <= 0.0):
        raise ValidationError("log-log fit needs positive values")
    lx, ly = np.log(n), np.log(y)
    if n.size == 2:
        slope = (ly[1] - ly[0]) / (lx[1] - lx[0])
        return SlopeFit(float(slope), math.nan, float(ly[0] - slope * lx[0]), math.nan, math.nan, 2)
    fit = stats.linregress(lx, ly)
    q = stats.t.ppf(0.5 + level / 2.0, n.size - 2)
    return SlopeFit(
        float(fit.slope), float(fit.stderr), float(fit.intercept),
        float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr), int(n.size),
    )


@dataclass(frozen=True)
class CLTReport:
    kind: str
    n: int
    replications: int
    h: float
    center: float
    scale: float
    sigma2_hat: float
    sigma2_standard_error: float
    ks_statistic: float
    p_value: float
    skewness: float
    excess_kurtosis: float
    variance_ratio: float
    standardized: tuple[float, ...] = field(repr=False)

    def to_dict(self):
        d = asdict(self)
        d["standardized"] = list(self.standardized)
        return d


@dataclass(frozen=True)
class RateReport:
    gamma: float
    predicted_exponent: float
    fit: SlopeFit | None
    median_abs_error: tuple[float, ...]
    note: str

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "predicted_exponent": self.predicted_exponent,
            "fit": None if self.fit is None else self.fit.to_dict(),
            "median_abs_error": list(self.median_abs_error),
            "note": self.note,
        }


@dataclass
class ExperimentReport:
    kind: str
    config: ExperimentConfig
    oracle: QuadraticFunctionalOracle
    records: list[dict[str, Any]]
    per_n: list[dict[str, Any]] = field(default_factory=list)
    fit: SlopeFit | None = None
    fit_omitted: str | None = None
    predicted_exponent: float | None = None
    profile: AssumptionProfile | None = None
    clt: CLTReport | None = None
    rate: RateReport | None = None
    variance: VarianceEstimate | None = None
    runtime_seconds: float = 0.0

    @property
    def sigma2_hat(self) -> float | None:
        return None if self.variance is None else self.variance.sigma2_hat

    def to_dict(self) -> dict[str, Any]:
        return _clean({
            "kind": self.kind,
            "config": self.config.to_dict(),
            "config_fingerprint": self.config.fingerprint(),
            "oracle": self.oracle.to_dict(),
            "per_n": self.per_n,
            "fit": None if self.fit is None else self.fit.to_dict(),
            "fit_omitted": self.fit_omitted,
            "predicted_exponent": self.predicted_exponent,
            "profile": None if self.profile is None else self.profile.to_dict(),
            "clt": None if self.clt is None else self.clt.to_dict(),
            "rate": None if self.rate is None else self.rate.to_dict(),
            "sigma2_hat": self.sigma2_hat,
            "variance": None if self.variance is None else self.variance.to_dict(),
            "replication_count": len(self.records),
            "runtime_seconds": self.runtime_seconds,
        })

    def write(self, json_path: str | Path) -> list[Path]:
        """Write the report JSON and the per-replication CSV next to it."""
        json_path = Path(json_path)
        json_path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        csv_path = json_path.with_suffix(".csv")
        write_records_csv(self.records, csv_path)
        return [json_path, csv_path]


def _clean(obj):
    # JSON has no inf/nan
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_records_csv(records: list[dict[str, Any]], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(["" if r[c] is None else repr(r[c]) for c in CSV_COLUMNS])
    return path


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


def _profile(config: ExperimentConfig) -> AssumptionProfile | None:
    try:
        prof = assumption_profile(config.spec, config.gamma, config.kernel)
    except Exception as exc:  # checks are advisory here
        logger.warning("assumption checks failed to run: %s", exc)
        return None
    if not prof.all_hold:
        logger.warning(
            "assumptions not verified for gamma=%s: A1 %s, A2 %s, A3 %s",
            config.gamma, prof.a1_ok, prof.a2_holds, prof.a3_variant,
        )
    return prof


def _oracle(config: ExperimentConfig) -> QuadraticFunctionalOracle:
    try:
        return quadratic_functional_oracle(config.spec)
    except (OracleError, ValidationError) as exc:
        raise OracleError(f"oracle unavailable: {exc}") from exc


def _sweep(config, threads):
    records = []
    for n in config.n_grid:
        t0 = time.perf_counter()
        recs = run_replications(config, n, threads)
        logger.info("n=%d: %d replications in %.1fs", n, len(recs), time.perf_counter() - t0)
        records.extend(recs)
    return records


def _per_n(config, records, oracle):
    out = []
    for n in config.n_grid:
        t = _t_values([r for r in records if r["n"] == n])
        sd = float(np.std(t, ddof=1))
        row = {
            "n": n,
            "h": bandwidth(config.schedule, n),
            "mean": float(np.mean(t)),
            "sd": sd,
            "se": sd / math.sqrt(t.size),
            "bias": float(np.mean(t)) - oracle.value,
            "median_abs_error": float(np.median(np.abs(t - oracle.value))),
        }
        if isinstance(config.spec.innovations, NormalLaw) and config.kernel.name == "gaussian":
            row["exact_bias"] = expected_tn_gaussian(config.spec, row["h"], n) - oracle.value
        out.append(row)
    return out


def bias_sweep(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Mean bias of ``T_n`` over ``n_grid`` and its fitted log-log slope.

    For Gaussian innovations with the Gaussian kernel each row also carries
    the exact population bias, which separates the true rate from Monte Carlo
    noise in the fitted slope.
    """
    t0 = time.perf_counter()
    oracle = _oracle(config)
    profile = _profile(config)
    records = _sweep(config, threads)
    per_n = _per_n(config, records, oracle)
    fit, omitted = None, None
    if len(config.n_grid) < 2:
        omitted = "single n: slope undefined"
    else:
        fit = fit_loglog([r["n"] for r in per_n], [abs(r["bias"]) for r in per_n])
    e = config.schedule.rate_exponent
    predicted = None if e is None else max(-1.0, 2.0 * config.gamma * e)
    return ExperimentReport(
        "bias-sweep", config, oracle, records, per_n, fit, omitted, predicted, profile,
        runtime_seconds=time.perf_counter() - t0,
    )


def _clt_battery(kind, n, h, values, center, scale, variance):
    if np.std(values) == 0.0:
        raise ValidationError("replications have zero variance")
    z = math.sqrt(n) * (values - center) / scale
    ks = stats.kstest(z, "norm")
    ratio = float(np.var(math.sqrt(n) * values, ddof=1) / scale ** 2)
    return CLTReport(
        kind, n, values.size, h, float(center), float(scale),
        variance.sigma2_hat, variance.standard_error,
        float(ks.statistic), float(ks.pvalue),
        float(stats.skew(z)), float(stats.kurtosis(z)), ratio, tuple(z.tolist()),
    )


def _check_sigma2(variance: VarianceEstimate) -> None:
    s2 = variance.sigma2_hat
    if not (math.isfinite(s2) and s2 > 0.0):
        raise OracleError(f"sigma2_hat must be positive and finite, got {s2}")


def variance_for(config: ExperimentConfig) -> VarianceEstimate:
    return long_run_variance(config.spec, config.n_long, derive_seed(config.master_seed, "long_run_variance"))


def _clt_inputs(config, n, threads, records, variance, min_reps=300):
    n = config.n_grid[-1] if n is None else int(n)
    h = bandwidth(config.schedule, n)
    if n * h < 10.0:
        raise ValidationError(f"n*h = {n * h:.3g}; the CLT check needs n*h >> 1")
    if records is None:
        if config.replications < min_reps:
            raise ValidationError(f"CLT checks need >= {min_reps} replications")
        records = run_replications(config, n, threads)
    if variance is None:
        variance = variance_for(config)
    _check_sigma2(variance)
    return n, h, records, variance


def clt_check(
    config: ExperimentConfig,
    n: int | None = None,
    *,
    threads: int = 1,
    records: list[dict[str, Any]] | None = None,
    variance: VarianceEstimate | None = None,
) -> ExperimentReport:
    """Standardize ``sqrt(n)(T_n - mean)`` by ``2 sigma_hat`` and test against N(0, 1).

    Centering is at the replication mean, i.e. at ``E T_n`` rather than the
    true functional.
    """
    t0 = time.perf_counter()
    oracle = _oracle(config)
    n, h, records, variance = _clt_inputs(config, n, threads, records, variance)
    t = _t_values(records)
    clt = _clt_battery("clt", n, h, t, float(np.mean(t)), 2.0 * math.sqrt(variance.sigma2_hat), variance)
    return ExperimentReport(
        "clt", config, oracle, records, _per_n_single(config, n, records, oracle), clt=clt,
        variance=variance, runtime_seconds=time.perf_counter() - t0,
    )


def renyi_clt_check(
    config: ExperimentConfig,
    n: int | None = None,
    *,
    threads: int = 1,
    records: list[dict[str, Any]] | None = None,
    variance: VarianceEstimate | None = None,
) -> ExperimentReport:
    """Standardize ``sqrt(n)(-ln(1/n + T_n) - R(f))`` by ``2 sigma_hat / int f^2``."""
    t0 = time.perf_counter()
    if not config.kernel.nonnegative:
        raise ValidationError("Rényi plug-in requires nonnegative kernel")
    if config.gamma <= 0.25:
        raise ValidationError("the Renyi CLT needs gamma > 1/4")
    oracle = _oracle(config)
    n, h, records, variance = _clt_inputs(config, n, threads, records, variance)
    r = np.array([renyi_from_tn(rec["t_n"], n) for rec in records])
    scale = 2.0 * math.sqrt(variance.sigma2_hat) / oracle.value
    clt = _clt_battery("renyi-clt", n, h, r, oracle.renyi, scale, variance)
    return ExperimentReport(
        "renyi-clt", config, oracle, records, _per_n_single(config, n, records, oracle), clt=clt,
        variance=variance, runtime_seconds=time.perf_counter() - t0,
    )


def _per_n_single(config, n, records, oracle):
    t = _t_values(records)
    sd = float(np.std(t, ddof=1))
    return [{
        "n": n, "h": bandwidth(config.schedule, n), "mean": float(t.mean()), "sd": sd,
        "se": sd / math.sqrt(t.size), "bias": float(t.mean()) - oracle.value,
        "median_abs_error": float(np.median(np.abs(t - oracle.value))),
    }]


def small_gamma_exponent(gamma: float) -> float:
    return -3.0 * gamma / (2.0 * gamma + 1.0)


def rate_check_small_gamma(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Median ``|T_n - int f^2|`` against ``n`` for a declared ``gamma <= 1/4``.

    Gaussian data satisfy the assumptions with ``gamma = 1``, so on them this
    exercises the schedule and fitting machinery only.
    """
    t0 = time.perf_counter()
    if not (0.0 < config.gamma <= 0.25):
        raise ValidationError("rate check needs gamma in (0, 1/4]")
    s = config.schedule
    if s.kind != "corollary" or s.gamma != config.gamma:
        raise ValidationError("rate check needs the corollary schedule at the declared gamma")
    oracle = _oracle(config)
    records = _sweep(config, threads)
    per_n = _per_n(config, records, oracle)
    med = [r["median_abs_error"] for r in per_n]
    fit = fit_loglog(config.n_grid, med)
    note = "rate-fit plumbing check" if isinstance(config.spec.innovations, NormalLaw) else "declared gamma"
    rate = RateReport(config.gamma, small_gamma_exponent(config.gamma), fit, tuple(med), note)
    return ExperimentReport(
        "rate-check", config, oracle, records, per_n, fit,
        None if fit else "single n: slope undefined", rate.predicted_exponent, rate=rate,
        runtime_seconds=time.perf_counter() - t0,
    )
