import csv
import json
import math

import numpy as np
import pytest

from linentropy.charfn import quadratic_functional_oracle
from linentropy.errors import OracleError, ValidationError
from linentropy.estimator import BandwidthSchedule, estimate_naive
from linentropy.experiments import (
    CSV_COLUMNS,
    ExperimentConfig,
    VarianceEstimate,
    bias_sweep,
    clt_check,
    expected_tn_gaussian,
    fit_loglog,
    long_run_variance,
    rate_check_small_gamma,
    renyi_clt_check,
    replication_seed,
    run_replications,
    small_gamma_exponent,
)
from linentropy.linear_process import (
    ExplicitCoefficients,
    LaplaceLaw,
    LinearProcessSpec,
    NormalLaw,
    simulate,
)


def make_config(spec, **kw):
    base = dict(spec=spec, kernel="gaussian", schedule=BandwidthSchedule.corollary(1.0),
                n_grid=(100, 200), replications=50)
    base.update(kw)
    return ExperimentConfig(**base)


def strip_runtime(d):
    if isinstance(d, dict):
        return {k: strip_runtime(v) for k, v in d.items() if k not in ("runtime_seconds", "elapsed_ms")}
    if isinstance(d, list):
        return [strip_runtime(v) for v in d]
    return d


# ---- configuration ---------------------------------------------------------------


@pytest.mark.parametrize(
    "kw, msg",
    [
        (dict(n_grid=(200, 100)), "strictly increasing"),
        (dict(n_grid=(200, 200)), "strictly increasing"),
        (dict(n_grid=(50, 200)), ">= 100"),
        (dict(n_grid=()), "empty"),
        (dict(replications=49), ">= 50"),
        (dict(gamma=0.0), "gamma"),
        (dict(path="fast"), "path"),
    ],
)
def test_config_invariants(gauss_spec, kw, msg):
    with pytest.raises(ValidationError, match=msg):
        make_config(gauss_spec, **kw)


def test_config_round_trip(gauss_spec):
    cfg = make_config(gauss_spec, master_seed=9, path="binned", bins=4096)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.fingerprint() == cfg.fingerprint()
    assert make_config(gauss_spec, master_seed=10).fingerprint() != cfg.fingerprint()


# ---- replications ------------------------------------------------------------------


def test_replication_seeds_are_task_local(gauss_spec):
    cfg = make_config(gauss_spec)
    recs = run_replications(cfg, 100, replications=3)
    for r in recs:
        assert r["seed"] == replication_seed(42, 100, r["rep"])
        x = simulate(gauss_spec, 100, r["seed"])
        assert r["t_n"] == estimate_naive(x, "gaussian", r["h"]).t_n


def test_bias_sweep_report(gauss_spec, tmp_path):
    cfg = make_config(gauss_spec, n_grid=(100, 200, 400))
    rep = bias_sweep(cfg)
    assert len(rep.records) == 150 and len(rep.per_n) == 3
    oracle = quadratic_functional_oracle(gauss_spec).value
    assert abs(rep.oracle.value - oracle) < 1e-10
    for row in rep.per_n:
        t = np.array([r["t_n"] for r in rep.records if r["n"] == row["n"]])
        assert abs(row["se"] - t.std(ddof=1) / math.sqrt(t.size)) < 1e-12
        assert row["bias"] == pytest.approx(t.mean() - oracle, abs=1e-15)
    assert rep.predicted_exponent == pytest.approx(-0.8)
    assert rep.fit is not None and rep.fit.points == 3 and rep.fit.ci_low < rep.fit.slope < rep.fit.ci_high
    assert rep.profile.all_hold

    paths = rep.write(tmp_path / "sweep.json")
    data = json.loads(paths[0].read_text())
    assert data["replication_count"] == 150 and data["config_fingerprint"] == cfg.fingerprint()
    with open(paths[1], newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 151
    assert b"\r" not in paths[1].read_bytes()


def test_single_n_omits_fit(gauss_spec):
    rep = bias_sweep(make_config(gauss_spec, n_grid=(100,)))
    assert rep.fit is None and rep.fit_omitted
    assert rep.to_dict()["fit"] is None and rep.to_dict()["fit_omitted"]


def test_bias_sweep_warns_but_runs_when_checks_fail(caplog):
    # Laplace fails (i) at gamma = 1 but passes (ii); a signed kernel with slow decay fails both
    from linentropy.kernels import KernelSpec

    rough = KernelSpec.custom(lambda u: np.where(np.abs(u) <= 1, 0.5, 0.0), nonnegative=True,
                              support_radius=1.0, fourier_decay=0.5)
    spec = LinearProcessSpec(ExplicitCoefficients((1.0, 0.5, 0.25)), LaplaceLaw(1.0))
    cfg = make_config(spec, kernel=rough, n_grid=(100,))
    with caplog.at_level("WARNING"):
        rep = bias_sweep(cfg)
    assert "assumptions not verified" in caplog.text
    assert len(rep.records) == 50


def test_thread_count_invariance(gauss_spec, tmp_path):
    cfg = make_config(gauss_spec)
    a = bias_sweep(cfg, threads=1)
    b = bias_sweep(cfg, threads=4)
    assert strip_runtime(a.to_dict()) == strip_runtime(b.to_dict())
    assert strip_runtime(a.records) == strip_runtime(b.records)


def test_oracle_unavailable_is_an_error():
    from linentropy.linear_process import TabulatedLaw

    spec = LinearProcessSpec(ExplicitCoefficients((1.0, 0.5, 0.25)), TabulatedLaw((-1.0, 1.0)))
    with pytest.raises(OracleError):
        bias_sweep(make_config(spec, n_grid=(100,)))


# ---- exact Gaussian mean -------------------------------------------------------------


def test_expected_tn_iid_closed_form(iid_spec):
    h = 0.3
    assert expected_tn_gaussian(iid_spec, h, 500) == pytest.approx(1.0 / math.sqrt(2 * math.pi * (2 + h * h)), rel=1e-13)


def test_expected_tn_against_monte_carlo(gauss_spec):
    n, h, reps = 60, 0.4, 4000
    t = np.array([estimate_naive(simulate(gauss_spec, n, s), "gaussian", h).t_n for s in range(reps)])
    assert abs(t.mean() - expected_tn_gaussian(gauss_spec, h, n)) < 4 * t.std(ddof=1) / math.sqrt(reps)


def test_population_bias_shrinks(gauss_spec):
    q = quadratic_functional_oracle(gauss_spec).value
    b = {n: expected_tn_gaussian(gauss_spec, n ** -0.4, n) - q for n in (500, 8000)}
    assert abs(b[8000]) < abs(b[500])


def test_fit_loglog():
    n = np.array([100, 200, 400, 800])
    f = fit_loglog(n, 3.0 * n ** -0.8)
    assert f.slope == pytest.approx(-0.8, abs=1e-12) and f.stderr == pytest.approx(0.0, abs=1e-12)
    assert fit_loglog(n[:1], [1.0]) is None
    with pytest.raises(ValidationError):
        fit_loglog(n, [1.0, -1.0, 1.0, 1.0])


# ---- long-run variance ---------------------------------------------------------------


def test_long_run_variance_iid_matches_marginal(iid_spec):
    v = long_run_variance(iid_spec, 200_000, 5, validate=False)
    assert abs(v.sigma2_hat - v.marginal_variance) < 3 * v.standard_error
    assert v.method == "batch-means" and v.window == math.isqrt(200_000)


def test_long_run_variance_deterministic(gauss_spec):
    a = long_run_variance(gauss_spec, 50_000, 3)
    b = long_run_variance(gauss_spec, 50_000, 3)
    assert a == b


def test_long_run_variance_methods_agree(gauss_spec):
    bm = long_run_variance(gauss_spec, 400_000, 8)
    ac = long_run_variance(gauss_spec, 400_000, 8, method="autocovariance")
    assert ac.method == "autocovariance"
    assert abs(bm.sigma2_hat - ac.sigma2_hat) < 3 * math.hypot(bm.standard_error, ac.standard_error)


def test_long_run_variance_grid_too_narrow(gauss_spec):
    with pytest.raises(ValidationError, match="grid too narrow"):
        long_run_variance(gauss_spec, 20_000, 1, grid_halfwidth=1.0)


def test_long_run_variance_unknown_method(gauss_spec):
    with pytest.raises(ValidationError):
        long_run_variance(gauss_spec, 10_000, 1, method="spectral")


# ---- CLT checks ----------------------------------------------------------------------


def fake_variance(s2=0.013):
    return VarianceEstimate(s2, "batch-means", 100, s2 * 0.05, s2, 0.25, 10_000)


def test_clt_degenerate_replications(gauss_spec):
    cfg = make_config(gauss_spec, n_grid=(1000,), replications=300)
    recs = [{"n": 1000, "rep": r, "seed": 0, "h": 0.06, "t_n": 0.25, "renyi": 1.0, "elapsed_ms": 0.0}
            for r in range(300)]
    with pytest.raises(ValidationError, match="zero variance"):
        clt_check(cfg, records=recs, variance=fake_variance())


@pytest.mark.parametrize("s2", [0.0, -1.0, math.nan])
def test_clt_rejects_bad_sigma2(gauss_spec, s2):
    cfg = make_config(gauss_spec, n_grid=(1000,), replications=300)
    with pytest.raises(OracleError):
        clt_check(cfg, records=[], variance=fake_variance(s2))


def test_clt_needs_replications(gauss_spec):
    with pytest.raises(ValidationError, match="300"):
        clt_check(make_config(gauss_spec, n_grid=(1000,), replications=100), variance=fake_variance())


def test_clt_needs_large_nh(gauss_spec):
    cfg = make_config(gauss_spec, n_grid=(100,), replications=300, schedule=BandwidthSchedule.power(-0.9))
    with pytest.raises(ValidationError, match="n\\*h"):
        clt_check(cfg, variance=fake_variance())


def test_clt_on_small_run(gauss_spec):
    cfg = make_config(gauss_spec, n_grid=(400,), replications=300)
    v = long_run_variance(gauss_spec, 200_000, 1)
    rep = clt_check(cfg, variance=v)
    c = rep.clt
    assert c.replications == 300 and len(c.standardized) == 300
    assert abs(np.mean(c.standardized)) < 1e-12
    assert all(math.isfinite(getattr(c, k)) for k in ("ks_statistic", "p_value", "skewness", "excess_kurtosis"))
    r = renyi_clt_check(cfg, records=rep.records, variance=v)
    assert r.clt.center == pytest.approx(quadratic_functional_oracle(gauss_spec).renyi)


def test_renyi_clt_gates(gauss_spec):
    with pytest.raises(ValidationError, match="nonnegative kernel"):
        renyi_clt_check(make_config(gauss_spec, kernel="gaussian4", replications=300), variance=fake_variance())
    cfg = make_config(gauss_spec, gamma=0.2, schedule=BandwidthSchedule.corollary(0.2), replications=300)
    with pytest.raises(ValidationError, match="gamma > 1/4"):
        renyi_clt_check(cfg, variance=fake_variance())


# ---- small-gamma rate --------------------------------------------------------------------


def test_small_gamma_exponents():
    assert small_gamma_exponent(0.25) == pytest.approx(-0.5)
    assert small_gamma_exponent(0.125) == pytest.approx(-0.3)


def test_rate_check_plumbing(gauss_spec):
    cfg = make_config(gauss_spec, gamma=0.25, schedule=BandwidthSchedule.corollary(0.25), n_grid=(200, 400, 800))
    rep = rate_check_small_gamma(cfg)
    assert rep.rate.note == "rate-fit plumbing check"
    assert rep.rate.predicted_exponent == pytest.approx(-0.5)
    assert len(rep.rate.median_abs_error) == 3 and rep.fit is not None
    assert math.isfinite(rep.fit.slope)


def test_rate_check_preconditions(gauss_spec):
    with pytest.raises(ValidationError, match="gamma in"):
        rate_check_small_gamma(make_config(gauss_spec))
    cfg = make_config(gauss_spec, gamma=0.25, schedule=BandwidthSchedule.corollary(1.0))
    with pytest.raises(ValidationError, match="corollary schedule"):
        rate_check_small_gamma(cfg)
