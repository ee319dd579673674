"""Acceptance suite: one PASS/FAIL line per criterion at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are printed
to the terminal even when output capture is on.
"""

import json
import math

import numpy as np
import pytest

from linentropy.charfn import check_a2, check_a3, quadratic_functional_oracle
from linentropy.cli import run
from linentropy.estimator import BandwidthSchedule, estimate_binned, estimate_naive
from linentropy.experiments import (
    ExperimentConfig,
    bias_sweep,
    clt_check,
    fit_loglog,
    long_run_variance,
    renyi_clt_check,
    run_replications,
    variance_for,
)
from linentropy.kernels import KERNEL_NAMES
from linentropy.linear_process import (
    ExplicitCoefficients,
    LaplaceLaw,
    LinearProcessSpec,
    NormalLaw,
    StudentTLaw,
    UniformLaw,
    simulate,
)
from linentropy.seeding import derive_seed

pytestmark = pytest.mark.acceptance

GAUSS = LinearProcessSpec(ExplicitCoefficients((1.0, 0.5, 0.25)), NormalLaw(1.0))
IID = LinearProcessSpec(ExplicitCoefficients((1.0,)), NormalLaw(1.0))
COROLLARY = BandwidthSchedule.corollary(1.0)


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok

    return emit


def test_criterion_1_exact_invariants(verdict):
    rng = np.random.default_rng(20240101)
    worst = {"scale": 0.0, "translation": 0.0, "permutation": 0.0}
    for _ in range(100):
        n = int(rng.integers(2, 400))
        kernel = KERNEL_NAMES[int(rng.integers(len(KERNEL_NAMES)))]
        x = rng.standard_normal(n) * rng.uniform(0.1, 10.0)
        h = float(rng.uniform(0.05, 3.0))
        c = float(np.exp(rng.uniform(-3, 3)))
        b = float(rng.uniform(-10, 10))
        t = estimate_naive(x, kernel, h).t_n
        if t == 0.0:
            continue
        rel = lambda v: abs(v - t) / abs(t)
        worst["scale"] = max(worst["scale"], rel(c * estimate_naive(c * x, kernel, c * h).t_n))
        worst["translation"] = max(worst["translation"], rel(estimate_naive(x + b, kernel, h).t_n))
        worst["permutation"] = max(worst["permutation"], rel(estimate_naive(rng.permutation(x), kernel, h).t_n))
    ok = max(worst.values()) <= 1e-12
    detail = ", ".join(f"{k} max rel {v:.1e}" for k, v in worst.items())
    assert verdict(1, ok, detail + " (tol 1e-12, 100 cases)")


def test_criterion_2_binned_matches_naive(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for case in range(50):
        n = int(rng.integers(200, 5001))
        x = simulate(GAUSS, n, 500 + case).values
        h = float(np.exp(rng.uniform(math.log(0.02), math.log(1.0))))
        if case < 25:
            kernel, bins = KERNEL_NAMES[case % len(KERNEL_NAMES)], None
        else:
            # explicit grids anywhere up to the h/4 resolution limit
            kernel = "gaussian"
            span = float(x.max() - x.min()) + 16.0 * h
            bins = max(64, int(math.ceil(span / (h / rng.uniform(4.0, 32.0)))) + 1)
        a = estimate_naive(x, kernel, h).t_n
        b = estimate_binned(x, kernel, h, bins).t_n
        worst = max(worst, abs(b - a) / abs(a))
    assert verdict(2, worst <= 1e-3, f"max relative difference {worst:.2e} over 50 cases (tol 1e-3)")


def test_criterion_3_quadratic_functional_oracle(verdict):
    q = quadratic_functional_oracle(IID, "quadrature").value
    err = abs(q - 1.0 / (2.0 * math.sqrt(math.pi)))
    worst = 0.0
    for law in (NormalLaw(1.0), LaplaceLaw(1.0), UniformLaw(1.0), StudentTLaw(3.0)):
        base = LinearProcessSpec(ExplicitCoefficients((1.0, 0.5, 0.25)), law)
        q1 = quadratic_functional_oracle(base, "quadrature").value
        for c in (0.3, 2.0, -5.0):
            qc = quadratic_functional_oracle(base.scaled_coefficients(c), "quadrature").value
            worst = max(worst, abs(qc - q1 / abs(c)))
    ok = err < 1e-8 and worst < 1e-7
    assert verdict(3, ok, f"|Q - 1/(2 sqrt pi)| = {err:.1e} (tol 1e-8); scaling max abs error {worst:.1e} (tol 1e-7)")


def test_criterion_4_bias_rate(verdict):
    cfg = ExperimentConfig(GAUSS, "gaussian", COROLLARY, (500, 1000, 2000, 4000, 8000), 400)
    rep = bias_sweep(cfg)
    slope = rep.fit.slope
    ok = -1.05 <= slope <= -0.55
    exact = fit_loglog([r["n"] for r in rep.per_n], [abs(r["exact_bias"]) for r in rep.per_n])
    biases = ", ".join(f"{r['n']}:{r['bias']:+.1e}+/-{r['se']:.0e}" for r in rep.per_n)
    detail = (f"fitted slope {slope:.3f} +/- {rep.fit.stderr:.3f} (band [-1.05, -0.55]); "
              f"mean bias by n {biases}; exact population bias slope {exact.slope:.3f}")
    assert verdict(4, ok, detail)


@pytest.fixture(scope="module")
def clt_inputs():
    cfg = ExperimentConfig(GAUSS, "gaussian", COROLLARY, (4000,), 500)
    return cfg, run_replications(cfg, 4000), variance_for(cfg)


def test_criterion_5_clt(verdict, clt_inputs):
    cfg, records, variance = clt_inputs
    c = clt_check(cfg, records=records, variance=variance).clt
    ok = c.p_value > 0.01 and 0.7 <= c.variance_ratio <= 1.4
    detail = (f"KS p = {c.p_value:.3f} (need > 0.01), variance ratio {c.variance_ratio:.3f} (need [0.7, 1.4]), "
              f"4 sigma2_hat = {4 * variance.sigma2_hat:.4f}")
    assert verdict(5, ok, detail)


def test_criterion_6_renyi_clt(verdict, clt_inputs):
    cfg, records, variance = clt_inputs
    c = renyi_clt_check(cfg, records=records, variance=variance).clt
    assert verdict(6, c.p_value > 0.01, f"KS p = {c.p_value:.3f} (need > 0.01), R(f) = {c.center:.5f}")


def test_criterion_7_assumption_checkers(verdict):
    a2 = check_a2(NormalLaw(1.0), 1.0)
    a3 = check_a3(NormalLaw(1.0), 1.0)
    ok = a2.holds and a2.c_gamma <= 1.0 + 1e-6 and a3.variant == "i" and abs(a3.integral - 1.0) <= 1e-6
    detail = f"A2 holds={a2.holds} c_gamma={a2.c_gamma:.9f}; A3 variant {a3.variant}, integral {a3.integral:.12f}"
    assert verdict(7, ok, detail)


def test_criterion_8_long_run_variance(verdict):
    v = long_run_variance(IID, 1_000_000, derive_seed(42, "long_run_variance"), validate=False)
    truth = 1.0 / (2.0 * math.pi * math.sqrt(3.0)) - 1.0 / (4.0 * math.pi)
    z = (v.sigma2_hat - truth) / v.standard_error
    detail = f"sigma2_hat {v.sigma2_hat:.6f} vs {truth:.6f}, {z:+.2f} SE (need within 3)"
    assert verdict(8, abs(z) <= 3.0, detail)


def _numeric(path):
    if path.suffix == ".csv":
        return [row.rsplit(",", 1)[0] for row in path.read_text().splitlines()]
    d = json.loads(path.read_text())
    d.pop("runtime_seconds", None)
    return d


def test_criterion_9_thread_determinism(verdict, tmp_path):
    base = {"spec": GAUSS.to_dict(), "kernel": "gaussian", "schedule": COROLLARY.to_dict(),
            "n_grid": [500, 1000], "replications": 300, "master_seed": 42, "n_long": 100_000}
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(base))
    rate = tmp_path / "rate.json"
    rate.write_text(json.dumps({**base, "gamma": 0.25, "schedule": {"kind": "corollary", "gamma": 0.25}}))
    same = True
    for command, config in (("bias-sweep", cfg), ("clt", cfg), ("renyi-clt", cfg), ("rate-check", rate)):
        outs = []
        for threads in (1, 8):
            out = tmp_path / f"{command}-{threads}.json"
            assert run([command, "--config", str(config), "--threads", str(threads), "--out", str(out)]) == 0
            outs.append(out)
        same &= _numeric(outs[0]) == _numeric(outs[1])
        same &= _numeric(outs[0].with_suffix(".csv")) == _numeric(outs[1].with_suffix(".csv"))
    assert verdict(9, same, "bias-sweep, clt, renyi-clt, rate-check JSON and CSV identical at 1 and 8 threads")
