"""Characteristic functions, assumption checkers and quadrature oracles.

The marginal characteristic function of the process is
``phi(l) = prod_i phi_eps(a_i l)``; the true quadratic functional follows
from Plancherel, ``int f^2 = (1/2pi) int |phi|^2``, and the density from
Fourier inversion.  Laws without an analytic characteristic function fall
back to the empirical one of a fixed-seed sample.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import integrate

from .errors import NoCharacteristicFunction, OracleError, ValidationError
from .kernels import KernelSpec, get_kernel
from .linear_process import (
    InnovationLaw,
    LinearProcessSpec,
    NormalLaw,
    effective_truncation,
    validate_spec,
)
from .seeding import rng_for

EMPIRICAL_CF_SAMPLES = 1_000_000
A3_REL_TOL = 1e-6
PANEL_EPSABS = 1e-10
_MAX_DOUBLINGS = 64
_CHUNK = 1 << 22


# --------------------------------------------------------------------------
# Characteristic functions
# --------------------------------------------------------------------------


class EmpiricalCF:
    """Empirical characteristic function of ``size`` draws from ``law``.

    The draws are fixed at construction and reused for every ``lam``.  Sums
    run over the distinct draw values weighted by multiplicity, which is exact
    and much cheaper for resampled (tabulated) laws.
    """

    def __init__(self, law: InnovationLaw, size: int = EMPIRICAL_CF_SAMPLES, seed: int = 0):
        self.size = int(size)
        self.samples = law.sample(rng_for(seed, "empirical_cf"), self.size)
        self.support, counts = np.unique(self.samples, return_counts=True)
        self.weights = counts / self.size

    def _blocks(self, lam: np.ndarray):
        step = max(1, _CHUNK // self.support.size)
        for k in range(0, lam.size, step):
            yield k, np.outer(lam[k : k + step], self.support)

    def __call__(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        out = np.empty(lam.size, dtype=complex)
        for k, arg in self._blocks(lam):
            out[k : k + arg.shape[0]] = np.cos(arg) @ self.weights + 1j * (np.sin(arg) @ self.weights)
        return out

    def centered_second_moment(self, lam) -> tuple[np.ndarray, np.ndarray]:
        """Sample mean of ``|exp(i l eps) - phi(l)|^2`` and its standard error.

        Equals ``1 - |phi|^2`` for the empirical law but is computed from
        centered terms, so it stays accurate as ``l -> 0``.
        """
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        mean = np.empty(lam.size)
        se = np.empty(lam.size)
        w = self.weights
        for k, arg in self._blocks(lam):
            c, s = np.cos(arg), np.sin(arg)
            d = (c - (c @ w)[:, None]) ** 2 + (s - (s @ w)[:, None]) ** 2
            m = d @ w
            mean[k : k + arg.shape[0]] = m
            se[k : k + arg.shape[0]] = np.sqrt(((d - m[:, None]) ** 2) @ w / self.size)
        return mean, se


def cf_function(
    law: InnovationLaw,
    *,
    allow_empirical: bool = True,
    cf_samples: int = EMPIRICAL_CF_SAMPLES,
    seed: int = 0,
) -> Callable[[np.ndarray], np.ndarray]:
    if law.has_analytic_cf:
        return law.cf
    if not allow_empirical:
        raise NoCharacteristicFunction("no characteristic function available")
    return EmpiricalCF(law, cf_samples, seed)


def innovation_cf(law: InnovationLaw, lam, **kwargs):
    """``phi_eps(lam)``; scalar in, scalar out."""
    val = cf_function(law, **kwargs)(np.atleast_1d(np.asarray(lam, dtype=float)))
    return complex(val[0]) if np.ndim(lam) == 0 else val


def process_cf_function(spec: LinearProcessSpec, **kwargs) -> Callable[[np.ndarray], np.ndarray]:
    a = spec.coefficients.head(effective_truncation(spec))
    a = a[a != 0.0]
    phi_eps = cf_function(spec.innovations, **kwargs)
    step = max(1, 4096 // max(1, a.size))

    def phi(lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        out = np.empty(lam.size, dtype=complex)
        for k in range(0, lam.size, step):
            block = lam[k : k + step]
            vals = np.asarray(phi_eps(np.outer(block, a).ravel())).reshape(block.size, a.size)
            out[k : k + step] = np.prod(vals, axis=1)
        return out

    return phi


def process_cf(spec: LinearProcessSpec, lam, **kwargs):
    """``prod_{i<=M} phi_eps(a_i lam)`` with ``M`` the effective truncation."""
    val = process_cf_function(spec, **kwargs)(lam)
    return complex(val[0]) if np.ndim(lam) == 0 else val


def process_width(spec: LinearProcessSpec) -> float:
    """Length scale of the marginal law: innovation width times ``||a||_2``."""
    ss = spec.coefficients.sum_of_squares(spec.truncation_tolerance)
    return spec.innovations.width * math.sqrt(ss)


# --------------------------------------------------------------------------
# Half-line integration with window doubling
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfLineIntegral:
    value: float
    abs_error: float
    converged: bool
    upper: float
    doublings: int


def _quad(g, a, b, epsabs=PANEL_EPSABS):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(g, a, b, epsabs=epsabs, epsrel=1e-12, limit=1000)


def integrate_half_line(
    g: Callable[[float], float],
    start: float,
    rel_tol: float = A3_REL_TOL,
    max_doublings: int = _MAX_DOUBLINGS,
    epsabs: float = PANEL_EPSABS,
) -> HalfLineIntegral:
    """``int_0^inf g`` for nonnegative ``g`` by doubling ``[0, L]``.

    Converged once a doubling adds less than ``rel_tol`` of the running value;
    the remaining tail ``[L, inf)`` is then integrated after ``l -> 1/u``.
    Declared divergent after three consecutive doublings that each add more
    than ``rel_tol`` and do not shrink the increment by more than 10% (tail no
    lighter than about ``l**-1.15``).
    """
    if not start > 0.0:
        raise ValidationError("integration window must start at a positive point")
    val, err = _quad(g, 0.0, start, epsabs)
    upper = start
    prev = None
    streak = 0
    for k in range(1, max_doublings + 1):
        inc, e = _quad(g, upper, 2.0 * upper, epsabs)
        val += inc
        err += e
        upper *= 2.0
        if abs(inc) <= rel_tol * abs(val):
            tail, te = _tail(g, upper, epsabs)
            return HalfLineIntegral(val + tail, err + te, True, upper, k)
        if prev is not None and inc >= 0.9 * prev:
            streak += 1
        else:
            streak = 0
        if streak >= 3:
            return HalfLineIntegral(val, err, False, upper, k)
        prev = inc
    return HalfLineIntegral(val, err, False, upper, max_doublings)


def _tail(g, upper, epsabs=PANEL_EPSABS):
    # int_L^inf g(l) dl = int_0^{1/L} g(1/u) / u^2 du; smooth for power-law tails
    return _quad(lambda u: g(1.0 / u) / (u * u) if u > 0.0 else 0.0, 0.0, 1.0 / upper, epsabs)


def _scalar(fn):
    return lambda t: float(fn(np.array([t]))[0])


# --------------------------------------------------------------------------
# Assumption checks
# --------------------------------------------------------------------------


def a2_grid(width: float = 1.0, points: int = 2000) -> np.ndarray:
    """Log grid on ``[1e-6, 1e3]`` plus dense linear bands at unit scale and ``1/width``."""
    parts = [
        np.logspace(-6.0, 3.0, points),
        np.linspace(0.05, 5.0, 200),
        np.linspace(0.05, 5.0, 200) / width,
    ]
    g = np.unique(np.concatenate(parts))
    return g[g > 0.0]


@dataclass(frozen=True)
class A2Check:
    holds: bool
    c_gamma: float
    argmax: float
    near_zero_growth: float
    grid: dict[str, Any]
    mc_standard_error: float | None = None


def check_a2(
    law: InnovationLaw,
    gamma: float,
    grid: np.ndarray | None = None,
    *,
    cf_samples: int = EMPIRICAL_CF_SAMPLES,
    seed: int = 0,
) -> A2Check:
    """Grid check of ``E|exp(i l eps) - phi(l)|^2 <= c (|l|^(2 gamma) ^ 1)``.

    Uses ``E|exp(i l eps) - phi(l)|^2 = 1 - |phi(l)|^2``.  ``c_gamma`` is the
    grid supremum of the ratio; the bound holds when the ratio does not grow
    over the lowest decade of the grid (more than 1%).
    """
    if not (0.0 < gamma <= 1.0):
        raise ValidationError(f"gamma must lie in (0, 1], got {gamma}")
    lam = a2_grid(law.width) if grid is None else np.asarray(grid, dtype=float)
    lam = np.unique(np.abs(lam[lam != 0.0]))
    se = None
    if law.has_analytic_cf:
        num = law.one_minus_abs_cf_sq(lam)
    else:
        ecf = EmpiricalCF(law, cf_samples, seed)
        num, num_se = ecf.centered_second_moment(lam)
    den = np.minimum(lam ** (2.0 * gamma), 1.0)
    ratio = num / den
    i = int(np.argmax(ratio))
    if not law.has_analytic_cf:
        se = float(num_se[i] / den[i])
    decade = int(np.searchsorted(lam, 10.0 * lam[0]))
    decade = min(max(decade, 1), lam.size - 1)
    growth = float(ratio[0] / ratio[decade]) if ratio[decade] > 0 else math.inf
    holds = bool(np.all(np.isfinite(ratio)) and growth <= 1.01)
    desc = {"points": int(lam.size), "min": float(lam[0]), "max": float(lam[-1])}
    return A2Check(holds, float(ratio[i]), float(lam[i]), growth, desc, se)


@dataclass(frozen=True)
class A3Check:
    variant: str
    integral: float
    abs_error: float
    integral_i: float
    integral_ii: float | None
    kernel_condition: bool | None


def check_a3(
    law: InnovationLaw,
    gamma: float,
    kernel: KernelSpec | str = "gaussian",
    *,
    cf_samples: int = EMPIRICAL_CF_SAMPLES,
    seed: int = 0,
) -> A3Check:
    """Decide which integrability condition holds.

    ``i``: ``int |l|^(3 gamma) |phi_eps|^2 < inf``.  Otherwise ``ii``:
    ``int |l|^(2 gamma) |phi_eps|^2 < inf`` together with
    ``sup |K^(l)| |l|^gamma < inf``.  Otherwise ``neither``.
    """
    if not (0.0 < gamma <= 1.0):
        raise ValidationError(f"gamma must lie in (0, 1], got {gamma}")
    kernel = get_kernel(kernel)
    phi = cf_function(law, cf_samples=cf_samples, seed=seed)
    start = 16.0 / law.width

    def weighted(power):
        return _scalar(lambda t: np.abs(t) ** power * np.abs(phi(t)) ** 2)

    r1 = integrate_half_line(weighted(3.0 * gamma), start)
    if r1.converged:
        return A3Check("i", 2.0 * r1.value, 2.0 * r1.abs_error, 2.0 * r1.value, None, None)
    r2 = integrate_half_line(weighted(2.0 * gamma), start)
    kcond = kernel.fourier_bounded_with_weight(gamma)
    i2 = 2.0 * r2.value if r2.converged else math.inf
    if r2.converged and kcond:
        return A3Check("ii", i2, 2.0 * r2.abs_error, math.inf, i2, kcond)
    return A3Check("neither", math.inf, math.nan, math.inf, i2, kcond)


@dataclass(frozen=True)
class AssumptionProfile:
    gamma: float
    a1_ok: bool
    a1_violations: tuple[str, ...]
    a2_holds: bool
    a2_constant: float
    a3_variant: str
    a3_integral: float
    grid: dict[str, Any] = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return self.a1_ok and self.a2_holds and self.a3_variant != "neither"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["a1_violations"] = list(self.a1_violations)
        d["all_hold"] = self.all_hold
        return d


def assumption_profile(
    spec: LinearProcessSpec, gamma: float, kernel: KernelSpec | str = "gaussian", **kwargs
) -> AssumptionProfile:
    v = validate_spec(spec, gamma)
    a2 = check_a2(spec.innovations, gamma, **kwargs)
    a3 = check_a3(spec.innovations, gamma, kernel, **kwargs)
    return AssumptionProfile(gamma, v.ok, v.violations, a2.holds, a2.c_gamma, a3.variant, a3.integral, a2.grid)


# --------------------------------------------------------------------------
# Oracles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticFunctionalOracle:
    value: float
    method: str
    estimated_abs_error: float

    @property
    def renyi(self) -> float:
        """Quadratic Renyi entropy ``-ln int f^2``."""
        return -math.log(self.value)

    def to_dict(self) -> dict[str, Any]:
        return {**asdict(self), "renyi": self.renyi}


def quadratic_functional_oracle(
    spec: LinearProcessSpec, method: str = "auto", **kwargs
) -> QuadraticFunctionalOracle:
    """True ``int f^2``.

    ``closed-form`` needs Gaussian innovations (``1 / (2 s sqrt(pi))`` with
    ``s^2 = sigma^2 sum a_i^2``); ``quadrature`` integrates ``|phi|^2 / (2 pi)``.
    ``auto`` picks the closed form whenever it applies.
    """
    gaussian = isinstance(spec.innovations, NormalLaw)
    if method == "auto":
        method = "closed-form" if gaussian else "quadrature"
    if method == "closed-form":
        if not gaussian:
            raise ValidationError("closed form needs Gaussian innovations")
        s = spec.innovations.scale * math.sqrt(spec.coefficients.sum_of_squares(spec.truncation_tolerance))
        value = 1.0 / (2.0 * s * math.sqrt(math.pi))
        return QuadraticFunctionalOracle(value, "closed-form", 4.0 * math.ulp(value))
    if method != "quadrature":
        raise ValidationError(f"unknown oracle method {method!r}")
    # an empirical |phi|^2 has a 1/N floor and is never integrable
    kwargs.setdefault("allow_empirical", False)
    phi = process_cf_function(spec, **kwargs)
    res = integrate_half_line(_scalar(lambda t: np.abs(phi(t)) ** 2), 16.0 / process_width(spec))
    if not res.converged:
        raise OracleError("density may be unbounded: |phi|^2 is not integrable")
    value, err = res.value / math.pi, res.abs_error / math.pi
    if err >= 1e-8:
        raise OracleError(f"quadrature error {err:.3g} exceeds 1e-8")
    return QuadraticFunctionalOracle(value, "quadrature", err)


@dataclass(frozen=True)
class DensityTable:
    x: np.ndarray
    f: np.ndarray
    abs_error: float

    def mass(self) -> float:
        return float(integrate.trapezoid(self.f, self.x))

    def quadratic_functional(self) -> float:
        """``int f^2`` over the tabulated range (Simpson)."""
        return float(integrate.simpson(self.f ** 2, x=self.x))


def _inversion(phi, x: np.ndarray, dlam: float, lam_max: float) -> np.ndarray:
    # trapezoid on the symmetric grid, using phi(-l) = conj(phi(l))
    lam = np.arange(1, int(math.ceil(lam_max / dlam)) + 1) * dlam
    ph = phi(lam)
    out = np.empty(x.size)
    step = max(1, _CHUNK // max(1, lam.size))
    for k in range(0, x.size, step):
        arg = np.outer(x[k : k + step], lam)
        out[k : k + step] = np.cos(arg) @ ph.real + np.sin(arg) @ ph.imag
    return dlam / (2.0 * math.pi) * (1.0 + 2.0 * out)


def density_oracle(spec: LinearProcessSpec, x, *, tail_tol: float = 1e-13, **kwargs) -> DensityTable:
    """Marginal density ``f(x) = (1/2pi) int exp(-i l x) phi(l) dl`` on ``x``.

    Trapezoid rule on an equispaced ``l`` grid; the spacing ``2pi/P`` puts the
    periodic images of ``f`` at distance ``P``, chosen well beyond ``x`` and the
    bulk of the law.  ``abs_error`` compares against a run at half the spacing.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    kwargs.setdefault("allow_empirical", False)
    phi = process_cf_function(spec, **kwargs)
    width = process_width(spec)
    absphi = _scalar(lambda t: np.abs(phi(t)))
    start = 16.0 / width
    if not integrate_half_line(absphi, start).converged:
        raise OracleError("characteristic function not integrable; density may be unbounded")
    lam_max = start
    while _tail(absphi, lam_max)[0] > tail_tol:
        lam_max *= 2.0
        if lam_max > start * 2.0 ** 40:
            raise OracleError("could not bound the characteristic-function tail")
    period = 2.0 * (float(np.max(np.abs(x))) + 60.0 * width)
    f = _inversion(phi, x, 2.0 * math.pi / period, lam_max)
    f_fine = _inversion(phi, x, math.pi / period, lam_max)
    return DensityTable(x, f_fine, float(np.max(np.abs(f_fine - f))))
