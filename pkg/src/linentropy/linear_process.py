"""Linear (moving-average) processes: definition, validation and simulation.

A process is ``X_t = sum_{i>=0} a_i * eps_{t-i}`` with i.i.d. innovations
``eps``.  Infinite coefficient schemes are realized by truncating the filter
at the order ``M`` where the absolute tail ``sum_{i>M} |a_i|`` first drops
below ``truncation_tolerance``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, ClassVar

import numpy as np
from scipy import signal, special

from .errors import NoCharacteristicFunction, ValidationError
from .seeding import rng_for

#: Refuse filters longer than this; a larger truncation tolerance is needed.
MAX_TRUNCATION_ORDER = 2_000_000

# Above this order the filter is applied by FFT convolution.
_DIRECT_FILTER_MAX = 512


# --------------------------------------------------------------------------
# Coefficient schemes
# --------------------------------------------------------------------------


class CoefficientScheme:
    """Base class for coefficient sequences ``a_0, a_1, ...``."""

    kind: ClassVar[str]

    @property
    def count(self) -> int | None:
        """Number of leading indices that may be nonzero (``None`` = infinite)."""
        raise NotImplementedError

    def head(self, m: int) -> np.ndarray:
        """Coefficients ``a_0..a_m`` (zeros past the end of a finite scheme)."""
        raise NotImplementedError

    def nonzero_count(self) -> float:
        raise NotImplementedError

    def gamma_summable(self, gamma: float) -> bool:
        """Whether ``sum |a_i|**gamma`` is finite."""
        raise NotImplementedError

    def truncation_order(self, tol: float) -> int:
        raise NotImplementedError

    def sum_of_squares(self, tol: float) -> float:
        """``sum a_i**2`` over the whole (untruncated) sequence."""
        return float(np.sum(self.head(self.truncation_order(tol)) ** 2))

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def scaled(self, c: float) -> "CoefficientScheme":
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "CoefficientScheme":
        kind = d.get("kind")
        if kind == "explicit":
            return ExplicitCoefficients(tuple(float(v) for v in d["values"]))
        if kind == "geometric":
            return GeometricCoefficients(
                float(d["rho"]), _opt_int(d.get("count")), float(d.get("scale", 1.0))
            )
        if kind in ("polynomial", "polynomial-decay"):
            return PolynomialDecayCoefficients(
                float(d["beta"]), _opt_int(d.get("count")), float(d.get("scale", 1.0))
            )
        raise ValidationError(f"unknown coefficient scheme kind {kind!r}")


def _opt_int(v: Any) -> int | None:
    return None if v is None else int(v)


@dataclass(frozen=True)
class ExplicitCoefficients(CoefficientScheme):
    values: tuple[float, ...]

    kind: ClassVar[str] = "explicit"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) == 0:
            raise ValidationError("explicit coefficient list is empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError("explicit coefficients must be finite")

    @property
    def count(self) -> int:
        return len(self.values)

    def head(self, m: int) -> np.ndarray:
        out = np.zeros(m + 1)
        k = min(m + 1, len(self.values))
        out[:k] = self.values[:k]
        return out

    def nonzero_count(self) -> float:
        return sum(1 for v in self.values if v != 0.0)

    def gamma_summable(self, gamma: float) -> bool:
        return True

    def truncation_order(self, tol: float) -> int:
        return len(self.values) - 1

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "values": list(self.values)}

    def scaled(self, c: float) -> "ExplicitCoefficients":
        return ExplicitCoefficients(tuple(c * v for v in self.values))


@dataclass(frozen=True)
class GeometricCoefficients(CoefficientScheme):
    """``a_i = scale * rho**i`` for ``i < count``."""

    rho: float
    n_terms: int | None = None
    scale: float = 1.0

    kind: ClassVar[str] = "geometric"

    def __post_init__(self):
        if self.rho == 0.0 or not math.isfinite(self.rho):
            raise ValidationError("geometric ratio must be finite and nonzero")
        if self.n_terms is None and abs(self.rho) >= 1.0:
            raise ValidationError("infinite geometric scheme needs |rho| < 1")
        if self.n_terms is not None and self.n_terms < 1:
            raise ValidationError("geometric count must be >= 1")
        if self.scale == 0.0 or not math.isfinite(self.scale):
            raise ValidationError("scale must be finite and nonzero")

    @property
    def count(self) -> int | None:
        return self.n_terms

    def head(self, m: int) -> np.ndarray:
        i = np.arange(m + 1)
        out = self.scale * self.rho ** i
        if self.n_terms is not None:
            out[i >= self.n_terms] = 0.0
        return out

    def nonzero_count(self) -> float:
        return math.inf if self.n_terms is None else self.n_terms

    def gamma_summable(self, gamma: float) -> bool:
        return True

    def truncation_order(self, tol: float) -> int:
        r = abs(self.rho)
        last = math.inf if self.n_terms is None else self.n_terms - 1
        if r >= 1.0:
            return int(last)

        def tail(m: int) -> float:
            return abs(self.scale) * r ** (m + 1) / (1.0 - r)

        m = max(0, math.ceil(math.log(tol * (1.0 - r) / abs(self.scale)) / math.log(r)) - 1)
        # closed form can be off by one in floating point
        while m > 0 and tail(m - 1) < tol:
            m -= 1
        while tail(m) >= tol:
            m += 1
        return int(min(m, last))

    def sum_of_squares(self, tol: float) -> float:
        r2 = self.rho * self.rho
        if self.n_terms is None:
            return self.scale ** 2 / (1.0 - r2)
        return super().sum_of_squares(tol)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "rho": self.rho, "count": self.n_terms, "scale": self.scale}

    def scaled(self, c: float) -> "GeometricCoefficients":
        return GeometricCoefficients(self.rho, self.n_terms, self.scale * c)


@dataclass(frozen=True)
class PolynomialDecayCoefficients(CoefficientScheme):
    """``a_i = scale * (i + 1)**(-beta)`` for ``i < count``."""

    beta: float
    n_terms: int | None = None
    scale: float = 1.0

    kind: ClassVar[str] = "polynomial"

    def __post_init__(self):
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValidationError("polynomial decay exponent must be positive")
        if self.n_terms is not None and self.n_terms < 1:
            raise ValidationError("polynomial count must be >= 1")
        if self.scale == 0.0 or not math.isfinite(self.scale):
            raise ValidationError("scale must be finite and nonzero")

    @property
    def count(self) -> int | None:
        return self.n_terms

    def head(self, m: int) -> np.ndarray:
        i = np.arange(m + 1)
        out = self.scale * (i + 1.0) ** (-self.beta)
        if self.n_terms is not None:
            out[i >= self.n_terms] = 0.0
        return out

    def nonzero_count(self) -> float:
        return math.inf if self.n_terms is None else self.n_terms

    def gamma_summable(self, gamma: float) -> bool:
        return self.n_terms is not None or self.beta * gamma > 1.0

    def truncation_order(self, tol: float) -> int:
        if self.n_terms is None and self.beta <= 1.0:
            raise ValidationError("coefficients not absolutely summable")
        last = math.inf if self.n_terms is None else self.n_terms - 1
        if self.beta <= 1.0:
            return int(last)
        # sum_{i>M} (i+1)^-beta <= int_{M+1}^inf x^-beta dx = (M+1)^(1-beta)/(beta-1)
        b = self.beta - 1.0
        est = (abs(self.scale) / (tol * b)) ** (1.0 / b)
        if est > 2.0 ** 52:
            # far beyond any usable order; integer refinement is meaningless here
            return int(min(est, last)) if math.isfinite(min(est, last)) else 2 ** 62
        m = max(0, math.ceil(est) - 1)
        while m > 0 and abs(self.scale) * m ** (-b) / b < tol:
            m -= 1
        while abs(self.scale) * (m + 1.0) ** (-b) / b >= tol:
            m += 1
        return int(min(m, last))

    def sum_of_squares(self, tol: float) -> float:
        if self.n_terms is None and 2.0 * self.beta > 1.0:
            return self.scale ** 2 * float(special.zeta(2.0 * self.beta, 1.0))
        return super().sum_of_squares(tol)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "beta": self.beta, "count": self.n_terms, "scale": self.scale}

    def scaled(self, c: float) -> "PolynomialDecayCoefficients":
        return PolynomialDecayCoefficients(self.beta, self.n_terms, self.scale * c)


# --------------------------------------------------------------------------
# Innovation laws
# --------------------------------------------------------------------------


class InnovationLaw:
    """An i.i.d. innovation distribution with a seed-deterministic sampler."""

    kind: ClassVar[str]
    has_analytic_cf: ClassVar[bool] = True

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def cf(self, lam) -> np.ndarray:
        """Characteristic function ``E exp(i * lam * eps)``."""
        raise NotImplementedError

    def one_minus_abs_cf_sq(self, lam) -> np.ndarray:
        """``1 - |cf(lam)|**2``; subclasses avoid cancellation near zero."""
        return 1.0 - np.abs(self.cf(lam)) ** 2

    @property
    def width(self) -> float:
        """Characteristic length scale of the law."""
        raise NotImplementedError

    @property
    def variance(self) -> float:
        raise NotImplementedError

    def scaled(self, c: float) -> "InnovationLaw":
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "InnovationLaw":
        kind = d.get("kind")
        if kind in ("normal", "gaussian"):
            return NormalLaw(float(d.get("scale", 1.0)))
        if kind == "laplace":
            return LaplaceLaw(float(d.get("scale", 1.0)))
        if kind == "uniform":
            return UniformLaw(float(d.get("half_width", d.get("a", 1.0))))
        if kind in ("student_t", "student-t", "t"):
            return StudentTLaw(float(d["df"]), float(d.get("scale", 1.0)))
        if kind == "tabulated":
            return TabulatedLaw(tuple(float(v) for v in d["values"]))
        raise ValidationError(f"unknown innovation law kind {kind!r}")


def _check_positive(name: str, v: float) -> None:
    if not (v > 0.0 and math.isfinite(v)):
        raise ValidationError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class NormalLaw(InnovationLaw):
    scale: float = 1.0

    kind: ClassVar[str] = "normal"

    def __post_init__(self):
        _check_positive("scale", self.scale)

    def sample(self, rng, size):
        return self.scale * rng.standard_normal(size)

    def cf(self, lam):
        lam = np.asarray(lam, dtype=float)
        return np.exp(-0.5 * (self.scale * lam) ** 2).astype(complex)

    def one_minus_abs_cf_sq(self, lam):
        lam = np.asarray(lam, dtype=float)
        return -np.expm1(-((self.scale * lam) ** 2))

    @property
    def width(self):
        return self.scale

    @property
    def variance(self):
        return self.scale ** 2

    def scaled(self, c):
        return NormalLaw(self.scale * c)

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale}


@dataclass(frozen=True)
class LaplaceLaw(InnovationLaw):
    scale: float = 1.0

    kind: ClassVar[str] = "laplace"

    def __post_init__(self):
        _check_positive("scale", self.scale)

    def sample(self, rng, size):
        return self.scale * rng.laplace(0.0, 1.0, size)

    def cf(self, lam):
        lam = np.asarray(lam, dtype=float)
        return (1.0 / (1.0 + (self.scale * lam) ** 2)).astype(complex)

    def one_minus_abs_cf_sq(self, lam):
        x = (self.scale * np.asarray(lam, dtype=float)) ** 2
        return x * (2.0 + x) / (1.0 + x) ** 2

    @property
    def width(self):
        return self.scale

    @property
    def variance(self):
        return 2.0 * self.scale ** 2

    def scaled(self, c):
        return LaplaceLaw(self.scale * c)

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale}


@dataclass(frozen=True)
class UniformLaw(InnovationLaw):
    """Uniform on ``(-half_width, half_width)``."""

    half_width: float = 1.0

    kind: ClassVar[str] = "uniform"

    def __post_init__(self):
        _check_positive("half_width", self.half_width)

    def sample(self, rng, size):
        return self.half_width * rng.uniform(-1.0, 1.0, size)

    def cf(self, lam):
        t = self.half_width * np.asarray(lam, dtype=float)
        return np.sinc(t / np.pi).astype(complex)

    def one_minus_abs_cf_sq(self, lam):
        t = self.half_width * np.asarray(lam, dtype=float)
        s = np.sinc(t / np.pi)
        t2 = t * t
        # 1 - sinc(t) by series below |t| = 1e-2
        one_minus = np.where(
            np.abs(t) < 1e-2, t2 / 6.0 - t2 * t2 / 120.0 + t2 ** 3 / 5040.0, 1.0 - s
        )
        return one_minus * (1.0 + s)

    @property
    def width(self):
        return self.half_width

    @property
    def variance(self):
        return self.half_width ** 2 / 3.0

    def scaled(self, c):
        return UniformLaw(self.half_width * c)

    def to_dict(self):
        return {"kind": self.kind, "half_width": self.half_width}


@dataclass(frozen=True)
class StudentTLaw(InnovationLaw):
    df: float
    scale: float = 1.0

    kind: ClassVar[str] = "student_t"

    def __post_init__(self):
        _check_positive("df", self.df)
        _check_positive("scale", self.scale)

    def sample(self, rng, size):
        return self.scale * rng.standard_t(self.df, size)

    def cf(self, lam):
        nu = self.df
        z = math.sqrt(nu) * np.abs(self.scale * np.asarray(lam, dtype=float))
        out = np.ones_like(z)
        pos = z > 0
        zp = z[pos]
        with np.errstate(divide="ignore", under="ignore"):
            log_phi = (
                np.log(special.kve(nu / 2.0, zp))
                - zp
                + (nu / 2.0) * np.log(zp)
                - special.gammaln(nu / 2.0)
                - (nu / 2.0 - 1.0) * math.log(2.0)
            )
            out[pos] = np.exp(log_phi)
        return out.astype(complex)

    @property
    def width(self):
        return self.scale

    @property
    def variance(self):
        return self.scale ** 2 * self.df / (self.df - 2.0) if self.df > 2.0 else math.inf

    def scaled(self, c):
        return StudentTLaw(self.df, self.scale * c)

    def to_dict(self):
        return {"kind": self.kind, "df": self.df, "scale": self.scale}


@dataclass(frozen=True)
class TabulatedLaw(InnovationLaw):
    """Resampling law over user-supplied values; no analytic characteristic function."""

    values: tuple[float, ...]

    kind: ClassVar[str] = "tabulated"
    has_analytic_cf: ClassVar[bool] = False

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) < 2:
            raise ValidationError("tabulated law needs at least two values")
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError("tabulated values must be finite")

    def sample(self, rng, size):
        return rng.choice(np.asarray(self.values, dtype=float), size)

    def cf(self, lam):
        raise NoCharacteristicFunction("no characteristic function available")

    def one_minus_abs_cf_sq(self, lam):
        raise NoCharacteristicFunction("no characteristic function available")

    @property
    def width(self):
        return float(np.std(self.values)) or 1.0

    @property
    def variance(self):
        return float(np.var(self.values))

    def scaled(self, c):
        return TabulatedLaw(tuple(c * v for v in self.values))

    def to_dict(self):
        return {"kind": self.kind, "values": list(self.values)}


# --------------------------------------------------------------------------
# Process specification and samples
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearProcessSpec:
    coefficients: CoefficientScheme
    innovations: InnovationLaw
    truncation_tolerance: float = 1e-8

    def __post_init__(self):
        _check_positive("truncation_tolerance", self.truncation_tolerance)

    def to_dict(self) -> dict[str, Any]:
        return {
            "coefficients": self.coefficients.to_dict(),
            "innovations": self.innovations.to_dict(),
            "truncation_tolerance": self.truncation_tolerance,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LinearProcessSpec":
        try:
            return cls(
                CoefficientScheme.from_dict(d["coefficients"]),
                InnovationLaw.from_dict(d["innovations"]),
                float(d.get("truncation_tolerance", 1e-8)),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed process spec: {exc}") from exc

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def scaled_coefficients(self, c: float) -> "LinearProcessSpec":
        return LinearProcessSpec(self.coefficients.scaled(c), self.innovations, self.truncation_tolerance)

    def with_innovations(self, law: InnovationLaw) -> "LinearProcessSpec":
        return LinearProcessSpec(self.coefficients, law, self.truncation_tolerance)


def load_spec(path: str | Path) -> LinearProcessSpec:
    with open(path, encoding="utf-8") as fh:
        return LinearProcessSpec.from_dict(json.load(fh))


def save_spec(spec: LinearProcessSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SeriesSample:
    values: np.ndarray
    seed: int | None = None
    spec_fingerprint: str | None = None
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValidationError("a sample needs at least two values")
        if not np.all(np.isfinite(v)):
            raise ValidationError("sample contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def to_csv(self, path: str | Path) -> list[Path]:
        """Write ``x`` column CSV plus a JSON sidecar; return both paths."""
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("x\n")
            fh.writelines(f"{v!r}\n" for v in self.values.tolist())
        sidecar = path.with_suffix(".json")
        sidecar.write_text(
            json.dumps(
                {"n": self.n, "seed": self.seed, "spec_fingerprint": self.spec_fingerprint, **self.meta},
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        return [path, sidecar]

    @classmethod
    def from_csv(cls, path: str | Path) -> "SeriesSample":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "x":
                raise ValidationError(f"{path}: expected header 'x', found {header!r}")
            values = [float(line) for line in fh if line.strip()]
        seed = fingerprint = None
        sidecar = path.with_suffix(".json")
        if sidecar.exists():
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
            seed, fingerprint = meta.get("seed"), meta.get("spec_fingerprint")
        return cls(np.asarray(values), seed, fingerprint)


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]


def validate_spec(spec: LinearProcessSpec, gamma: float = 1.0) -> ValidationReport:
    """Check the coefficient conditions a spec must meet for regularity ``gamma``.

    Violations are returned, never raised.
    """
    out: list[str] = []
    if not (0.0 < gamma <= 1.0):
        out.append(f"gamma must lie in (0, 1], got {gamma}")
    coeffs = spec.coefficients
    if coeffs.nonzero_count() < 3:
        out.append("fewer than three nonzero coefficients")
    if coeffs.head(0)[0] == 0.0:
        out.append("a_0 must be nonzero")
    if 0.0 < gamma <= 1.0 and not coeffs.gamma_summable(gamma):
        out.append(f"sum |a_i|^gamma diverges for gamma={gamma}")
    return ValidationReport(not out, tuple(out))


def effective_truncation(spec: LinearProcessSpec) -> int:
    """Smallest order ``M`` with ``sum_{i>M} |a_i| < truncation_tolerance``."""
    m = spec.coefficients.truncation_order(spec.truncation_tolerance)
    if m > MAX_TRUNCATION_ORDER:
        raise ValidationError(
            f"truncation order {m} exceeds {MAX_TRUNCATION_ORDER}; raise truncation_tolerance"
        )
    return m


def apply_filter(coefficients: np.ndarray, innovations: np.ndarray) -> np.ndarray:
    """``X_t = sum_i a_i * eps[t + M - i]`` for every full window of ``innovations``.

    ``innovations`` holds ``eps_{1-M} .. eps_n`` in time order, so the output has
    ``len(innovations) - M`` entries.
    """
    a = np.asarray(coefficients, dtype=float)
    eps = np.asarray(innovations, dtype=float)
    if a.size - 1 <= _DIRECT_FILTER_MAX:
        return np.convolve(eps, a, mode="valid")
    return signal.fftconvolve(eps, a, mode="valid")


def simulate(
    spec: LinearProcessSpec,
    n: int,
    seed: int,
    *,
    validate: bool = True,
    order: int | None = None,
) -> SeriesSample:
    """Draw ``X_1..X_n`` from ``spec``, deterministically in ``(spec, n, seed)``.

    The present innovations ``eps_1..eps_n`` are drawn first and the burn-in
    ``eps_0, eps_-1, ...`` afterwards, so realizations at different truncation
    orders share every innovation they have in common.
    """
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    if validate:
        report = validate_spec(spec, 1.0)
        if not report.ok:
            raise ValidationError("; ".join(report.violations))
    m = effective_truncation(spec) if order is None else int(order)
    rng = rng_for(seed, "innovations")
    present = spec.innovations.sample(rng, n)
    past = spec.innovations.sample(rng, m)
    eps = np.concatenate([past[::-1], present])
    x = apply_filter(spec.coefficients.head(m), eps)
    return SeriesSample(x, seed, spec.fingerprint())
