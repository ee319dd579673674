"""Smoothing kernels for the pairwise estimator.

Each stock kernel carries its Fourier transform ``K^(l) = int exp(i*l*u) K(u) du``,
its second absolute moment and the polynomial decay order of ``|K^|``; the last
is what the integrability checker consults for ``sup |K^(l)| |l|^gamma < inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ValidationError

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Numba dispatch codes (see _pairsum); -1 routes to the NumPy path.
USER_CODE = -1

# exp(-u^2/2) underflows to exactly 0.0 beyond u ~ 38.6
_GAUSS_CUTOFF = 39.0


def _gaussian(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / _SQRT_2PI


def _gaussian_ft(lam):
    lam = np.asarray(lam, dtype=float)
    return np.exp(-0.5 * lam * lam)


def _epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _epanechnikov_ft(lam):
    lam = np.abs(np.asarray(lam, dtype=float))
    small = lam < 1e-3
    safe = np.where(small, 1.0, lam)
    big = 3.0 * (np.sin(safe) - safe * np.cos(safe)) / safe ** 3
    return np.where(small, 1.0 - lam * lam / 10.0, big)


def _triangular(u):
    u = np.abs(np.asarray(u, dtype=float))
    return np.where(u <= 1.0, 1.0 - u, 0.0)


def _triangular_ft(lam):
    lam = np.asarray(lam, dtype=float)
    return np.sinc(lam / (2.0 * np.pi)) ** 2


def _box(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def _box_ft(lam):
    return np.sinc(np.asarray(lam, dtype=float) / np.pi)


def _gaussian4(u):
    u = np.asarray(u, dtype=float)
    return 0.5 * (3.0 - u * u) * np.exp(-0.5 * u * u) / _SQRT_2PI


def _gaussian4_ft(lam):
    lam = np.asarray(lam, dtype=float)
    return (1.0 + 0.5 * lam * lam) * np.exp(-0.5 * lam * lam)


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric, bounded kernel with unit integral.

    ``fourier_decay`` is ``p`` such that ``|K^(l)| = O(|l|**-p)`` (``inf`` for
    super-polynomial decay, ``None`` when unknown).
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    fourier: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    nonnegative: bool = True
    support_radius: float = math.inf
    second_abs_moment: float = math.nan
    fourier_decay: float | None = None
    code: int = USER_CODE
    symmetric: bool = True

    def __post_init__(self):
        if not self.symmetric:
            raise ValidationError("kernel must be symmetric")
        if not self.support_radius > 0.0:
            raise ValidationError("support radius must be positive")

    def __call__(self, u):
        return self.func(u)

    @property
    def compact(self) -> bool:
        return math.isfinite(self.support_radius)

    @property
    def pair_cutoff(self) -> float:
        """Scaled distance beyond which ``K`` is exactly zero in floating point."""
        if self.compact:
            return self.support_radius
        if self.code in (0, 4):
            return _GAUSS_CUTOFF
        return math.inf

    def k0(self) -> float:
        return float(np.asarray(self.func(np.array([0.0])))[0])

    def fourier_bounded_with_weight(self, gamma: float) -> bool | None:
        """Whether ``sup_l |K^(l)| |l|**gamma`` is finite, from metadata."""
        if self.fourier_decay is not None:
            return gamma <= self.fourier_decay
        if self.fourier is None:
            return None
        lam = np.logspace(0, 6, 601)
        w = np.abs(self.fourier(lam)) * lam ** gamma
        # bounded if the last two decades do not exceed the earlier maximum
        return bool(w[400:].max() <= 1.01 * w[:400].max())

    def verify(self, grid_radius: float = 20.0) -> dict[str, float | bool]:
        """Numerical checks of symmetry, unit mass, moment and boundedness."""
        r = min(self.support_radius, grid_radius)
        u = np.linspace(0.0, r, 4001)
        ku = np.asarray(self.func(u))
        sym = float(np.max(np.abs(ku - np.asarray(self.func(-u)))))
        lim = self.support_radius if self.compact else np.inf
        brk = [0.0] if self.compact else None
        mass, _ = integrate.quad(self.func, -lim, lim, epsabs=1e-13, epsrel=1e-13, limit=200, points=brk)
        m2, _ = integrate.quad(
            lambda t: t * t * abs(float(self.func(np.array([t]))[0])),
            -lim, lim, epsabs=1e-13, epsrel=1e-13, limit=200, points=brk,
        )
        return {
            "symmetry_max_abs_diff": sym,
            "mass": mass,
            "second_abs_moment_quad": m2,
            "sup_abs": float(np.max(np.abs(ku))),
            "symmetric": sym == 0.0,
            "unit_mass": abs(mass - 1.0) < 1e-10,
            "moment_matches": abs(m2 - self.second_abs_moment) < 1e-8,
        }

    @classmethod
    def custom(
        cls,
        func: Callable[[np.ndarray], np.ndarray],
        *,
        name: str = "user",
        fourier: Callable[[np.ndarray], np.ndarray] | None = None,
        nonnegative: bool = False,
        support_radius: float = math.inf,
        second_abs_moment: float = math.nan,
        fourier_decay: float | None = None,
    ) -> "KernelSpec":
        """Wrap a vectorized callable; evaluation always takes the NumPy path."""
        return cls(name, func, fourier, nonnegative, support_radius, second_abs_moment, fourier_decay)


GAUSSIAN = KernelSpec("gaussian", _gaussian, _gaussian_ft, True, math.inf, 1.0, math.inf, 0)
EPANECHNIKOV = KernelSpec("epanechnikov", _epanechnikov, _epanechnikov_ft, True, 1.0, 0.2, 2.0, 1)
TRIANGULAR = KernelSpec("triangular", _triangular, _triangular_ft, True, 1.0, 1.0 / 6.0, 2.0, 2)
UNIFORM_BOX = KernelSpec("uniform", _box, _box_ft, True, 1.0, 1.0 / 3.0, 1.0, 3)
# fourth-order (signed) Gaussian kernel
GAUSSIAN4 = KernelSpec(
    "gaussian4",
    _gaussian4,
    _gaussian4_ft,
    False,
    math.inf,
    6.0 * math.sqrt(3.0) * math.exp(-1.5) / _SQRT_2PI,
    math.inf,
    4,
)

_STOCK = {
    "gaussian": GAUSSIAN,
    "epanechnikov": EPANECHNIKOV,
    "triangular": TRIANGULAR,
    "uniform": UNIFORM_BOX,
    "uniform-box": UNIFORM_BOX,
    "box": UNIFORM_BOX,
    "gaussian4": GAUSSIAN4,
}

KERNEL_NAMES = ("gaussian", "epanechnikov", "triangular", "uniform", "gaussian4")


def get_kernel(name: str | KernelSpec) -> KernelSpec:
    if isinstance(name, KernelSpec):
        return name
    try:
        return _STOCK[name.lower()]
    except KeyError:
        raise ValidationError(f"unknown kernel {name!r}; choose from {', '.join(KERNEL_NAMES)}") from None
