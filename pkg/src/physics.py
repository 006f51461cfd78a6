"""
Physical constants, group Planck functions, opacities and the material equation of state.

Arrays indexed by group carry the group on axis 0, followed by the shape of the
temperature argument, matching the group-major phase-space layout.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from scipy import constants as codata
from scipy.special import bernoulli, factorial, roots_legendre

from src.errors import DomainError

ArrayLike = Union[float, np.ndarray]

PI4_OVER_15 = math.pi**4 / 15.0
SERIES_RTOL = 1.0e-12
# Below this x the Bernoulli power series is used, above it the exponential tail series.
SERIES_SWITCH = 2.0
GROUP_QUADRATURE_POINTS = 16


def radiation_constant_codata() -> float:
    """Radiation constant in GJ cm^-3 keV^-4 derived from CODATA values."""
    a_si = 4.0 * codata.Stefan_Boltzmann / codata.c  # J m^-3 K^-4
    kelvin_per_kev = 1.0e3 * codata.electron_volt / codata.Boltzmann
    return a_si * kelvin_per_kev**4 * 1.0e-6 * 1.0e-9


SPEED_OF_LIGHT = codata.c * 1.0e2 * 1.0e-9  # cm/ns


@dataclass(frozen=True)
class PhysConstants:
    c: float = SPEED_OF_LIGHT
    a_R: float = field(default_factory=radiation_constant_codata)

    def __post_init__(self):
        if not (self.c > 0 and self.a_R > 0):
            raise DomainError(f"Physical constants must be positive: c={self.c}, a_R={self.a_R}")


@dataclass(frozen=True)
class GroupStructure:
    """Photon energy group boundaries in keV; the last boundary may be ``inf``."""

    boundaries: Tuple[float, ...]

    def __post_init__(self):
        edges = np.asarray(self.boundaries, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise DomainError("Group structure needs at least two boundaries")
        if edges[0] < 0 or np.any(np.diff(edges) <= 0) or np.any(np.isnan(edges)):
            raise DomainError(
                f"Group boundaries must be nonnegative and strictly increasing: {edges}"
            )

    @property
    def n_groups(self) -> int:
        return len(self.boundaries) - 1

    @property
    def edges(self) -> np.ndarray:
        return np.asarray(self.boundaries, dtype=float)

    @property
    def spans_spectrum(self) -> bool:
        return self.boundaries[0] == 0.0 and math.isinf(self.boundaries[-1])

    @classmethod
    def logarithmic(cls, n_groups: int, min_kev: float, max_kev: float) -> "GroupStructure":
        """[0, min_kev], log-spaced groups up to max_kev, then [max_kev, inf)."""
        if n_groups < 3:
            raise DomainError("Logarithmic layout needs at least 3 groups")
        inner = np.geomspace(min_kev, max_kev, n_groups - 1)
        return cls(tuple([0.0, *inner.tolist(), math.inf]))


@dataclass(frozen=True)
class OpacityModel:
    """Spectral opacity ``coefficient / (hν)^3 * (1 - exp(-hν/T))`` in cm^-1."""

    coefficient: float = 27.0
    form: str = "fleck_cummings"

    def __post_init__(self):
        if self.coefficient <= 0:
            raise DomainError(f"Opacity coefficient must be positive, got {self.coefficient}")
        if self.form != "fleck_cummings":
            raise DomainError(f"Unknown opacity form: {self.form}")


@dataclass(frozen=True)
class MaterialEos:
    """Linear equation of state ``ε = c_v T``."""

    c_v: float

    def __post_init__(self):
        if self.c_v <= 0:
            raise DomainError(f"Specific heat must be positive, got {self.c_v}")

    def energy(self, temperature: ArrayLike) -> ArrayLike:
        return eos_energy(self, temperature)

    def temperature(self, energy: ArrayLike) -> ArrayLike:
        return eos_temperature(self, energy)


def _require_positive(name: str, value: ArrayLike) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr) | np.isposinf(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be positive, got min {np.min(arr)}")
    return arr


def _log_expm1(x: np.ndarray) -> np.ndarray:
    """log(e^x - 1) for x > 0 without overflow."""
    return x + np.log(-np.expm1(-x))


def spectral_opacity(hnu: ArrayLike, temperature: ArrayLike, model: OpacityModel = OpacityModel()):
    hnu = _require_positive("Photon energy", hnu)
    temperature = _require_positive("Temperature", temperature)
    result = model.coefficient / hnu**3 * (-np.expm1(-hnu / temperature))
    return float(result) if np.ndim(result) == 0 else result


@lru_cache(maxsize=1)
def _bernoulli_coefficients(n_terms: int = 40) -> np.ndarray:
    """Polynomial coefficients of P(x) = sum_n B_n x^(n+3) / ((n+3) n!)."""
    b = bernoulli(n_terms)
    n = np.arange(n_terms + 1)
    coeffs = np.zeros(n_terms + 4)
    coeffs[n + 3] = b / ((n + 3) * factorial(n, exact=False))
    return coeffs


def planck_integral(x: ArrayLike) -> np.ndarray:
    """Dimensionless incomplete Planck integral P(x) = int_0^x u^3/(e^u - 1) du."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("Planck integral argument must be nonnegative")
    small = x < SERIES_SWITCH
    result = np.empty_like(x)
    result[small] = np.polynomial.polynomial.polyval(x[small], _bernoulli_coefficients())
    result[~small] = PI4_OVER_15 - planck_tail(x[~small])
    return result


def planck_tail(x: ArrayLike) -> np.ndarray:
    """Complement Q(x) = int_x^inf u^3/(e^u - 1) du by the exponential series (x >= 2)."""
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    finite = np.isfinite(x)
    xf = x[finite]
    if xf.size == 0:
        return total
    acc = np.zeros_like(xf)
    for k in range(1, 400):
        term = np.exp(-k * xf) * (xf**3 / k + 3 * xf**2 / k**2 + 6 * xf / k**3 + 6 / k**4)
        acc += term
        if np.all(term <= SERIES_RTOL * acc):
            break
    total[finite] = acc
    return total


def _group_planck_fraction(x_lo: np.ndarray, x_hi: np.ndarray) -> np.ndarray:
    """int over [x_lo, x_hi] of u^3/(e^u - 1), normalized by pi^4/15."""
    x_lo, x_hi = np.broadcast_arrays(x_lo, x_hi)
    lo_tail = x_lo >= SERIES_SWITCH
    hi_small = x_hi < SERIES_SWITCH
    out = np.empty(x_lo.shape)
    both_tail = lo_tail
    both_small = ~lo_tail & hi_small
    mixed = ~lo_tail & ~hi_small
    out[both_tail] = planck_tail(x_lo[both_tail]) - planck_tail(x_hi[both_tail])
    out[both_small] = planck_integral(x_hi[both_small]) - planck_integral(x_lo[both_small])
    out[mixed] = (PI4_OVER_15 - planck_tail(x_hi[mixed])) - planck_integral(x_lo[mixed])
    return out / PI4_OVER_15


def planck_group(
    temperature: ArrayLike,
    groups: GroupStructure,
    constants: PhysConstants = PhysConstants(),
) -> np.ndarray:
    """
    Group-integrated Planck function B_g(T), shape (Ng, *T.shape).

    Normalized so that sum_g 4 pi B_g(T) = c a_R T^4 when the groups span (0, inf).
    """
    temperature = _require_positive("Temperature", temperature)
    edges = groups.edges.reshape((-1,) + (1,) * temperature.ndim)
    x = edges / temperature
    fraction = _group_planck_fraction(x[:-1], x[1:])
    return constants.c * constants.a_R * temperature**4 / (4.0 * math.pi) * fraction


@lru_cache(maxsize=8)
def _legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(n)
    return nodes, weights


def _group_nodes(lo: float, hi: float, temperature: np.ndarray):
    """Quadrature nodes (hν) and weights for one group, broadcastable against T."""
    t, w = _legendre(GROUP_QUADRATURE_POINTS)
    shape = (-1,) + (1,) * temperature.ndim
    t, w = t.reshape(shape), w.reshape(shape)
    if math.isfinite(hi):
        return 0.5 * (lo + hi) + 0.5 * (hi - lo) * t, 0.5 * (hi - lo) * w
    if lo > 0:
        u = 0.5 * (1.0 + t)
        return lo / u, 0.5 * w * lo / u**2
    # (0, inf): split at 3T, finite part by plain GL, tail by reciprocal map
    pivot = 3.0 * temperature
    nodes_a = 0.5 * pivot * (1.0 + t)
    weights_a = 0.5 * pivot * w
    u = 0.5 * (1.0 + t)
    nodes_b = pivot / u
    weights_b = 0.5 * w * pivot / u**2
    return np.concatenate([nodes_a, nodes_b]), np.concatenate([weights_a, weights_b])


def group_opacity(
    temperature: ArrayLike,
    groups: GroupStructure,
    model: OpacityModel = OpacityModel(),
) -> np.ndarray:
    """Planck-weighted group opacities kappa_g(T), shape (Ng, *T.shape)."""
    temperature = _require_positive("Temperature", temperature)
    edges = groups.boundaries
    result = np.empty((groups.n_groups,) + temperature.shape)
    for g in range(groups.n_groups):
        nodes, weights = _group_nodes(edges[g], edges[g + 1], temperature)
        log_w = np.log(weights) + 3.0 * np.log(nodes) - _log_expm1(nodes / temperature)
        log_w -= np.max(log_w, axis=0, keepdims=True)
        planck_w = np.exp(log_w)
        kappa_nu = model.coefficient / nodes**3 * (-np.expm1(-nodes / temperature))
        result[g] = np.sum(planck_w * kappa_nu, axis=0) / np.sum(planck_w, axis=0)
    return result


def eos_energy(eos: MaterialEos, temperature: ArrayLike) -> ArrayLike:
    arr = np.asarray(temperature, dtype=float)
    if np.any(arr < 0):
        raise DomainError(f"Temperature must be nonnegative, got min {np.min(arr)}")
    return eos.c_v * temperature


def eos_temperature(eos: MaterialEos, energy: ArrayLike) -> ArrayLike:
    arr = np.asarray(energy, dtype=float)
    if np.any(arr < 0):
        raise DomainError(f"Material energy must be nonnegative, got min {np.min(arr)}")
    return energy / eos.c_v


@dataclass(frozen=True)
class MaterialModel:
    """Bundle of everything the solvers need to evaluate material physics."""

    constants: PhysConstants
    groups: GroupStructure
    opacity_model: OpacityModel
    eos: MaterialEos

    def planck(self, temperature: ArrayLike) -> np.ndarray:
        return planck_group(temperature, self.groups, self.constants)

    def opacity(self, temperature: ArrayLike) -> np.ndarray:
        return group_opacity(temperature, self.groups, self.opacity_model)

    def equilibrium_intensity(self, temperature: ArrayLike) -> np.ndarray:
        """Isotropic equilibrium group intensity 2 pi B_g(T)."""
        return 2.0 * math.pi * self.planck(temperature)
