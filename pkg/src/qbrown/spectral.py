"""Velocity spectral densities, the quantum thermal-energy multiplier and the
Brownian-emitter constants.

Variances follow the one-sided convention sigma^2 = (1/pi) int_0^inf S dw,
which turns the classical Lorentzian into k_B T / m.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CODATA_2018, DEFAULT_SOLVER, SolverConfig, UnitSystem, adaptive_quadrature, brent_root
from .errors import ConfigError, NoBracket, Unbounded
from .io import write_csv


@dataclass(frozen=True)
class ThermalQuantum:
    """S(w) = b hbar w coth(beta hbar w / 2) / (m^2 w^2 + b^2)."""

    m: float = 1.0
    b_bar: float = 1.0
    T: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if not (self.m > 0 and self.b_bar > 0):
            raise ConfigError("spectrum.m and spectrum.b_bar must be > 0")
        if not (self.T >= 0 and self.hbar >= 0):
            raise ConfigError("spectrum.T and spectrum.hbar must be >= 0")
        if self.T == 0 and self.hbar == 0:
            raise ConfigError("spectrum needs T > 0 or hbar > 0")


@dataclass(frozen=True)
class Emitter:
    """Zero-point driven radiating charge: S(w) = hbar w tau0 / (m (w^2 tau0^2 + 1))."""

    m: float
    tau0: float
    hbar: float

    def __post_init__(self):
        if not (self.m > 0 and self.tau0 > 0 and self.hbar > 0):
            raise ConfigError("emitter m, tau0 and hbar must be > 0")


SpectrumSpec = ThermalQuantum | Emitter


def _out(x):
    return x if np.ndim(x) else float(x)


def _multiplier(omega, T, hbar):
    omega = np.abs(np.asarray(omega, dtype=float))
    if T == 0:
        return 0.5 * hbar * omega
    with np.errstate(over="ignore"):
        x = 0.5 * hbar * omega / T
    # coth x = 1 to double precision beyond x = 20; this also covers x = inf
    small = np.where((x > 0) & (x <= 20), x, 1.0)
    xc = np.where(x > 0, small / np.tanh(small), 1.0)
    return np.where(x > 20, 0.5 * hbar * omega, T * xc)


def _xcothx_minus_one(x):
    """x coth(x) - 1 without cancellation at small x."""
    x = np.abs(np.asarray(x, dtype=float))
    small = x < 0.1
    xs = np.where(small, x, 0.0) ** 2
    series = xs * (1 / 3 - xs * (1 / 45 - xs * (2 / 945 - xs / 4725)))
    xl = np.where(small, 1.0, x)
    return np.where(small, series, xl / np.tanh(xl) - 1)


def thermal_energy_multiplier(omega, T: float, hbar: float):
    """``(exact, expansion)`` with exact = (hbar w/2) coth(beta hbar w/2)
    and expansion = k_B T + (hbar w)^2 / (12 k_B T)."""
    if not (T >= 0 and hbar >= 0):
        raise ConfigError("T and hbar must be >= 0")
    omega = np.asarray(omega, dtype=float)
    if T == 0 and np.any(omega == 0):
        raise ConfigError("multiplier needs T > 0 or omega > 0")
    exact = _multiplier(omega, T, hbar)
    if T == 0:
        expansion = np.full_like(omega, np.inf)
    else:
        expansion = T + (hbar * omega) ** 2 / (12 * T)
    return _out(exact), _out(expansion)


def velocity_spectrum(spec: SpectrumSpec, omega):
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ConfigError("omega must be >= 0")
    if isinstance(spec, ThermalQuantum):
        e = _multiplier(omega, spec.T, spec.hbar)
        out = 2 * spec.b_bar * e / ((spec.m * omega) ** 2 + spec.b_bar**2)
    elif isinstance(spec, Emitter):
        out = spec.hbar * omega * spec.tau0 / (spec.m * ((omega * spec.tau0) ** 2 + 1))
    else:
        raise ConfigError(f"unknown spectrum spec {type(spec).__name__}")
    return _out(out)


def einstein_D(spec: SpectrumSpec) -> float:
    """D = S(0)/2."""
    return 0.5 * velocity_spectrum(spec, 0.0)


def spectrum_variance(spec: SpectrumSpec, omega_max: float, config: SolverConfig = DEFAULT_SOLVER) -> float:
    """(1/pi) int_0^omega_max S dw by adaptive quadrature."""
    return adaptive_quadrature(lambda w: velocity_spectrum(spec, w), 0.0, omega_max, config) / math.pi


@dataclass(frozen=True)
class CutoffResult:
    omega: float
    estimate: float  # (2 pi b k_B T / m hbar)^(1/2)


def cutoff_estimate(spec: ThermalQuantum) -> float:
    if spec.hbar == 0:
        raise Unbounded("cutoff frequency diverges in the classical limit")
    return math.sqrt(2 * math.pi * spec.b_bar * spec.T / (spec.m * spec.hbar))


def cutoff_frequency(spec: ThermalQuantum, config: SolverConfig = DEFAULT_SOLVER) -> CutoffResult:
    """Frequency Omega where (1/pi) int_0^Omega S dw reaches k_B T / m.

    Written as (quantum surplus up to Omega) - (classical tail beyond Omega)
    so the classical part cancels analytically.
    """
    if not isinstance(spec, ThermalQuantum):
        raise ConfigError("cutoff frequency is defined for the thermal spectrum")
    if spec.hbar == 0:
        raise Unbounded("cutoff frequency diverges in the classical limit")
    if spec.T == 0:
        raise ConfigError("cutoff frequency needs T > 0")
    m, b, T = spec.m, spec.b_bar, spec.T
    rate = b / m

    def surplus(w):
        excess = T * float(_xcothx_minus_one(0.5 * spec.hbar * w / T))
        return 2 * b * excess / ((m * w) ** 2 + b * b)

    def g(omega):
        tail = 2 * T / (math.pi * m) * math.atan(rate / omega)
        return adaptive_quadrature(surplus, 0.0, omega, config) / math.pi - tail

    lo = rate * 1e-6
    hi = max(cutoff_estimate(spec), 2 * rate)
    for _ in range(200):
        if g(hi) > 0:
            break
        lo, hi = hi, hi * 10
    else:
        raise NoBracket("cutoff frequency not bracketed")
    return CutoffResult(brent_root(g, lo, hi, config), cutoff_estimate(spec))


@dataclass(frozen=True)
class EmitterConstants:
    tau0: float
    omega: float
    omega_tau0: float
    sigma_v2: float
    sigma_v_over_c: float
    sigma_v2_integral: float


def emitter_constants(units: UnitSystem = UnitSystem("SI"),
                      config: SolverConfig = DEFAULT_SOLVER) -> EmitterConstants:
    """Radiation time, Zitterbewegung frequency and velocity spread of an electron.

    ``sigma_v2`` is the closed form e^2 c / (3 pi^2 eps0 hbar);
    ``sigma_v2_integral`` is (1/pi) int_0^Omega (hbar w tau0 / m) dw evaluated
    by quadrature for an independent check.
    """
    if units.mode != "SI":
        raise ConfigError("emitter constants need SI units")
    e, eps0, c, hbar, m = (CODATA_2018[k] for k in ("e", "epsilon_0", "c", "hbar", "m_e"))
    tau0 = e * e / (6 * math.pi * eps0 * m * c**3)
    omega = 2 * m * c * c / hbar
    sigma_v2 = e * e * c / (3 * math.pi**2 * eps0 * hbar)
    # integrate in the scaled variable u = w / Omega to keep the integrand O(1)
    scale = hbar * tau0 * omega * omega / m
    integral = scale * adaptive_quadrature(lambda u: u, 0.0, 1.0, config) / math.pi
    return EmitterConstants(tau0, omega, omega * tau0, sigma_v2, math.sqrt(sigma_v2) / c, integral)


def spectrum_to_csv(spec: SpectrumSpec, omega, path, meta=None):
    omega = np.asarray(omega, dtype=float)
    return write_csv(path, ["omega", "S"], zip(omega, np.atleast_1d(velocity_spectrum(spec, omega))), meta)
