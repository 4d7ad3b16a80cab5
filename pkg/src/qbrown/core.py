"""Shared plumbing: units, random streams, solver tolerances and a few
numerical primitives (root bracketing, adaptive quadrature, I0/I1).

Reduced units are the default: m = 1 and k_B = 1, so a temperature is an
energy and ħ is a free scalar.  SI mode exists for the radiating-electron
constants only.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .errors import BesselOverflow, ConfigError, NoBracket, NoConvergence

# CODATA 2018
CODATA_2018 = {
    "e": 1.602176634e-19,  # C, exact
    "epsilon_0": 8.8541878128e-12,  # F/m
    "c": 299792458.0,  # m/s, exact
    "hbar": 1.054571817e-34,  # J s
    "m_e": 9.1093837015e-31,  # kg
    "k_B": 1.380649e-23,  # J/K, exact
    "alpha": 7.2973525693e-3,
}


@dataclass(frozen=True)
class UnitSystem:
    """Unit convention.

    In ``"reduced"`` mode ``k_B = 1`` and ``hbar`` is whatever the caller
    sets.  In ``"SI"`` mode all constants are CODATA 2018 values and the
    ``hbar`` argument is ignored.
    """

    mode: str = "reduced"
    hbar_reduced: float = 1.0

    def __post_init__(self):
        if self.mode not in ("reduced", "SI"):
            raise ConfigError(f"units.mode must be 'reduced' or 'SI', got {self.mode!r}")
        if self.hbar_reduced < 0:
            raise ConfigError("units.hbar must be >= 0")

    def constant(self, name: str) -> float:
        if self.mode == "SI":
            return CODATA_2018[name]
        reduced = {"k_B": 1.0, "hbar": self.hbar_reduced}
        if name not in reduced:
            raise ConfigError(f"constant {name!r} is only defined in SI mode")
        return reduced[name]

    @property
    def k_B(self) -> float:
        return self.constant("k_B")

    @property
    def hbar(self) -> float:
        return self.constant("hbar")

    def thermal_energy(self, T: float) -> float:
        return self.k_B * T

    def to_reduced(self, value: float) -> float:
        # reduced mode: identity by construction
        return float(value)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(master_seed, stream_index)``.

    Each stream is a Philox generator seeded from a ``SeedSequence`` whose
    spawn key is the stream index, so streams are independent and can be
    created in any order on any worker.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise ConfigError("stream_index must be non-negative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.Philox(seq))


def gaussian_sample(stream: RngStream, n: int) -> np.ndarray:
    """Draw ``n`` standard normal deviates from a fresh copy of ``stream``."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    return stream.generator().standard_normal(n)


@dataclass(frozen=True)
class SolverConfig:
    ode_rel_tol: float = 1e-12
    ode_abs_tol: float = 1e-14
    root_tol: float = 1e-13
    quadrature_rel_tol: float = 1e-12
    max_iterations: int = 200

    def __post_init__(self):
        for name in ("ode_rel_tol", "ode_abs_tol", "root_tol", "quadrature_rel_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"solver.{name} must be > 0")
        if self.max_iterations < 1:
            raise ConfigError("solver.max_iterations must be >= 1")


DEFAULT_SOLVER = SolverConfig()


def brent_root(f: Callable[[float], float], lo: float, hi: float,
               config: SolverConfig = DEFAULT_SOLVER) -> float:
    """Root of ``f`` in ``[lo, hi]`` by Brent's method.

    Raises
    ------
    NoBracket
        If ``f(lo)`` and ``f(hi)`` have the same strict sign.
    NoConvergence
        If the iteration budget runs out.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if np.sign(flo) == np.sign(fhi):
        raise NoBracket(f"f({lo})={flo:g} and f({hi})={fhi:g} have the same sign")
    try:
        root = optimize.brentq(f, lo, hi, xtol=config.root_tol * max(1e-300, abs(hi - lo)),
                               rtol=max(config.root_tol, 4 * np.finfo(float).eps),
                               maxiter=config.max_iterations)
    except RuntimeError as exc:
        raise NoConvergence(str(exc)) from exc
    return float(root)


def adaptive_quadrature(f: Callable[[float], float], lo: float, hi: float,
                        config: SolverConfig = DEFAULT_SOLVER, points=None) -> float:
    """Adaptive Gauss-Kronrod estimate of the integral of ``f`` over ``[lo, hi]``.

    Raises ``NoConvergence`` when QUADPACK reports trouble or its error
    estimate exceeds the requested relative tolerance by more than 10x.
    """
    if not lo < hi:
        raise ConfigError("adaptive_quadrature needs lo < hi")
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(f, lo, hi, epsabs=0.0,
                                        epsrel=config.quadrature_rel_tol,
                                        limit=config.max_iterations, points=points)
        except integrate.IntegrationWarning as exc:
            raise NoConvergence(str(exc)) from exc
    if not np.isfinite(value) or err > 10 * config.quadrature_rel_tol * abs(value) + 1e-300:
        raise NoConvergence(f"quadrature error estimate {err:g} too large for value {value:g}")
    return float(value)


_BESSEL_SCALED = {0: special.i0e, 1: special.i1e}
# I_n(x) overflows float64 a little past this argument
_BESSEL_X_MAX = 713.0


def bessel_i(order: int, x, scaled: bool = False):
    """Modified Bessel function of the first kind, orders 0 and 1.

    With ``scaled=True`` returns ``exp(-x) I_n(x)``, which never overflows.
    """
    if order not in _BESSEL_SCALED:
        raise ConfigError("bessel_i supports order 0 or 1 only")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ConfigError("bessel_i needs x >= 0")
    val = _BESSEL_SCALED[order](x)
    if scaled:
        return val if val.ndim else float(val)
    if np.any(x > _BESSEL_X_MAX):
        raise BesselOverflow(f"I_{order}(x) overflows for x > {_BESSEL_X_MAX}; use scaled=True")
    val = val * np.exp(x)
    return val if val.ndim else float(val)
