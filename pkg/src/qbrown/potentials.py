"""One-dimensional substrate potentials and the curvature-induced friction.

Every potential returns ``(phi, dphi, d2phi)`` from ``evaluate``.  The
friction coefficient felt by a particle coupled to a harmonic solid bath is

    b(x) = phi''(x)**2 / (4 pi rho_m c**3)

so it vanishes wherever the potential has an inflection point.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .core import DEFAULT_SOLVER, SolverConfig, adaptive_quadrature
from .errors import ConfigError, NotPeriodic, OutOfDomain


def _cospi(u):
    """cos(pi*u) that is exactly zero at half-integers."""
    u = np.asarray(u, dtype=float)
    r = np.abs(u - 2.0 * np.round(u / 2.0))  # in [0, 1]
    return np.sin(np.pi * (0.5 - r))


def _ret(*arrays):
    out = tuple(a if np.ndim(a) else float(a) for a in arrays)
    return out


@dataclass(frozen=True)
class BathSpec:
    """Solid thermal bath: mass density, sound velocity, temperature, ħ.

    ``T`` is an energy in reduced units (k_B = 1).  It doubles as the cell
    temperament when modelling active particles.
    """

    rho_m: float = 1.0
    c: float = 1.0
    T: float = 1.0
    hbar: float = 0.0

    def __post_init__(self):
        if not self.rho_m > 0:
            raise ConfigError("bath.rho_m must be > 0")
        if not self.c > 0:
            raise ConfigError("bath.c must be > 0")
        if not self.T >= 0:
            raise ConfigError("bath.T must be >= 0")
        if not self.hbar >= 0:
            raise ConfigError("bath.hbar must be >= 0")

    @property
    def beta(self) -> float:
        return math.inf if self.T == 0 else 1.0 / self.T

    @property
    def coupling(self) -> float:
        """4 pi rho_m c^3, the denominator of the friction relation."""
        return 4.0 * math.pi * self.rho_m * self.c**3


class Potential:
    """Base class.  Subclasses set ``period`` (``None`` if aperiodic)."""

    period: float | None = None

    def evaluate(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.evaluate(x)[0]

    def force(self, x):
        """-phi'(x); subclasses may override with a cheaper form."""
        return -np.asarray(self.evaluate(x)[1])

    def curvature(self, x):
        return np.asarray(self.evaluate(x)[2])


@dataclass(frozen=True)
class Harmonic(Potential):
    m: float = 1.0
    omega0: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise ConfigError("potential.m must be > 0")

    def evaluate(self, x):
        k = self.m * self.omega0**2
        x = np.asarray(x, dtype=float)
        return _ret(0.5 * k * x**2, k * x, np.full_like(x, k))


@dataclass(frozen=True)
class Barrier(Potential):
    m: float = 1.0
    omega1: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise ConfigError("potential.m must be > 0")

    def evaluate(self, x):
        k = self.m * self.omega1**2
        x = np.asarray(x, dtype=float)
        return _ret(-0.5 * k * x**2, -k * x, np.full_like(x, -k))


@dataclass(frozen=True)
class FrenkelKantorova(Potential):
    """A cos(2 pi x / a)."""

    A: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError("potential.a must be > 0")

    @property
    def period(self):
        return self.a

    def evaluate(self, x):
        k = 2.0 * math.pi / self.a
        x = np.asarray(x, dtype=float)
        c, s = np.cos(k * x), np.sin(k * x)
        return _ret(self.A * c, -self.A * k * s, -self.A * k * k * c)

    def force(self, x):
        k = 2.0 * math.pi / self.a
        return (self.A * k) * np.sin(k * np.asarray(x, dtype=float))

    def curvature(self, x):
        k = 2.0 * math.pi / self.a
        return (-self.A * k * k) * np.cos(k * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Dimer(Potential):
    """Rigid dimer of bond length ``l`` at angle ``phi`` to the motion.

    Acts as a Frenkel-Kantorova potential with amplitude
    ``2 A cos(pi l cos(phi) / a)``.
    """

    A: float = 1.0
    a: float = 1.0
    l: float = 1.0
    phi: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError("potential.a must be > 0")
        if not self.l >= 0:
            raise ConfigError("potential.l must be >= 0")

    @property
    def period(self):
        return self.a

    @property
    def effective_amplitude(self) -> float:
        return float(2.0 * self.A * _cospi(self.l * math.cos(self.phi) / self.a))

    def as_fk(self) -> FrenkelKantorova:
        return FrenkelKantorova(self.effective_amplitude, self.a)

    def evaluate(self, x):
        return self.as_fk().evaluate(x)


@dataclass(frozen=True)
class Chain(Potential):
    """Linear chain of ``N`` sites spaced by ``l`` in a two-component
    substrate potential; the site potentials are summed directly."""

    N: int = 1
    l: float = 1.0
    A1: float = 1.0
    l1: float = 1.0
    A2: float = 0.0
    l2: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError("chain.N must be an integer >= 1")
        if not (self.l1 > 0 and self.l2 > 0):
            raise ConfigError("chain.l1 and chain.l2 must be > 0")

    @property
    def period(self):
        ratio = Fraction(self.l2 / self.l1).limit_denominator(1000)
        if abs(float(ratio) - self.l2 / self.l1) > 1e-9 * self.l2 / self.l1:
            return None
        # smallest P with P/l1 and P/l2 both integers
        return self.l1 * ratio.numerator

    def _components(self):
        return ((self.A1, 2.0 * math.pi / self.l1), (self.A2, 2.0 * math.pi / self.l2))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        phi = np.zeros_like(x)
        d1 = np.zeros_like(x)
        d2 = np.zeros_like(x)
        for amp, k in self._components():
            if amp == 0:
                continue
            for j in range(int(self.N)):
                arg = k * (x + j * self.l)
                c, s = np.cos(arg), np.sin(arg)
                phi += amp * c
                d1 -= amp * k * s
                d2 -= amp * k * k * c
        return _ret(phi, d1, d2)

    def fourier_amplitudes(self) -> tuple[float, float]:
        """Amplitudes of the short and long Fourier components of the sum."""
        out = []
        for amp, k in self._components():
            z = np.exp(1j * k * self.l * np.arange(int(self.N))).sum()
            out.append(abs(amp) * abs(z))
        return tuple(out)


@dataclass(frozen=True)
class Tabulated(Potential):
    """Cubic-spline interpolant through ``(x, phi)`` samples.

    Non-periodic tables use a clamped spline (zero end slopes); with
    ``periodic=True`` the first and last values must agree and the spline
    is periodic with period ``x[-1] - x[0]``.
    """

    x: tuple
    phi: tuple
    periodic: bool = False
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        xs = np.asarray(self.x, dtype=float)
        ys = np.asarray(self.phi, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape:
            raise ConfigError("tabulated potential needs matching 1D x and phi")
        if xs.size < 5:
            raise ConfigError("tabulated potential needs at least 5 points")
        if np.any(np.diff(xs) <= 0):
            raise ConfigError("tabulated x grid must be strictly increasing")
        if self.periodic and not math.isclose(ys[0], ys[-1], rel_tol=1e-12, abs_tol=1e-12):
            raise ConfigError("periodic table needs phi[0] == phi[-1]")
        bc = "periodic" if self.periodic else "clamped"
        if self.periodic:
            ys = ys.copy()
            ys[-1] = ys[0]
        object.__setattr__(self, "_spline", CubicSpline(xs, ys, bc_type=bc))

    @property
    def period(self):
        return (self.x[-1] - self.x[0]) if self.periodic else None

    @classmethod
    def from_csv(cls, path, periodic: bool = False) -> "Tabulated":
        """Load a two-column ``x, phi`` CSV; a non-numeric first row is a header."""
        rows = []
        with open(Path(path), newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if i == 0 or not rows:
                        continue
                    raise ConfigError(f"{path}: bad row {i + 1}: {row}")
        xs, ys = zip(*rows) if rows else ((), ())
        return cls(tuple(xs), tuple(ys), periodic)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.x[0], self.x[-1]
        if self.periodic:
            x = lo + np.mod(x - lo, hi - lo)
        elif np.any((x < lo) | (x > hi)):
            raise OutOfDomain(f"tabulated potential defined on [{lo}, {hi}] only")
        s = self._spline
        return _ret(s(x), s(x, 1), s(x, 2))


def evaluate(spec: Potential, x):
    """``(phi, phi', phi'')`` of ``spec`` at ``x``."""
    return spec.evaluate(x)


def friction_profile(spec: Potential, bath: BathSpec, x):
    """Position-dependent friction b(x) = phi''(x)^2 / (4 pi rho_m c^3)."""
    d2 = spec.curvature(x)
    b = d2**2 / bath.coupling
    return b if b.ndim else float(b)


def mean_friction(spec: Potential, bath: BathSpec,
                  config: SolverConfig = DEFAULT_SOLVER) -> float:
    """Average of b(x) over one period.

    Closed form for Frenkel-Kantorova (and rigid dimers through their
    effective amplitude); adaptive quadrature otherwise.
    """
    if isinstance(spec, Dimer):
        spec = spec.as_fk()
    if isinstance(spec, FrenkelKantorova):
        return 2.0 * math.pi**3 * spec.A**2 / (bath.rho_m * bath.c**3 * spec.a**4)
    return mean_friction_quadrature(spec, bath, config)


def mean_friction_quadrature(spec: Potential, bath: BathSpec,
                             config: SolverConfig = DEFAULT_SOLVER) -> float:
    period = spec.period
    if period is None:
        raise NotPeriodic(f"{type(spec).__name__} has no period to average over")
    if isinstance(spec, Tabulated):
        # phi'' is piecewise linear, so b is piecewise quadratic: 2-point Gauss is exact
        knots = np.asarray(spec.x)
        mid, half = 0.5 * (knots[1:] + knots[:-1]), 0.5 * np.diff(knots)
        g = half / math.sqrt(3.0)
        b = friction_profile(spec, bath, mid - g) + friction_profile(spec, bath, mid + g)
        return float(np.sum(half * b)) / period
    total = adaptive_quadrature(lambda s: friction_profile(spec, bath, s), 0.0, period, config)
    return total / period
