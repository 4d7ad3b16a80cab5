"""Diffusion coefficients in periodic potentials with curvature friction.

With b(x) = phi''^2 / (4 pi rho_m c^3) the Festa-d'Agliano / Lifson-Jackson
expression for one period a becomes

    D = 4 pi rho_m c^3 k_B T a^2 / (I_plus * I_minus),
    I_plus  = int_0^a phi''(x)^2 exp(+beta phi) dx,
    I_minus = int_0^a exp(-beta phi) dx.

For a single cosine the integrals reduce to modified Bessel functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_SOLVER, SolverConfig, adaptive_quadrature, bessel_i
from .errors import BelowOnset, ConfigError, FlatPotential, NotPeriodic, NumericalError
from .potentials import BathSpec, Chain, Dimer, FrenkelKantorova, Potential, mean_friction

FLAT_THRESHOLD = 1e-30


@dataclass(frozen=True)
class DiffusionResult:
    D: float
    method: str
    i_plus: float = math.nan
    i_minus: float = math.nan
    # log of the factor pulled out of I_plus * I_minus to keep them finite
    log_scale: float = 0.0


def _require_temperature(bath: BathSpec):
    if not bath.T > 0:
        raise ConfigError("bath.T must be > 0 for a diffusion coefficient")


def lifson_jackson(spec: Potential, bath: BathSpec, period: float | None = None,
                   config: SolverConfig = DEFAULT_SOLVER, samples: int = 2048) -> DiffusionResult:
    """Diffusion coefficient from adaptive quadrature of the two period integrals.

    The integrands are shifted by the potential maximum and minimum so that
    large ``beta * A`` does not overflow; ``i_plus`` and ``i_minus`` are
    reported unshifted whenever that is representable.
    """
    _require_temperature(bath)
    a = spec.period if period is None else period
    if a is None:
        raise NotPeriodic(f"{type(spec).__name__} has no period")
    beta = bath.beta
    grid = np.linspace(0.0, a, samples, endpoint=False)
    phi_grid = np.asarray(spec(grid))
    # refine the extremum locations so the shifted exponents stay <= ~0
    phi_max, phi_min = float(phi_grid.max()), float(phi_grid.min())
    breaks = [float(grid[np.argmax(phi_grid)]), float(grid[np.argmin(phi_grid)])]
    breaks = sorted({p for p in breaks if 0.0 < p < a})

    def f_plus(x):
        phi, _, d2 = spec.evaluate(x)
        return d2 * d2 * math.exp(beta * (phi - phi_max))

    def f_minus(x):
        return math.exp(-beta * (spec(x) - phi_min))

    ip = adaptive_quadrature(f_plus, 0.0, a, config, points=breaks or None)
    im = adaptive_quadrature(f_minus, 0.0, a, config, points=breaks or None)
    log_scale = beta * (phi_max - phi_min)
    if ip == 0.0 or (beta * phi_max < 700 and ip * math.exp(beta * phi_max) < FLAT_THRESHOLD):
        raise FlatPotential("potential curvature vanishes: friction is zero and D unbounded")
    D = bath.coupling * bath.T * a * a / (ip * im) * math.exp(-log_scale)
    i_plus = ip * math.exp(beta * phi_max) if beta * phi_max < 700 else math.inf
    i_minus = im * math.exp(-beta * phi_min) if -beta * phi_min < 700 else math.inf
    return DiffusionResult(D, "quadrature", i_plus, i_minus, log_scale)


def fk_diffusion_bessel(A: float, a: float, bath: BathSpec) -> DiffusionResult:
    """Closed form for phi = A cos(2 pi x / a).

    D = rho_m c^3 a^4 / (4 pi^3 A [z I0(z) - I1(z)] I0(z)),  z = beta |A|,
    evaluated with exponentially scaled Bessel functions.
    """
    _require_temperature(bath)
    A = abs(A)
    if A == 0:
        raise FlatPotential("A = 0: friction is zero and D unbounded")
    z = A / bath.T
    i0 = bessel_i(0, z, scaled=True)
    i1 = bessel_i(1, z, scaled=True)
    D = bath.rho_m * bath.c**3 * a**4 / (4 * math.pi**3 * A * (z * i0 - i1) * i0) * math.exp(-2 * z)
    return DiffusionResult(D, "bessel", log_scale=2 * z)


def arrhenius_limit(A: float, a: float, bath: BathSpec) -> DiffusionResult:
    """Low-temperature form (rho_m c^3 a^4 / 2 pi^2 A) exp(-2 beta A)."""
    _require_temperature(bath)
    A = abs(A)
    D = bath.rho_m * bath.c**3 * a**4 / (2 * math.pi**2 * A) * math.exp(-2 * A / bath.T)
    return DiffusionResult(D, "arrhenius_limit")


def einstein_limit(A: float, a: float, bath: BathSpec) -> DiffusionResult:
    """High-temperature form k_B T / b_mean."""
    _require_temperature(bath)
    b_mean = mean_friction(FrenkelKantorova(A, a), bath)
    return DiffusionResult(bath.T / b_mean, "einstein_limit")


@dataclass(frozen=True)
class SweepPoint:
    parameter: float
    D: float
    flag: str  # "ok" or "singular"


def _local_extrema(points: list[SweepPoint]) -> list[tuple[float, str]]:
    out = []
    for i, pt in enumerate(points):
        if pt.flag == "singular":
            out.append((pt.parameter, "singular"))
            continue
        if i == 0 or i == len(points) - 1:
            continue
        left, right = points[i - 1], points[i + 1]
        if left.flag != "ok" or right.flag != "ok":
            continue
        if pt.D > left.D and pt.D > right.D:
            out.append((pt.parameter, "max"))
        elif pt.D < left.D and pt.D < right.D:
            out.append((pt.parameter, "min"))
    return out


@dataclass
class SweepResult:
    points: list[SweepPoint]

    @property
    def parameters(self):
        return np.array([p.parameter for p in self.points])

    @property
    def D(self):
        return np.array([p.D for p in self.points])

    def extrema(self) -> list[tuple[float, str]]:
        return _local_extrema(self.points)


def dimer_sweep(A: float, a: float, lengths, bath: BathSpec, mode: str = "rigid",
                phi: float = 0.0, averaging: str = "mobility", n_angles: int = 512) -> SweepResult:
    """D as a function of dimer length.

    ``mode="rigid"`` keeps the angle fixed.  ``mode="rotating"`` averages
    over phi in [0, pi) with Boltzmann weights of the angle-conditional free
    energy; ``averaging`` selects whether 1/D (``"mobility"``, default) or D
    (``"diffusivity"``) is averaged.  Points where the effective amplitude
    vanishes have zero friction and are flagged ``"singular"``.
    """
    _require_temperature(bath)
    if mode not in ("rigid", "rotating"):
        raise ConfigError("mode must be 'rigid' or 'rotating'")
    if averaging not in ("mobility", "diffusivity"):
        raise ConfigError("averaging must be 'mobility' or 'diffusivity'")
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    if np.any(lengths <= 0):
        raise ConfigError("dimer lengths must be positive")
    points = []
    for l in lengths:
        if mode == "rigid":
            amp = Dimer(A, a, l, phi).effective_amplitude
            if abs(amp) <= 1e-12 * abs(2 * A):
                points.append(SweepPoint(float(l), math.inf, "singular"))
            else:
                points.append(SweepPoint(float(l), fk_diffusion_bessel(amp, a, bath).D, "ok"))
        else:
            points.append(_rotating_point(A, a, float(l), bath, averaging, n_angles))
    return SweepResult(points)


def _rotating_point(A, a, l, bath, averaging, n_angles) -> SweepPoint:
    # midpoint rule in phi; the conditional free energy of a cosine of
    # amplitude A_eff is -k_B T ln I0(beta |A_eff|) per period
    phis = (np.arange(n_angles) + 0.5) * math.pi / n_angles
    amps = np.array([Dimer(A, a, l, p).effective_amplitude for p in phis])
    z = np.abs(amps) / bath.T
    log_w = np.log(bessel_i(0, z, scaled=True)) + z
    w = np.exp(log_w - log_w.max())
    w /= w.sum()
    flat = np.abs(amps) <= 1e-12 * abs(2 * A)
    D = np.full(n_angles, math.inf)
    D[~flat] = [fk_diffusion_bessel(x, a, bath).D for x in amps[~flat]]
    if averaging == "mobility":
        value = 1.0 / np.sum(w / D)
    else:
        if np.any(flat & (w > 0)):
            return SweepPoint(l, math.inf, "singular")
        value = float(np.sum(w * D))
    if not np.isfinite(value):
        return SweepPoint(l, math.inf, "singular")
    return SweepPoint(l, float(value), "ok")


def chain_sweep(N_values, l: float, A1: float, l1: float, A2: float, l2: float,
                bath: BathSpec, config: SolverConfig = DEFAULT_SOLVER) -> SweepResult:
    """D(N) for chains of N sites, each computed on the joint substrate period."""
    points = []
    for N in N_values:
        chain = Chain(int(N), l, A1, l1, A2, l2)
        try:
            D = lifson_jackson(chain, bath, config=config).D
        except FlatPotential:
            points.append(SweepPoint(float(N), math.inf, "singular"))
            continue
        points.append(SweepPoint(float(N), D, "ok"))
    return SweepResult(points)


def chain_mean_friction(N_values, l, A1, l1, A2, l2, bath: BathSpec) -> np.ndarray:
    return np.array([mean_friction(Chain(int(N), l, A1, l1, A2, l2), bath) for N in N_values])


def zero_T_quantum_fk_dispersion(A: float, a: float, m: float, b_mean: float, hbar: float, t):
    """Logarithmic zero-temperature spreading (hbar^2 / 8 m A) ln(32 pi m A^2 t / b hbar^2).

    ``a`` does not enter the law; it is accepted for a uniform signature.
    """
    if not (A > 0 and m > 0 and b_mean > 0 and hbar > 0):
        raise ConfigError("A, m, b_mean and hbar must be > 0")
    t = np.asarray(t, dtype=float)
    arg = 32 * math.pi * m * A**2 * t / (b_mean * hbar**2)
    if np.any(arg < 1):
        raise BelowOnset("32 pi m A^2 t / (b hbar^2) < 1: logarithmic regime not reached")
    out = hbar**2 / (8 * m * A) * np.log(arg)
    return out if out.ndim else float(out)


__all__ = [
    "DiffusionResult", "SweepPoint", "SweepResult", "NumericalError",
    "lifson_jackson", "fk_diffusion_bessel", "arrhenius_limit", "einstein_limit",
    "dimer_sweep", "chain_sweep", "chain_mean_friction", "zero_T_quantum_fk_dispersion",
]
