"""Gaussian second-moment dynamics for oscillator and free-particle Wigner equations.

A Gaussian Wigner function stays Gaussian under a linear Fokker-Planck
operator, so the state is the covariance (sigma_x^2, sigma_p^2, sigma_xp)
plus the means.  The moment equations are

    d sigma_x^2 / dt = 2 sigma_xp / m
    d sigma_xp / dt  = sigma_p^2 / m - m w0^2 sigma_x^2 - (b/m) sigma_xp
    d sigma_p^2 / dt = -2 m w0^2 sigma_xp - 2 (b/m) sigma_p^2 + 2 D_p

with (b, D_p) supplied by one of four momentum-diffusion models.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .core import DEFAULT_SOLVER, SolverConfig
from .errors import ConfigError, NoConvergence, NotOverdamped, Unbounded
from .io import write_csv
from .qdisp import DispersionSeries, overdamped_dispersion

HEISENBERG_SLACK = 1e-9


class DiffusionModel(enum.Enum):
    CLASSICAL = "classical"
    PRESUMED_EQ = "presumed_eq"
    EMERGENT = "emergent"
    BOHMIAN = "bohmian"

    @classmethod
    def parse(cls, value) -> "DiffusionModel":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"presumedeq": "presumed_eq", "presumed": "presumed_eq"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigError(f"unknown diffusion model {value!r}") from None


@dataclass(frozen=True)
class GaussianState:
    sigma_x2: float
    sigma_p2: float
    sigma_xp: float = 0.0
    t: float = 0.0
    mean_x: float = 0.0
    mean_p: float = 0.0

    def __post_init__(self):
        if not (self.sigma_x2 > 0 and self.sigma_p2 > 0):
            raise ConfigError("variances must be > 0")
        if not self.determinant > 0:
            raise ConfigError("covariance determinant must be > 0")

    @property
    def determinant(self) -> float:
        return self.sigma_x2 * self.sigma_p2 - self.sigma_xp**2

    @classmethod
    def minimum_uncertainty(cls, sigma_x2: float, hbar: float, **kw) -> "GaussianState":
        return cls(sigma_x2, hbar**2 / (4 * sigma_x2), 0.0, **kw)


@dataclass
class MomentSeries:
    t: np.ndarray
    sigma_x2: np.ndarray
    sigma_p2: np.ndarray
    sigma_xp: np.ndarray
    mean_x: np.ndarray
    mean_p: np.ndarray
    model: DiffusionModel
    params: dict = field(default_factory=dict)

    @property
    def determinant(self) -> np.ndarray:
        return self.sigma_x2 * self.sigma_p2 - self.sigma_xp**2

    def uncertainty_ratio(self) -> np.ndarray:
        hbar = self.params.get("hbar", 0.0)
        if not hbar > 0:
            return np.full_like(self.t, np.inf)
        return self.determinant / (hbar**2 / 4)

    def state(self, i: int) -> GaussianState:
        return GaussianState(float(self.sigma_x2[i]), float(self.sigma_p2[i]), float(self.sigma_xp[i]),
                             float(self.t[i]), float(self.mean_x[i]), float(self.mean_p[i]))

    def to_csv(self, path, meta=None):
        cols = (self.t, self.sigma_x2, self.sigma_p2, self.sigma_xp, self.uncertainty_ratio())
        return write_csv(path, ["t", "sigma_x2", "sigma_p2", "sigma_xp", "uncertainty_ratio"],
                         zip(*cols), meta)


def _half_quantum(omega0, T, hbar):
    """x = beta hbar w0 / 2, or None when T = 0."""
    if T == 0:
        return None
    return 0.5 * hbar * abs(omega0) / T


def coefficients(model, state: GaussianState | None, m: float, omega0: float, b_bar: float,
                 T: float, hbar: float) -> tuple[float, float]:
    """Effective friction and momentum diffusion ``(b_eff, D_p)``.

    Classical: (b, b T).  PresumedEq: (b, b (hbar w0/2) coth x).
    Emergent: (b sinh(x)/x, b T cosh x).  Bohmian: (b, b (T + hbar^2/(4 m sigma_x^2))).
    Here x = hbar w0 / 2T.  Emergent rejects T = 0, where both diverge.
    """
    model = DiffusionModel.parse(model)
    if not (m > 0 and b_bar >= 0 and T >= 0 and hbar >= 0):
        raise ConfigError("need m > 0 and b, T, hbar >= 0")
    x = _half_quantum(omega0, T, hbar)
    if model is DiffusionModel.CLASSICAL:
        return b_bar, b_bar * T
    if model is DiffusionModel.PRESUMED_EQ:
        if x is None:
            return b_bar, b_bar * 0.5 * hbar * abs(omega0)
        # T * x coth x, finite as x -> 0
        return b_bar, b_bar * (T * x / math.tanh(x) if x > 0 else T)
    if model is DiffusionModel.EMERGENT:
        if x is None:
            raise ConfigError("emergent coefficients diverge at T = 0")
        if x > 700:
            raise Unbounded(f"emergent coefficients overflow at beta hbar w0 / 2 = {x:g}")
        if x == 0:
            return b_bar, b_bar * T
        return b_bar * math.sinh(x) / x, b_bar * T * math.cosh(x)
    if state is None:
        raise ConfigError("Bohmian coefficients need the current state")
    return b_bar, b_bar * (T + hbar**2 / (4 * m * state.sigma_x2))


def _matrix(m, omega0, b_eff):
    g = b_eff / m
    w2 = omega0**2
    return np.array([[0.0, 2 / m, 0.0],
                     [-m * w2, -g, 1 / m],
                     [0.0, -2 * m * w2, -2 * g]])


def relaxation_time(model, m: float, omega0: float, b_bar: float, T: float, hbar: float) -> float:
    """Inverse of the slowest nonzero decay rate of the covariance dynamics.

    Equal to m / b_eff in the underdamped regime.  For Bohmian diffusion the
    state-dependent part of D_p is left out.
    """
    model = DiffusionModel.parse(model)
    b_eff, _ = coefficients(model, GaussianState(1.0, 1.0), m, omega0, b_bar, T, hbar)
    if b_eff == 0:
        return math.inf
    rates = -np.linalg.eigvals(_matrix(m, omega0, b_eff)).real
    rates = rates[rates > 1e-12 * b_eff / m]
    return float(1.0 / rates.min())


def evolve_moments(state0: GaussianState, model, m: float, omega0: float, b_bar: float,
                   T: float, hbar: float, t, config: SolverConfig = DEFAULT_SOLVER) -> MomentSeries:
    """Integrate covariances and means from ``state0.t`` over the grid ``t``."""
    model = DiffusionModel.parse(model)
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0) or t[0] < state0.t:
        raise ConfigError("t grid must be increasing and start at or after state0.t")
    b_eff, d_const = coefficients(model, state0, m, omega0, b_bar, T, hbar)
    g, w2 = b_eff / m, omega0**2
    bohm = model is DiffusionModel.BOHMIAN
    q = b_bar * hbar**2 / (4 * m)

    def rhs(_, y):
        X, C, P, mx, mp = y
        D = b_bar * T + q / X if bohm else d_const
        return [2 * C / m,
                P / m - m * w2 * X - g * C,
                -2 * m * w2 * C - 2 * g * P + 2 * D,
                mp / m,
                -m * w2 * mx - g * mp]

    y0 = [state0.sigma_x2, state0.sigma_xp, state0.sigma_p2, state0.mean_x, state0.mean_p]
    t_end = t[-1] if t[-1] > state0.t else state0.t + 1e-300
    sol = solve_ivp(rhs, (state0.t, t_end), y0, method="DOP853", t_eval=t,
                    rtol=config.ode_rel_tol, atol=config.ode_abs_tol * max(1.0, max(map(abs, y0))))
    if sol.status != 0:
        raise NoConvergence(sol.message)
    X, C, P, mx, mp = sol.y
    return MomentSeries(sol.t, X, P, C, mx, mp, model,
                        dict(m=m, omega0=omega0, b_bar=b_bar, T=T, hbar=hbar))


def equilibrium_state(model, m: float, omega0: float, b_bar: float, T: float, hbar: float) -> GaussianState:
    """Stationary covariance of the moment equations (omega0 != 0, b_bar > 0)."""
    model = DiffusionModel.parse(model)
    if omega0 == 0 or b_bar <= 0:
        raise ConfigError("equilibrium needs omega0 != 0 and b > 0")
    if model is DiffusionModel.BOHMIAN:
        # sigma_p^2 = m (T + hbar^2/(4 m X)), X = sigma_p^2 / (m w0)^2
        w2 = omega0**2
        X = (T + math.hypot(T, hbar * abs(omega0))) / (2 * m * w2)
        return GaussianState(X, m * m * w2 * X)
    b_eff, D = coefficients(model, None, m, omega0, b_bar, T, hbar)
    P = m * D / b_eff
    return GaussianState(P / (m * omega0) ** 2, P)


@dataclass(frozen=True)
class HeisenbergReport:
    min_ratio: float
    t_at_min: float
    violated: bool


def heisenberg_check(series: MomentSeries) -> HeisenbergReport:
    """Minimum over the series of det(cov) / (hbar^2/4)."""
    if series.t.size == 0:
        raise ConfigError("empty series")
    if not series.params.get("hbar", 0.0) > 0:
        raise ConfigError("Heisenberg check needs hbar > 0")
    ratio = series.uncertainty_ratio()
    i = int(np.argmin(ratio))
    return HeisenbergReport(float(ratio[i]), float(series.t[i]), bool(ratio[i] < 1 - HEISENBERG_SLACK))


def overdamped_reduce(sigma0_2: float, m: float, omega0: float, b_bar: float, T: float,
                      hbar: float, t, model=DiffusionModel.BOHMIAN,
                      config: SolverConfig = DEFAULT_SOLVER) -> DispersionSeries:
    """Coordinate-space limit of Bohmian moment dynamics.

    b d(sigma_x^2)/dt + 2 m w0^2 sigma_x^2 = hbar^2/(2 m sigma_x^2) + 2 k_B T,
    the same equation solved by ``qdisp.overdamped_dispersion``.
    """
    if DiffusionModel.parse(model) is not DiffusionModel.BOHMIAN:
        raise ConfigError("overdamped reduction is defined for the Bohmian model")
    if omega0 != 0 and b_bar / (m * abs(omega0)) < 10:
        raise NotOverdamped(f"b/(m w0) = {b_bar / (m * abs(omega0)):.3g} < 10")
    series = overdamped_dispersion(sigma0_2, m, b_bar, omega0, T, hbar, t, config)
    series.model = "bohmian_overdamped"
    return series
