"""Position-dispersion laws for Gaussian packets.

Covers the Ermakov equation for the packet width, the overdamped dispersion
equation, the implicit quantum Einstein law

    sigma^2 - lambda_T^2 ln(1 + sigma^2 / lambda_T^2) = 2 D t,

the Maxwell-Heisenberg momentum variance and two oscillator energies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .core import DEFAULT_SOLVER, SolverConfig
from .errors import Collapse, ConfigError, NoConvergence
from .io import write_csv


@dataclass
class DispersionSeries:
    t: np.ndarray
    sigma_x2: np.ndarray
    sigma_p2: np.ndarray | None = None
    model: str = ""
    params: dict = field(default_factory=dict)

    def to_csv(self, path, meta=None):
        header = ["t", "sigma_x2"] + (["sigma_p2"] if self.sigma_p2 is not None else [])
        cols = [self.t, self.sigma_x2] + ([self.sigma_p2] if self.sigma_p2 is not None else [])
        return write_csv(path, header, zip(*cols), meta)


def thermal_length(m: float, T: float, hbar: float) -> float:
    """lambda_T = hbar / (2 sqrt(m k_B T))."""
    if not T > 0:
        raise ConfigError("thermal length needs T > 0")
    return hbar / (2.0 * math.sqrt(m * T))


def crossover_time(m: float, b: float, T: float, hbar: float) -> float:
    """tau_2 = lambda_T^2 / 2D with D = k_B T / b."""
    return thermal_length(m, T, hbar) ** 2 / (2.0 * T / b)


def _check_grid(t):
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise ConfigError("t grid must be a non-empty 1D array")
    if np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ConfigError("t grid must be non-negative and strictly increasing")
    return t


def _solve(rhs, y0, t, config, events=None):
    t0 = 0.0
    sol = solve_ivp(rhs, (t0, t[-1]) if t[-1] > t0 else (t0, t0 + 1e-300), y0, method="DOP853",
                    t_eval=t, rtol=config.ode_rel_tol, atol=config.ode_abs_tol, events=events)
    if sol.status == -1:
        raise NoConvergence(sol.message)
    return sol


def ermakov_evolve(sigma0: float, sigma_dot0: float, m: float, b: float, omega0: float,
                   T: float, hbar: float, t, config: SolverConfig = DEFAULT_SOLVER) -> DispersionSeries:
    """Integrate m s'' + b s' + m w0^2 s = hbar^2/(4 m s^3) + k_B T / s from t = 0.

    ``sigma_p2`` is reported as m^2 s'^2 + hbar^2/(4 s^2) + m k_B T, the
    momentum variance of the matching Gaussian state.
    """
    if not sigma0 > 0:
        raise ConfigError("sigma0 must be > 0")
    if not (m > 0 and b >= 0 and T >= 0 and hbar >= 0):
        raise ConfigError("need m > 0 and b, T, hbar >= 0")
    t = _check_grid(t)
    c_q = hbar**2 / (4.0 * m * m)
    c_t = T / m
    gamma = b / m
    w2 = omega0**2

    def rhs(_, y):
        s, v = y
        return [v, -gamma * v - w2 * s + c_q / s**3 + c_t / s]

    def hit_zero(_, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    sol = _solve(rhs, [sigma0, sigma_dot0], t, config, events=hit_zero)
    if sol.status == 1:
        if hbar == 0 and T == 0:
            raise Collapse(f"packet width reached zero at t = {sol.t_events[0][0]:.6g}")
        raise NoConvergence("width reached zero despite the repulsive terms")
    s, v = sol.y
    sp2 = m * m * v * v + hbar**2 / (4 * s * s) + m * T
    return DispersionSeries(sol.t, s * s, sp2, "ermakov",
                            dict(m=m, b=b, omega0=omega0, T=T, hbar=hbar))


def overdamped_fixed_point(m: float, omega0: float, T: float, hbar: float) -> float:
    """sigma_eq^2 = (k_B T + sqrt((k_B T)^2 + hbar^2 w0^2)) / (2 m w0^2)."""
    if not omega0 != 0:
        raise ConfigError("fixed point needs omega0 != 0")
    return (T + math.hypot(T, hbar * omega0)) / (2 * m * omega0**2)


def overdamped_dispersion(sigma0_2: float, m: float, b: float, omega0: float, T: float,
                          hbar: float, t, config: SolverConfig = DEFAULT_SOLVER) -> DispersionSeries:
    """Integrate b d(s2)/dt + 2 m w0^2 s2 = hbar^2/(2 m s2) + 2 k_B T.

    For hbar > 0 the solve runs in u = s2^2, where the right-hand side
    (hbar^2/m + 4 k_B T sqrt(u) - 4 m w0^2 u)/b is finite at u = 0, so a
    packet starting from zero width is handled without a singularity.
    """
    if not (m > 0 and b > 0 and T >= 0 and hbar >= 0):
        raise ConfigError("need m, b > 0 and T, hbar >= 0")
    if not sigma0_2 >= 0:
        raise ConfigError("sigma0^2 must be >= 0")
    if sigma0_2 == 0 and T == 0 and hbar == 0:
        raise ConfigError("sigma0^2 = 0 needs T > 0 or hbar > 0")
    t = _check_grid(t)
    k = 2 * m * omega0**2 / b
    params = dict(m=m, b=b, omega0=omega0, T=T, hbar=hbar)
    if hbar > 0:
        q, th, w = hbar**2 / (m * b), 4 * T / b, 2 * k

        def rhs(_, y):
            return [q + th * math.sqrt(max(y[0], 0.0)) - w * y[0]]

        sol = _solve(rhs, [sigma0_2**2], t, config)
        s2 = np.sqrt(sol.y[0])
    else:
        th = 2 * T / b

        def rhs(_, y):
            return [th - k * y[0]]

        sol = _solve(rhs, [sigma0_2], t, config)
        s2 = sol.y[0]
    return DispersionSeries(sol.t, s2, None, "overdamped", params)


def _log1pmx_neg(y: float) -> float:
    """y - log(1 + y), accurate for small y."""
    if y < 0.5:
        # alternating series sum_{k>=2} (-1)^k y^k / k
        term, total, k = y * y, 0.0, 2
        while True:
            piece = term / k
            total += piece if k % 2 == 0 else -piece
            if piece < 1e-18 * total:
                return total
            term *= y
            k += 1
    return y - math.log1p(y)


def _einstein_y(r: float, config: SolverConfig) -> float:
    """Root y > 0 of y - ln(1 + y) = r.

    Bracket from y^2/(2(1+y)) <= y - ln(1+y) <= y^2/2.  The function is
    increasing and convex, so Newton started at the upper bound decreases
    monotonically onto the root.
    """
    if r == 0:
        return 0.0
    lo = max(r, math.sqrt(2 * r))
    hi = r + math.sqrt(r * r + 2 * r)
    y = hi
    for _ in range(config.max_iterations):
        f = _log1pmx_neg(y) - r
        if f > 0:
            hi = y
        else:
            lo = y
        y_new = y - f * (1 + y) / y
        if not lo <= y_new <= hi:
            y_new = 0.5 * (lo + hi)
        # the residual is only known to a few ulp, so stop once Newton is
        # down to round-off or the bracket has collapsed
        if abs(y_new - y) <= 1e-14 * y_new or hi - lo <= 4e-16 * hi:
            return y_new
        y = y_new
    raise NoConvergence("quantum Einstein root did not converge")


def quantum_einstein_sigma(t, D: float, lambda_T: float, config: SolverConfig = DEFAULT_SOLVER):
    """sigma^2(t) solving sigma^2 - lambda_T^2 ln(1 + sigma^2/lambda_T^2) = 2 D t."""
    if not D > 0:
        raise ConfigError("D must be > 0")
    if not lambda_T >= 0:
        raise ConfigError("lambda_T must be >= 0")
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0):
        raise ConfigError("t must be >= 0")
    if lambda_T == 0:
        out = 2 * D * tt
    else:
        l2 = lambda_T**2
        out = np.array([l2 * _einstein_y(2 * D * s / l2, config) for s in tt.ravel()]).reshape(tt.shape)
    return out if out.ndim else float(out)


def maxwell_heisenberg(sigma_x2, m: float, T: float, hbar: float, t=None):
    """sigma_p^2 = m k_B T + hbar^2 / (4 sigma_x^2) [+ hbar m / t]."""
    s = np.asarray(sigma_x2, dtype=float)
    if np.any(s <= 0):
        raise ConfigError("sigma_x^2 must be > 0")
    out = m * T + hbar**2 / (4 * s)
    if t is not None:
        tt = np.asarray(t, dtype=float)
        if np.any(tt <= 0):
            raise ConfigError("t must be > 0 for the time term")
        out = out + hbar * m / tt
    return out if np.ndim(out) else float(out)


def oscillator_energy(T: float, omega0: float, hbar: float) -> tuple[float, float]:
    """Semiclassical and exact mean energies of an oscillator.

    eps_semi = (k_B T / 2)[sqrt(1 + (beta hbar w0)^2) + 1] and
    eps_exact = (hbar w0 / 2) coth(beta hbar w0 / 2).
    """
    if not (T >= 0 and hbar >= 0 and omega0 > 0):
        raise ConfigError("need T, hbar >= 0 and omega0 > 0")
    e0 = 0.5 * hbar * omega0
    if T == 0:
        return e0, e0
    if hbar == 0:
        return T, T
    y = hbar * omega0 / T
    semi = 0.5 * (math.hypot(T, hbar * omega0) + T)
    x = 0.5 * y
    exact = e0 / math.tanh(x)
    return semi, exact
