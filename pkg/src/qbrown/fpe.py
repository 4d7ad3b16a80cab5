"""Finite-volume Fokker-Planck solvers.

Smoluchowski equation for a density rho(x, t) with position-dependent
friction,

    d rho/dt = d/dx (1/b) [rho d(U + phi)/dx + k_B T d rho/dx],

discretized with the Scharfetter-Gummel exponential-fitting flux between
neighbouring cells,

    J = (k_B T / b h) [B(dV/k_B T) rho_L - B(-dV/k_B T) rho_R],
    B(z) = z / (exp(z) - 1),

which vanishes exactly on the grid Boltzmann weights exp(-V_i / k_B T).  The
flux form conserves mass to round-off, and the generator is an M-matrix, so
backward Euler keeps rho >= 0 at any step size.

Klein-Kramers dynamics in (x, p) are split into exact OU relaxation in p
(matrix exponential of the same discrete generator), advection in x at
velocity p/m and advection in p at the force -phi'(x).

The Smoluchowski-Bohm equation adds the density-dependent potential
Q = -(hbar^2/2m) (sqrt rho)''/sqrt rho to V and is advanced implicitly with
Newton's method, because freezing Q over a step limits dt to order
b m h^4 / hbar^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.sparse.linalg import splu

from .core import DEFAULT_SOLVER, SolverConfig
from .errors import CFLViolation, ConfigError, NegativeDensity, NoConvergence, ZeroFriction
from .io import write_csv
from .potentials import BathSpec, Potential, friction_profile

RHO_FLOOR = 1e-30  # used inside sqrt(rho) for Q only; never added to rho
BOUNDARIES = ("periodic", "reflecting")


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    n: int
    boundary: str = "reflecting"

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ConfigError("grid.max must exceed grid.min")
        if int(self.n) != self.n or self.n < 3:
            raise ConfigError("grid.n_cells must be an integer >= 3")
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"grid.boundary must be one of {BOUNDARIES}")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.n) + 0.5) * self.h

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    def interfaces(self):
        """``(position, left cell, right cell)`` of every face that carries flux."""
        n = self.n
        if self.periodic:
            left = np.arange(n)
            right = (left + 1) % n
        else:
            left = np.arange(n - 1)
            right = left + 1
        return self.lo + (left + 1) * self.h, left, right


def default_boundary(spec: Potential | None) -> str:
    return "periodic" if spec is not None and spec.period is not None else "reflecting"


@dataclass
class GridField:
    """Cell-averaged density on a 1D or 2D tensor grid."""

    axes: tuple
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.axes = tuple(self.axes)
        if len(self.axes) not in (1, 2):
            raise ConfigError("grid fields are 1D or 2D")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(a.n for a in self.axes):
            raise ConfigError("field values do not match the grid shape")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("field values must be finite")
        if np.any(self.values < 0):
            raise ConfigError("density must be >= 0 in every cell")

    @classmethod
    def from_function(cls, axes, fn, t: float = 0.0) -> "GridField":
        """Sample ``fn`` at cell centres and normalize."""
        axes = tuple(axes)
        grids = np.meshgrid(*(a.centers for a in axes), indexing="ij")
        vals = np.asarray(fn(*grids), dtype=float)
        norm = vals.sum() * _cell_volume(axes)
        if not norm > 0:
            raise ConfigError("initial density must have positive mass")
        return cls(axes, vals / norm, t)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def cell_volume(self) -> float:
        return _cell_volume(self.axes)

    def norm(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def marginal(self, axis: int) -> np.ndarray:
        """Density of coordinate ``axis`` with the other integrated out."""
        if self.dim == 1:
            return self.values.copy()
        other = 1 - axis
        return self.values.sum(axis=other) * self.axes[other].h

    def moments(self, axis: int = 0) -> tuple[float, float]:
        x = self.axes[axis].centers
        w = self.marginal(axis) * self.axes[axis].h
        total = w.sum()
        mean = float(np.dot(w, x) / total)
        return mean, float(np.dot(w, (x - mean) ** 2) / total)

    def to_csv(self, path, meta=None):
        grids = np.meshgrid(*(a.centers for a in self.axes), indexing="ij")
        cols = [g.ravel() for g in grids] + [self.values.ravel()]
        header = ["x", "rho"] if self.dim == 1 else ["x", "p", "f"]
        return write_csv(path, header, zip(*cols), meta)


def _cell_volume(axes) -> float:
    return math.prod(a.h for a in axes)


def _entropy_term(v):
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = v[pos] * np.log(v[pos])
    return out


@dataclass
class FieldSeries:
    """Snapshots plus a per-snapshot summary."""

    fields: list
    norm: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    variance: list = field(default_factory=list)
    free_energy: list = field(default_factory=list)

    @property
    def t(self) -> np.ndarray:
        return np.array([f.t for f in self.fields])

    @property
    def final(self) -> GridField:
        return self.fields[-1]

    def _record(self, fld: GridField, energy: np.ndarray, T: float):
        self.fields.append(fld)
        self.norm.append(fld.norm())
        mean, var = fld.moments(0)
        self.mean.append(mean)
        self.variance.append(var)
        v = fld.values
        self.free_energy.append(float(np.sum(v * energy + T * _entropy_term(v)) * fld.cell_volume))

    def to_csv(self, path, meta=None):
        rows = zip(self.t, self.norm, self.mean, self.variance, self.free_energy)
        return write_csv(path, ["t", "norm", "mean", "variance", "free_energy"], rows, meta)


def _bernoulli(z):
    """B(z) = z / (exp(z) - 1) and its derivative."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-6
    zs = np.where(small, 1.0, z)
    with np.errstate(over="ignore"):
        b = np.where(small, 1 - z / 2 + z * z / 12, zs / np.expm1(zs))
    # B'(z) = B (1 - B - z) / z, using B(z) exp(z) = B(z) + z
    db = np.where(small, -0.5 + z / 6, b * (1 - b - zs) / zs)
    return b, db


def _fitted_coefficients(dV, T):
    """Flux weights a(dV), a(-dV) and their derivatives with respect to dV."""
    if T > 0:
        bp, dbp = _bernoulli(dV / T)
        bm, dbm = _bernoulli(-dV / T)
        return T * bp, T * bm, dbp, -dbm
    # zero-temperature limit: pure upwinding
    return np.maximum(-dV, 0.0), np.maximum(dV, 0.0), -(dV < 0).astype(float), (dV > 0).astype(float)


class _FluxOperator:
    """Sparse pieces of the exponentially fitted flux on one axis."""

    def __init__(self, axis: Axis, mobility, T: float):
        _, self.left, self.right = axis.interfaces()
        self.n, self.h, self.T = axis.n, axis.h, T
        self.kappa = np.asarray(mobility, dtype=float) / axis.h
        k = np.arange(self.left.size)
        ones = np.ones(k.size)
        self.grad = sp.csr_matrix((np.concatenate([-ones, ones]),
                                   (np.concatenate([k, k]), np.concatenate([self.left, self.right]))),
                                  shape=(k.size, self.n))
        self.div_t = (self.grad.T / self.h).tocsr()

    def parts(self, V):
        dV = V[self.right] - V[self.left]
        ap, am, dap, dam = _fitted_coefficients(dV, self.T)
        k = np.arange(dV.size)
        direct = sp.csr_matrix((np.concatenate([self.kappa * ap, -self.kappa * am]),
                                (np.concatenate([k, k]), np.concatenate([self.left, self.right]))),
                               shape=(dV.size, self.n))
        return direct, dap, dam

    def generator(self, V) -> sp.csc_matrix:
        """L with d rho/dt = L rho."""
        direct, _, _ = self.parts(V)
        return (self.div_t @ direct).tocsc()


def _potential_on_grid(spec, external, x):
    V = np.zeros_like(x)
    if spec is not None:
        V = V + np.asarray(spec(x), dtype=float)
    if external is not None:
        V = V + np.asarray(external(x), dtype=float)
    return V


def _mobility(spec, bath, friction, axis: Axis) -> np.ndarray:
    pos, _, _ = axis.interfaces()
    if isinstance(friction, str):
        if friction != "profile":
            raise ConfigError("friction must be 'profile' or a number")
        if spec is None:
            raise ConfigError("friction 'profile' needs a potential")
        b = np.asarray(friction_profile(spec, bath, pos), dtype=float)
    else:
        if not friction >= 0:
            raise ConfigError("friction must be >= 0")
        b = np.full(pos.shape, float(friction))
    # an inflection point on a face gives b at round-off level rather than exactly zero
    if b.min() <= 1e-12 * b.max() or b.max() == 0:
        raise ZeroFriction(f"friction vanishes on the grid (min b = {b.min():.3g}); "
                           "the overdamped equation needs b > 0 everywhere")
    return 1.0 / b


def _check_grid(rho0: GridField, spec, dim: int, seam_ok: bool = False):
    if rho0.dim != dim:
        raise ConfigError(f"expected a {dim}D field")
    if abs(rho0.norm() - 1) > 1e-10:
        raise ConfigError("initial density must be normalized")
    ax = rho0.axes[0]
    if ax.periodic and spec is not None:
        period = spec.period
        if period is None:
            if seam_ok:
                return
            raise ConfigError("periodic grid needs a periodic potential")
        ratio = (ax.hi - ax.lo) / period
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ConfigError("periodic grid length must be a multiple of the potential period")


def _steps(t_final, dt, save_every):
    if not t_final >= 0:
        raise ConfigError("t_final must be >= 0")
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    n = max(1, math.ceil(t_final / dt - 1e-9)) if t_final > 0 else 0
    dt_eff = t_final / n if n else dt
    if save_every is None:
        save_every = max(1, n // 100)
    if int(save_every) != save_every or save_every < 1:
        raise ConfigError("save_every must be a positive integer")
    return n, dt_eff, int(save_every)


def _conservative_update(old, solved, increment):
    """Rebuild the implicit solution as old + dt * div(flux).

    The linear solve loses mass at the level of round-off times the
    condition number; summing fluxes in conservation form does not.  The
    solved values are kept if the rebuild dips below zero.
    """
    new = old + increment
    return new if new.min() >= 0 else solved


def smoluchowski_evolve(rho0: GridField, spec: Potential | None, bath: BathSpec, friction="profile",
                        t_final: float = 1.0, dt: float = 1e-2, external: Potential | None = None,
                        method: str = "implicit", save_every: int | None = None) -> FieldSeries:
    """Evolve the overdamped density.

    Parameters
    ----------
    friction : "profile" or float
        ``"profile"`` uses b(x) = phi''^2 / (4 pi rho_m c^3) at cell faces.
    method : "implicit" or "explicit"
        Backward Euler (unconditionally positive) or forward Euler, which
        raises CFLViolation when dt exceeds the positivity bound.
    t_final, dt
        The step is shrunk so an integer number of steps lands on ``t_final``.

    Raises
    ------
    ZeroFriction
        If b vanishes on any cell face.
    """
    _check_grid(rho0, spec, 1)
    axis = rho0.axes[0]
    x = axis.centers
    V = _potential_on_grid(spec, external, x)
    op = _FluxOperator(axis, _mobility(spec, bath, friction, axis), bath.T)
    L = op.generator(V)
    n_steps, h, save_every = _steps(t_final, dt, save_every)
    if method == "implicit":
        lu = splu((sp.identity(axis.n, format="csc") - h * L).tocsc())
        direct, _, _ = op.parts(V)

        def step(rho):
            y = lu.solve(rho)
            return _conservative_update(rho, y, h * (op.div_t @ (direct @ y)))
    elif method == "explicit":
        rate = float(-L.diagonal().min())
        if h * rate > 1:
            raise CFLViolation(f"explicit step needs dt <= {1 / rate:.6g}")
        A = (sp.identity(axis.n, format="csr") + h * L).tocsr()
        step = A.dot
    else:
        raise ConfigError("method must be 'implicit' or 'explicit'")
    series = FieldSeries([])
    rho = rho0.values.copy()
    t0 = rho0.t
    series._record(GridField((axis,), rho.copy(), t0), V, bath.T)
    for k in range(1, n_steps + 1):
        rho = step(rho)
        if k % save_every == 0 or k == n_steps:
            series._record(GridField((axis,), rho.copy(), t0 + k * h), V, bath.T)
    return series


def boltzmann_field(axis: Axis, spec: Potential | None, T: float, external=None) -> GridField:
    """Normalized grid Boltzmann weights exp(-V_i / k_B T)."""
    if not T > 0:
        raise ConfigError("Boltzmann weights need T > 0")
    V = _potential_on_grid(spec, external, axis.centers)
    w = np.exp(-(V - V.min()) / T)
    return GridField((axis,), w / (w.sum() * axis.h))


# Klein-Kramers

def _van_leer_shift(f, courant, periodic: bool):
    """One conservative van Leer step along the last axis.

    ``courant`` holds u dt / h per row (broadcast against ``f[..., :1]``).
    """
    n = f.shape[-1]
    if periodic:
        g = np.concatenate([f[..., -2:], f, f[..., :2]], axis=-1)
    else:
        z = np.zeros(f.shape[:-1] + (2,))
        g = np.concatenate([z, f, z], axis=-1)
    d = np.diff(g, axis=-1)  # d[j] = g[j+1] - g[j]; cell i sits at g index i + 2
    with np.errstate(invalid="ignore", divide="ignore"):
        prod = d[..., :-1] * d[..., 1:]
        slope = np.where(prod > 0, 2 * prod / (d[..., :-1] + d[..., 1:]), 0.0)
    # slope[j] is the limited slope of g[j + 1]; faces i + 1/2 for i = -1 .. n - 1
    c = np.broadcast_to(courant, f.shape[:-1] + (1,))
    up_left = g[..., 1:n + 2] + 0.5 * (1 - np.abs(c)) * slope[..., 0:n + 1]
    up_right = g[..., 2:n + 3] - 0.5 * (1 - np.abs(c)) * slope[..., 1:n + 2]
    flux = c * np.where(c > 0, up_left, up_right)
    if not periodic:
        flux[..., 0] = 0.0
        flux[..., -1] = 0.0
    return f - (flux[..., 1:] - flux[..., :-1])


def _spectral_shift(f, shift_cells):
    """Translate every row of ``f`` by ``shift_cells`` (periodic, band-limited)."""
    n = f.shape[-1]
    k = np.fft.rfftfreq(n) * 2 * np.pi
    out = np.fft.irfft(np.fft.rfft(f, axis=-1) * np.exp(-1j * k * shift_cells), n=n, axis=-1)
    low = out.min()
    if low < 0:
        if low < -1e-12 * out.max():
            raise NegativeDensity("spectral advection undershoot; the density is under-resolved")
        # drop round-off undershoot, then restore each row's mass, which a shift preserves
        out = np.maximum(out, 0.0)
        before, after = f.sum(axis=-1, keepdims=True), out.sum(axis=-1, keepdims=True)
        out *= np.divide(before, after, out=np.ones_like(after), where=after > 0)
    return out


@dataclass(frozen=True)
class _KKStep:
    x_axis: Axis
    p_axis: Axis
    m: float
    velocity: np.ndarray  # p/m per p cell
    force: np.ndarray  # -phi'(x) per x cell
    ou: object  # callable(f, dt) or None
    advection: str

    def advect_x(self, f, dt):
        c = self.velocity * dt / self.x_axis.h
        if self.advection == "spectral":
            return _spectral_shift(f.T, c[:, None]).T
        return _van_leer_shift(f.T, c[:, None], self.x_axis.periodic).T

    def advect_p(self, f, dt):
        c = self.force * dt / self.p_axis.h
        if self.advection == "spectral":
            return _spectral_shift(f, c[:, None])
        return _van_leer_shift(f, c[:, None], self.p_axis.periodic)

    def strang(self, f, dt):
        if self.ou is not None:
            f = self.ou(f, 0.5 * dt)
        f = self.advect_x(f, 0.5 * dt)
        f = self.advect_p(f, dt)
        f = self.advect_x(f, 0.5 * dt)
        if self.ou is not None:
            f = self.ou(f, 0.5 * dt)
        return f


_YOSHIDA = (1 / (2 - 2 ** (1 / 3)), -(2 ** (1 / 3)) / (2 - 2 ** (1 / 3)), 1 / (2 - 2 ** (1 / 3)))


def klein_kramers_evolve(f0: GridField, spec: Potential | None, bath: BathSpec, b_bar: float,
                         t_final: float = 1.0, dt: float = 1e-2, m: float = 1.0,
                         advection: str = "van_leer", order: int = 2,
                         save_every: int | None = None) -> FieldSeries:
    """Evolve the phase-space density f(x, p).

    Parameters
    ----------
    f0 : GridField
        2D field with axes ``(x, p)``.
    advection : "van_leer" or "spectral"
        Van Leer is positive and needs |u| dt <= h.  Spectral translates
        exactly by FFT phase shifts, treats both axes as periodic and has no
        step limit.
    order : 2 or 4
        Strang splitting, or its fourth-order triple-jump composition when
        ``b_bar == 0`` (a negative substep would run diffusion backwards).

    Notes
    -----
    The OU relaxation in p always sees zero-flux walls at the ends of the p
    axis; the p axis boundary only affects advection.
    """
    # spectral wrap of a confining potential is fine once f vanishes at the seam
    _check_grid(f0, spec, 2, seam_ok=True)
    if not b_bar >= 0:
        raise ConfigError("b_bar must be >= 0")
    if not m > 0:
        raise ConfigError("m must be > 0")
    if advection not in ("van_leer", "spectral"):
        raise ConfigError("advection must be 'van_leer' or 'spectral'")
    if order not in (2, 4):
        raise ConfigError("order must be 2 or 4")
    if order == 4 and b_bar > 0:
        raise ConfigError("fourth-order splitting needs b_bar = 0")
    x_axis, p_axis = f0.axes
    if advection == "spectral" and not (x_axis.periodic and p_axis.periodic):
        raise ConfigError("spectral advection needs periodic axes")
    n_steps, h, save_every = _steps(t_final, dt, save_every)

    x, p = x_axis.centers, p_axis.centers
    force = np.zeros_like(x) if spec is None else np.asarray(spec.force(x), dtype=float)
    velocity = p / m
    if advection == "van_leer":
        cx = np.abs(velocity).max() * h / x_axis.h
        cp = np.abs(force).max() * h / p_axis.h
        if max(cx, cp) > 1:
            raise CFLViolation(f"van Leer advection needs dt <= {h / max(cx, cp):.6g}")

    ou = None
    if b_bar > 0:
        p_wall = replace(p_axis, boundary="reflecting")
        gen = _FluxOperator(p_wall, np.full(p_axis.n - 1, b_bar), bath.T).generator(p * p / (2 * m))
        dense = gen.toarray()
        cache = {}

        def ou(f, tau):
            if tau not in cache:
                E = np.maximum(expm(tau * dense), 0.0)
                # exact probability conservation: every column of the propagator sums to one
                cache[tau] = (E / E.sum(axis=0)).T
            return f @ cache[tau]

    stepper = _KKStep(x_axis, p_axis, m, velocity, force, ou, advection)
    phi = np.zeros_like(x) if spec is None else np.asarray(spec(x), dtype=float)
    energy = phi[:, None] + (p * p / (2 * m))[None, :]

    series = FieldSeries([])
    f = f0.values.copy()
    series._record(GridField(f0.axes, f.copy(), f0.t), energy, bath.T)
    for k in range(1, n_steps + 1):
        if order == 2:
            f = stepper.strang(f, h)
        else:
            for w in _YOSHIDA:
                f = stepper.strang(f, w * h)
        if k % save_every == 0 or k == n_steps:
            series._record(GridField(f0.axes, f.copy(), f0.t + k * h), energy, bath.T)
    return series


def gibbs_field(x_axis: Axis, p_axis: Axis, spec: Potential | None, T: float, m: float = 1.0) -> GridField:
    if not T > 0:
        raise ConfigError("Gibbs weights need T > 0")
    return GridField.from_function(
        (x_axis, p_axis),
        lambda X, P: np.exp(-((0 if spec is None else spec(X)) + P * P / (2 * m)) / T
                            + (0 if spec is None else np.min(spec(x_axis.centers))) / T))


def phase_space_energy(fld: GridField, spec: Potential | None, m: float = 1.0) -> float:
    """<p^2/2m + phi(x)> under a 2D field."""
    x, p = fld.axes[0].centers, fld.axes[1].centers
    phi = np.zeros_like(x) if spec is None else np.asarray(spec(x), dtype=float)
    H = phi[:, None] + (p * p / (2 * m))[None, :]
    return float(np.sum(fld.values * H) * fld.cell_volume)


# Smoluchowski-Bohm

def _second_difference(axis: Axis, closure: str = "one_sided") -> sp.csr_matrix:
    """Second-derivative stencil.

    Wall rows use the second-order one-sided formula (``"one_sided"``) or a
    mirrored ghost cell (``"mirror"``).  The mirror rows keep the discrete
    quantum-pressure operator symmetric, which the implicit evolution needs
    to be well posed at the wall.
    """
    n, h = axis.n, axis.h
    rows, cols, vals = [], [], []
    for i in range(n):
        if axis.periodic or 0 < i < n - 1:
            stencil = ((i - 1, 1.0), (i, -2.0), (i + 1, 1.0))
        elif closure == "mirror":
            stencil = ((i, -1.0), (i + 1 if i == 0 else i - 1, 1.0))
        else:
            sgn = 1 if i == 0 else -1
            stencil = tuple((i + sgn * off, c) for off, c in ((0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)))
        for j, c in stencil:
            rows.append(i)
            cols.append(j % n)
            vals.append(c)
    return sp.csr_matrix((np.array(vals) / h**2, (rows, cols)), shape=(n, n))


def _bohm_terms(rho, D2, m, hbar):
    floored = rho < RHO_FLOOR
    psi = np.sqrt(np.where(floored, RHO_FLOOR, rho))
    lap = D2 @ psi
    Q = -(hbar * hbar / (2 * m)) * lap / psi
    return Q, psi, lap, floored


def bohm_potential(rho: GridField, m: float, hbar: float) -> np.ndarray:
    """Q = -(hbar^2/2m) (sqrt rho)'' / sqrt rho by central differences.

    Densities below 1e-30 are floored inside the square root only.
    """
    if rho.dim != 1:
        raise ConfigError("the quantum potential is evaluated on 1D fields")
    if not m > 0:
        raise ConfigError("m must be > 0")
    return _bohm_terms(rho.values, _second_difference(rho.axes[0]), m, hbar)[0]


def _bohm_log_terms(u, D2, m, hbar):
    """Q and dQ/du for rho = exp(u).

    Dividing the stencil by sqrt(rho_i) turns it into exponentials of
    neighbour differences of u, so no floor is needed.
    """
    D2 = D2.tocoo()
    w = np.exp(0.5 * (u[D2.col] - u[D2.row]))
    c = -(hbar * hbar / (2 * m))
    Q = c * np.bincount(D2.row, D2.data * w, minlength=u.size)
    dQ = sp.csr_matrix((0.5 * c * D2.data * w, (D2.row, D2.col)), shape=D2.shape) - sp.diags(0.5 * Q)
    return Q, dQ


def smoluchowski_bohm_evolve(rho0: GridField, spec: Potential | None, bath: BathSpec, friction="profile",
                             t_final: float = 1.0, dt: float = 1e-2, m: float = 1.0,
                             external: Potential | None = None, save_every: int | None = None,
                             config: SolverConfig = DEFAULT_SOLVER) -> FieldSeries:
    """Overdamped evolution with the quantum potential Q[rho] added to V.

    Each backward Euler step is solved by damped Newton iteration in
    u = ln rho with the exact sparse Jacobian, so iterates stay positive.
    Mass is then restored to round-off by rebuilding the step in flux form.
    A step whose iteration fails is retried as two half steps, recursively,
    up to ``config.max_iterations`` halvings in total.  With
    ``bath.hbar == 0`` this is :func:`smoluchowski_evolve` with the implicit
    method.

    Raises
    ------
    NoConvergence
        When step halving is exhausted.
    """
    if bath.hbar == 0:
        return smoluchowski_evolve(rho0, spec, bath, friction, t_final, dt, external, "implicit", save_every)
    _check_grid(rho0, spec, 1)
    if not m > 0:
        raise ConfigError("m must be > 0")
    axis = rho0.axes[0]
    V0 = _potential_on_grid(spec, external, axis.centers)
    op = _FluxOperator(axis, _mobility(spec, bath, friction, axis), bath.T)
    D2 = _second_difference(axis, "mirror")
    n_steps, h, save_every = _steps(t_final, dt, save_every)
    budget = [config.max_iterations]

    def residual(u, rho_old, tau, jacobian=True):
        rho = np.exp(u)
        Q, dQ = _bohm_log_terms(u, D2, m, bath.hbar)
        direct, dap, dam = op.parts(V0 + Q)
        increment = tau * (op.div_t @ (direct @ rho))
        R = rho - rho_old - increment
        if not jacobian:
            return R, rho, increment
        g = op.kappa * (dap * rho[op.left] - dam * rho[op.right])
        Jac = sp.diags(rho) - tau * (op.div_t @ (direct @ sp.diags(rho) + sp.diags(g) @ op.grad @ dQ))
        return R, rho, increment, Jac.tocsc()

    def newton(rho_old, tau):
        scale = rho_old.max()
        u = np.log(np.maximum(rho_old, RHO_FLOOR * scale))
        R, rho, inc, Jac = residual(u, rho_old, tau)
        for _ in range(60):
            err = np.abs(R).max()
            du = splu(Jac).solve(-R)
            lam = 1.0
            while lam > 1e-4:
                trial = u + lam * du
                R_new, _, _ = residual(trial, rho_old, tau, jacobian=False)
                if np.all(np.isfinite(R_new)) and np.abs(R_new).max() < err:
                    break
                lam *= 0.5
            else:
                # no descent left: accept only if already at round-off
                return _conservative_update(rho_old, rho, inc) if err <= 1e-10 * scale else None
            u = trial
            R, rho, inc, Jac = residual(u, rho_old, tau)
            if lam * np.abs(du).max() <= 1e-10:
                return _conservative_update(rho_old, rho, inc)
        return None

    def advance(rho, tau):
        new = newton(rho, tau)
        if new is not None:
            return new
        budget[0] -= 1
        if budget[0] < 0:
            raise NoConvergence("quantum-potential step failed after repeated step halving")
        return advance(advance(rho, 0.5 * tau), 0.5 * tau)

    def energy(rho):
        return V0 + _bohm_log_terms(np.log(np.maximum(rho, RHO_FLOOR * rho.max())), D2, m, bath.hbar)[0]

    series = FieldSeries([])
    rho = rho0.values.copy()
    t0 = rho0.t
    series._record(GridField((axis,), rho.copy(), t0), energy(rho), bath.T)
    for k in range(1, n_steps + 1):
        rho = advance(rho, h)
        if k % save_every == 0 or k == n_steps:
            series._record(GridField((axis,), rho.copy(), t0 + k * h), energy(rho), bath.T)
    return series
