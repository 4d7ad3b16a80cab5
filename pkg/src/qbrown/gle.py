"""Langevin and generalized Langevin trajectory ensembles.

Ordinary Langevin dynamics

    m x'' + b(x) x' = -phi'(x) + sqrt(2 k_B T b(x)) xi(t)

is integrated with the BAOAB splitting: half kick, half drift, exact
Ornstein-Uhlenbeck step for (friction + noise) with b taken at the drift
midpoint, half drift, half kick.  The noise multiplies nothing that depends
on p, so with b a function of x alone the Ito, Stratonovich and
Haenggi-Klimontovich readings of the multiplicative noise give the same
underdamped process.

Memory kernels:

* ``Delta(b)``: ordinary Langevin with constant friction.
* ``Exponential(gamma, tau)``: G(t) = gamma exp(-t/tau), embedded with two
  auxiliary variables, the memory integral h and an OU noise eta with
  <eta(t) eta(s)> = k_B T gamma exp(-|t-s|/tau).  The linear (p, h, eta)
  block is propagated exactly.
* ``Tabulated(t, G)``: Gaussian noise with covariance k_B T G(|t-s|) from
  circulant embedding, friction from a direct memory sum truncated at the
  end of the table.

Each trajectory draws from its own counter-based stream keyed by its index,
and trajectories are processed in fixed-size chunks, so results do not
depend on the number of worker threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .core import RngStream
from .errors import ConfigError, KernelNotPositive, UnstableStep
from .io import write_csv
from .potentials import BathSpec, Potential, friction_profile

CHUNK = 4096  # trajectories per work unit; fixed so output never depends on thread count
BLOCK = 1024  # steps of noise drawn per trajectory at a time


@dataclass(frozen=True)
class Delta:
    b: float

    def __post_init__(self):
        if not self.b >= 0:
            raise ConfigError("kernel.b must be >= 0")

    def G(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t == 0, np.inf, 0.0)


@dataclass(frozen=True)
class Exponential:
    gamma: float
    tau: float

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ConfigError("kernel.gamma must be >= 0")
        if not self.tau > 0:
            raise ConfigError("kernel.tau must be > 0")

    @property
    def friction(self) -> float:
        """Zero-frequency friction int_0^inf G dt."""
        return self.gamma * self.tau

    def G(self, t):
        return self.gamma * np.exp(-np.abs(np.asarray(t, dtype=float)) / self.tau)


@dataclass(frozen=True)
class TabulatedKernel:
    t: tuple
    values: tuple

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        g = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != g.shape or t.size < 2:
            raise ConfigError("tabulated kernel needs matching 1D t and G with >= 2 points")
        if t[0] != 0 or np.any(np.diff(t) <= 0):
            raise ConfigError("tabulated kernel grid must start at 0 and increase")

    def G(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        return np.interp(t, self.t, self.values, right=0.0)


MemoryKernel = Delta | Exponential | TabulatedKernel


@dataclass
class TrajectoryEnsemble:
    t: np.ndarray  # (n_rec,)
    x: np.ndarray  # (n_rec, n_traj)
    p: np.ndarray
    m: float
    seed: int
    dt: float = math.nan
    noise: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_traj(self) -> int:
        return self.x.shape[1]

    def to_csv(self, path, meta=None, max_traj: int | None = None):
        n = self.n_traj if max_traj is None else min(max_traj, self.n_traj)

        def rows():
            for j in range(n):
                for i, ti in enumerate(self.t):
                    yield j, ti, self.x[i, j], self.p[i, j]

        return write_csv(path, ["traj_id", "t", "x", "p"], rows(), meta)


@dataclass
class EnsembleStats:
    t: np.ndarray
    msd: np.ndarray
    msd_se: np.ndarray
    vacf: np.ndarray
    vacf_se: np.ndarray
    mean_x: np.ndarray
    var_x: np.ndarray
    mean_p: np.ndarray
    var_p: np.ndarray
    var_p_se: np.ndarray

    def to_csv(self, path, meta=None):
        cols = (self.t, self.msd, self.msd_se, self.vacf, self.vacf_se)
        return write_csv(path, ["t", "msd", "msd_se", "vacf", "vacf_se"], zip(*cols), meta)

    def msd_slope(self, t_min: float, t_max: float | None = None) -> float:
        """Least-squares slope of MSD(t) over [t_min, t_max]."""
        sel = (self.t >= t_min) & (self.t <= (self.t[-1] if t_max is None else t_max))
        if sel.sum() < 2:
            raise ConfigError("need at least two records in the slope window")
        return float(np.polyfit(self.t[sel], self.msd[sel], 1)[0])


def _threads() -> int:
    env = os.environ.get("QBROWN_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError("QBROWN_THREADS must be a positive integer") from None
        if n < 1:
            raise ConfigError("QBROWN_THREADS must be a positive integer")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class _Run:
    """Everything a chunk worker needs."""

    spec: Potential | None
    bath: BathSpec
    m: float
    dt: float
    n_steps: int
    record_every: int
    burn_in: int
    seed: int
    x0: float
    bound: float
    record_noise: bool


def _chunk_map(fn, n_traj: int):
    starts = list(range(0, n_traj, CHUNK))
    jobs = [(s, min(s + CHUNK, n_traj)) for s in starts]
    workers = min(_threads(), len(jobs))
    if workers <= 1:
        parts = [fn(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    return parts


def _noise_source(run: _Run, lo: int, hi: int, width: int, n_init: int = 1):
    """Per-trajectory generators: ``n_init`` initial normals each, then (BLOCK, n, width) blocks."""
    gens = [RngStream(run.seed, j).generator() for j in range(lo, hi)]
    init = np.array([g.standard_normal(n_init) for g in gens])

    def blocks():
        buf = np.empty((hi - lo, BLOCK, width))
        while True:
            for j, g in enumerate(gens):
                g.standard_normal(out=buf[j])
            yield buf.transpose(1, 0, 2)

    return init, blocks()


def _force(spec, x):
    if spec is None:
        return np.zeros_like(x)
    return spec.force(x)


def _check(x, p, bound, step, dt):
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))
            and np.max(np.abs(x)) <= bound and np.max(np.abs(p)) <= bound):
        raise UnstableStep(f"state left |x|,|p| <= {bound:g} by step {step}; dt = {dt:g} may be too large")


def _validate(spec, bath, m, dt, n_steps, n_traj, record_every, burn_in):
    if not m > 0:
        raise ConfigError("m must be > 0")
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    if n_steps < 1 or n_traj < 1:
        raise ConfigError("n_steps and n_traj must be >= 1")
    if record_every < 1 or burn_in < 0:
        raise ConfigError("record_every must be >= 1 and burn_in >= 0")
    if spec is not None and not isinstance(spec, Potential):
        raise ConfigError("spec must be a Potential or None")


def _record_times(run: _Run):
    n_rec = run.n_steps // run.record_every + 1
    return np.arange(n_rec) * run.record_every * run.dt, n_rec


@np.errstate(over="ignore", invalid="ignore")  # blow-ups surface through _check
def _langevin_chunk(run: _Run, friction, lo: int, hi: int):
    n = hi - lo
    T, m, dt = run.bath.T, run.m, run.dt
    init, blocks = _noise_source(run, lo, hi, 1)
    x = np.full(n, run.x0, dtype=float)
    p = math.sqrt(m * T) * init[:, 0]
    _, n_rec = _record_times(run)
    xs = np.empty((n_rec, n))
    ps = np.empty((n_rec, n))
    fs = np.empty((n_rec, n)) if run.record_noise else None
    f = _force(run.spec, x)
    total = run.burn_in + run.n_steps
    rec = 0
    block, k_in_block = None, BLOCK
    last_noise = np.zeros(n)
    for step in range(total + 1):
        if step >= run.burn_in and (step - run.burn_in) % run.record_every == 0:
            xs[rec], ps[rec] = x, p
            if fs is not None:
                fs[rec] = last_noise
            rec += 1
        if step == total:
            break
        if k_in_block == BLOCK:
            block, k_in_block = next(blocks), 0
            _check(x, p, run.bound, step, dt)
        xi = block[k_in_block, :, 0]
        k_in_block += 1
        p = p + 0.5 * dt * f
        x = x + 0.5 * dt * p / m
        b = friction(x)
        c1 = np.exp(-b * dt / m)
        impulse = np.sqrt(m * T * -np.expm1(-2 * b * dt / m)) * xi
        p = c1 * p + impulse
        last_noise = impulse / dt
        x = x + 0.5 * dt * p / m
        f = _force(run.spec, x)
        p = p + 0.5 * dt * f
    _check(x, p, run.bound, total, dt)
    return xs, ps, fs


def simulate_langevin(spec: Potential | None, bath: BathSpec, mode: str = "friction_from_potential",
                      m: float = 1.0, dt: float = 0.01, n_steps: int = 1000, n_traj: int = 100,
                      seed: int = 0, b: float | None = None, x0: float = 0.0, record_every: int = 1,
                      burn_in: int = 0, bound: float = 1e8, record_noise: bool = False) -> TrajectoryEnsemble:
    """Underdamped Langevin ensemble.

    ``mode="friction_from_potential"`` uses b(x) = phi''^2 / (4 pi rho c^3);
    ``mode="constant"`` uses the scalar ``b``.  ``spec=None`` is a free
    particle.  Momenta start Maxwellian, positions at ``x0``; the first
    ``burn_in`` steps are discarded and t = 0 is the first recorded state.
    With ``record_noise`` the mean random force over each step is stored.
    """
    _validate(spec, bath, m, dt, n_steps, n_traj, record_every, burn_in)
    if mode == "friction_from_potential":
        if spec is None:
            raise ConfigError("friction_from_potential needs a potential")
        def friction(x):
            return np.asarray(friction_profile(spec, bath, x))
    elif mode == "constant":
        if b is None or not b >= 0:
            raise ConfigError("constant mode needs b >= 0")
        bb = float(b)
        def friction(x):
            return np.full_like(x, bb)
    else:
        raise ConfigError(f"unknown friction mode {mode!r}")
    run = _Run(spec, bath, m, dt, n_steps, record_every, burn_in, seed, x0, bound, record_noise)
    parts = _chunk_map(lambda lo, hi: _langevin_chunk(run, friction, lo, hi), n_traj)
    return _assemble(run, parts, dict(kind="langevin", mode=mode, b=b))


def _assemble(run: _Run, parts, meta) -> TrajectoryEnsemble:
    t, _ = _record_times(run)
    xs = np.concatenate([q[0] for q in parts], axis=1)
    ps = np.concatenate([q[1] for q in parts], axis=1)
    fs = np.concatenate([q[2] for q in parts], axis=1) if run.record_noise else None
    return TrajectoryEnsemble(t, xs, ps, run.m, run.seed, run.dt, fs, meta)


def _ou_block(kernel: Exponential, m: float, T: float, dt: float):
    """Exact one-step propagator and noise factor for (p, h, eta).

    dp = (-h + eta) dt, dh = (gamma p/m - h/tau) dt,
    d eta = -eta/tau dt + sqrt(2 k_B T gamma / tau) dW.
    """
    g, tau = kernel.gamma, kernel.tau
    A = np.array([[0.0, -1.0, 1.0],
                  [g / m, -1.0 / tau, 0.0],
                  [0.0, 0.0, -1.0 / tau]])
    Q = np.zeros((3, 3))
    Q[2, 2] = 2 * T * g / tau
    # Van Loan: expm([[-A, Q], [0, A^T]] dt) gives the discrete covariance
    big = np.zeros((6, 6))
    big[:3, :3] = -A
    big[:3, 3:] = Q
    big[3:, 3:] = A.T
    E = expm(big * dt)
    F = E[3:, 3:].T
    cov = F @ E[:3, 3:]
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    L = V * np.sqrt(np.clip(w, 0.0, None))
    return F, L


@np.errstate(over="ignore", invalid="ignore")  # blow-ups surface through _check
def _exponential_chunk(run: _Run, kernel: Exponential, lo: int, hi: int):
    n = hi - lo
    T, m, dt = run.bath.T, run.m, run.dt
    init, blocks = _noise_source(run, lo, hi, 3, n_init=2)
    F, L = _ou_block(kernel, m, T, dt)
    x = np.full(n, run.x0, dtype=float)
    p = math.sqrt(m * T) * init[:, 0]
    h = np.zeros(n)  # memory integral starts empty at t = 0
    eta = math.sqrt(T * kernel.gamma) * init[:, 1]  # stationary noise
    _, n_rec = _record_times(run)
    xs, ps = np.empty((n_rec, n)), np.empty((n_rec, n))
    fs = np.empty((n_rec, n)) if run.record_noise else None
    f = _force(run.spec, x)
    total = run.burn_in + run.n_steps
    rec, block, k_in_block = 0, None, BLOCK
    for step in range(total + 1):
        if step >= run.burn_in and (step - run.burn_in) % run.record_every == 0:
            xs[rec], ps[rec] = x, p
            if fs is not None:
                fs[rec] = eta
            rec += 1
        if step == total:
            break
        if k_in_block == BLOCK:
            block, k_in_block = next(blocks), 0
            _check(x, p, run.bound, step, dt)
        z = block[k_in_block]
        k_in_block += 1
        p = p + 0.5 * dt * f
        x = x + 0.5 * dt * p / m
        y = np.stack([p, h, eta])
        y = F @ y + L @ z.T
        p, h, eta = y[0], y[1], y[2]
        x = x + 0.5 * dt * p / m
        f = _force(run.spec, x)
        p = p + 0.5 * dt * f
    _check(x, p, run.bound, total, dt)
    return xs, ps, fs


def _circulant_sqrt_eigs(c: np.ndarray) -> np.ndarray:
    """Square roots of the circulant-embedding eigenvalues for covariance c[0..n-1]."""
    row = np.concatenate([c, c[-2:0:-1]])
    lam = np.fft.fft(row).real
    tol = 1e-10 * max(abs(lam).max(), 1e-300)
    if lam.min() < -tol:
        raise KernelNotPositive(f"kernel spectrum has negative eigenvalue {lam.min():.3g}")
    return np.sqrt(np.clip(lam, 0.0, None) / row.size)


@np.errstate(over="ignore", invalid="ignore")  # blow-ups surface through _check
def _tabulated_chunk(run: _Run, kernel: TabulatedKernel, lo: int, hi: int):
    n = hi - lo
    T, m, dt = run.bath.T, run.m, run.dt
    total = run.burn_in + run.n_steps
    lags = np.arange(total + 1) * dt
    G = np.asarray(kernel.G(lags))
    support = int(np.searchsorted(lags, kernel.t[-1], side="right"))
    Gs = G[:support]
    sq = _circulant_sqrt_eigs(T * G) if total >= 1 else np.sqrt(np.array([T * G[0]]))
    size = sq.size
    gens = [RngStream(run.seed, j).generator() for j in range(lo, hi)]
    p = math.sqrt(m * T) * np.array([g.standard_normal() for g in gens])
    noise = np.empty((total + 1, n))
    for j, g in enumerate(gens):
        z = g.standard_normal(size) + 1j * g.standard_normal(size)
        noise[:, j] = np.fft.fft(sq * z).real[: total + 1]
    x = np.full(n, run.x0, dtype=float)
    _, n_rec = _record_times(run)
    xs, ps = np.empty((n_rec, n)), np.empty((n_rec, n))
    fs = np.empty((n_rec, n)) if run.record_noise else None
    hist = np.zeros((support, n))  # hist[j] = p at step k - j
    weights = Gs * dt
    weights[0] *= 0.5  # trapezoid endpoint at zero lag
    rec = 0
    for step in range(total + 1):
        if step >= run.burn_in and (step - run.burn_in) % run.record_every == 0:
            xs[rec], ps[rec] = x, p
            if fs is not None:
                fs[rec] = noise[step]
            rec += 1
        if step == total:
            break
        if step % BLOCK == 0:
            _check(x, p, run.bound, step, dt)
        hist = np.roll(hist, 1, axis=0)
        hist[0] = p
        memory = weights @ hist / m
        p = p + dt * (_force(run.spec, x) - memory + noise[step])
        x = x + dt * p / m
    _check(x, p, run.bound, total, dt)
    return xs, ps, fs


def simulate_gle(spec: Potential | None, bath: BathSpec, kernel, m: float = 1.0, dt: float = 0.01,
                 n_steps: int = 1000, n_traj: int = 100, seed: int = 0, x0: float = 0.0,
                 record_every: int = 1, burn_in: int = 0, bound: float = 1e8,
                 record_noise: bool = False) -> TrajectoryEnsemble:
    """Generalized Langevin ensemble with friction from a memory kernel.

    The kernel sets the friction; ``spec`` only supplies the force.  With
    ``record_noise`` the random force (eta for Exponential, the sampled
    Gaussian force for Tabulated, the mean force over a step for Delta) is
    stored at record times.
    """
    _validate(spec, bath, m, dt, n_steps, n_traj, record_every, burn_in)
    if isinstance(kernel, Delta):
        ens = simulate_langevin(spec, bath, "constant", m, dt, n_steps, n_traj, seed, b=kernel.b, x0=x0,
                                record_every=record_every, burn_in=burn_in, bound=bound,
                                record_noise=record_noise)
        ens.meta = dict(kind="gle", kernel="delta", b=kernel.b)
        return ens
    run = _Run(spec, bath, m, dt, n_steps, record_every, burn_in, seed, x0, bound, record_noise)
    if isinstance(kernel, Exponential):
        parts = _chunk_map(lambda lo, hi: _exponential_chunk(run, kernel, lo, hi), n_traj)
        meta = dict(kind="gle", kernel="exponential", gamma=kernel.gamma, tau=kernel.tau)
    elif isinstance(kernel, TabulatedKernel):
        parts = _chunk_map(lambda lo, hi: _tabulated_chunk(run, kernel, lo, hi), n_traj)
        meta = dict(kind="gle", kernel="tabulated")
    else:
        raise ConfigError(f"unknown kernel {type(kernel).__name__}")
    return _assemble(run, parts, meta)


def ensemble_stats(ens: TrajectoryEnsemble) -> EnsembleStats:
    if ens.t.size == 0:
        raise ConfigError("ensemble has an empty time grid")
    n = ens.n_traj
    if n < 2:
        raise ConfigError("ensemble statistics need n_traj >= 2")
    root = math.sqrt(n)
    d2 = (ens.x - ens.x[0]) ** 2
    v = ens.p / ens.m
    cv = v[0] * v
    return EnsembleStats(
        t=ens.t.copy(),
        msd=d2.mean(axis=1), msd_se=d2.std(axis=1, ddof=1) / root,
        vacf=cv.mean(axis=1), vacf_se=cv.std(axis=1, ddof=1) / root,
        mean_x=ens.x.mean(axis=1), var_x=ens.x.var(axis=1, ddof=1),
        mean_p=ens.p.mean(axis=1), var_p=ens.p.var(axis=1, ddof=1),
        var_p_se=(ens.p**2).std(axis=1, ddof=1) / root,
    )


def position_histogram(ens: TrajectoryEnsemble, bins, start: int = 0, period: float | None = None):
    """Normalized histogram of x over records ``start:``; folded into [0, period) if given."""
    x = ens.x[start:].ravel()
    if period is not None:
        x = np.mod(x, period)
    dens, edges = np.histogram(x, bins=bins, density=True)
    return dens, edges


@dataclass
class NoiseCorrelation:
    lag: np.ndarray
    c_ff: np.ndarray
    c_ff_se: np.ndarray
    expected: np.ndarray


def measured_noise_autocorrelation(ens: TrajectoryEnsemble, kernel, T: float,
                                   max_lag: int | None = None) -> NoiseCorrelation:
    """Estimate <F(t) F(t+s)> from recorded noise, averaged over trajectories and time origins.

    For a Delta kernel the recorded force is the mean over one integration
    step dt, so the expected value is 2 k_B T b / dt at zero lag and 0
    elsewhere; otherwise k_B T G(s).
    """
    if ens.noise is None:
        raise ConfigError("ensemble has no recorded noise")
    F = ens.noise[1:] if isinstance(kernel, Delta) else ens.noise
    n_rec = F.shape[0]
    max_lag = n_rec // 2 if max_lag is None else min(max_lag, n_rec - 1)
    lags = np.arange(max_lag + 1)
    c, se = np.empty(lags.size), np.empty(lags.size)
    for k in lags:
        prod = (F[: n_rec - k] * F[k:]).mean(axis=0)  # per-trajectory time average
        c[k] = prod.mean()
        se[k] = prod.std(ddof=1) / math.sqrt(prod.size) if prod.size > 1 else math.nan
    dt_rec = ens.t[1] - ens.t[0] if ens.t.size > 1 else 1.0
    tau = lags * dt_rec
    if isinstance(kernel, Delta):
        expected = np.where(lags == 0, 2 * T * kernel.b / ens.dt, 0.0)
    else:
        expected = T * np.asarray(kernel.G(tau))
    return NoiseCorrelation(tau, c, se, expected)
