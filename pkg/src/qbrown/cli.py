"""Command-line front end.

    qbrown <command> --config run.cfg [--out result.csv] [--seed N]
    qbrown validate run.cfg [--command <command>]

Config files are INI-style: ``[section]`` headers, ``key = value`` lines and
``#`` comments; keys are referred to as ``section.key``.  Every CSV starts
with ``#`` lines carrying the config SHA-256 and the seed, and the exact
command that reproduces it is echoed on stdout.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import math
import shlex
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .core import UnitSystem
from .errors import ConfigError, QBrownError

COMMANDS = ("potential", "langevin", "gle", "fpe", "bohm", "resonant", "disperse", "wigner", "spectral")
_REQUIRED = object()


class Settings:
    """Typed access to a parsed config that collects every violation."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.errors: list[str] = []
        self.used: set[str] = set()

    def has(self, key: str) -> bool:
        section, _, opt = key.partition(".")
        return self.parser.has_option(section, opt)

    def get(self, key: str, kind: Callable = float, default=_REQUIRED, choices=None,
            min=None, gt=None):
        section, _, opt = key.partition(".")
        self.used.add(key)
        if not self.parser.has_option(section, opt):
            if default is _REQUIRED:
                self.errors.append(f"missing key '{key}'")
            return None if default is _REQUIRED else default
        raw = self.parser.get(section, opt).strip()
        try:
            value = _convert(raw, kind)
        except ValueError:
            self.errors.append(f"{key}: cannot read {raw!r} as {_kind_name(kind)}")
            return None
        if choices is not None and value not in choices:
            self.errors.append(f"{key} must be one of {', '.join(map(str, choices))}; got {raw!r}")
        elif min is not None and not value >= min:
            self.errors.append(f"{key} must be >= {min:g}")
        elif gt is not None and not value > gt:
            self.errors.append(f"{key} must be > {gt:g}")
        return value

    def fail(self, message: str):
        self.errors.append(message)

    def unused(self) -> list[str]:
        out = []
        for section in self.parser.sections():
            if section == "run":
                continue
            for opt in self.parser.options(section):
                if f"{section}.{opt}" not in self.used:
                    out.append(f"unknown key '{section}.{opt}' for this command")
        return out

    def raise_if_errors(self):
        if self.errors:
            raise ConfigError("\n".join(self.errors))

    def construct(self, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            self.errors.append(str(exc))
            return None


def _kind_name(kind):
    return {float: "a number", int: "an integer", bool: "true/false", str: "text"}.get(kind, kind.__name__)


def _convert(raw: str, kind):
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(raw)
    if kind is int:
        value = float(raw)
        if value != int(value):
            raise ValueError(raw)
        return int(value)
    if kind is float:
        value = float(raw)
        if math.isnan(value):
            raise ValueError(raw)
        return value
    if kind is list:
        return [float(v) for v in raw.replace(",", " ").split()]
    return kind(raw)


def read_config(path) -> tuple[configparser.ConfigParser, bytes]:
    """Parse ``path``; parse errors are reported as ``file:line:col: message``."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(data.decode("utf-8"), source=str(path))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not UTF-8 ({exc.reason})") from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:1: key outside any [section]") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        col = len(line) - len(line.lstrip()) + 1
        raise ConfigError(f"{path}:{lineno}:{col}: cannot parse {line.strip()!r}") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:1: duplicate key '{exc.section}.{exc.option}'") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:1: duplicate section [{exc.section}]") from None
    return parser, data


# shared pieces

def bath_from(s: Settings):
    from .potentials import BathSpec

    vals = dict(rho_m=s.get("bath.rho_m", default=1.0, gt=0), c=s.get("bath.c", default=1.0, gt=0),
                T=s.get("bath.T", default=1.0, min=0), hbar=s.get("bath.hbar", default=0.0, min=0))
    return vals, lambda: BathSpec(**vals)


def potential_from(s: Settings, allow_none: bool = True):
    """Read ``[potential]``; returns a factory for the Potential (or None)."""
    from . import potentials as P

    kinds = ("harmonic", "barrier", "fk", "dimer", "chain", "tabulated") + (("none",) if allow_none else ())
    kind = s.get("potential.kind", str, choices=kinds)
    if kind == "harmonic":
        v = dict(m=s.get("potential.m", default=1.0, gt=0), omega0=s.get("potential.omega0", default=1.0))
        return lambda: P.Harmonic(**v)
    if kind == "barrier":
        v = dict(m=s.get("potential.m", default=1.0, gt=0), omega1=s.get("potential.omega1", default=1.0))
        return lambda: P.Barrier(**v)
    if kind == "fk":
        v = dict(A=s.get("potential.A"), a=s.get("potential.a", default=1.0, gt=0))
        return lambda: P.FrenkelKantorova(**v)
    if kind == "dimer":
        v = dict(A=s.get("potential.A"), a=s.get("potential.a", default=1.0, gt=0),
                 l=s.get("potential.l", min=0), phi=s.get("potential.phi", default=0.0))
        return lambda: P.Dimer(**v)
    if kind == "chain":
        v = dict(N=s.get("potential.N", int, min=1), l=s.get("potential.l"),
                 A1=s.get("potential.A1"), l1=s.get("potential.l1", gt=0),
                 A2=s.get("potential.A2", default=0.0), l2=s.get("potential.l2", default=1.0, gt=0))
        return lambda: P.Chain(**v)
    if kind == "tabulated":
        path = s.get("potential.file", str)
        periodic = s.get("potential.periodic", bool, default=False)
        if path is not None and not Path(path).is_file():
            s.fail(f"potential.file: no such file {path!r}")
        return lambda: P.Tabulated.from_csv(path, periodic)
    return lambda: None


def time_grid(s: Settings, prefix: str, start_zero: bool = False):
    spacing = s.get(f"{prefix}.spacing", str, default="linear", choices=("linear", "log"))
    t_min = s.get(f"{prefix}.t_min", default=0.0, min=0)
    t_max = s.get(f"{prefix}.t_max", gt=0)
    n = s.get(f"{prefix}.n_times", int, default=101, min=2)

    def make():
        if spacing == "log":
            if not t_min > 0:
                raise ConfigError(f"{prefix}.t_min must be > 0 for log spacing")
            t = np.geomspace(t_min, t_max, n)
        else:
            t = np.linspace(t_min, t_max, n)
        if not t_max > t_min:
            raise ConfigError(f"{prefix}.t_max must exceed {prefix}.t_min")
        return np.concatenate([[0.0], t]) if start_zero and t[0] > 0 else t
    return make


def axis_from(s: Settings, prefix: str, default_boundary: str | None):
    from .fpe import Axis

    v = dict(lo=s.get(f"{prefix}.min"), hi=s.get(f"{prefix}.max"), n=s.get(f"{prefix}.n_cells", int, min=3),
             boundary=s.get(f"{prefix}.boundary", str, default=default_boundary, choices=("periodic", "reflecting")))
    return lambda: Axis(**v)


def initial_from(s: Settings):
    """``[initial]``: gaussian (mean, variance) or uniform over the grid."""
    from .fpe import GridField

    kind = s.get("initial.kind", str, default="gaussian", choices=("gaussian", "uniform"))
    if kind == "uniform":
        return lambda axes: GridField.from_function(axes, lambda *g: np.ones_like(g[0]))
    mean = s.get("initial.mean", default=0.0)
    var = s.get("initial.variance", gt=0)
    if not s.has("initial.p_variance") and not s.has("initial.p_mean"):
        s.used.update({"initial.p_mean", "initial.p_variance"})

        def one_d(axes):
            return GridField.from_function(axes, lambda x, *_: np.exp(-((x - mean) ** 2) / (2 * var)))
        return one_d
    p_mean = s.get("initial.p_mean", default=0.0)
    p_var = s.get("initial.p_variance", gt=0)
    return lambda axes: GridField.from_function(
        axes, lambda x, p: np.exp(-((x - mean) ** 2) / (2 * var) - (p - p_mean) ** 2 / (2 * p_var)))


def read_pairs(path) -> tuple[np.ndarray, np.ndarray]:
    """Two numeric columns from a CSV; a non-numeric first row is a header."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if rows:
                    raise ConfigError(f"{path}: bad row {i + 1}") from None
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    a, b = np.array(rows).T
    return a, b


@dataclass
class Job:
    """A validated run: ``execute(out, meta)`` writes files and returns a summary.

    ``preflight`` calls the module entry point on a trivially short run so
    that every module precondition is checked before any compute starts.
    """

    execute: Callable[[Path, dict], dict]
    preflight: Callable[[], object] | None = None


# command builders

def build_potential(s: Settings, seed: int) -> Job:
    from .potentials import friction_profile

    bath_v, bath = bath_from(s)
    pot = potential_from(s, allow_none=False)
    x_min, x_max = s.get("grid.min"), s.get("grid.max")
    n = s.get("grid.n_points", int, default=501, min=2)
    s.raise_if_errors()
    spec, b = s.construct(pot), s.construct(bath)
    if x_min is not None and x_max is not None and not x_max > x_min:
        s.fail("grid.max must exceed grid.min")
    s.raise_if_errors()

    def run(out, meta):
        from .io import write_csv

        x = np.linspace(x_min, x_max, n)
        phi, d1, d2 = (np.broadcast_to(v, x.shape) for v in spec.evaluate(x))
        fr = np.broadcast_to(friction_profile(spec, b, x), x.shape)
        write_csv(out, ["x", "phi", "dphi", "d2phi", "b"], zip(x, phi, d1, d2, fr), meta)
        return {"points": n}
    return Job(run)


def _trajectory_settings(s: Settings, section: str):
    return dict(m=s.get(f"{section}.m", default=1.0, gt=0), dt=s.get(f"{section}.dt", gt=0),
                n_steps=s.get(f"{section}.n_steps", int, min=1), n_traj=s.get(f"{section}.n_traj", int, min=2),
                x0=s.get(f"{section}.x0", default=0.0),
                record_every=s.get(f"{section}.record_every", int, default=1, min=1),
                burn_in=s.get(f"{section}.burn_in", int, default=0, min=0),
                bound=s.get(f"{section}.bound", default=1e8, gt=0))


def _write_ensemble(ens, out, meta, fit, extra):
    from .gle import ensemble_stats

    stats = ensemble_stats(ens)
    t_end = float(stats.t[-1])
    lo = fit[0] if fit[0] is not None else 0.2 * t_end
    hi = fit[1] if fit[1] is not None else t_end
    slope = stats.msd_slope(lo, hi)
    p2 = float(np.mean(ens.p**2))
    summary = {"msd_slope": slope, "D_measured": slope / 2, "fit_t_min": lo, "fit_t_max": hi,
               "mean_p2": p2, **extra}
    stats.to_csv(out, {**meta, **summary})
    return summary


def build_langevin(s: Settings, seed: int) -> Job:
    from .gle import simulate_langevin
    from .resonant import lifson_jackson

    _, bath = bath_from(s)
    pot = potential_from(s)
    mode = s.get("langevin.friction", str, default="profile", choices=("profile", "constant"))
    b = s.get("langevin.b", gt=0) if mode == "constant" else None
    kw = _trajectory_settings(s, "langevin")
    fit = (s.get("langevin.fit_t_min", default=None, min=0), s.get("langevin.fit_t_max", default=None, gt=0))
    traj_out = s.get("langevin.trajectories", str, default=None)
    s.raise_if_errors()
    spec, bth = s.construct(pot), s.construct(bath)
    if mode == "profile" and spec is None and not s.errors:
        s.fail("langevin.friction = profile needs a potential (potential.kind != none)")
    s.raise_if_errors()

    def run(out, meta):
        ens = simulate_langevin(spec, bth, "friction_from_potential" if mode == "profile" else "constant",
                                seed=seed, b=b, **kw)
        extra = {"mean_p2_over_mT": float(np.mean(ens.p**2)) / (kw["m"] * bth.T) if bth.T > 0 else math.nan}
        if mode == "profile" and spec is not None and spec.period is not None and bth.T > 0:
            extra["D_lifson_jackson"] = lifson_jackson(spec, bth).D
        if traj_out:
            ens.to_csv(traj_out, meta, max_traj=100)
        return _write_ensemble(ens, out, meta, fit, extra)

    def preflight():
        short = {**kw, "n_steps": 1, "n_traj": 2, "record_every": 1, "burn_in": 0}
        simulate_langevin(spec, bth, "friction_from_potential" if mode == "profile" else "constant", b=b, **short)
    return Job(run, preflight)


def build_gle(s: Settings, seed: int) -> Job:
    from .gle import Delta, Exponential, TabulatedKernel, measured_noise_autocorrelation, simulate_gle
    from .io import write_csv

    _, bath = bath_from(s)
    pot = potential_from(s)
    kind = s.get("kernel.kind", str, choices=("delta", "exponential", "tabulated"))
    if kind == "delta":
        kv = dict(b=s.get("kernel.b", min=0))
        kernel = lambda: Delta(**kv)  # noqa: E731
    elif kind == "exponential":
        kv = dict(gamma=s.get("kernel.gamma", min=0), tau=s.get("kernel.tau", gt=0))
        kernel = lambda: Exponential(**kv)  # noqa: E731
    else:
        path = s.get("kernel.file", str)
        if path is not None and not Path(path).is_file():
            s.fail(f"kernel.file: no such file {path!r}")

        def kernel():
            t, g = read_pairs(path)
            return TabulatedKernel(tuple(t), tuple(g))
    kw = _trajectory_settings(s, "gle")
    fit = (s.get("gle.fit_t_min", default=None, min=0), s.get("gle.fit_t_max", default=None, gt=0))
    noise_out = s.get("gle.noise_out", str, default=None)
    max_lag = s.get("gle.noise_max_lag", int, default=50, min=0)
    s.raise_if_errors()
    spec, bth, kern = s.construct(pot), s.construct(bath), s.construct(kernel)
    s.raise_if_errors()

    def run(out, meta):
        ens = simulate_gle(spec, bth, kern, seed=seed, record_noise=noise_out is not None, **kw)
        summary = _write_ensemble(ens, out, meta, fit, {})
        if noise_out:
            nc = measured_noise_autocorrelation(ens, kern, bth.T, max_lag)
            write_csv(noise_out, ["lag", "c_ff", "c_ff_se", "expected"],
                      zip(nc.lag, nc.c_ff, nc.c_ff_se, nc.expected), meta)
        return summary

    def preflight():
        short = {**kw, "n_steps": 1, "n_traj": 2, "record_every": 1, "burn_in": 0}
        simulate_gle(spec, bth, kern, **short)
    return Job(run, preflight)


def _friction_setting(s: Settings, key: str):
    raw = s.get(key, str, default="profile")
    if raw is None or raw == "profile":
        return "profile"
    try:
        value = float(raw)
    except ValueError:
        s.fail(f"{key} must be 'profile' or a number; got {raw!r}")
        return None
    if not value > 0:
        s.fail(f"{key} must be > 0")
    return value


def build_fpe(s: Settings, seed: int) -> Job:
    from . import fpe

    _, bath = bath_from(s)
    pot = potential_from(s)
    solver = s.get("fpe.solver", str, default="smoluchowski", choices=("smoluchowski", "klein_kramers"))
    t_final, dt = s.get("fpe.t_final", min=0), s.get("fpe.dt", gt=0)
    save_every = s.get("fpe.save_every", int, default=None, min=1)
    field_out = s.get("fpe.field_out", str, default=None)
    kind = s.parser.get("potential", "kind", fallback=None)
    periodic = kind in ("fk", "dimer", "chain")
    x_axis = axis_from(s, "grid", "periodic" if periodic else "reflecting")
    init = initial_from(s)
    if solver == "smoluchowski":
        friction = _friction_setting(s, "fpe.friction")
        method = s.get("fpe.method", str, default="implicit", choices=("implicit", "explicit"))
    else:
        b_bar = s.get("fpe.b_bar", min=0)
        m = s.get("fpe.m", default=1.0, gt=0)
        advection = s.get("fpe.advection", str, default="van_leer", choices=("van_leer", "spectral"))
        order = s.get("fpe.order", int, default=2, choices=(2, 4))
        p_axis = axis_from(s, "pgrid", "reflecting")
    s.raise_if_errors()
    spec, bth, ax = s.construct(pot), s.construct(bath), s.construct(x_axis)
    axes = None
    if solver == "klein_kramers":
        pax = s.construct(p_axis)
        axes = None if ax is None or pax is None else (ax, pax)
    elif ax is not None:
        axes = (ax,)
    rho0 = s.construct(init, axes) if axes is not None else None
    s.raise_if_errors()

    def evolve(t_end):
        if solver == "smoluchowski":
            return fpe.smoluchowski_evolve(rho0, spec, bth, friction, t_end, dt, method=method,
                                           save_every=save_every)
        return fpe.klein_kramers_evolve(rho0, spec, bth, b_bar, t_end, dt, m=m, advection=advection,
                                        order=order, save_every=save_every)

    def run(out, meta):
        ser = evolve(t_final)
        ser.to_csv(out, meta)
        if field_out:
            ser.final.to_csv(field_out, meta)
        return {"final_norm": ser.norm[-1], "final_variance": ser.variance[-1]}
    return Job(run, lambda: evolve(0.0))


def build_bohm(s: Settings, seed: int) -> Job:
    from . import fpe

    _, bath = bath_from(s)
    pot = potential_from(s)
    t_final, dt = s.get("bohm.t_final", min=0), s.get("bohm.dt", gt=0)
    m = s.get("bohm.m", default=1.0, gt=0)
    friction = _friction_setting(s, "bohm.friction")
    save_every = s.get("bohm.save_every", int, default=None, min=1)
    field_out = s.get("bohm.field_out", str, default=None)
    kind = s.parser.get("potential", "kind", fallback=None)
    x_axis = axis_from(s, "grid", "periodic" if kind in ("fk", "dimer", "chain") else "reflecting")
    init = initial_from(s)
    s.raise_if_errors()
    spec, bth, ax = s.construct(pot), s.construct(bath), s.construct(x_axis)
    rho0 = s.construct(init, (ax,)) if ax is not None else None
    s.raise_if_errors()

    def evolve(t_end):
        return fpe.smoluchowski_bohm_evolve(rho0, spec, bth, friction, t_end, dt, m=m, save_every=save_every)

    def run(out, meta):
        ser = evolve(t_final)
        ser.to_csv(out, meta)
        if field_out:
            ser.final.to_csv(field_out, meta)
        return {"final_norm": ser.norm[-1], "final_variance": ser.variance[-1]}
    return Job(run, lambda: evolve(0.0))


def _values(s: Settings, prefix: str, kind=float):
    """``<prefix>_values`` as a list, or ``<prefix>_min/_max/_n`` (geometric with
    ``<prefix>_spacing = log``)."""
    if s.has(f"{prefix}_values"):
        vals = s.get(f"{prefix}_values", list)
        if vals is not None and not vals:
            s.fail(f"{prefix}_values is empty")
        return vals
    lo, hi = s.get(f"{prefix}_min"), s.get(f"{prefix}_max")
    n = s.get(f"{prefix}_n", int, default=50, min=1)
    spacing = s.get(f"{prefix}_spacing", str, default="linear", choices=("linear", "log"))
    if None in (lo, hi, n, spacing):
        return None
    if hi < lo:
        s.fail(f"{prefix}_max must be >= {prefix}_min")
        return None
    if spacing == "log":
        if not lo > 0:
            s.fail(f"{prefix}_min must be > 0 for log spacing")
            return None
        return np.geomspace(lo, hi, n).tolist()
    return np.linspace(lo, hi, n).tolist()


def build_resonant(s: Settings, seed: int) -> Job:
    from . import resonant as R
    from .io import write_csv
    from .potentials import BathSpec, FrenkelKantorova

    bath_v, _ = bath_from(s)
    sweep = s.get("resonant.sweep", str, default="betaA", choices=("betaA", "dimer", "chain"))
    if sweep == "betaA":
        A, a = s.get("resonant.A", default=1.0, gt=0), s.get("resonant.a", default=1.0, gt=0)
        values = _values(s, "resonant.betaA")
        if values is not None and min(values) <= 0:
            s.fail("resonant.betaA values must be > 0")
    elif sweep == "dimer":
        A, a = s.get("resonant.A", default=1.0, gt=0), s.get("resonant.a", default=1.0, gt=0)
        values = _values(s, "resonant.l")
        mode = s.get("resonant.mode", str, default="rigid", choices=("rigid", "rotating"))
        phi = s.get("resonant.phi", default=0.0)
        averaging = s.get("resonant.averaging", str, default="mobility", choices=("mobility", "diffusivity"))
    else:
        values = _values(s, "resonant.N")
        cv = dict(l=s.get("resonant.l", gt=0), A1=s.get("resonant.A1"), l1=s.get("resonant.l1", gt=0),
                  A2=s.get("resonant.A2"), l2=s.get("resonant.l2", gt=0))
        if values is not None and any(v < 1 or v != int(v) for v in values):
            s.fail("resonant.N values must be integers >= 1")
    s.raise_if_errors()
    bath = s.construct(BathSpec, **bath_v)
    if sweep != "betaA" and bath is not None and bath.T == 0:
        s.fail("bath.T must be > 0 for a diffusion sweep")
    s.raise_if_errors()

    def run(out, meta):
        if sweep == "betaA":
            rows = []
            for z in values:
                bz = BathSpec(bath.rho_m, bath.c, A / z, bath.hbar)
                rows.append((z, R.lifson_jackson(FrenkelKantorova(A, a), bz).D, R.fk_diffusion_bessel(A, a, bz).D))
            write_csv(out, ["betaA", "D_quadrature", "D_bessel"], rows, meta)
            return {"points": len(rows)}
        if sweep == "dimer":
            res = R.dimer_sweep(A, a, values, bath, mode, phi, averaging)
            header = ["l"]
        else:
            res = R.chain_sweep([int(v) for v in values], bath=bath, **cv)
            header = ["N"]
        write_csv(out, header + ["D", "flag"], ((p.parameter, p.D, p.flag or "") for p in res.points), meta)
        ext = res.extrema()
        return {"points": len(res.points), "extrema": " ".join(f"{k}@{v}" for v, k in ext) if ext else ""}
    return Job(run)


def build_disperse(s: Settings, seed: int) -> Job:
    from . import qdisp
    from .io import write_csv

    bath_v, _ = bath_from(s)
    model = s.get("disperse.model", str, choices=("quantum_einstein", "overdamped", "ermakov"))
    m = s.get("disperse.m", default=1.0, gt=0)
    b = s.get("disperse.b", min=0 if model == "ermakov" else None, gt=None if model == "ermakov" else 0)
    times = time_grid(s, "disperse", start_zero=model != "quantum_einstein")
    if model == "overdamped":
        s0 = s.get("disperse.sigma0_2", gt=0)
        w = s.get("disperse.omega0", default=0.0)
    elif model == "ermakov":
        s0 = s.get("disperse.sigma0", gt=0)
        sdot = s.get("disperse.sigma_dot0", default=0.0)
        w = s.get("disperse.omega0", default=0.0)
    s.raise_if_errors()
    t = s.construct(times)
    if model == "quantum_einstein" and not bath_v["T"] > 0:
        s.fail("disperse.model = quantum_einstein needs bath.T > 0")
    s.raise_if_errors()

    def run(out, meta):
        T, hbar = bath_v["T"], bath_v["hbar"]
        if model == "quantum_einstein":
            lam = qdisp.thermal_length(m, T, hbar)
            sig = qdisp.quantum_einstein_sigma(t, T / b, lam)
            write_csv(out, ["t", "sigma_x2"], zip(t, np.atleast_1d(sig)),
                      {**meta, "D": T / b, "lambda_T": lam})
            return {"D": T / b, "lambda_T": lam}
        if model == "overdamped":
            ser = qdisp.overdamped_dispersion(s0, m, b, w, T, hbar, t)
        else:
            ser = qdisp.ermakov_evolve(s0, sdot, m, b, w, T, hbar, t)
        ser.to_csv(out, meta)
        return {"final_sigma_x2": float(ser.sigma_x2[-1])}

    def preflight():
        T, hbar = bath_v["T"], bath_v["hbar"]
        if model == "overdamped":
            qdisp.overdamped_dispersion(s0, m, b, w, T, hbar, t[:2])
        elif model == "ermakov":
            qdisp.ermakov_evolve(s0, sdot, m, b, w, T, hbar, t[:2])
    return Job(run, preflight)


def build_wigner(s: Settings, seed: int) -> Job:
    from . import wigner as W

    bath_v, _ = bath_from(s)
    model = s.get("wigner.model", str, choices=[m.value for m in W.DiffusionModel])
    m = s.get("wigner.m", default=1.0, gt=0)
    w = s.get("wigner.omega0", default=1.0)
    b_bar = s.get("wigner.b_bar", min=0)
    state = dict(sigma_x2=s.get("wigner.sigma_x2", gt=0), sigma_p2=s.get("wigner.sigma_p2", gt=0),
                 sigma_xp=s.get("wigner.sigma_xp", default=0.0))
    times = time_grid(s, "wigner", start_zero=True)
    s.raise_if_errors()
    dm = s.construct(W.DiffusionModel.parse, model)
    if dm is W.DiffusionModel.EMERGENT and bath_v["T"] == 0:
        s.fail("wigner.model = emergent needs bath.T > 0: the emergent friction and diffusion "
               "coefficients diverge as T -> 0")
    st0 = s.construct(W.GaussianState, **state)
    t = s.construct(times)
    s.raise_if_errors()

    def run(out, meta):
        ser = W.evolve_moments(st0, dm, m, w, b_bar, bath_v["T"], bath_v["hbar"], t)
        summary = {}
        if bath_v["hbar"] > 0:
            rep = W.heisenberg_check(ser)
            summary = {"min_uncertainty_ratio": rep.min_ratio, "heisenberg_violated": rep.violated}
        ser.to_csv(out, {**meta, **summary})
        return summary
    return Job(run, lambda: W.evolve_moments(st0, dm, m, w, b_bar, bath_v["T"], bath_v["hbar"], t[:2]))


def build_spectral(s: Settings, seed: int) -> Job:
    from . import spectral as S
    from .io import write_csv

    bath_v, _ = bath_from(s)
    units_mode = s.get("units.mode", str, default="reduced", choices=("reduced", "SI"))
    kind = s.get("spectral.kind", str, default="thermal", choices=("thermal", "emitter"))
    if kind == "thermal":
        m = s.get("spectral.m", default=1.0, gt=0)
        b_bar = s.get("spectral.b_bar", gt=0)
        omegas = _values(s, "spectral.omega")
    else:
        omegas = _values(s, "spectral.omega_fraction") if s.has("spectral.omega_fraction_values") or \
            s.has("spectral.omega_fraction_max") else None
    if omegas is not None and min(omegas) < 0:
        s.fail("spectral frequencies must be >= 0")
    s.raise_if_errors()
    if kind == "thermal":
        spec = s.construct(S.ThermalQuantum, m, b_bar, bath_v["T"], bath_v["hbar"])
    elif units_mode != "SI":
        s.fail("spectral.kind = emitter needs units.mode = SI")
    s.raise_if_errors()

    def run(out, meta):
        if kind == "thermal":
            summary = {"D": S.einstein_D(spec)}
            if spec.hbar > 0 and spec.T > 0:
                cut = S.cutoff_frequency(spec)
                summary.update(cutoff_omega=cut.omega, cutoff_estimate=cut.estimate)
            S.spectrum_to_csv(spec, omegas, out, {**meta, **summary})
            return summary
        c = S.emitter_constants(UnitSystem("SI"))
        summary = {"tau0": c.tau0, "omega": c.omega, "omega_tau0": c.omega_tau0,
                   "sigma_v_over_c": c.sigma_v_over_c, "sigma_v2": c.sigma_v2,
                   "sigma_v2_integral": c.sigma_v2_integral}
        from .core import CODATA_2018
        em = S.Emitter(CODATA_2018["m_e"], c.tau0, CODATA_2018["hbar"])
        frac = np.asarray(omegas if omegas is not None else np.linspace(0, 1, 101))
        w = frac * c.omega
        write_csv(out, ["omega", "S"], zip(w, np.atleast_1d(S.velocity_spectrum(em, w))), {**meta, **summary})
        return summary
    return Job(run)


BUILDERS = {
    "potential": build_potential, "langevin": build_langevin, "gle": build_gle, "fpe": build_fpe,
    "bohm": build_bohm, "resonant": build_resonant, "disperse": build_disperse, "wigner": build_wigner,
    "spectral": build_spectral,
}


def plan(command: str, parser: configparser.ConfigParser, seed: int) -> Job:
    """Validate a config for ``command`` and return the runnable job."""
    s = Settings(parser)
    declared = parser.get("run", "command", fallback=None)
    if declared is not None and declared.strip() != command:
        s.fail(f"run.command is {declared.strip()!r} but the command is {command!r}")
    for key in ("run.seed", "run.out", "run.command"):
        s.used.add(key)
    try:
        job = BUILDERS[command](s, seed)
        if job.preflight is not None:
            try:
                job.preflight()
            except ConfigError as exc:
                s.fail(str(exc))
            except QBrownError:
                pass  # numerical trouble is reported by the real run
        s.raise_if_errors()
    except ConfigError as exc:
        return _raise_all(s, exc)
    extra = s.unused()
    if extra:
        raise ConfigError("\n".join(extra))
    return job


def _raise_all(s: Settings, exc: ConfigError):
    msgs = str(exc).split("\n") + [u for u in s.unused() if not any("missing" in e for e in s.errors)]
    raise ConfigError("\n".join(dict.fromkeys(msgs)))


def _seed(parser, override) -> int:
    raw = override if override is not None else parser.get("run", "seed", fallback="0")
    try:
        seed = int(str(raw).strip())
    except ValueError:
        raise ConfigError(f"run.seed must be an unsigned 64-bit integer; got {raw!r}") from None
    if not 0 <= seed < 2**64:
        raise ConfigError("run.seed must be an unsigned 64-bit integer")
    return seed


def run_command(command: str, config: str, out: str | None, seed: int | None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser, data = read_config(config)
    seed = _seed(parser, seed)
    job = plan(command, parser, seed)
    out_path = Path(out if out is not None else parser.get("run", "out", fallback=f"{command}.csv").strip())
    digest = hashlib.sha256(data).hexdigest()
    meta = {"qbrown": __version__, "command": command, "config_sha256": digest, "seed": seed}
    summary = job.execute(out_path, meta)
    for k, v in summary.items():
        print(f"{k} = {v}", file=stdout)
    print(f"wrote {out_path}", file=stdout)
    repro = ["qbrown", command, "--config", str(config), "--out", str(out_path), "--seed", str(seed)]
    print("reproduce: " + shlex.join(repro), file=stdout)
    return 0


def validate_config(config: str, command: str | None = None) -> list[str]:
    """All violations for ``config`` (empty when it would run)."""
    try:
        parser, _ = read_config(config)
    except ConfigError as exc:
        return [str(exc)]
    declared = parser.get("run", "command", fallback=None)
    command = command or (declared.strip() if declared else None)
    if command is None:
        return ["missing key 'run.command' (or pass --command)"]
    if command not in BUILDERS:
        return [f"run.command must be one of {', '.join(COMMANDS)}; got {command!r}"]
    try:
        seed = _seed(parser, None)
        plan(command, parser, seed)
    except ConfigError as exc:
        return str(exc).split("\n")
    return []


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qbrown", description="Classical and quantum Brownian-motion numerics")
    ap.add_argument("--version", action="version", version=f"qbrown {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} workflow")
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--out", help="output CSV (default: run.out or <command>.csv)")
        p.add_argument("--seed", help="unsigned 64-bit seed (default: run.seed or 0)")
    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config", nargs="?", help="INI config file")
    p.add_argument("--config", dest="config_opt", help=argparse.SUPPRESS)
    p.add_argument("--command", dest="target", choices=COMMANDS, help="command to validate for (default: run.command)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            path = args.config or args.config_opt
            if path is None:
                print("error: validate needs a config file", file=sys.stderr)
                return 1
            problems = validate_config(path, args.target)
            if problems:
                for p in problems:
                    print(p)
                return 1
            print("OK")
            return 0
        return run_command(args.command, args.config, args.out, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except QBrownError as exc:
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
