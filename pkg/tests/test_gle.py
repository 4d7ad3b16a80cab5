import numpy as np
import pytest

import qbrown.gle as gle
from qbrown.errors import ConfigError, KernelNotPositive, UnstableStep
from qbrown.gle import (
    Delta,
    Exponential,
    TabulatedKernel,
    TrajectoryEnsemble,
    ensemble_stats,
    measured_noise_autocorrelation,
    position_histogram,
    simulate_gle,
    simulate_langevin,
)
from qbrown.io import read_csv
from qbrown.potentials import BathSpec, FrenkelKantorova, Harmonic

BATH = BathSpec(T=1.0)


def boltzmann_l1(dens, edges, phi, T):
    centers = 0.5 * (edges[1:] + edges[:-1])
    w = np.exp(-phi(centers) / T)
    w /= np.sum(w * np.diff(edges))
    return float(np.sum(np.abs(dens - w) * np.diff(edges)))


class TestLangevin:
    def test_harmonic_equipartition(self):
        ens = simulate_langevin(Harmonic(1, 1), BATH, "constant", b=1.0, dt=0.02, n_steps=20000,
                                n_traj=500, seed=1, record_every=50, burn_in=500)
        p2 = (ens.p**2).mean()
        x2 = (ens.x**2).mean()
        # records 1 time unit apart are only weakly correlated; 2% is several standard errors
        assert p2 == pytest.approx(1.0, abs=0.02)
        assert x2 == pytest.approx(1.0, abs=0.03)

    def test_free_particle_msd(self):
        # thermal start: MSD = 2D (t - tau (1 - exp(-t/tau))), D = T/b, tau = m/b
        b = 2.0
        ens = simulate_langevin(None, BATH, "constant", b=b, dt=0.01, n_steps=3000, n_traj=6000,
                                seed=2, record_every=300)
        st = ensemble_stats(ens)
        tau = 1.0 / b
        exact = 2 * BATH.T / b * (st.t - tau * (1 - np.exp(-st.t / tau)))
        assert np.all(np.abs(st.msd - exact) <= 4 * st.msd_se)
        assert st.msd[-1] == pytest.approx(exact[-1], rel=0.08)

    def test_ou_vacf(self):
        b = 1.5
        ens = simulate_langevin(None, BATH, "constant", b=b, dt=0.01, n_steps=300, n_traj=4000,
                                seed=3, record_every=10)
        st = ensemble_stats(ens)
        expected = BATH.T * np.exp(-b * st.t)
        assert np.all(np.abs(st.vacf - expected) < 4 * st.vacf_se + 1e-3)

    def test_zero_temperature_decay(self):
        ens = simulate_langevin(Harmonic(1, 1), BathSpec(T=0.0), "constant", b=0.7, dt=0.05,
                                n_steps=4000, n_traj=8, seed=0, x0=1.5)
        assert np.max(np.abs(ens.x[-1])) < 1e-12
        assert np.max(np.abs(ens.p[-1])) < 1e-12

    def test_boltzmann_harmonic(self):
        ens = simulate_langevin(Harmonic(1, 1), BATH, "constant", b=1.0, dt=0.02, n_steps=40000,
                                n_traj=1000, seed=4, record_every=400, burn_in=500)
        dens, edges = position_histogram(ens, np.linspace(-4, 4, 41))
        assert ens.x.size >= 1e5
        assert boltzmann_l1(dens, edges, Harmonic(1, 1), 1.0) < 0.02

    def test_boltzmann_fk_curvature_friction(self):
        fk = FrenkelKantorova(0.5, 1.0)
        bath = BathSpec(T=1.0)
        ens = simulate_langevin(fk, bath, dt=0.005, n_steps=20000, n_traj=1000, seed=5,
                                record_every=200, burn_in=2000)
        dens, edges = position_histogram(ens, np.linspace(0, 1, 26), period=1.0)
        assert boltzmann_l1(dens, edges, fk, 1.0) < 0.02
        assert (ens.p**2).mean() == pytest.approx(1.0, abs=0.02)

    def test_unstable(self):
        with pytest.raises(UnstableStep):
            simulate_langevin(Harmonic(1, 3), BATH, "constant", b=0.0, dt=1.0, n_steps=3000,
                              n_traj=4, seed=0, x0=1.0, bound=1e6)

    def test_validation(self):
        with pytest.raises(ConfigError):
            simulate_langevin(None, BATH, "friction_from_potential")
        with pytest.raises(ConfigError):
            simulate_langevin(Harmonic(), BATH, "constant", b=-1.0)
        with pytest.raises(ConfigError):
            simulate_langevin(Harmonic(), BATH, "constant", b=1.0, dt=0.0)


class TestDeterminism:
    kw = dict(dt=0.01, n_steps=300, n_traj=50, record_every=30)

    def test_same_seed_identical(self):
        a = simulate_langevin(FrenkelKantorova(1, 1), BATH, seed=9, **self.kw)
        b = simulate_langevin(FrenkelKantorova(1, 1), BATH, seed=9, **self.kw)
        assert a.x.tobytes() == b.x.tobytes() and a.p.tobytes() == b.p.tobytes()
        c = simulate_langevin(FrenkelKantorova(1, 1), BATH, seed=10, **self.kw)
        assert not np.array_equal(a.x, c.x)

    def test_thread_count_irrelevant(self, monkeypatch):
        monkeypatch.setattr(gle, "CHUNK", 8)
        monkeypatch.setenv("QBROWN_THREADS", "1")
        a = simulate_gle(Harmonic(), BATH, Exponential(1.0, 0.5), seed=4, **self.kw)
        monkeypatch.setenv("QBROWN_THREADS", "4")
        b = simulate_gle(Harmonic(), BATH, Exponential(1.0, 0.5), seed=4, **self.kw)
        assert a.x.tobytes() == b.x.tobytes()

    def test_bad_thread_env(self, monkeypatch):
        monkeypatch.setenv("QBROWN_THREADS", "zero")
        with pytest.raises(ConfigError):
            simulate_langevin(None, BATH, "constant", b=1.0, seed=0, **self.kw)


class TestGle:
    def test_exponential_equipartition(self):
        ens = simulate_gle(Harmonic(1, 1), BATH, Exponential(4.0, 0.5), dt=0.02, n_steps=20000,
                           n_traj=500, seed=6, record_every=50, burn_in=500)
        assert (ens.p**2).mean() == pytest.approx(1.0, abs=0.02)
        assert (ens.x**2).mean() == pytest.approx(1.0, abs=0.03)

    def test_delta_limit(self):
        b, dt = 1.0, 0.01
        common = dict(dt=dt, n_steps=3000, n_traj=3000, seed=7, record_every=300)
        ref = ensemble_stats(simulate_langevin(None, BATH, "constant", b=b, **common))
        tau = dt
        exp = ensemble_stats(simulate_gle(None, BATH, Exponential(b / tau, tau), **common))
        se = np.hypot(exp.msd_se, ref.msd_se)
        assert np.all(np.abs(exp.msd - ref.msd) <= 4 * se)
        assert exp.msd_slope(5.0) == pytest.approx(2 * BATH.T / b, rel=0.1)

    def test_delta_kernel_matches_langevin(self):
        common = dict(dt=0.01, n_steps=500, n_traj=20, seed=8, record_every=50)
        a = simulate_gle(Harmonic(), BATH, Delta(0.8), **common)
        b = simulate_langevin(Harmonic(), BATH, "constant", b=0.8, **common)
        assert a.x.tobytes() == b.x.tobytes()

    def test_oscillatory_vacf(self):
        # strong, slow memory traps the free particle in a transient cage
        ens = simulate_gle(None, BATH, Exponential(25.0, 2.0), dt=0.01, n_steps=1000, n_traj=2000,
                           seed=9, record_every=5)
        st = ensemble_stats(ens)
        assert st.vacf.min() < -10 * st.vacf_se.max()
        assert abs(st.vacf[-1]) < st.vacf[0] / 5

    def test_tabulated_equipartition(self):
        t = np.linspace(0, 4, 401)
        kernel = TabulatedKernel(tuple(t), tuple(2.0 * np.exp(-t / 0.5)))
        ens = simulate_gle(Harmonic(1, 1), BATH, kernel, dt=0.01, n_steps=3000, n_traj=1000,
                           seed=10, record_every=100, burn_in=0)
        p2 = (ens.p[5:] ** 2).mean()
        assert p2 == pytest.approx(1.0, abs=0.03)

    def test_tabulated_not_positive(self):
        t = np.linspace(0, 3, 31)
        box = np.where(t < 1.0, 1.0, 0.0)
        with pytest.raises(KernelNotPositive):
            simulate_gle(None, BATH, TabulatedKernel(tuple(t), tuple(box)), dt=0.1, n_steps=100, n_traj=2)


class TestNoise:
    def test_exponential_variance(self):
        kernel = Exponential(3.0, 0.4)
        ens = simulate_gle(None, BATH, kernel, dt=0.02, n_steps=5000, n_traj=200, seed=11,
                           record_every=5, record_noise=True)
        nc = measured_noise_autocorrelation(ens, kernel, BATH.T, max_lag=20)
        assert nc.c_ff[0] == pytest.approx(3.0, rel=0.05)
        sel = nc.expected > 0.2 * nc.expected[0]
        assert np.all(np.abs(nc.c_ff[sel] / nc.expected[sel] - 1) < 0.1)

    def test_delta_white_noise(self):
        kernel = Delta(0.5)
        ens = simulate_gle(None, BATH, kernel, dt=0.01, n_steps=2000, n_traj=300, seed=12,
                           record_noise=True)
        nc = measured_noise_autocorrelation(ens, kernel, BATH.T, max_lag=5)
        integral = np.sum(nc.c_ff[:1]) * ens.dt
        assert integral == pytest.approx(2 * BATH.T * 0.5, rel=0.05)
        assert np.all(np.abs(nc.c_ff[1:]) * ens.dt < 0.05)

    def test_zero_temperature(self):
        kernel = Exponential(3.0, 0.4)
        ens = simulate_gle(None, BathSpec(T=0.0), kernel, dt=0.02, n_steps=200, n_traj=10, seed=1,
                           record_noise=True)
        assert np.all(measured_noise_autocorrelation(ens, kernel, 0.0).c_ff == 0.0)

    def test_needs_recording(self):
        ens = simulate_gle(None, BATH, Exponential(1, 1), n_steps=10, n_traj=2)
        with pytest.raises(ConfigError):
            measured_noise_autocorrelation(ens, Exponential(1, 1), 1.0)


class TestStats:
    def test_constant_velocity(self):
        t = np.linspace(0, 2, 5)
        v = 1.5
        x = np.repeat((v * t)[:, None], 3, axis=1)
        ens = TrajectoryEnsemble(t, x, np.full_like(x, v), m=1.0, seed=0)
        st = ensemble_stats(ens)
        np.testing.assert_allclose(st.msd, v**2 * t**2)
        np.testing.assert_allclose(st.vacf, v**2)
        assert st.msd[0] == 0.0

    def test_empty(self):
        ens = TrajectoryEnsemble(np.array([]), np.zeros((0, 3)), np.zeros((0, 3)), 1.0, 0)
        with pytest.raises(ConfigError):
            ensemble_stats(ens)

    def test_single_trajectory(self):
        ens = TrajectoryEnsemble(np.array([0.0]), np.zeros((1, 1)), np.zeros((1, 1)), 1.0, 0)
        with pytest.raises(ConfigError):
            ensemble_stats(ens)

    def test_csv(self, tmp_path):
        ens = simulate_langevin(None, BATH, "constant", b=1.0, n_steps=4, n_traj=3, seed=0, record_every=2)
        ens.to_csv(tmp_path / "e.csv", meta={"seed": 0})
        _, header, rows = read_csv(tmp_path / "e.csv")
        assert header == ["traj_id", "t", "x", "p"]
        assert len(rows) == 9
        assert rows[4][2] == ens.x[1, 1]
        ensemble_stats(ens).to_csv(tmp_path / "s.csv")
        _, header, _ = read_csv(tmp_path / "s.csv")
        assert header == ["t", "msd", "msd_se", "vacf", "vacf_se"]
