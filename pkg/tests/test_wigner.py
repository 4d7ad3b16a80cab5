import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbrown.errors import ConfigError, NotOverdamped
from qbrown.io import read_csv
from qbrown.qdisp import overdamped_dispersion
from qbrown.wigner import (
    DiffusionModel,
    GaussianState,
    coefficients,
    equilibrium_state,
    evolve_moments,
    heisenberg_check,
    overdamped_reduce,
    relaxation_time,
)

M, W, HBAR = 1.0, 1.0, 1.0
PARAMETER_SETS = [
    dict(b_bar=0.1, T=1.0),
    dict(b_bar=0.5, T=2.0),
    dict(b_bar=0.05, T=0.6),
    dict(b_bar=1.0, T=5.0),
    dict(b_bar=0.3, T=0.8),
]


class TestCoefficients:
    def test_emergent_reference(self):
        # x = 2: hbar w0 / 2T = 2
        b, D = coefficients("emergent", None, 1.0, 4.0, 1.0, 1.0, 1.0)
        assert b == pytest.approx(1.81343, abs=1e-5)
        assert D == pytest.approx(3.76220, abs=1e-5)

    @pytest.mark.parametrize("model", list(DiffusionModel))
    def test_classical_limit(self, model):
        state = GaussianState(1e12, 1.0)
        b, D = coefficients(model, state, 1.0, 1e-9, 0.7, 2.0, 1.0)
        assert b == pytest.approx(0.7, rel=1e-12)
        assert D == pytest.approx(1.4, rel=1e-12)

    @pytest.mark.parametrize("x", np.geomspace(1e-3, 20, 25).tolist())
    def test_fdt_identity(self, x):
        T = 0.8
        omega0 = 2 * x * T / HBAR
        b, D = coefficients("emergent", None, M, omega0, 1.3, T, HBAR)
        assert D == pytest.approx(b * 0.5 * HBAR * omega0 / math.tanh(x), rel=1e-12)

    @pytest.mark.parametrize("x", np.geomspace(1e-3, 20, 25).tolist())
    def test_gibbs_helmholtz(self, x):
        hw = 1.0
        beta = 2 * x / hw
        h = beta * 1e-6

        def beta_b(bt):
            return bt * coefficients("emergent", None, M, hw, 1.0, 1 / bt, HBAR)[0]

        fd = (beta_b(beta + h) - beta_b(beta - h)) / (2 * h)
        _, D = coefficients("emergent", None, M, hw, 1.0, 1 / beta, HBAR)
        assert fd == pytest.approx(beta * D, rel=1e-6)

    @given(st.floats(1e-4, 50))
    @settings(max_examples=50, deadline=None)
    def test_amplification(self, x):
        b, D = coefficients("emergent", None, M, 2 * x, 1.0, 1.0, HBAR)
        assert b >= 1.0 and D >= 1.0

    def test_emergent_rejects_zero_T(self):
        with pytest.raises(ConfigError):
            coefficients("emergent", None, M, W, 1.0, 0.0, HBAR)

    def test_bohmian_state_dependent(self):
        b, D = coefficients("bohmian", GaussianState(0.25, 1.0), 2.0, W, 3.0, 0.5, 1.0)
        assert (b, D) == (3.0, pytest.approx(3.0 * (0.5 + 1.0 / (4 * 2.0 * 0.25))))

    def test_presumed_eq(self):
        b, D = coefficients("presumed_eq", None, M, 2.0, 1.0, 0.5, 1.0)
        assert D == pytest.approx(1.0 / math.tanh(2.0), rel=1e-14)
        assert coefficients("PresumedEq", None, M, 2.0, 1.0, 0.0, 1.0) == (1.0, 1.0)

    def test_unknown_model(self):
        with pytest.raises(ConfigError):
            DiffusionModel.parse("lindblad")


class TestState:
    def test_invariants(self):
        with pytest.raises(ConfigError):
            GaussianState(1.0, 1.0, 1.0)
        with pytest.raises(ConfigError):
            GaussianState(-1.0, 1.0)


class TestEvolve:
    def test_free_packet(self):
        s0 = 0.3
        state = GaussianState.minimum_uncertainty(s0, HBAR)
        t = np.linspace(0, 20, 81)
        ser = evolve_moments(state, "classical", M, 0.0, 0.0, 0.0, HBAR, t)
        np.testing.assert_allclose(ser.sigma_x2, s0 + (HBAR * t / (2 * M)) ** 2 / s0, rtol=1e-6)
        assert heisenberg_check(ser).min_ratio == pytest.approx(1.0, abs=1e-9)

    def test_oscillator_law(self):
        m, w = 1.4, 2.2
        state = GaussianState(0.3, 0.9)
        t = np.linspace(0, 10, 101)
        ser = evolve_moments(state, "presumed_eq", m, w, 0.0, 1.0, HBAR, t)
        exact = 0.3 * np.cos(w * t) ** 2 + 0.9 * np.sin(w * t) ** 2 / (m * w) ** 2
        np.testing.assert_allclose(ser.sigma_x2, exact, rtol=1e-6)

    def test_means_follow_damped_oscillator(self):
        m, w, b = 1.0, 1.0, 0.4
        state = GaussianState(1.0, 1.0, mean_x=1.0)
        t = np.linspace(0, 10, 51)
        ser = evolve_moments(state, "classical", m, w, b, 1.0, HBAR, t)
        g = b / (2 * m)
        wd = math.sqrt(w * w - g * g)
        exact = np.exp(-g * t) * (np.cos(wd * t) + g / wd * np.sin(wd * t))
        np.testing.assert_allclose(ser.mean_x, exact, rtol=1e-8, atol=1e-12)

    STARTS = [
        GaussianState(0.5, 0.5),
        GaussianState(3.0, 0.1),
        GaussianState(0.05, 8.0, 0.2),
        GaussianState(1.0, 1.0, -0.6),
        GaussianState(10.0, 10.0, 5.0),
    ]

    @pytest.mark.parametrize("state", STARTS)
    def test_emergent_equilibrium(self, state):
        b_bar, T, w = 0.2, 0.25, 1.0  # x = 2
        tau = relaxation_time("emergent", M, w, b_bar, T, HBAR)
        b_eff, _ = coefficients("emergent", None, M, w, b_bar, T, HBAR)
        assert tau == pytest.approx(M / b_eff, rel=1e-10)
        ser = evolve_moments(state, "emergent", M, w, b_bar, T, HBAR, [20 * tau])
        target = M * 0.5 * HBAR * w / math.tanh(2.0)
        assert ser.sigma_p2[-1] == pytest.approx(target, rel=1e-6)
        assert ser.sigma_x2[-1] == pytest.approx(target / (M * w) ** 2, rel=1e-6)
        ratio = ser.uncertainty_ratio()[-1]
        assert ratio == pytest.approx(1 / math.tanh(2.0) ** 2, rel=2e-6)
        assert ratio == pytest.approx(1.0760, abs=1e-4)

    def test_bohmian_zero_T_ground_state(self):
        b_bar, w = 0.5, 1.0
        state = GaussianState(2.0, 0.3)
        ser = evolve_moments(state, "bohmian", M, w, b_bar, 0.0, HBAR, [60 * M / b_bar])
        assert ser.sigma_x2[-1] == pytest.approx(HBAR / (2 * M * w), rel=5e-2)
        assert ser.uncertainty_ratio()[-1] == pytest.approx(1.0, rel=1e-2)
        eq = equilibrium_state("bohmian", M, w, b_bar, 0.0, HBAR)
        assert ser.sigma_x2[-1] == pytest.approx(eq.sigma_x2, rel=1e-6)

    def test_free_particle_einstein_slope(self):
        b_bar, T = 2.0, 0.7
        t = np.linspace(0, 60, 601)
        ser = evolve_moments(GaussianState(1.0, 1.0), "classical", M, 0.0, b_bar, T, HBAR, t)
        assert ser.sigma_p2[-1] == pytest.approx(M * T, rel=1e-2)
        slope = (ser.sigma_x2[-1] - ser.sigma_x2[-2]) / (t[-1] - t[-2])
        assert slope == pytest.approx(2 * T / b_bar, rel=1e-2)

    @pytest.mark.parametrize("model", list(DiffusionModel))
    @pytest.mark.parametrize("params", PARAMETER_SETS)
    def test_heisenberg_matrix(self, model, params):
        state = GaussianState.minimum_uncertainty(HBAR / (2 * M * W), HBAR)
        tau = relaxation_time(model, M, W, params["b_bar"], params["T"], HBAR)
        ser = evolve_moments(state, model, M, W, params["b_bar"], params["T"], HBAR,
                             np.linspace(0, 20 * tau, 2001))
        report = heisenberg_check(ser)
        assert not report.violated
        assert np.all(ser.determinant > 0)

    def test_classical_high_T_ratio_large(self):
        state = GaussianState.minimum_uncertainty(0.5, HBAR)
        ser = evolve_moments(state, "classical", M, W, 1.0, 50.0, HBAR, [40.0])
        assert ser.uncertainty_ratio()[-1] > 1000

    def test_csv(self, tmp_path):
        ser = evolve_moments(GaussianState(1.0, 1.0), "classical", M, W, 1.0, 1.0, HBAR, [0.0, 1.0])
        ser.to_csv(tmp_path / "w.csv", meta={"seed": 0})
        meta, header, rows = read_csv(tmp_path / "w.csv")
        assert header == ["t", "sigma_x2", "sigma_p2", "sigma_xp", "uncertainty_ratio"]
        assert rows[0][4] == pytest.approx(4.0)
        assert meta["seed"] == "0"


class TestOverdampedReduce:
    def test_matches_qdisp(self):
        t = np.linspace(0, 50, 51)
        a = overdamped_reduce(0.2, 1.0, 1.0, 20.0, 0.3, 0.5, t).sigma_x2
        b = overdamped_dispersion(0.2, 1.0, 20.0, 1.0, 0.3, 0.5, t).sigma_x2
        np.testing.assert_array_equal(a, b)

    def test_not_overdamped(self):
        with pytest.raises(NotOverdamped):
            overdamped_reduce(0.2, 1.0, 1.0, 2.0, 0.3, 0.5, [1.0])

    def test_classical_relaxation(self):
        t = np.linspace(0, 200, 21)
        s = overdamped_reduce(1.0, 1.0, 1.0, 50.0, 0.0, 0.0, t).sigma_x2
        np.testing.assert_allclose(s, np.exp(-2 * t / 50.0), rtol=1e-8)

    def test_full_moments_agree(self):
        m, w, b, T, hbar = 1.0, 1.0, 100.0, 0.2, 0.6
        t = np.linspace(3 * m / b, 300, 200)
        s0 = 2.0
        # start the full model on the slow manifold: sigma_p^2 near its instantaneous value
        state = GaussianState(s0, m * (T + hbar**2 / (4 * m * s0)))
        full = evolve_moments(state, "bohmian", m, w, b, T, hbar, t).sigma_x2
        red = overdamped_reduce(s0, m, w, b, T, hbar, np.concatenate([[0.0], t])).sigma_x2[1:]
        np.testing.assert_allclose(full, red, rtol=2e-2)
