import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbrown.core import (
    CODATA_2018,
    RngStream,
    SolverConfig,
    UnitSystem,
    adaptive_quadrature,
    bessel_i,
    brent_root,
    gaussian_sample,
)
from qbrown.errors import BesselOverflow, ConfigError, NoBracket, NoConvergence


def bessel_series(order, x, terms=200):
    """Power-series oracle: I_n(x) = sum (x/2)^(2k+n) / (k! (k+n)!)."""
    term = (x / 2) ** order / math.factorial(order)
    parts = [term]
    for k in range(1, terms):
        term *= (x / 2) ** 2 / (k * (k + order))
        parts.append(term)
    return math.fsum(parts)


class TestUnits:
    def test_reduced_is_identity(self):
        u = UnitSystem(hbar_reduced=0.3)
        assert u.k_B == 1.0
        assert u.hbar == 0.3
        assert u.thermal_energy(2.5) == 2.5
        assert u.to_reduced(7.0) == 7.0

    def test_si_constants(self):
        u = UnitSystem("SI")
        assert u.constant("e") == 1.602176634e-19
        assert u.hbar == 1.054571817e-34
        alpha = CODATA_2018["e"] ** 2 / (4 * math.pi * CODATA_2018["epsilon_0"]
                                         * CODATA_2018["hbar"] * CODATA_2018["c"])
        assert alpha == pytest.approx(CODATA_2018["alpha"], rel=1e-9)

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            UnitSystem("cgs")


class TestRng:
    def test_mean_clt_bound(self):
        n = 10**6
        x = gaussian_sample(RngStream(1, 0), n)
        assert abs(x.mean()) < 4 / math.sqrt(n)
        assert abs(x.var() - 1) < 6 * math.sqrt(2 / n)

    def test_deterministic(self):
        a = gaussian_sample(RngStream(1, 0), 1000)
        b = gaussian_sample(RngStream(1, 0), 1000)
        assert a.tobytes() == b.tobytes()

    def test_streams_uncorrelated(self):
        n = 10**6
        a = gaussian_sample(RngStream(1, 0), n)
        b = gaussian_sample(RngStream(1, 1), n)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
        assert not np.array_equal(a[:10], b[:10])

    def test_bad_args(self):
        with pytest.raises(ConfigError):
            gaussian_sample(RngStream(1, 0), 0)
        with pytest.raises(ConfigError):
            RngStream(-1)


class TestSolverConfig:
    def test_rejects_nonpositive(self):
        with pytest.raises(ConfigError):
            SolverConfig(root_tol=0.0)
        with pytest.raises(ConfigError):
            SolverConfig(max_iterations=0)


class TestBrent:
    def test_sqrt2(self):
        r = brent_root(lambda x: x * x - 2, 1, 2)
        assert r == pytest.approx(math.sqrt(2), rel=1e-13)

    def test_zero(self):
        assert brent_root(lambda x: x, -1, 1) == pytest.approx(0, abs=1e-13)

    def test_no_bracket(self):
        with pytest.raises(NoBracket):
            brent_root(lambda x: x - 3, 0, 1)

    def test_no_convergence(self):
        with pytest.raises(NoConvergence):
            brent_root(lambda x: x**3 - 0.123, 0, 1, SolverConfig(max_iterations=2))


class TestQuadrature:
    def test_sin(self):
        assert adaptive_quadrature(math.sin, 0, math.pi) == pytest.approx(2, abs=1e-10)

    def test_one(self):
        assert adaptive_quadrature(lambda x: 1.0, 0, 1) == pytest.approx(1.0, abs=1e-14)

    def test_exp_cos(self):
        expected = 2 * math.pi * bessel_series(0, 1.0)
        assert expected == pytest.approx(7.95493, abs=1e-5)
        got = adaptive_quadrature(lambda x: math.exp(math.cos(x)), 0, 2 * math.pi)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_against_fine_trapezoid(self):
        f = lambda x: math.exp(-x) * math.cos(3 * x) ** 2
        x = np.linspace(0, 2, 400001)
        y = np.exp(-x) * np.cos(3 * x) ** 2
        assert adaptive_quadrature(f, 0, 2) == pytest.approx(np.trapezoid(y, x), rel=1e-9)

    def test_divergent_integrand(self):
        with pytest.raises(NoConvergence):
            adaptive_quadrature(lambda x: 1 / x, 0, 1, SolverConfig(max_iterations=5))


class TestBessel:
    def test_at_zero(self):
        assert bessel_i(0, 0.0) == 1.0
        assert bessel_i(1, 0.0) == 0.0

    def test_at_one(self):
        assert bessel_i(0, 1.0) == pytest.approx(1.2660658, abs=1e-7)
        assert bessel_i(1, 1.0) == pytest.approx(0.5651591, abs=1e-7)

    @pytest.mark.parametrize("order", [0, 1])
    @pytest.mark.parametrize("x", [1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0])
    def test_series_oracle(self, order, x):
        assert bessel_i(order, x) == pytest.approx(bessel_series(order, x), rel=1e-12)

    def test_asymptotic(self):
        x = 30.0
        asym = (1 + 1 / (8 * x)) / math.sqrt(2 * math.pi * x)
        assert bessel_i(0, x, scaled=True) == pytest.approx(asym, rel=1e-3)

    def test_overflow(self):
        with pytest.raises(BesselOverflow):
            bessel_i(0, 1000.0)
        assert bessel_i(0, 1000.0, scaled=True) == pytest.approx(
            1 / math.sqrt(2 * math.pi * 1000) * (1 + 1 / 8000), rel=1e-5)

    def test_bad_order(self):
        with pytest.raises(ConfigError):
            bessel_i(2, 1.0)

    @given(st.floats(min_value=0.0, max_value=50.0))
    @settings(max_examples=50, deadline=None)
    def test_i0_above_i1(self, x):
        assert bessel_i(0, x) >= bessel_i(1, x)
