import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbrown.errors import BelowOnset, ConfigError, FlatPotential, NotPeriodic
from qbrown.potentials import BathSpec, Chain, FrenkelKantorova, Harmonic, Tabulated, mean_friction
from qbrown.resonant import (
    arrhenius_limit,
    chain_mean_friction,
    chain_sweep,
    dimer_sweep,
    einstein_limit,
    fk_diffusion_bessel,
    lifson_jackson,
    zero_T_quantum_fk_dispersion,
)


def bessel_series(order, x, terms=300):
    term = (x / 2) ** order / math.factorial(order)
    parts = [term]
    for k in range(1, terms):
        term *= (x / 2) ** 2 / (k * (k + order))
        parts.append(term)
    return math.fsum(parts)


def fk_oracle(A, a, T, rho=1.0, c=1.0):
    z = A / T
    i0, i1 = bessel_series(0, z), bessel_series(1, z)
    return rho * c**3 * a**4 / (4 * math.pi**3 * A * (z * i0 - i1) * i0)


def trapezoid_lj(spec, bath, n=4096):
    # periodic trapezoid rule converges spectrally for smooth integrands
    a = spec.period
    x = np.arange(n) * a / n
    phi, _, d2 = spec.evaluate(x)
    ip = np.mean(d2**2 * np.exp(phi / bath.T)) * a
    im = np.mean(np.exp(-phi / bath.T)) * a
    return bath.coupling * bath.T * a * a / (ip * im)


class TestFkClosedForm:
    def test_reference_value(self):
        D = fk_diffusion_bessel(1, 1, BathSpec(T=1)).D
        assert D == pytest.approx(0.009086, abs=5e-7)
        assert D == pytest.approx(fk_oracle(1, 1, 1), rel=1e-12)

    @pytest.mark.parametrize("z", [0.1, 0.5, 2.0, 5.0, 10.0, 30.0])
    def test_series_oracle(self, z):
        assert fk_diffusion_bessel(1.3, 0.7, BathSpec(T=1.3 / z)).D == pytest.approx(
            fk_oracle(1.3, 0.7, 1.3 / z), rel=1e-11)

    def test_einstein_limit(self):
        bath = BathSpec(T=1e4)
        D = fk_diffusion_bessel(1, 1, bath).D
        assert abs(D / einstein_limit(1, 1, bath).D - 1) < 1e-3
        assert einstein_limit(1, 1, bath).D == pytest.approx(1e4 / (2 * math.pi**3), rel=1e-14)

    def test_arrhenius_asymptotic_ratio(self):
        # ratio -> 1 / (1 - 3 / (4 z)) to leading order
        for z in (20.0, 50.0, 200.0):
            bath = BathSpec(T=1 / z)
            ratio = fk_diffusion_bessel(1, 1, bath).D / arrhenius_limit(1, 1, bath).D
            assert ratio == pytest.approx(1 / (1 - 3 / (4 * z)), rel=2 / z**2)

    def test_large_beta_finite(self):
        res = fk_diffusion_bessel(1, 1, BathSpec(T=1 / 300))
        assert 0 < res.D < 1e-250
        assert res.log_scale == 600

    def test_sign_of_A_irrelevant(self):
        bath = BathSpec(T=0.7)
        assert fk_diffusion_bessel(-1, 1, bath).D == fk_diffusion_bessel(1, 1, bath).D

    def test_flat(self):
        with pytest.raises(FlatPotential):
            fk_diffusion_bessel(0, 1, BathSpec())

    def test_zero_temperature_rejected(self):
        with pytest.raises(ConfigError):
            fk_diffusion_bessel(1, 1, BathSpec(T=0))


class TestLifsonJackson:
    @pytest.mark.parametrize("z", np.geomspace(0.1, 10, 9).tolist())
    def test_matches_bessel(self, z):
        bath = BathSpec(T=1 / z)
        q = lifson_jackson(FrenkelKantorova(1, 1), bath).D
        assert q == pytest.approx(fk_diffusion_bessel(1, 1, bath).D, rel=1e-6)

    def test_bath_scaling(self):
        bath = BathSpec(rho_m=2.0, c=0.5, T=0.8)
        spec = FrenkelKantorova(0.6, 1.7)
        assert lifson_jackson(spec, bath).D == pytest.approx(fk_diffusion_bessel(0.6, 1.7, bath).D, rel=1e-9)

    def test_einstein_at_weak_coupling(self):
        bath = BathSpec(T=100.0)
        D = lifson_jackson(FrenkelKantorova(1, 1), bath).D
        assert abs(D * mean_friction(FrenkelKantorova(1, 1), bath) / bath.T - 1) < 1e-3

    def test_integrals_reported(self):
        res = lifson_jackson(FrenkelKantorova(1, 1), BathSpec(T=1))
        assert res.i_minus == pytest.approx(bessel_series(0, 1.0), rel=1e-10)
        assert res.i_plus == pytest.approx(16 * math.pi**4 * (bessel_series(0, 1) - bessel_series(1, 1)), rel=1e-10)

    def test_chain_against_trapezoid(self):
        ch = Chain(N=5, l=1.0, A1=0.05, l1=1.0, A2=1.0, l2=6.0)
        bath = BathSpec(T=0.5)
        assert lifson_jackson(ch, bath).D == pytest.approx(trapezoid_lj(ch, bath), rel=1e-9)

    def test_flat(self):
        flat = Tabulated(tuple(np.linspace(0, 1, 9)), (0.0,) * 9, periodic=True)
        with pytest.raises(FlatPotential):
            lifson_jackson(flat, BathSpec())

    def test_not_periodic(self):
        with pytest.raises(NotPeriodic):
            lifson_jackson(Harmonic(), BathSpec())

    def test_monotone_in_beta(self):
        Ds = [lifson_jackson(FrenkelKantorova(1, 1), BathSpec(T=1 / z)).D for z in np.linspace(0.2, 8, 20)]
        assert np.all(np.diff(Ds) < 0)

    def test_decreasing_in_A_at_high_T(self):
        bath = BathSpec(T=50.0)
        Ds = [lifson_jackson(FrenkelKantorova(A, 1), bath).D for A in np.linspace(0.2, 3, 15)]
        assert np.all(np.diff(Ds) < 0)

    @given(st.floats(0.05, 8.0), st.floats(0.3, 3.0))
    @settings(max_examples=25, deadline=None)
    def test_positive_and_matches_bessel(self, z, a):
        bath = BathSpec(T=1 / z)
        res = lifson_jackson(FrenkelKantorova(1, a), bath)
        assert res.D > 0
        assert res.D == pytest.approx(fk_diffusion_bessel(1, a, bath).D, rel=1e-8)


class TestDimer:
    bath = BathSpec(T=0.5)

    def test_half_commensurate_is_singular(self):
        sweep = dimer_sweep(1, 1, [0.5], self.bath)
        assert sweep.points[0].flag == "singular"

    def test_full_commensuration_doubles_amplitude(self):
        sweep = dimer_sweep(1, 1, [1.0], self.bath)
        assert sweep.D[0] == pytest.approx(fk_diffusion_bessel(2, 1, self.bath).D, rel=1e-13)

    def test_periodic_in_length(self):
        ls = np.linspace(0.05, 0.95, 19)
        d1 = dimer_sweep(1, 1, ls, self.bath).D
        d2 = dimer_sweep(1, 1, ls + 1, self.bath).D
        np.testing.assert_allclose(d1, d2, rtol=1e-9)

    def test_non_monotone(self):
        sweep = dimer_sweep(1, 1, np.linspace(0.02, 2.48, 124), self.bath)
        kinds = [k for _, k in sweep.extrema()]
        assert "singular" in kinds and "min" in kinds
        finite = sweep.D[np.isfinite(sweep.D)]
        assert np.any(np.diff(finite) > 0) and np.any(np.diff(finite) < 0)

    def test_rotating_is_finite_at_rigid_singularity(self):
        rot = dimer_sweep(1, 1, [0.5], self.bath, mode="rotating")
        assert rot.points[0].flag == "ok"
        assert np.isfinite(rot.D[0]) and rot.D[0] > 0

    def test_rotating_short_dimer_near_rigid(self):
        # l -> 0: the angle no longer matters
        rot = dimer_sweep(1, 1, [1e-4], self.bath, mode="rotating").D[0]
        rig = dimer_sweep(1, 1, [1e-4], self.bath).D[0]
        assert rot == pytest.approx(rig, rel=1e-6)

    def test_averaging_orders(self):
        ls = [0.3, 0.8, 1.4]
        mob = dimer_sweep(1, 1, ls, self.bath, mode="rotating").D
        dif = dimer_sweep(1, 1, ls, self.bath, mode="rotating", averaging="diffusivity").D
        # harmonic mean never exceeds arithmetic mean
        assert np.all(mob <= dif * (1 + 1e-12))

    def test_validation(self):
        with pytest.raises(ConfigError):
            dimer_sweep(1, 1, [0.0], self.bath)
        with pytest.raises(ConfigError):
            dimer_sweep(1, 1, [1.0], self.bath, mode="spinning")


class TestChainSweep:
    params = dict(l=1.0, A1=0.05, l1=1.0, A2=1.0, l2=6.0)

    def envelope_extrema(self, Ns):
        env = np.abs(np.sin(np.pi * Ns / 6) / np.sin(np.pi / 6))
        out = []
        for i in range(1, len(Ns) - 1):
            if env[i] < env[i - 1] and env[i] < env[i + 1]:
                out.append((float(Ns[i]), "max"))
            elif env[i] > env[i - 1] and env[i] > env[i + 1]:
                out.append((float(Ns[i]), "min"))
        return out

    def test_extrema_follow_envelope(self):
        Ns = np.arange(1, 21)
        sweep = chain_sweep(Ns, bath=BathSpec(T=0.5), **self.params)
        assert sweep.extrema() == self.envelope_extrema(Ns)
        assert [n for n, k in sweep.extrema() if k == "max"] == [6.0, 12.0, 18.0]

    def test_single_site(self):
        bath = BathSpec(T=0.5)
        D1 = chain_sweep([1], bath=bath, **self.params).D[0]
        summed = Chain(1, **self.params)
        assert D1 == pytest.approx(lifson_jackson(summed, bath).D, rel=1e-14)

    def test_mean_friction_grows(self):
        b = chain_mean_friction(range(1, 21), bath=BathSpec(), **self.params)
        assert np.all(np.diff(b) > 0)


class TestZeroTDispersion:
    A, m, b, hbar = 0.7, 1.3, 2.0, 0.4

    def onset(self):
        return self.b * self.hbar**2 / (32 * math.pi * self.m * self.A**2)

    def test_at_e(self):
        s = zero_T_quantum_fk_dispersion(self.A, 1, self.m, self.b, self.hbar, math.e * self.onset())
        assert s == pytest.approx(self.hbar**2 / (8 * self.m * self.A), rel=1e-14)

    def test_at_onset(self):
        assert zero_T_quantum_fk_dispersion(self.A, 1, self.m, self.b, self.hbar, self.onset() * (1 + 1e-15)) == pytest.approx(0, abs=1e-15)

    def test_below_onset(self):
        with pytest.raises(BelowOnset):
            zero_T_quantum_fk_dispersion(self.A, 1, self.m, self.b, self.hbar, 0.5 * self.onset())

    def test_derivative(self):
        t, h = 50 * self.onset(), 1e-4 * self.onset()
        f = lambda s: zero_T_quantum_fk_dispersion(self.A, 1, self.m, self.b, self.hbar, s)
        fd = (f(t + h) - f(t - h)) / (2 * h)
        assert fd == pytest.approx(self.hbar**2 / (8 * self.m * self.A) / t, rel=1e-6)

    def test_monotone(self):
        t = self.onset() * np.geomspace(1, 1e6, 50)
        assert np.all(np.diff(zero_T_quantum_fk_dispersion(self.A, 1, self.m, self.b, self.hbar, t)) > 0)
