import numpy as np
import pytest

from conftest import LADDER, random_field
from vwslab.coeffs import CoefficientModel, Pointwise, preset, regularise
from vwslab.evolve import (EvolutionProblem, EvolveError, Forcing,
                           Instability, apply_spatial, dense_oracle,
                           smoothing_report, solve, stable_dt, step_rk4)
from vwslab.grid import Field, forward, make_grid, plane_wave, sobolev_norm
from vwslab.mollify import Mollifier, ScaleFn


def free_set(spec):
    return regularise(preset("free", n=spec.n), Mollifier("gaussian"),
                      2**-4, ScaleFn("loglog"), spec)


class TestApplySpatial:
    def test_free_plane_wave_eigenvalue(self):
        spec = make_grid(1, 16, np.pi)
        u = plane_wave(spec, (1,))
        out = apply_spatial(free_set(spec), u)
        assert np.allclose(out, u.values, atol=1e-12)

    def test_ultra_diagonal_null_direction(self):
        spec = make_grid(2, 16, np.pi)
        cs = regularise(preset("ultra-diagonal", nu=0.0, c0=0.0),
                        Mollifier("gaussian"), 2**-4, ScaleFn("loglog"), spec)
        u = plane_wave(spec, (1, 1))
        out = apply_spatial(cs, u)
        assert np.max(np.abs(out)) < 1e-12

    def test_constant_potential_adds_linearly(self):
        spec = make_grid(1, 32, np.pi)
        model = CoefficientModel("shifted", 1, np.eye(1),
                                 potential=Pointwise(lambda x: 3.0 + 0 * x),
                                 smooth=True)
        cs = regularise(model, Mollifier("gaussian"), 2**-4,
                        ScaleFn("loglog"), spec)
        base = apply_spatial(free_set(spec), plane_wave(spec, (2,)))
        out = apply_spatial(cs, plane_wave(spec, (2,)))
        assert np.allclose(out, base + 3.0 * plane_wave(spec, (2,)).values,
                           atol=1e-11)


class TestStepRK4:
    def test_zero_stays_zero(self):
        spec = make_grid(1, 16, np.pi)
        cs = free_set(spec)
        prob = EvolutionProblem(cs, Field(spec, np.zeros(16, dtype=complex)),
                                Forcing(), T=1.0, dt=1e-2)
        out = step_rk4(prob.u0, 0.0, prob.dt, prob)
        assert np.max(np.abs(out.values)) == 0.0

    def test_instability_detected(self):
        spec = make_grid(1, 64, np.pi)
        cs = free_set(spec)
        prob = EvolutionProblem(cs, random_field(spec, seed=1), Forcing(),
                                T=1.0, dt=None)
        with pytest.raises(Instability):
            step_rk4(prob.u0, 0.0, 50 * stable_dt(cs), prob)

    def test_problem_rejects_unstable_dt(self):
        spec = make_grid(1, 64, np.pi)
        cs = free_set(spec)
        with pytest.raises(EvolveError):
            EvolutionProblem(cs, random_field(spec, seed=1), Forcing(),
                             T=1.0, dt=10 * stable_dt(cs))

    def test_fourth_order_convergence(self):
        spec = make_grid(1, 64, np.pi)
        cs = free_set(spec)
        k = 3
        u0 = plane_wave(spec, (k,))
        exact = u0.values * np.exp(1j * k**2 * 1.0)

        def err(dt):
            prob = EvolutionProblem(cs, u0, Forcing(), T=1.0, dt=dt)
            res = solve(prob)
            return np.max(np.abs(res.final.values - exact))

        ratio = err(2e-3) / err(1e-3)
        assert 14.0 <= ratio <= 18.0


class TestSolve:
    @staticmethod
    def localised_data(spec, seed):
        # random phases under a gaussian spectral envelope: RK4's phase
        # damping on the top modes stays below round-off at dt = 1e-3
        rng = np.random.default_rng(seed)
        kap = spec.kappa_mesh()[0]
        coeffs = np.exp(-(kap**2) / 2) * np.exp(2j * np.pi * rng.random(spec.shape))
        from vwslab.grid import inverse
        return Field(spec, inverse(coeffs, spec))

    def test_free_l2_conservation(self):
        spec = make_grid(1, 64, 8.0)
        cs = free_set(spec)
        u0 = self.localised_data(spec, seed=2)
        res = solve(EvolutionProblem(cs, u0, Forcing(), T=1.0, dt=1e-3))
        norms = res.series.norms[0.0]
        ref = sobolev_norm(u0, 0.0)
        assert np.max(np.abs(norms - ref)) / ref < 1e-8

    def test_delta_potential_l2_conservation(self):
        spec = make_grid(1, 64, 8.0)
        cs = regularise(preset("delta-potential", n=1), Mollifier("gaussian"),
                        2**-5, ScaleFn("loglog"), spec)
        u0 = self.localised_data(spec, seed=3)
        res = solve(EvolutionProblem(cs, u0, Forcing(), T=1.0, dt=1e-3))
        norms = res.series.norms[0.0]
        ref = sobolev_norm(u0, 0.0)
        assert np.max(np.abs(norms - ref)) / ref < 1e-8

    def test_zero_mode_sees_only_forcing(self):
        spec = make_grid(1, 32, np.pi)
        cs = free_set(spec)
        g = Field(spec, np.full(32, 2.0, dtype=complex))
        u0 = Field(spec, np.zeros(32, dtype=complex))
        res = solve(EvolutionProblem(cs, u0, Forcing(g), T=1.0, dt=1e-3))
        zero_mode = forward(res.final)[0]
        assert zero_mode == pytest.approx(2.0j, rel=1e-8)

    def test_duhamel_linearity(self):
        spec = make_grid(1, 32, 8.0)
        cs = regularise(preset("jump-drift", n=1), Mollifier("gaussian"),
                        2**-4, ScaleFn("loglog"), spec)
        ua, ub = random_field(spec, seed=4), random_field(spec, seed=5)
        ga = Forcing(random_field(spec, seed=6))
        gb = Forcing(random_field(spec, seed=7))
        dt = stable_dt(cs)
        ra = solve(EvolutionProblem(cs, ua, ga, T=0.5, dt=dt)).final.values
        rb = solve(EvolutionProblem(cs, ub, gb, T=0.5, dt=dt)).final.values
        both = Field(spec, ua.values + ub.values)
        gsum = Forcing(Field(spec, ga.G.values + gb.G.values))
        rc = solve(EvolutionProblem(cs, both, gsum, T=0.5, dt=dt)).final.values
        scale = np.max(np.abs(rc))
        assert np.max(np.abs(rc - ra - rb)) / scale < 1e-10

    def test_time_stamps_and_norm_series(self):
        spec = make_grid(1, 32, 8.0)
        cs = free_set(spec)
        res = solve(EvolutionProblem(cs, random_field(spec, seed=8),
                                     Forcing(), T=0.5, s_list=(0.0, 1.0)))
        t = res.series.t
        assert t[0] == 0.0 and t[-1] == pytest.approx(0.5)
        assert np.all(np.diff(t) > 0)
        assert set(res.series.norms) == {0.0, 1.0}
        assert np.all(res.series.integrand[0.0] >= 0.0)
        assert np.all(np.diff(res.series.integral[0.0]) >= 0.0)

    def test_spectral_exactness_under_refinement(self):
        # band-limited coefficient x band-limited state: doubling M must
        # not change apply_spatial on the shared nodes
        def model():
            return CoefficientModel(
                "banded", 1, np.eye(1),
                perturb={(0, 0): Pointwise(lambda x: 0.2 * np.cos(np.pi * x / 8))},
                smooth=True)

        outs = {}
        for M in (64, 128):
            spec = make_grid(1, M, 8.0)
            cs = regularise(model(), Mollifier("gaussian"), 2**-4,
                            ScaleFn("loglog"), spec)
            u = plane_wave(spec, (5,))
            outs[M] = apply_spatial(cs, u)
        assert np.allclose(outs[64], outs[128][::2], atol=1e-11)


class TestDenseOracle:
    def test_free_matches_closed_form(self):
        spec = make_grid(1, 16, np.pi)
        cs = free_set(spec)
        k = 2
        u0 = plane_wave(spec, (k,))
        prob = EvolutionProblem(cs, u0, Forcing(), T=0.7, dt=1e-2)
        out = dense_oracle(prob)
        exact = u0.values * np.exp(1j * k**2 * 0.7)
        assert np.max(np.abs(out.values - exact)) < 1e-10

    def test_unitary_preservation(self):
        spec = make_grid(1, 16, 8.0)
        cs = regularise(preset("delta-potential", n=1), Mollifier("gaussian"),
                        2**-4, ScaleFn("loglog"), spec)
        u0 = random_field(spec, seed=9)
        prob = EvolutionProblem(cs, u0, Forcing(), T=1.0, dt=1e-2)
        out = dense_oracle(prob)
        assert sobolev_norm(out, 0.0) == pytest.approx(
            sobolev_norm(u0, 0.0), rel=1e-12)

    def test_forced_oracle_matches_stepper(self):
        spec = make_grid(1, 16, 8.0)
        cs = regularise(preset("jump-drift", n=1), Mollifier("gaussian"),
                        2**-4, ScaleFn("loglog"), spec)
        u0 = random_field(spec, seed=10)
        g = Forcing(random_field(spec, seed=11))
        prob = EvolutionProblem(cs, u0, g, T=0.5, dt=1e-3)
        stepped = solve(prob).final
        exact = dense_oracle(prob)
        gap = sobolev_norm(Field(spec, stepped.values - exact.values), 0.0)
        assert gap / sobolev_norm(exact, 0.0) < 1e-6

    def test_size_limit(self):
        spec = make_grid(1, 64, 8.0)
        prob = EvolutionProblem(free_set(spec), random_field(spec, seed=12),
                                Forcing(), T=0.5)
        with pytest.raises(EvolveError):
            dense_oracle(prob)


class TestSmoothingReport:
    @staticmethod
    def ladder_series(name, u0_seed=13, **params):
        spec = make_grid(1, 64, 8.0)
        model = preset(name, n=1, **params)
        u0 = random_field(spec, u0_seed)
        series, rhs = {}, {}
        for eps in LADDER:
            cs = regularise(model, Mollifier("gaussian"), eps,
                            ScaleFn("loglog"), spec)
            res = solve(EvolutionProblem(cs, u0, Forcing(), T=0.5,
                                         s_list=(0.0,), N_weight=2))
            series[eps] = (cs.omega, res.series)
            rhs[eps] = (sobolev_norm(u0, 0.0) ** 2, 0.0)
        return series, rhs

    def test_smooth_preset_has_flat_exponent(self):
        series, rhs = self.ladder_series("smooth-consistency")
        rep = smoothing_report(series, 0.0, 2, rhs, 0.5)
        assert rep["holds"]
        assert rep["k1"] == pytest.approx(0.0, abs=0.3)
        assert max(rep["ratio"]) < 50.0

    def test_zero_data_is_trivially_bounded(self):
        spec = make_grid(1, 32, 8.0)
        cs = free_set(spec)
        u0 = Field(spec, np.zeros(32, dtype=complex))
        series, rhs = {}, {}
        for eps in LADDER[:4]:
            res = solve(EvolutionProblem(cs, u0, Forcing(), T=0.2,
                                         s_list=(0.0,)))
            series[eps] = (0.5, res.series)
            rhs[eps] = (0.0, 0.0)
        rep = smoothing_report(series, 0.0, 2, rhs, 0.2)
        assert rep["holds"]
        assert rep["C2"] == 1.0

    def test_delta_potential_gain_is_finite(self):
        series, rhs = self.ladder_series("delta-potential")
        rep = smoothing_report(series, 0.0, 2, rhs, 0.5)
        assert rep["holds"]
        assert all(np.isfinite(v) and v > 0 for v in rep["lhs"])
        assert rep["C1"] > 0 and rep["C2"] > 0 and rep["k1"] >= 0.0
