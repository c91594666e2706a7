import math

import numpy as np
import pytest

from sandlab.invariants import strain_invariants, stress_invariants, vol
from sandlab.wg import (
    DEFAULT_TOL,
    IntegrationError,
    MaterialState,
    StressStateError,
    WGParams,
    _fd_jacobian,
    _PlasticEval,
    _plastic_jacobian,
    critical_void_ratio,
    dilatancy_coefficient,
    drained_triaxial_compression,
    elastic_moduli,
    friction_coefficient,
    integrate_path_explicit_oracle,
    integrate_step,
    mobilized_friction,
    plastic_flow_direction,
    yield_value,
)

PAR = WGParams.ottawa_sand()


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / math.sqrt(float(v @ v))


def run_path(state, direction, mag, n_steps, params=PAR):
    """Iterate integrate_step along a fixed-direction path."""
    results = []
    for _ in range(n_steps):
        res = integrate_step(state, mag * direction, params)
        results.append(res)
        state = state.advanced(mag * direction, res)
    return state, results


class TestParams:
    def test_reference_calibration(self):
        assert PAR.G0 == 900.0
        assert PAR.h == 5.65e5
        assert PAR.p0 == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            WGParams.ottawa_sand().__class__(G0=900, nu=0.5, mu=0.8,
                                             sin_phi_cs=0.53, beta=1.3, a=8e-3,
                                             e_cs0=0.74, h=5.65e5, n=0.4,
                                             alpha_wg=1.5)
        with pytest.raises(ValueError):
            WGParams(G0=-1, nu=0.3, mu=0.8, sin_phi_cs=0.53, beta=1.3, a=8e-3,
                     e_cs0=0.74, h=5.65e5, n=0.4, alpha_wg=1.5)
        with pytest.raises(ValueError):
            WGParams(G0=900, nu=0.3, mu=0.8, sin_phi_cs=1.0, beta=1.3, a=8e-3,
                     e_cs0=0.74, h=5.65e5, n=0.4, alpha_wg=1.5)


class TestElasticModuli:
    def test_reference_point(self):
        mod = elastic_moduli(200.0, 0.74, PAR)
        assert mod.G == pytest.approx(10460.3, rel=1e-5)
        assert mod.R == pytest.approx(2.16667, rel=1e-5)
        assert mod.K == pytest.approx(22663.9, rel=1e-5)

    def test_unit_pressure(self):
        mod = elastic_moduli(1.0, 1.17, PAR)
        assert mod.G == pytest.approx(900.0 * (1.0 / 2.17), rel=1e-12)
        assert mod.G == pytest.approx(414.75, rel=1e-4)

    def test_sqrt_pressure_scaling(self):
        g1 = elastic_moduli(200.0, 0.74, PAR).G
        g4 = elastic_moduli(800.0, 0.74, PAR).G
        assert g4 == pytest.approx(2.0 * g1, rel=1e-14)

    def test_domain(self):
        with pytest.raises(StressStateError):
            elastic_moduli(0.0, 0.74, PAR)
        with pytest.raises(StressStateError):
            elastic_moduli(-5.0, 0.74, PAR)
        with pytest.raises(StressStateError):
            elastic_moduli(100.0, 2.3, PAR)


class TestCriticalVoidRatio:
    def test_reference_point(self):
        assert critical_void_ratio(200.0, PAR) == pytest.approx(0.70979, rel=5e-5)

    def test_low_pressure_limit(self):
        assert critical_void_ratio(1e-12, PAR) == pytest.approx(0.74, rel=1e-7)

    def test_pressure_constant(self):
        assert critical_void_ratio(PAR.h, PAR) == pytest.approx(0.74 * math.exp(-1.0),
                                                                rel=1e-12)
        assert critical_void_ratio(PAR.h, PAR) == pytest.approx(0.27222, rel=1e-4)

    def test_monotone_decreasing(self):
        ps = np.logspace(0, 5, 30)
        ecs = [critical_void_ratio(p, PAR) for p in ps]
        assert all(a > b for a, b in zip(ecs, ecs[1:]))


class TestMobilizedFriction:
    def test_virgin_state(self):
        assert mobilized_friction(0.0, 0.6, 0.7, PAR) == 0.0

    def test_half_saturation(self):
        e_cs = critical_void_ratio(200.0, PAR)
        assert mobilized_friction(PAR.a, e_cs, e_cs, PAR) == pytest.approx(0.265,
                                                                           rel=1e-12)

    def test_asymptote(self):
        e_cs = critical_void_ratio(200.0, PAR)
        assert mobilized_friction(1e6, e_cs, e_cs, PAR) == pytest.approx(0.53,
                                                                         rel=1e-7)

    def test_density_scaling(self):
        # denser than critical amplifies the mobilized friction
        e_cs = 0.70979
        loose = mobilized_friction(0.01, 0.74, e_cs, PAR)
        dense = mobilized_friction(0.01, 0.55, e_cs, PAR)
        assert dense > loose

    def test_rejects_negative_strain(self):
        with pytest.raises(ValueError):
            mobilized_friction(-1e-9, 0.6, 0.7, PAR)


class TestFrictionCoefficient:
    def test_compression_collapses_to_mtc(self):
        fc = friction_coefficient(0.53, 1.0, PAR)
        assert fc.M_tc == pytest.approx(1.28745, rel=1e-5)
        assert fc.M == pytest.approx(fc.M_tc, rel=1e-14)

    def test_extension(self):
        fc = friction_coefficient(0.53, -1.0, PAR)
        assert fc.M == pytest.approx(0.8 * 1.28745, rel=1e-5)
        assert fc.M == pytest.approx(1.02996, rel=1e-5)

    def test_zero_friction(self):
        assert friction_coefficient(0.0, 0.3, PAR).M == 0.0

    def test_domain(self):
        with pytest.raises(ValueError):
            friction_coefficient(1.0, 0.0, PAR)
        with pytest.raises(ValueError):
            friction_coefficient(0.5, 1.5, PAR)


class TestDilatancyCoefficient:
    def test_critical_state(self):
        assert dilatancy_coefficient(0.53, 0.7, 0.7, PAR) == 0.0

    def test_zero_friction_contractive(self):
        assert dilatancy_coefficient(0.0, 0.7, 0.7, PAR) == pytest.approx(-0.53,
                                                                          rel=1e-14)

    def test_dense_dilative(self):
        n = dilatancy_coefficient(0.53, 0.5, 0.70979, PAR)
        xi = (0.5 / 0.70979) ** 1.5
        expected = (0.53 - xi * 0.53) / (1.0 - xi * 0.53**2)
        assert n == pytest.approx(expected, rel=1e-14)
        assert n == pytest.approx(0.25972, rel=1e-3)
        assert n > 0.0


class TestYieldValue:
    def test_saturated_hardening(self):
        e = critical_void_ratio(200.0, PAR)
        f = yield_value(np.array([300.0, 150.0, 150.0]), 1e9, e, PAR)
        assert f == pytest.approx(-107.49, rel=1e-4)

    def test_virgin_isotropic(self):
        assert yield_value(np.array([50.0, 50.0, 50.0]), 0.0, 0.74, PAR) == 0.0

    def test_virgin_sheared(self):
        f = yield_value(np.array([300.0, 150.0, 150.0]), 0.0, 0.74, PAR)
        assert f == pytest.approx(150.0, rel=1e-14)

    def test_rejects_tensile_mean_stress(self):
        with pytest.raises(StressStateError):
            yield_value(np.array([-10.0, 5.0, 5.0]), 0.0, 0.74, PAR)


class TestFlowDirection:
    def test_deviatoric_only(self):
        m = plastic_flow_direction(np.array([300.0, 150.0, 150.0]), 0.0)
        np.testing.assert_allclose(m, [1.0, -0.5, -0.5], rtol=1e-14)

    def test_with_dilatancy(self):
        m = plastic_flow_direction(np.array([300.0, 150.0, 150.0]), 0.3)
        np.testing.assert_allclose(m, [0.9, -0.6, -0.6], rtol=1e-14)

    def test_trace_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            sig = rng.uniform(10.0, 500.0, 3)
            if stress_invariants(sig).degenerate:
                continue
            n = rng.uniform(-0.6, 0.6)
            m = plastic_flow_direction(sig, n)
            assert vol(m) == pytest.approx(-n, rel=1e-12, abs=1e-14)

    def test_degenerate_rejected(self):
        with pytest.raises(StressStateError):
            plastic_flow_direction(np.array([100.0, 100.0, 100.0]), 0.1)


class TestElasticStep:
    def test_isotropic_compression(self):
        state = MaterialState.isotropic(200.0, 0.74)
        d_eps = np.array([1e-4, 1e-4, 1e-4])
        res = integrate_step(state, d_eps, PAR)
        assert not res.plastic
        assert res.d_lambda == 0.0
        np.testing.assert_array_equal(res.d_eps_p, np.zeros(3))
        assert res.d_e == -(1.0 + 0.74) * vol(d_eps)
        assert res.d_e == pytest.approx(-5.22e-4, rel=1e-12)
        assert res.d_sigma[0] == res.d_sigma[1] == res.d_sigma[2]
        assert res.d_sigma[0] > 0.0

    def test_single_substep_oracle_matches_elastic_branch(self):
        state = MaterialState.isotropic(200.0, 0.74)
        d_eps = np.array([1e-4, 1e-4, 1e-4])
        a = integrate_step(state, d_eps, PAR)
        b = integrate_path_explicit_oracle(state, d_eps, 1, PAR)
        np.testing.assert_allclose(b.d_sigma, a.d_sigma, rtol=1e-10)
        assert b.d_e == a.d_e
        assert not b.plastic

    def test_elastic_continuum_limit(self):
        # the implicit step refined 100x and the oracle refined 1e4x land on
        # the same continuum-limit stress increment
        state = MaterialState.isotropic(200.0, 0.74)
        d_eps = np.array([1e-4, 1e-4, 1e-4])
        oracle = integrate_path_explicit_oracle(state, d_eps, 10000, PAR)
        s = state.copy()
        total = np.zeros(3)
        for _ in range(100):
            res = integrate_step(s, d_eps / 100.0, PAR)
            total += res.d_sigma
            s = s.advanced(d_eps / 100.0, res)
        scale = float(np.linalg.norm(oracle.d_sigma))
        assert np.linalg.norm(total - oracle.d_sigma) <= 1e-4 * scale

    def test_single_step_near_oracle(self):
        # one implicit step with end-of-step moduli carries a small
        # discretization bias relative to the sub-stepped limit
        state = MaterialState.isotropic(200.0, 0.74)
        d_eps = np.array([1e-4, 1e-4, 1e-4])
        one = integrate_step(state, d_eps, PAR)
        oracle = integrate_path_explicit_oracle(state, d_eps, 10000, PAR)
        scale = float(np.linalg.norm(oracle.d_sigma))
        assert np.linalg.norm(one.d_sigma - oracle.d_sigma) <= 1e-2 * scale

    def test_pure_volumetric_from_isotropic_is_elastic(self):
        # apex rule: zero deviator means neutral loading even for a virgin
        # surface of zero size
        state = MaterialState.isotropic(50.0, 0.74)
        res = integrate_step(state, np.array([1e-3, 1e-3, 1e-3]), PAR)
        assert not res.plastic
        np.testing.assert_array_equal(res.d_eps_p, np.zeros(3))

    def test_expansion_keeps_p_positive(self):
        state = MaterialState.isotropic(1.0, 0.74)
        res = integrate_step(state, np.array([-0.05, -0.05, -0.05]), PAR)
        assert not res.plastic
        p_end = vol(state.sigma + res.d_sigma) / 3.0
        assert p_end > 0.0

    def test_unloading_after_plastic_shear(self):
        state = MaterialState.isotropic(200.0, 0.74)
        d_eps = np.array([1e-4, -5e-5, -5e-5])
        state, results = run_path(state, unit(d_eps), 1.2e-4, 10)
        assert results[-1].plastic
        rev = integrate_step(state, -0.5 * 1.2e-4 * unit(d_eps), PAR)
        assert not rev.plastic
        np.testing.assert_array_equal(rev.d_eps_p, np.zeros(3))


class TestPlasticStep:
    def test_virgin_deviatoric_yields_immediately(self):
        state = MaterialState.isotropic(200.0, 0.74)
        d_eps = np.array([1e-4, -5e-5, -5e-5])
        res = integrate_step(state, d_eps, PAR)
        assert res.plastic
        assert res.d_lambda > 0.0
        p_end = vol(state.sigma + res.d_sigma) / 3.0
        assert abs(res.f_end) <= 1e-9 * max(p_end, 1.0)

    def test_step_identities(self):
        state = MaterialState.isotropic(225.0, 0.62)
        direction = unit([1.0, -0.45, -0.45])
        lam_sum = 0.0
        for k in range(30):
            res = integrate_step(state, 5e-4 * direction, PAR)
            p_end = vol(state.sigma + res.d_sigma) / 3.0
            # consistency at step end
            assert abs(res.f_end) <= DEFAULT_TOL.f_rel * max(p_end, 1.0)
            # exact void ratio update
            assert res.d_e == -(1.0 + state.e) * vol(5e-4 * direction)
            if res.plastic:
                # volumetric plastic flow tied to the dilatancy coefficient
                assert vol(res.d_eps_p) == pytest.approx(
                    -res.d_lambda * res.n_end, rel=1e-10, abs=1e-22)
                lam_sum += res.d_lambda
            state = state.advanced(5e-4 * direction, res)
        assert lam_sum > 0.0
        # along a fixed-direction path the flow deviators stay aligned, so
        # the accumulated shear invariant equals the multiplier sum
        assert state.gamma_p() == pytest.approx(lam_sum, rel=1e-8)

    def test_melan_kuhn_tucker(self):
        state = MaterialState.isotropic(100.0, 0.68)
        direction = unit([0.8, 0.1, -0.7])
        for _ in range(20):
            res = integrate_step(state, 6e-4 * direction, PAR)
            assert res.d_lambda >= 0.0
            assert res.plastic == (res.d_lambda > 0.0)
            p_end = vol(state.sigma + res.d_sigma) / 3.0
            assert res.f_end <= DEFAULT_TOL.f_rel * max(p_end, 1.0) + 1e-12
            state = state.advanced(6e-4 * direction, res)

    def test_incremental_homogeneity(self):
        # halving the step and applying it twice moves the final stress by
        # less than 0.5 percent
        state = MaterialState.isotropic(225.0, 0.62)
        state, _ = run_path(state, unit([1.0, -0.4, -0.4]), 8e-4, 15)
        d_eps = 8e-4 * unit([1.0, -0.4, -0.4])
        full = integrate_step(state, d_eps, PAR)
        sig_full = state.sigma + full.d_sigma

        half = integrate_step(state, 0.5 * d_eps, PAR)
        mid = state.advanced(0.5 * d_eps, half)
        half2 = integrate_step(mid, 0.5 * d_eps, PAR)
        sig_halved = mid.sigma + half2.d_sigma
        rel = np.linalg.norm(sig_halved - sig_full) / np.linalg.norm(sig_full)
        assert rel < 5e-3

    def test_jacobian_matches_finite_differences(self):
        # analytic return-mapping Jacobian against central differences at a
        # representative mid-iteration point
        state = MaterialState.isotropic(225.0, 0.62)
        state, _ = run_path(state, unit([1.0, -0.3, -0.5]), 7e-4, 12)
        d_eps = 7e-4 * unit([1.0, -0.3, -0.5])
        gp0 = state.gamma_p()
        e1 = state.e - (1.0 + state.e) * vol(d_eps)
        sig_guess = state.sigma + np.array([0.4, -0.2, -0.1])
        lam_guess = 2e-4
        ev = _PlasticEval(sig_guess, lam_guess, gp0, e1, PAR)
        ja = _plastic_jacobian(ev, lam_guess, d_eps)
        jfd = _fd_jacobian(sig_guess, lam_guess, state.sigma, d_eps, gp0, e1, PAR)
        scale = np.abs(jfd).max(axis=1, keepdims=True) + 1e-12
        assert (np.abs(ja - jfd) / scale).max() < 1e-5

    def test_p_stays_positive_or_raises(self):
        # driving hard expansion from a low-pressure state either keeps p
        # positive or reports the domain violation, never returns p <= 0
        state = MaterialState.isotropic(2.0, 0.72)
        direction = unit([-1.0, -1.0, 0.2])
        for _ in range(50):
            try:
                res = integrate_step(state, 1.5e-3 * direction, PAR)
            except (IntegrationError, StressStateError):
                break
            state = state.advanced(1.5e-3 * direction, res)
            assert vol(state.sigma) / 3.0 > 0.0


class TestExplicitOracle:
    def test_rejects_bad_substeps(self):
        state = MaterialState.isotropic(200.0, 0.74)
        with pytest.raises(ValueError):
            integrate_path_explicit_oracle(state, np.zeros(3), 0, PAR)

    def test_first_order_convergence(self):
        # Richardson-style check: halving the substep roughly halves the
        # distance to a fine reference
        state = MaterialState.isotropic(225.0, 0.62)
        state, _ = run_path(state, unit([1.0, -0.35, -0.35]), 8e-4, 10)
        d_eps = 8e-4 * unit([1.0, -0.35, -0.35])
        ref = integrate_path_explicit_oracle(state, d_eps, 8192, PAR)
        errs = []
        for n in (128, 256, 512):
            res = integrate_path_explicit_oracle(state, d_eps, n, PAR)
            errs.append(np.linalg.norm(res.d_sigma - ref.d_sigma))
        assert errs[0] > errs[1] > errs[2]
        ratio = errs[0] / errs[1]
        assert 1.6 < ratio < 2.4

    def test_path_agreement_with_implicit(self):
        # 40-step fixed-direction path, oracle with 50 substeps per step
        direction = unit([1.0, -0.35, -0.35])
        mag = 8e-4
        imp = MaterialState.isotropic(200.0, 0.66)
        orc = imp.copy()
        for _ in range(40):
            res_i = integrate_step(imp, mag * direction, PAR)
            imp = imp.advanced(mag * direction, res_i)
            res_o = integrate_path_explicit_oracle(orc, mag * direction, 50, PAR)
            orc = orc.advanced(mag * direction, res_o)
        pi = stress_invariants(imp.sigma)
        po = stress_invariants(orc.sigma)
        assert pi.p == pytest.approx(po.p, rel=1e-2)
        assert pi.q == pytest.approx(po.q, rel=1e-2)


class TestDrainedTriaxial:
    def test_constant_lateral_stress(self):
        states, results, increments = drained_triaxial_compression(
            PAR, 225.0, 0.62, 0.02, d_eps_axial=5e-4)
        assert len(results) == len(states) - 1 == len(increments)
        for st in states[1:]:
            assert st.sigma[0] == pytest.approx(225.0, abs=1e-6)
            assert st.sigma[1] == pytest.approx(225.0, abs=1e-6)
        final = states[-1]
        assert strain_invariants(final.eps).gamma >= 0.02
        inv = stress_invariants(final.sigma)
        assert inv.q > 0.0
        assert final.sigma[2] > final.sigma[0]

    def test_void_ratio_update_exact(self):
        states, results, increments = drained_triaxial_compression(
            PAR, 225.0, 0.72, 0.01, d_eps_axial=5e-4)
        for st, res, d_eps in zip(states[:-1], results, increments):
            assert res.d_e == -(1.0 + st.e) * vol(d_eps)
