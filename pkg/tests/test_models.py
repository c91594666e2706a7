import numpy as np
import pytest

from sandlab.models import (
    ELASTICITY_FEATURES,
    Model,
    assemble,
    attach_scalers,
    default_specs,
    model_cost,
    model_forward,
    model_grads,
    model_gradient_check,
)
from sandlab.nn import MLPSpec, Scaler, fit_scaler

TINY = {
    "void_ratio": MLPSpec(13, 1, 1, 5),
    "plastic_strain": MLPSpec(13, 3, 2, 6),
}


def tiny_model(kind, seed=3):
    hyper = dict(TINY)
    if kind == "epnn":
        hyper["elasticity"] = MLPSpec(10, 1, 1, 5)
    else:
        hyper["stress"] = MLPSpec(17 if kind == "serial" else 13, 3, 1, 6)
    m = assemble(kind, seed=seed, hyper=hyper)
    rng = np.random.default_rng(1000 + seed)
    attach_scalers(
        m,
        fit_scaler(rng.uniform(-2.0, 2.0, (30, 13))),
        fit_scaler(rng.uniform(-2.0, 2.0, (30, 7))),
    )
    return m


def unit_scalers():
    """Scalers mapping [-1, 1] to itself, so normalized == physical."""
    return (
        Scaler(mins=-np.ones(13), maxs=np.ones(13)),
        Scaler(mins=-np.ones(7), maxs=np.ones(7)),
    )


def crafted_epnn(k_sec, ratio, depsp_out=(0.0, 0.0, 0.0)):
    """EPNN whose subnets emit constants, via zero weights and one bias.

    With unit scalers the network lives in physical units directly, so
    the stress head arithmetic can be checked by hand.
    """
    hyper = {
        "void_ratio": MLPSpec(13, 1, 1, 4),
        "plastic_strain": MLPSpec(13, 3, 1, 4),
        "elasticity": MLPSpec(10, 1, 1, 4),
    }
    m = assemble("epnn", seed=1, hyper=hyper)
    fs, ls = unit_scalers()
    attach_scalers(m, fs, ls)
    assert m.k_scale == 1.0
    for role in ("void_ratio", "plastic_strain", "elasticity"):
        for arr in m.subnets[role].params.arrays():
            arr[:] = 0.0
    el = m.subnets["elasticity"].params
    el.biases[0][0] = k_sec
    el.weights[-1][0, 0] = 1.0
    ps = m.subnets["plastic_strain"].params
    for j, val in enumerate(depsp_out):
        ps.biases[0][j] = abs(val)
        ps.weights[-1][j, j] = 1.0 if val >= 0 else -1.0
    m.epnn_ratio = ratio
    return m


class TestAssemble:
    def test_parallel_default_shapes(self):
        m = assemble("parallel", seed=0)
        dims = {r: (s.spec.input_dim, s.spec.output_dim) for r, s in m.subnets.items()}
        assert dims == {
            "void_ratio": (13, 1),
            "plastic_strain": (13, 3),
            "stress": (13, 3),
        }
        assert m.subnets["plastic_strain"].spec.hidden_layers == 4
        assert m.subnets["plastic_strain"].spec.hidden_width == 75
        assert m.subnets["stress"].spec.hidden_width == 60

    def test_serial_stress_input_dim(self):
        m = assemble("serial", seed=0)
        assert m.subnets["stress"].spec.input_dim == 17

    def test_epnn_shapes_and_ratio(self):
        m = assemble("epnn", seed=0)
        assert "stress" not in m.subnets
        assert m.subnets["elasticity"].spec.input_dim == 10
        assert m.subnets["elasticity"].spec.output_dim == 1
        assert m.epnn_ratio == 0.5
        assert len(ELASTICITY_FEATURES) == 10
        # the excluded columns are exactly the plastic strain block
        assert set(range(13)) - set(ELASTICITY_FEATURES) == {7, 8, 9}

    def test_same_seed_identical(self):
        a = assemble("serial", seed=42)
        b = assemble("serial", seed=42)
        for role in a.subnets:
            for wa, wb in zip(
                a.subnets[role].params.arrays(), b.subnets[role].params.arrays()
            ):
                assert np.array_equal(wa, wb)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            assemble("cascade", seed=0)

    def test_wrong_output_dim_rejected(self):
        with pytest.raises(ValueError):
            assemble("parallel", seed=0, hyper={"stress": MLPSpec(13, 2, 3, 60)})

    def test_wrong_input_dim_rejected(self):
        with pytest.raises(ValueError):
            assemble("serial", seed=0, hyper={"stress": MLPSpec(13, 3, 3, 60)})

    def test_foreign_role_rejected(self):
        with pytest.raises(ValueError):
            assemble("epnn", seed=0, hyper={"stress": MLPSpec(13, 3, 3, 60)})

    def test_parameter_count_includes_ratio(self):
        m = tiny_model("epnn")
        base = sum(s.params.n_parameters() for s in m.subnets.values())
        assert m.n_parameters() == base + 1


class TestAttachScalers:
    def test_size_validation(self):
        m = assemble("parallel", seed=0)
        with pytest.raises(ValueError):
            attach_scalers(m, Scaler(np.zeros(5), np.ones(5)), Scaler(np.zeros(7), np.ones(7)))
        with pytest.raises(ValueError):
            attach_scalers(m, Scaler(np.zeros(13), np.ones(13)), Scaler(np.zeros(5), np.ones(5)))

    def test_k_scale_from_half_ranges(self):
        m = assemble("epnn", seed=0)
        f_min = np.zeros(13)
        f_max = np.ones(13)
        f_max[10:13] = [0.002, 0.004, 0.006]  # halves 0.001, 0.002, 0.003
        l_min = np.zeros(7)
        l_max = np.ones(7)
        l_max[0:3] = [4.0, 8.0, 12.0]  # halves 2, 4, 6
        attach_scalers(m, Scaler(f_min, f_max), Scaler(l_min, l_max))
        assert m.k_scale == pytest.approx(4.0 / 0.002)

    def test_parallel_keeps_default_k_scale(self):
        m = tiny_model("parallel")
        assert m.k_scale == 1.0


class TestModelForward:
    def test_parallel_zero_weights_zero_output(self):
        m = tiny_model("parallel")
        for role in m.subnets:
            for arr in m.subnets[role].params.arrays():
                arr[:] = 0.0
        out = model_forward(m, np.random.default_rng(0).uniform(-1, 1, (4, 13)))
        assert np.all(out.matrix() == 0.0)

    def test_single_vector_matches_batch(self):
        m = tiny_model("serial")
        x = np.random.default_rng(1).uniform(-1, 1, 13)
        single = model_forward(m, x)
        batch = model_forward(m, x.reshape(1, -1))
        assert np.array_equal(single.d_sigma, batch.d_sigma[0])
        assert np.array_equal(single.d_e, batch.d_e[0])

    def test_wrong_width_rejected(self):
        m = tiny_model("parallel")
        with pytest.raises(ValueError):
            model_forward(m, np.zeros(12))

    def test_epnn_needs_scalers(self):
        hyper = {
            "void_ratio": MLPSpec(13, 1, 1, 4),
            "plastic_strain": MLPSpec(13, 3, 1, 4),
            "elasticity": MLPSpec(10, 1, 1, 4),
        }
        m = assemble("epnn", seed=1, hyper=hyper)
        with pytest.raises(ValueError):
            model_forward(m, np.zeros(13))


class TestEpnnStressHead:
    def test_isotropic_elasticity_arithmetic(self):
        # K=3000 kPa, G=1000 kPa, elastic strain (0.001, 0, 0):
        # axial 3000*0.001 + 2*1000*(0.001 - 0.001/3) = 4.333
        # lateral 3000*0.001 + 2*1000*(0 - 0.001/3) = 2.333
        m = crafted_epnn(k_sec=3000.0, ratio=1000.0 / 3000.0)
        x = np.zeros(13)
        x[10:13] = [0.001, 0.0, 0.0]
        out = model_forward(m, x)
        assert out.d_sigma == pytest.approx([4.0 + 1.0 / 3.0, 2.0 + 1.0 / 3.0, 2.0 + 1.0 / 3.0])

    def test_full_plastic_strain_kills_stress(self):
        # predicted plastic increment equal to the applied increment
        # leaves zero elastic strain, so the stress increment vanishes
        # regardless of the modulus
        d_eps = (0.4, -0.1, 0.25)
        m = crafted_epnn(k_sec=7000.0, ratio=0.5, depsp_out=d_eps)
        x = np.zeros(13)
        x[10:13] = d_eps
        out = model_forward(m, x)
        assert np.allclose(out.d_sigma, 0.0, atol=1e-12)

    def test_axisymmetric_increment_keeps_lateral_symmetry(self):
        # the reconstruction is isotropic-linear in the elastic strain,
        # so equal lateral strain inputs give bitwise equal lateral
        # stress outputs whatever the subnets predict for K
        m = crafted_epnn(k_sec=12345.0, ratio=0.37)
        x = np.zeros(13)
        x[10:13] = [2e-3, -0.5e-3, -0.5e-3]
        out = model_forward(m, x)
        assert out.d_sigma[1] == out.d_sigma[2]

    def test_negative_modulus_diagnostic(self):
        m = crafted_epnn(k_sec=-500.0, ratio=0.5)
        X = np.zeros((5, 13))
        X[:, 10] = 1e-3
        out = model_forward(m, X)
        assert out.n_negative_k == 5


class TestModelCost:
    def test_zero_at_perfect_labels(self):
        for kind in ("parallel", "serial", "epnn"):
            m = tiny_model(kind)
            X = np.random.default_rng(5).uniform(-1, 1, (6, 13))
            Y = model_forward(m, X).matrix()
            rep = model_cost(m, X, Y)
            assert rep.cf_i == 0.0
            assert rep.cf_sigma == 0.0
            assert rep.cf == 0.0

    def test_epnn_perfect_reconstruction_zero_stress_cost(self):
        # no stress subnet exists, yet the stress part of the cost is
        # exactly zero when the reconstruction matches the labels
        m = crafted_epnn(k_sec=3000.0, ratio=0.5)
        x = np.zeros(13)
        x[10:13] = [0.001, 0.0, 0.0]
        out = model_forward(m, x.reshape(1, -1))
        rep = model_cost(m, x.reshape(1, -1), out.matrix())
        assert rep.cf_sigma == 0.0

    def test_duplication_invariance(self):
        m = tiny_model("serial")
        rng = np.random.default_rng(6)
        X = rng.uniform(-1, 1, (5, 13))
        Y = rng.uniform(-1, 1, (5, 7))
        a = model_cost(m, X, Y)
        b = model_cost(m, np.vstack([X, X]), np.vstack([Y, Y]))
        assert b.cf == pytest.approx(a.cf, rel=1e-14)

    def test_cf_splits_add_up(self):
        m = tiny_model("parallel")
        rng = np.random.default_rng(7)
        X = rng.uniform(-1, 1, (5, 13))
        Y = rng.uniform(-1, 1, (5, 7))
        rep = model_cost(m, X, Y, loss_kind="mse")
        assert rep.cf == pytest.approx(rep.cf_i + rep.cf_sigma, rel=1e-15)


class TestCoupling:
    """Whether internal-variable subnet weights reach the stress cost."""

    def _cf_sigma_after_nudge(self, kind):
        m = tiny_model(kind, seed=9)
        rng = np.random.default_rng(8)
        X = rng.uniform(-1, 1, (6, 13))
        Y = rng.uniform(-1, 1, (6, 7))
        before = model_cost(m, X, Y).cf_sigma
        m.subnets["plastic_strain"].params.weights[0][0, 0] += 1e-3
        after = model_cost(m, X, Y).cf_sigma
        return before, after

    def test_parallel_no_coupling(self):
        before, after = self._cf_sigma_after_nudge("parallel")
        assert before == after

    def test_serial_couples(self):
        before, after = self._cf_sigma_after_nudge("serial")
        assert before != after

    def test_epnn_couples(self):
        before, after = self._cf_sigma_after_nudge("epnn")
        assert before != after

    def test_parallel_plastic_grad_has_no_stress_term(self):
        # analytic version of the same statement: permuting stress labels
        # leaves the plastic-strain gradient unchanged in parallel mode
        m = tiny_model("parallel", seed=9)
        rng = np.random.default_rng(9)
        X = rng.uniform(-1, 1, (6, 13))
        Y = rng.uniform(-1, 1, (6, 7))
        Yperm = Y.copy()
        Yperm[:, 0:3] = Yperm[::-1, 0:3]
        ga = model_grads(m, X, Y)
        gb = model_grads(m, X, Yperm)
        for a, b in zip(
            ga.by_role["plastic_strain"].arrays(),
            gb.by_role["plastic_strain"].arrays(),
        ):
            assert np.array_equal(a, b)


class TestGradients:
    @pytest.mark.parametrize("kind", ("parallel", "serial", "epnn"))
    @pytest.mark.parametrize("loss_kind", ("mse", "mae"))
    def test_matches_finite_differences(self, kind, loss_kind):
        m = tiny_model(kind)
        rng = np.random.default_rng(7)
        X = rng.uniform(-1, 1, (6, 13))
        Y = rng.uniform(-1, 1, (6, 7))
        res = model_gradient_check(m, X, Y, loss_kind=loss_kind)
        assert res.max_rel_err < 1e-6
        assert res.n_checked > 0

    def test_ratio_gradient_full_size(self):
        m = assemble("epnn", seed=5)
        rng = np.random.default_rng(11)
        attach_scalers(
            m,
            fit_scaler(rng.uniform(-2, 2, (60, 13))),
            fit_scaler(rng.uniform(-2, 2, (60, 7))),
        )
        X = rng.uniform(-1, 1, (16, 13))
        Y = rng.uniform(-1, 1, (16, 7))
        res = model_gradient_check(m, X, Y, loss_kind="mae", ratio_only=True)
        assert res.n_checked == 1
        assert res.max_rel_err < 1e-6

    def test_full_check_rejects_big_models(self):
        m = assemble("parallel", seed=0)
        rng = np.random.default_rng(0)
        attach_scalers(
            m,
            fit_scaler(rng.uniform(-2, 2, (30, 13))),
            fit_scaler(rng.uniform(-2, 2, (30, 7))),
        )
        with pytest.raises(ValueError):
            model_gradient_check(m, np.zeros((2, 13)), np.zeros((2, 7)))

    def test_grads_return_cost_of_same_pass(self):
        m = tiny_model("epnn")
        rng = np.random.default_rng(13)
        X = rng.uniform(-1, 1, (5, 13))
        Y = rng.uniform(-1, 1, (5, 7))
        g = model_grads(m, X, Y, loss_kind="mae")
        rep = model_cost(m, X, Y, loss_kind="mae")
        assert g.cost == rep

    def test_non_epnn_ratio_grad_is_zero(self):
        m = tiny_model("serial")
        rng = np.random.default_rng(14)
        g = model_grads(m, rng.uniform(-1, 1, (4, 13)), rng.uniform(-1, 1, (4, 7)))
        assert g.r_grad == 0.0


class TestCopy:
    def test_copy_is_deep_for_parameters(self):
        m = tiny_model("epnn")
        c = m.copy()
        c.subnets["void_ratio"].params.weights[0][0, 0] += 1.0
        assert (
            m.subnets["void_ratio"].params.weights[0][0, 0]
            != c.subnets["void_ratio"].params.weights[0][0, 0]
        )
        assert c.kind == "epnn"
        assert c.k_scale == m.k_scale
