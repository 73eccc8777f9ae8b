"""Tests for the activation families, their envelopes and layer constants."""

import numpy as np
import pytest
from hypothesis import given, strategies as st, settings

from activations import (
    ENVELOPES,
    ActivationKind,
    NonFiniteInputError,
    eval_layer_activation,
    layer_constants,
    scalar_maps,
)


finite_reals = st.floats(min_value=-12.0, max_value=12.0, allow_nan=False, allow_infinity=False)


class TestActivationKind:
    """Tests for config-name lookup."""

    @pytest.mark.parametrize("name", ["tanh", "logistic", "swish"])
    def test_from_name_round_trips(self, name):
        assert ActivationKind.from_name(name).value == name

    def test_unknown_name_lists_choices(self):
        with pytest.raises(ValueError, match="tanh, logistic, swish"):
            ActivationKind.from_name("relu")


class TestEvalLayerActivation:
    """Tests for eval_layer_activation."""

    def test_tanh_at_zero(self):
        phi, dphi, ddphi = eval_layer_activation(ActivationKind.TANH, np.zeros(2))
        np.testing.assert_array_equal(phi, [0.0, 1.0])
        np.testing.assert_array_equal(dphi, [1.0, 0.0])
        np.testing.assert_array_equal(ddphi, [0.0, 0.0])

    def test_logistic_at_zero(self):
        phi, dphi, _ = eval_layer_activation(ActivationKind.LOGISTIC, np.zeros(3))
        np.testing.assert_array_equal(phi, [0.5, 0.5, 1.0])
        np.testing.assert_array_equal(dphi, [0.25, 0.25, 0.0])

    def test_width_one_is_bias_only(self):
        phi, dphi, ddphi = eval_layer_activation(ActivationKind.SWISH, np.array([3.7]))
        assert phi.tolist() == [1.0]
        assert dphi.tolist() == [0.0]
        assert ddphi.tolist() == [0.0]

    @given(st.lists(finite_reals, min_size=1, max_size=8), st.sampled_from(list(ActivationKind)))
    @settings(max_examples=100)
    def test_bias_slot_ignores_last_input(self, values, kind):
        """The last input entry never reaches the output; the bias slot is fixed."""
        y = np.array(values)
        phi, dphi, ddphi = eval_layer_activation(kind, y)
        assert phi[-1] == 1.0
        assert dphi[-1] == 0.0
        assert ddphi[-1] == 0.0

        f, _, _ = scalar_maps(kind)
        np.testing.assert_allclose(phi[:-1], f(y[:-1]), rtol=0, atol=0)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_input_names_index(self, bad):
        y = np.array([0.1, 0.2, bad, 0.4])
        with pytest.raises(NonFiniteInputError) as excinfo:
            eval_layer_activation(ActivationKind.TANH, y)
        assert excinfo.value.index == 2
        assert "index 2" in str(excinfo.value)


class TestScalarDerivatives:
    """Analytic derivatives against central differences."""

    @given(finite_reals, st.sampled_from(list(ActivationKind)))
    @settings(max_examples=100)
    def test_first_derivative_matches_central_difference(self, x, kind):
        f, d1, _ = scalar_maps(kind)
        h = 1e-5 * max(1.0, abs(x))
        numeric = (f(x + h) - f(x - h)) / (2 * h)
        assert abs(d1(x) - numeric) <= 1e-6

    @given(finite_reals, st.sampled_from(list(ActivationKind)))
    @settings(max_examples=100)
    def test_second_derivative_matches_central_difference(self, x, kind):
        _, d1, d2 = scalar_maps(kind)
        h = 1e-5 * max(1.0, abs(x))
        numeric = (d1(x + h) - d1(x - h)) / (2 * h)
        assert abs(d2(x) - numeric) <= 1e-6


class TestEnvelopes:
    """The frozen envelopes dominate the scalar maps."""

    @pytest.mark.parametrize("kind", list(ActivationKind))
    def test_envelope_holds_on_dense_grid(self, kind):
        env = ENVELOPES[kind]
        f, d1, d2 = scalar_maps(kind)
        x = np.linspace(-40.0, 40.0, 80001)
        assert np.all(np.abs(f(x)) <= env.slope * np.abs(x) + env.offset + 1e-15)
        assert np.all(np.abs(d1(x)) <= env.first_sup + 1e-15)
        assert np.all(np.abs(d2(x)) <= env.second_sup + 1e-15)

    def test_swish_offset_is_lobe_depth(self):
        f, _, _ = scalar_maps(ActivationKind.SWISH)
        x_min = -1.278464542761074
        assert f(x_min) == pytest.approx(-ENVELOPES[ActivationKind.SWISH].offset, abs=1e-12)

    def test_closed_form_second_sups(self):
        assert ENVELOPES[ActivationKind.TANH].second_sup == pytest.approx(4 / (3 * np.sqrt(3)), abs=1e-14)
        assert ENVELOPES[ActivationKind.LOGISTIC].second_sup == pytest.approx(np.sqrt(3) / 18, abs=1e-14)


class TestLayerConstants:
    """Tests for layer_constants."""

    def test_tanh_width_three(self):
        c = layer_constants(ActivationKind.TANH, 3)
        assert c.a1 == 0.0
        assert c.a0 == pytest.approx(np.sqrt(3))
        assert c.b0 == 1.0
        assert c.c0 == pytest.approx(0.7699, abs=1e-4)

    def test_logistic_width_two(self):
        c = layer_constants(ActivationKind.LOGISTIC, 2)
        assert c.a1 == 0.0
        assert c.a0 == pytest.approx(np.sqrt(2))
        assert c.b0 == 0.25
        assert c.c0 == pytest.approx(0.0962, abs=1e-4)

    def test_swish_width_two(self):
        c = layer_constants(ActivationKind.SWISH, 2)
        assert c.a1 == 1.0
        assert c.a0 == pytest.approx(np.sqrt(0.278464542761074 ** 2 + 1))

    def test_width_one_only_has_bias(self):
        for kind in ActivationKind:
            assert layer_constants(kind, 1).a0 == 1.0

    def test_invalid_width_rejected(self):
        with pytest.raises(ValueError):
            layer_constants(ActivationKind.TANH, 0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            layer_constants("tanh", 3)

    @given(st.sampled_from(list(ActivationKind)), st.integers(min_value=1, max_value=1000))
    @settings(max_examples=100)
    def test_only_a0_depends_on_width(self, kind, width):
        narrow, wide = layer_constants(kind, width), layer_constants(kind, width + 1)
        assert wide.a0 >= narrow.a0
        assert (wide.a1, wide.b0, wide.c0) == (narrow.a1, narrow.b0, narrow.c0)

    @given(st.lists(st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=1, max_size=10),
           st.sampled_from(list(ActivationKind)))
    @settings(max_examples=100)
    def test_vector_growth_bound(self, values, kind):
        """||phi(y)|| <= a1 ||y|| + a0 and the diagonal derivatives obey b0, c0."""
        y = np.array(values)
        c = layer_constants(kind, y.size)
        phi, dphi, ddphi = eval_layer_activation(kind, y)
        assert np.linalg.norm(phi) <= c.a1 * np.linalg.norm(y) + c.a0 + 1e-12
        assert np.max(np.abs(dphi)) <= c.b0 + 1e-15
        assert np.max(np.abs(ddphi)) <= c.c0 + 1e-15
