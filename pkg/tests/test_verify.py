"""Tests for the certification campaigns.

**Property: Bound certification** sampled layer outputs, Jacobians, Hessian
blocks and Taylor remainders never exceed their bounds.
**Property: Determinism** a campaign report is a pure function of its config.
"""

import numpy as np
import pytest
from hypothesis import given, strategies as st, settings
from scipy.linalg import svdvals
from scipy.stats import kstest

from bounds import spectral_norm
from config import Check, CampaignConfig
from derivatives import hessian_block_analytic
from network import NetworkSpec, Parameters, flatten, forward
from verify import (
    RECORD_KINDS,
    SWEEP_CHANGE_LIMIT,
    SWEEP_PASS_FRACTION,
    CampaignError,
    SweepSummary,
    VerificationRecord,
    hessian_records,
    jacobian_records,
    layer_records,
    remainder_sample,
    run_campaign,
    sample_input,
    sample_params,
    sample_rng,
    summarize,
    verify_remainder,
)


def campaign(widths=(3, 4, 3, 2), activation="tanh", theta_bar=2.0, samples=12, **overrides):
    return CampaignConfig(spec=NetworkSpec(widths, activation), theta_bar=theta_bar,
                          samples=samples, **overrides)


class TestSampling:
    """Tests for the seeded samplers."""

    @given(st.sampled_from(["tanh", "logistic", "swish"]), st.floats(min_value=0.1, max_value=5.0),
           st.integers(0, 2 ** 64 - 1), st.integers(0, 10 ** 6))
    @settings(max_examples=50, deadline=None)
    def test_parameters_are_admissible(self, activation, theta_bar, seed, sample_id):
        spec = NetworkSpec((4, 5, 3, 2), activation)
        params = sample_params(spec, theta_bar, sample_rng(seed, Check.LAYERS, sample_id))
        params.check_against(spec)
        for matrix in params.matrices:
            assert 0.0 < np.linalg.norm(matrix, 2) <= theta_bar * (1 + 1e-12)

    def test_same_stream_same_parameters(self, small_tanh_spec):
        a = sample_params(small_tanh_spec, 1.0, sample_rng(42, Check.HESSIAN, 7))
        b = sample_params(small_tanh_spec, 1.0, sample_rng(42, Check.HESSIAN, 7))
        assert a == b

    def test_streams_differ_by_check_and_sample(self, small_tanh_spec):
        base = sample_params(small_tanh_spec, 1.0, sample_rng(42, Check.HESSIAN, 7))
        assert base != sample_params(small_tanh_spec, 1.0, sample_rng(42, Check.HESSIAN, 8))
        assert base != sample_params(small_tanh_spec, 1.0, sample_rng(42, Check.LAYERS, 7))
        assert base != sample_params(small_tanh_spec, 1.0, sample_rng(43, Check.HESSIAN, 7))

    @pytest.mark.parametrize("norm", [0.0, 1.0, 10.0])
    def test_input_has_target_norm(self, small_tanh_spec, norm):
        sigma = sample_input(small_tanh_spec, norm, sample_rng(0, Check.LAYERS, 0))
        assert sigma.shape == (small_tanh_spec.input_dim,)
        assert np.linalg.norm(sigma) == pytest.approx(norm, abs=1e-12)

    def test_norm_ratio_is_uniform(self, small_tanh_spec):
        ratios = [np.linalg.norm(sample_params(small_tanh_spec, 3.0, sample_rng(11, Check.JACOBIAN, s)).matrices[0], 2) / 3.0
                  for s in range(400)]
        assert kstest(ratios, "uniform").pvalue > 1e-4

    def test_rejects_non_positive_radius(self, small_tanh_spec):
        with pytest.raises(ValueError):
            sample_params(small_tanh_spec, 0.0, sample_rng(0, Check.LAYERS, 0))


class TestVerificationRecord:

    def test_margin_tolerates_rounding(self):
        record = VerificationRecord("layer_output", 0, None, 0, None, None,
                                    observed=1.0 + 5e-13, bound_norm_resolved=1.0, bound_uniform=1.0)
        assert record.margin > 0
        assert not record.violated

    def test_excess_is_violation(self):
        record = VerificationRecord("layer_output", 0, None, 0, None, None,
                                    observed=1.0 + 1e-9, bound_norm_resolved=1.0, bound_uniform=2.0)
        assert record.margin < 0
        assert record.uniform_margin > 0
        assert record.violated

    def test_non_finite_value_rejected(self):
        with pytest.raises(CampaignError, match="sample 3"):
            VerificationRecord("hessian_block", 3, 0, 1, 1, 0,
                               observed=float("nan"), bound_norm_resolved=1.0, bound_uniform=1.0)

    def test_sort_key_orders_kind_then_sample(self):
        late = VerificationRecord("layer_output", 5, None, 0, None, None, 0.0, 1.0, 1.0)
        early_kind = VerificationRecord("layer_output", 2, None, 1, None, None, 0.0, 1.0, 1.0)
        later_kind = VerificationRecord("remainder", 0, None, None, None, None, 0.0, 1.0, 1.0)
        ordered = sorted([later_kind, late, early_kind], key=VerificationRecord.sort_key)
        assert ordered == [early_kind, late, later_kind]


class TestPerSampleRecords:
    """Tests for the per-sample record builders."""

    def test_record_counts(self, small_tanh_spec, make_params):
        params = make_params(small_tanh_spec, 0)
        sigma = [0.3, 0.4]
        k = small_tanh_spec.k
        assert len(layer_records(small_tanh_spec, params, sigma, 5.0)) == (k + 1) + k
        assert len(jacobian_records(small_tanh_spec, params, sigma, 5.0)) == (k + 1) + 1
        assert len(hessian_records(small_tanh_spec, params, sigma, 5.0)) == \
            small_tanh_spec.output_dim * (k + 1) ** 2

    def test_mirrored_hessian_records_share_values(self, small_tanh_spec, make_params):
        params = make_params(small_tanh_spec, 1)
        records = hessian_records(small_tanh_spec, params, [1.0, -1.0], 5.0)
        by_index = {(r.output_index, r.q, r.j): r for r in records}
        for (i, q, j), record in by_index.items():
            mirror = by_index[(i, j, q)]
            assert record.observed == mirror.observed
            assert record.bound_norm_resolved == mirror.bound_norm_resolved

    def test_hessian_observed_matches_dense_norm(self):
        """Tanh Hessian blocks have clustered top singular values; observed must not fall short."""
        spec = NetworkSpec((8, 8, 8, 8, 2), "tanh")
        rng = sample_rng(20240501, Check.HESSIAN, 0)
        params = sample_params(spec, 2.0, rng)
        sigma = sample_input(spec, 1.0, rng)
        trace = forward(spec, params, sigma)
        for record in hessian_records(spec, params, sigma, 2.0):
            block = hessian_block_analytic(trace, params, record.output_index, record.q, record.j).matrix
            exact = svdvals(block)[0] if np.any(block) else 0.0
            assert record.observed == pytest.approx(exact, rel=1e-10, abs=1e-300)

    def test_bound_scale_multiplies_bounds(self, small_tanh_spec, make_params):
        params = make_params(small_tanh_spec, 2)
        plain = layer_records(small_tanh_spec, params, [1.0, 2.0], 5.0)
        halved = layer_records(small_tanh_spec, params, [1.0, 2.0], 5.0, bound_scale=0.5)
        for a, b in zip(plain, halved):
            assert b.observed == a.observed
            assert b.bound_uniform == pytest.approx(0.5 * a.bound_uniform)


class TestRemainder:
    """Tests for the Taylor remainder experiment."""

    def test_identical_points_have_zero_remainder(self, small_tanh_spec, make_params):
        theta = flatten(make_params(small_tanh_spec, 3))
        sample = remainder_sample(small_tanh_spec, theta, theta, [0.5, 0.5], 10.0)
        assert sample.observed == 0.0
        assert sample.bound_uniform == 0.0
        assert not sample.to_record().violated

    @pytest.mark.parametrize("activation", ["tanh", "logistic", "swish"])
    def test_outer_layer_difference_is_linear(self, make_params, activation):
        spec = NetworkSpec((3, 4, 3, 2), activation)
        hat = make_params(spec, 4)
        matrices = list(hat.matrices)
        matrices[-1] = matrices[-1] + np.random.default_rng(5).standard_normal(matrices[-1].shape)
        star = Parameters(tuple(matrices))
        theta_bar = 1.0 + max(spectral_norm(m) for m in star.matrices + hat.matrices)
        sample = remainder_sample(spec, flatten(star), flatten(hat), [1.0, -2.0], theta_bar)
        assert sample.observed <= 1e-12

    def test_sweep_ratio_converges_to_second_order_limit(self, small_tanh_spec, make_params):
        hat = flatten(make_params(small_tanh_spec, 6, scale=0.5))
        direction = np.random.default_rng(7).standard_normal(hat.size)
        star = hat + 0.05 * direction / np.linalg.norm(direction)
        sample = remainder_sample(small_tanh_spec, star, hat, [0.8, -0.3], 10.0)

        limit = sample.second_order_limit
        assert limit > 0
        coarse, fine = sample.sweep_ratio(0.125), sample.sweep_ratio(0.0625)
        assert abs(coarse - fine) / max(coarse, fine) < 0.25
        assert fine == pytest.approx(limit, rel=0.05)
        assert sample.sweep_ratio(1.0) == pytest.approx(sample.observed / 1.0)

    def test_bounds_hold_and_are_ordered(self, small_tanh_spec, make_params):
        hat = flatten(make_params(small_tanh_spec, 8, scale=0.5))
        star = flatten(make_params(small_tanh_spec, 9, scale=0.5))
        sample = remainder_sample(small_tanh_spec, star, hat, [2.0, 1.0], 5.0)
        assert sample.observed <= sample.bound_norm_resolved
        assert sample.bound_norm_resolved <= sample.bound_uniform * (1 + 1e-12)

    def test_inadmissible_point_is_reported(self, small_tanh_spec, make_params):
        hat = flatten(make_params(small_tanh_spec, 10, scale=0.1))
        star = hat * 100.0
        with pytest.raises(CampaignError, match="admissible"):
            remainder_sample(small_tanh_spec, star, hat, [0.0, 0.0], 1.0, sample_id=4)


class TestRunCampaign:
    """Tests for run_campaign."""

    @pytest.mark.parametrize("activation,theta_bar", [("tanh", 0.5), ("tanh", 2.0),
                                                      ("swish", 0.5), ("swish", 2.0),
                                                      ("logistic", 1.0)])
    def test_no_violations(self, activation, theta_bar):
        config = campaign(widths=(4, 5, 4, 3, 2), activation=activation, theta_bar=theta_bar, samples=15)
        report = run_campaign(config)
        assert report.passed, [r for r in report.records if r.violated][:5]
        assert {s.kind for s in report.summaries} == set(RECORD_KINDS)

    def test_observed_resolved_uniform_chain(self):
        report = run_campaign(campaign(samples=10))
        for record in report.records:
            assert record.observed <= record.bound_norm_resolved * (1 + 1e-12) + 1e-12
            assert record.bound_norm_resolved <= record.bound_uniform * (1 + 1e-12) + 1e-12

    def test_row_counts(self):
        config = campaign(samples=6)
        report = run_campaign(config)
        k, out = config.spec.k, config.spec.output_dim
        counts = {s.kind: s.records for s in report.summaries}
        assert counts["layer_output"] == 6 * (k + 1)
        assert counts["activation_output"] == 6 * k
        assert counts["jacobian_block"] == 6 * (k + 1)
        assert counts["full_jacobian"] == 6
        assert counts["hessian_block"] == 6 * out * (k + 1) ** 2
        assert counts["remainder"] == 6
        assert len(report.remainder_samples) == 6

    def test_same_seed_same_report(self):
        first = run_campaign(campaign(seed=11))
        second = run_campaign(campaign(seed=11))
        assert first.records == second.records
        assert first.summaries == second.summaries

    def test_different_seed_different_report(self):
        assert run_campaign(campaign(seed=1)).records != run_campaign(campaign(seed=2)).records

    def test_workers_match_serial(self):
        serial = run_campaign(campaign(samples=8))
        parallel = run_campaign(campaign(samples=8, workers=2))
        assert serial.records == parallel.records

    def test_empty_checks(self):
        report = run_campaign(campaign(checks=()))
        assert report.records == ()
        assert report.summaries == ()
        assert report.passed
        assert report.max_sweep_change() is None

    def test_single_check(self):
        report = run_campaign(campaign(checks=(Check.JACOBIAN,)))
        assert {r.check for r in report.records} == {"jacobian_block", "full_jacobian"}

    def test_scaled_bounds_are_caught(self):
        """Halving the bounds must surface violations (hidden widths 2: ||phi_k|| >= 1 > Q_k / 2)."""
        config = campaign(widths=(3, 2, 2, 2), checks=(Check.JACOBIAN,), bound_scale=0.5)
        report = run_campaign(config)
        assert not report.passed
        violated = [r for r in report.records if r.violated]
        assert any(r.check == "jacobian_block" and r.j == config.spec.k for r in violated)

    def test_input_norm_schedule_cycles(self):
        config = campaign(samples=6, checks=(Check.LAYERS,), input_norms=(0.0, 3.0))
        report = run_campaign(config)
        s_values = {}
        for record in report.records:
            if record.check == "layer_output" and record.w == 0:
                s_values[record.sample_id] = record
        # layer 0 bound is nu_0 * ||sigma_a||; ||sigma_a|| alternates between 1 and sqrt(10)
        ratios = [s_values[i].bound_uniform / config.theta_bar for i in range(6)]
        np.testing.assert_allclose(ratios, [1.0, np.sqrt(10.0)] * 3, rtol=1e-12)

    def test_remainder_sweep_is_reported(self):
        report = run_campaign(campaign(samples=4, checks=(Check.REMAINDER,)))
        assert len(report.remainder_samples) == 4
        assert report.max_sweep_change() is not None
        for sample in report.remainder_samples:
            assert [s for s, _ in sample.sweep] == [1.0, 0.5, 0.25, 0.125, 0.0625]

    def test_sweep_is_quadratic_on_tanh_campaign(self):
        """Most samples of a reference-sized tanh campaign are in the quadratic regime at s=1/8."""
        config = campaign(widths=(8, 8, 8, 8, 2), theta_bar=2.0, samples=40, checks=(Check.REMAINDER,))
        sweep = run_campaign(config).sweep_summary()
        assert sweep.samples == 40
        assert sweep.median_change < SWEEP_CHANGE_LIMIT
        assert sweep.fraction_within_limit >= SWEEP_PASS_FRACTION
        assert sweep.holds

    def test_campaign_aborts_on_forward_overflow(self):
        config = campaign(widths=(3, 5, 5, 5, 2), activation="swish", theta_bar=1e300, samples=1,
                          checks=(Check.LAYERS,))
        with pytest.raises(CampaignError, match="layers sample 0"):
            run_campaign(config)


def test_sweep_summary_counts_samples_within_limit():
    sweep = SweepSummary(samples=10, within_limit=9, median_change=0.05, max_change=0.4)
    assert sweep.fraction_within_limit == pytest.approx(0.9)
    assert sweep.holds
    assert not SweepSummary(samples=10, within_limit=8, median_change=0.05, max_change=0.4).holds


def test_summarize_counts_violations():
    records = [
        VerificationRecord("full_jacobian", 0, None, 1, None, None, 1.0, 2.0, 2.0),
        VerificationRecord("full_jacobian", 1, None, 1, None, None, 3.0, 2.0, 2.0),
    ]
    (summary,) = summarize(records)
    assert summary.kind == "full_jacobian"
    assert summary.records == 2
    assert summary.samples == 2
    assert summary.violations == 1
    assert summary.min_margin < 0


def test_verify_remainder_returns_samples():
    samples = verify_remainder(campaign(samples=3))
    assert [s.sample_id for s in samples] == [0, 1, 2]
