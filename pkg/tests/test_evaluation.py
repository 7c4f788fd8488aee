import math

import numpy as np
import pytest
from scipy.special import expit

from tailbayes.errors import ConfigError, DataError, RecalibrationError
from tailbayes.evaluation import (
    MiscalibrationSpec,
    calibration_curve,
    logistic_recalibrate,
    logit_affine,
    net_benefit,
    paired_delta,
    perturb_calibration,
)


def confusion_vectors(tp, fp, fn, tn, t):
    """Predictions/outcomes realizing exact confusion counts at threshold t."""
    hi, lo = min(t + 0.2, 0.99), max(t - 0.2, 0.01)
    probs = np.concatenate(
        [np.full(tp, hi), np.full(fp, hi), np.full(fn, lo), np.full(tn, lo)]
    )
    outcomes = np.concatenate([np.ones(tp), np.zeros(fp), np.ones(fn), np.zeros(tn)])
    return probs, outcomes


class TestNetBenefit:
    def test_five_net_true_positives_per_hundred(self):
        probs, outcomes = confusion_vectors(tp=5, fp=0, fn=45, tn=50, t=0.3)
        report = net_benefit(probs, outcomes, 0.3)
        assert (report.tp_count, report.fp_count, report.n) == (5, 0, 100)
        assert report.net_benefit == 0.05

    def test_even_odds_at_half(self):
        probs, outcomes = confusion_vectors(tp=30, fp=20, fn=25, tn=25, t=0.5)
        report = net_benefit(probs, outcomes, 0.5)
        np.testing.assert_allclose(report.net_benefit, 0.30 - 0.20, rtol=1e-15)

    def test_low_threshold_oracle_value(self):
        probs, outcomes = confusion_vectors(tp=10, fp=18, fn=30, tn=42, t=0.1)
        report = net_benefit(probs, outcomes, 0.1)
        expected = 10 / 100 - 18 / 100 * (0.1 / 0.9)
        assert report.net_benefit == expected
        np.testing.assert_allclose(report.net_benefit, 0.08, rtol=1e-12)

    def test_brute_force_random_configurations(self):
        """Vectorised counts match a pure-Python loop bit for bit."""
        rng = np.random.default_rng(12)
        for _ in range(300):
            n = int(rng.integers(1, 60))
            probs = rng.uniform(size=n)
            outcomes = (rng.uniform(size=n) < 0.4).astype(float)
            t = float(rng.uniform(0.05, 0.95))
            report = net_benefit(probs, outcomes, t)
            tp = sum(1 for p, y in zip(probs, outcomes) if p >= t and y == 1)
            fp = sum(1 for p, y in zip(probs, outcomes) if p >= t and y == 0)
            assert (report.tp_count, report.fp_count) == (tp, fp)
            assert report.net_benefit == tp / n - fp / n * (t / (1 - t))

    def test_treat_none_is_exactly_zero(self):
        probs = np.zeros(50)
        outcomes = (np.arange(50) % 3 == 0).astype(float)
        for t in (0.05, 0.25, 0.5, 0.9):
            assert net_benefit(probs, outcomes, t).net_benefit == 0.0

    def test_bounded_by_prevalence(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            n = int(rng.integers(2, 80))
            probs = rng.uniform(size=n)
            outcomes = (rng.uniform(size=n) < rng.uniform()).astype(float)
            t = float(rng.uniform(0.05, 0.95))
            assert net_benefit(probs, outcomes, t).net_benefit <= outcomes.mean() + 1e-15

    def test_errors(self):
        with pytest.raises(DataError):
            net_benefit([], [], 0.5)
        with pytest.raises(DataError):
            net_benefit([0.5], [1, 0], 0.5)
        with pytest.raises(ConfigError):
            net_benefit([0.5], [1], 1.0)


class TestPairedDelta:
    def test_identical_vectors(self):
        d = paired_delta([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
        assert d.mean_delta == 0.0 and d.se_delta == 0.0

    def test_two_split_oracle(self):
        d = paired_delta([0.02, 0.05], [0.01, 0.02])
        np.testing.assert_allclose(d.mean_delta, 0.02, rtol=1e-12)
        np.testing.assert_allclose(d.se_delta, 0.01, rtol=1e-12)

    def test_constant_shift_has_zero_se(self):
        rng = np.random.default_rng(1)
        base = rng.uniform(size=8)
        d = paired_delta(base + 0.03, base)
        np.testing.assert_allclose(d.mean_delta, 0.03, rtol=1e-10)
        assert d.se_delta < 1e-15

    def test_se_zero_iff_constant_deltas(self):
        assert paired_delta([0.1, 0.2], [0.0, 0.1]).se_delta == 0.0
        assert paired_delta([0.1, 0.2], [0.0, 0.0]).se_delta > 0.0

    def test_needs_two_splits(self):
        with pytest.raises(DataError):
            paired_delta([0.1], [0.2])


class TestCalibrationCurve:
    def test_bins_partition_and_counts_sum(self):
        rng = np.random.default_rng(3)
        p = rng.uniform(size=500)
        y = (rng.uniform(size=500) < p).astype(float)
        curve = calibration_curve(p, y, n_bins=7)
        assert curve.counts.sum() == 500
        assert curve.bin_edges[0] == 0.0 and curve.bin_edges[-1] == 1.0

    def test_single_occupied_bin(self):
        curve = calibration_curve(np.full(10, 0.5), np.ones(10), n_bins=10)
        occupied = np.flatnonzero(curve.occupied)
        assert occupied.size == 1
        assert curve.observed_fraction[occupied[0]] == 1.0
        assert np.isnan(curve.observed_fraction[0])

    def test_two_bin_example(self):
        curve = calibration_curve([0.1, 0.9], [0, 1], n_bins=2)
        np.testing.assert_allclose(curve.mean_predicted, [0.1, 0.9])
        np.testing.assert_allclose(curve.observed_fraction, [0.0, 1.0])
        assert curve.counts.tolist() == [1, 1]

    def test_calibrated_synthetic_within_binomial_error(self):
        """Bernoulli(p) outcomes stay within 3 binomial SEs of p per bin."""
        rng = np.random.default_rng(4)
        p = rng.uniform(size=20_000)
        y = (rng.uniform(size=20_000) < p).astype(float)
        curve = calibration_curve(p, y, n_bins=10)
        for j in np.flatnonzero(curve.counts >= 50):
            se = math.sqrt(curve.mean_predicted[j] * (1 - curve.mean_predicted[j]) / curve.counts[j])
            assert abs(curve.observed_fraction[j] - curve.mean_predicted[j]) <= 3 * se

    def test_validation(self):
        with pytest.raises(ConfigError):
            calibration_curve([0.5], [1], n_bins=1)
        with pytest.raises(DataError):
            calibration_curve([1.5], [1], n_bins=2)


class TestLogisticRecalibration:
    def test_already_calibrated_recovers_identity(self):
        rng = np.random.default_rng(10)
        raw = expit(rng.normal(0.0, 1.5, 4000))
        y = (rng.uniform(size=4000) < raw).astype(float)
        res = logistic_recalibrate(raw, y)
        assert abs(res.intercept) <= 3 * res.se_intercept
        assert abs(res.slope - 1.0) <= 3 * res.se_slope

    def test_recovers_doubled_slope(self):
        rng = np.random.default_rng(11)
        z = rng.normal(0.0, 1.5, 4000)
        y = (rng.uniform(size=4000) < expit(2.0 * z)).astype(float)
        res = logistic_recalibrate(expit(z), y)
        assert abs(res.slope - 2.0) <= 3 * res.se_slope

    def test_idempotent(self):
        rng = np.random.default_rng(12)
        z = rng.normal(0.0, 1.2, 3000)
        y = (rng.uniform(size=3000) < expit(0.5 + 1.7 * z)).astype(float)
        first = logistic_recalibrate(expit(z), y)
        second = logistic_recalibrate(first.probabilities, y)
        assert abs(second.intercept) <= 3 * second.se_intercept
        assert abs(second.slope - 1.0) <= 3 * second.se_slope

    def test_constant_outcomes_raise_separation(self):
        rng = np.random.default_rng(13)
        raw = expit(rng.normal(size=60))
        with pytest.raises(RecalibrationError):
            logistic_recalibrate(raw, np.ones(60))
        with pytest.raises(RecalibrationError):
            logistic_recalibrate(raw, np.zeros(60))

    def test_boundary_probabilities_rejected(self):
        with pytest.raises(DataError):
            logistic_recalibrate([0.0, 0.5], [0, 1])


class TestPerturbCalibration:
    grid = np.linspace(0.05, 0.95, 19)

    def test_identity_transform(self):
        np.testing.assert_allclose(logit_affine(self.grid), self.grid, atol=1e-12)
        np.testing.assert_allclose(
            logit_affine(self.grid, shift=0.0, slope=1.0), self.grid, atol=1e-12
        )

    def test_overestimation_raises_everything(self):
        for degree in ("mild", "severe"):
            out = perturb_calibration(self.grid, MiscalibrationSpec("overestimation", degree))
            assert np.all(out > self.grid)
            assert np.all((out > 0.0) & (out < 1.0))

    def test_underestimation_lowers_everything(self):
        out = perturb_calibration(self.grid, MiscalibrationSpec("underestimation", "mild"))
        assert np.all(out < self.grid)

    def test_severe_exceeds_mild(self):
        mild = perturb_calibration(self.grid, MiscalibrationSpec("overestimation", "mild"))
        severe = perturb_calibration(self.grid, MiscalibrationSpec("overestimation", "severe"))
        assert np.all(severe > mild)

    def test_overfitting_crosses_at_pivot(self):
        """Probabilities below the mean drop, above it rise."""
        out = perturb_calibration(self.grid, MiscalibrationSpec("overfitting", "mild"))
        pivot = self.grid.mean()
        assert np.all(out[self.grid < pivot] < self.grid[self.grid < pivot])
        assert np.all(out[self.grid > pivot] > self.grid[self.grid > pivot])

    def test_underfitting_compresses_toward_pivot(self):
        out = perturb_calibration(self.grid, MiscalibrationSpec("underfitting", "severe"))
        pivot = self.grid.mean()
        assert np.all(out[self.grid < pivot] > self.grid[self.grid < pivot])
        assert np.all(out[self.grid > pivot] < self.grid[self.grid > pivot])

    def test_boundary_probabilities_rejected(self):
        with pytest.raises(DataError):
            perturb_calibration([0.0, 0.5], MiscalibrationSpec("overestimation", "mild"))

    def test_enumerations_validated(self):
        with pytest.raises(ConfigError):
            MiscalibrationSpec("sideways", "mild")
        with pytest.raises(ConfigError):
            MiscalibrationSpec("overfitting", "extreme")
