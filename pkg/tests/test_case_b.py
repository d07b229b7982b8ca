import math

import numpy as np
import pytest
from scipy import stats

from oracles import projector_statistic
from ofdmsense import case_b
from ofdmsense.errors import ConfigurationError, DegenerateModelError
from ofdmsense.numerics import ks_statistic, rng_stream
from ofdmsense.ofdm import OfdmConfig, PuContribution, generate_observation


class TestSubspaceModel:
    def test_monomial_columns(self):
        m = case_b.SubspaceModel.monomial(5, 2)
        np.testing.assert_array_equal(m.basis[:, 2], np.arange(5) ** 2)
        assert m.kind == "monomial"
        assert m.dof == (3, 2)

    @pytest.mark.parametrize("b_pu,order", [(3, 2), (2, 1), (4, 3)])
    def test_too_few_rows(self, b_pu, order):
        with pytest.raises(ConfigurationError):
            case_b.SubspaceModel.monomial(b_pu, order)

    def test_rank_deficient(self):
        h = np.ones((6, 2))
        with pytest.raises(ConfigurationError):
            case_b.SubspaceModel(basis=h, order=1)

    def test_column_count_mismatch(self):
        with pytest.raises(ConfigurationError):
            case_b.SubspaceModel(basis=np.ones((6, 1)), order=1)

    @pytest.mark.parametrize("b_pu,order", [(10, 1), (20, 4), (64, 6)])
    def test_orthonormal_spans_same_space(self, b_pu, order):
        m = case_b.SubspaceModel.monomial(b_pu, order)
        u = m.orthonormal
        np.testing.assert_allclose(u.T @ u, np.eye(order + 1), atol=1e-10)
        h = m.basis / np.linalg.norm(m.basis, axis=0)
        resid = h - m.projector() @ h
        assert np.linalg.norm(resid) < 1e-8

    def test_csv_round_trip(self, tmp_path):
        m = case_b.SubspaceModel.monomial(8, 2)
        path = tmp_path / "h.csv"
        case_b.save_basis_csv(m, path)
        back = case_b.load_basis_csv(path)
        np.testing.assert_array_equal(back.basis, m.basis)
        assert back.order == 2
        assert path.read_text().splitlines()[0] == "h0,h1,h2"


class TestObservation:
    def test_periodogram(self):
        y = np.array([[1, 1j, -1], [2, 0, 0]])
        np.testing.assert_allclose(case_b.periodogram(y), [1.0, 4 / 3])

    def test_noise_only_unbiased(self):
        cfg = OfdmConfig(Q=16, N=50)
        z = np.array(
            [case_b.build_observation(generate_observation(cfg, None, None, rng_stream(0, t)), (0, 15)).z
             for t in range(2000)]
        )
        se = 1.0 / math.sqrt(cfg.N * z.shape[0])
        assert np.all(np.abs(z.mean(axis=0)) < 4 * se)

    def test_pu_power_recovered(self):
        cfg = OfdmConfig(Q=8, N=40)
        zs = []
        for t in range(3000):
            gen = rng_stream(1, t)
            v = math.sqrt(2.0 / 2) * (gen.standard_normal((2, 40)) + 1j * gen.standard_normal((2, 40)))
            block = generate_observation(cfg, None, PuContribution((3, 4), v), gen)
            zs.append(case_b.build_observation(block, (3, 4)).z)
        np.testing.assert_allclose(np.mean(zs, axis=0), 2.0, atol=0.03)

    def test_variance_shrinks_with_n(self):
        def spread(n):
            cfg = OfdmConfig(Q=4, N=n)
            z = [case_b.build_observation(generate_observation(cfg, None, None, rng_stream(2, n, t)), (0, 3)).z
                 for t in range(2000)]
            return np.var(z)

        assert spread(160) / spread(40) == pytest.approx(0.25, rel=0.15)

    def test_channel_power_subtracted(self):
        y = np.full((4, 10), 2.0 + 0j)
        obs = case_b.build_observation(y, (1, 2), h_est=np.full((2, 10), 1.0 + 1j), sigma_w2_est=0.5)
        np.testing.assert_allclose(obs.m, 2.5)
        np.testing.assert_allclose(obs.z, obs.zbar - obs.m)
        assert np.all(obs.zbar >= 0)

    def test_scalar_channel_estimate(self):
        obs = case_b.build_observation(np.ones((4, 2)), (0, 3), h_est=2.0, sigma_w2_est=1.0)
        np.testing.assert_allclose(obs.m, 5.0)

    def test_band_outside(self):
        with pytest.raises(ConfigurationError):
            case_b.build_observation(np.ones((4, 2)), (2, 4), sigma_w2_est=1.0)

    def test_raw_array_needs_noise_variance(self):
        with pytest.raises(ConfigurationError):
            case_b.build_observation(np.ones((4, 2)), (0, 1))

    def test_channel_estimate_must_cover_band(self):
        with pytest.raises(ConfigurationError):
            case_b.build_observation(np.ones((4, 2)), (0, 1), h_est=np.ones(3), sigma_w2_est=1.0)

    def test_noise_variance_estimate(self):
        cfg = OfdmConfig(Q=32, N=200, sigma_w2=1.7)
        block = generate_observation(cfg, None, None, rng_stream(3))
        assert case_b.estimate_noise_variance(block, range(0, 32)) == pytest.approx(1.7, rel=0.03)
        with pytest.raises(ConfigurationError):
            case_b.estimate_noise_variance(block, [])


class TestStatistic:
    @pytest.mark.parametrize("b_pu,order", [(10, 1), (12, 3), (30, 5)])
    def test_matches_pinv_projector(self, rng, b_pu, order):
        m = case_b.SubspaceModel.monomial(b_pu, order)
        z = rng.standard_normal(b_pu)
        assert case_b.matched_subspace_statistic(z, m) == pytest.approx(
            projector_statistic(z, m.basis), rel=1e-8
        )

    def test_orthogonal_is_zero(self):
        m = case_b.SubspaceModel.monomial(6, 0)
        assert case_b.matched_subspace_statistic(np.array([1, -1, 1, -1, 1, -1.0]), m) == pytest.approx(0, abs=1e-15)

    def test_in_span_is_degenerate(self):
        m = case_b.SubspaceModel.monomial(8, 1)
        with pytest.raises(DegenerateModelError):
            case_b.matched_subspace_statistic(m.basis @ np.array([1.0, 0.5]), m)

    def test_zero_observation(self):
        with pytest.raises(ConfigurationError):
            case_b.matched_subspace_statistic(np.zeros(6), case_b.SubspaceModel.monomial(6, 1))

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            case_b.matched_subspace_statistic(np.ones(5), case_b.SubspaceModel.monomial(6, 1))

    def test_basis_recombination_invariance(self, rng):
        m = case_b.SubspaceModel.monomial(10, 2)
        mix = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        mixed = case_b.SubspaceModel(basis=m.basis @ mix, order=2)
        z = rng.standard_normal(10)
        assert abs(case_b.matched_subspace_statistic(z, m) - case_b.matched_subspace_statistic(z, mixed)) < 1e-9

    @pytest.mark.parametrize("c", [-3.0, 1e-6, 1e6])
    def test_scale_invariance(self, rng, c):
        m = case_b.SubspaceModel.monomial(10, 1)
        z = rng.standard_normal(10)
        assert case_b.matched_subspace_statistic(c * z, m) == pytest.approx(
            case_b.matched_subspace_statistic(z, m), rel=1e-12
        )

    def test_batched_matches_scalar(self, rng):
        m = case_b.SubspaceModel.monomial(10, 1)
        z = rng.standard_normal((6, 10))
        z[2] = m.basis @ np.array([1.0, 2.0])
        batch = case_b.matched_subspace_statistic(z, m)
        assert np.isinf(batch[2])
        for i in (0, 1, 3, 4, 5):
            assert batch[i] == pytest.approx(case_b.matched_subspace_statistic(z[i], m))

    def test_h0_distribution_ks(self):
        m = case_b.SubspaceModel.monomial(10, 1)
        z = rng_stream(4).standard_normal((20_000, 10))
        _, p = ks_statistic(case_b.matched_subspace_statistic(z, m), lambda x: stats.f.cdf(x, 2, 8))
        assert p > 0.01

    def test_h1_noncentral_ks(self):
        m = case_b.SubspaceModel.monomial(10, 1)
        signal = m.basis @ np.array([1.0, 0.2])
        sigma = 1.5
        lam = case_b.noncentrality(signal, sigma**2)
        z = signal + sigma * rng_stream(5).standard_normal((20_000, 10))
        _, p = ks_statistic(case_b.matched_subspace_statistic(z, m), lambda x: stats.ncf.cdf(x, 2, 8, lam))
        assert p > 0.01


class TestThresholds:
    @pytest.mark.parametrize("d", [1, 3, 9])
    def test_symmetric_median(self, d):
        # F(d, d) arises from r = d - 1 and B_PU = 2d
        assert case_b.threshold_from_alpha(0.5, d - 1, 2 * d) == pytest.approx(1.0, abs=1e-10)

    def test_monte_carlo_quantile(self):
        gen = rng_stream(6)
        draws = (gen.chisquare(2, 10**6) / 2) / (gen.chisquare(8, 10**6) / 8)
        assert case_b.threshold_from_alpha(0.05, 1, 10) == pytest.approx(np.quantile(draws, 0.95), rel=0.01)

    def test_alpha_to_one(self):
        assert case_b.threshold_from_alpha(1 - 1e-12, 1, 10) < 1e-5

    @pytest.mark.parametrize("alpha,r,b", [(0.1, 1, 2), (0.1, -1, 5), (0.0, 1, 10), (1.0, 1, 10)])
    def test_invalid(self, alpha, r, b):
        with pytest.raises(ConfigurationError):
            case_b.threshold_from_alpha(alpha, r, b)

    def test_false_alarm_inverse(self):
        g = case_b.threshold_from_alpha(0.07, 2, 15)
        assert case_b.false_alarm_probability(g, 2, 15) == pytest.approx(0.07, rel=1e-9)


class TestPrediction:
    def test_zero_noncentrality_is_alpha(self):
        g = case_b.threshold_from_alpha(0.05, 1, 10)
        assert case_b.predicted_detection_probability(g, 1, 10, 0.0) == pytest.approx(0.05, abs=1e-10)

    def test_monte_carlo(self):
        g = case_b.threshold_from_alpha(0.05, 1, 10)
        gen = rng_stream(7)
        draws = (gen.noncentral_chisquare(2, 10.0, 10**6) / 2) / (gen.chisquare(8, 10**6) / 8)
        assert case_b.predicted_detection_probability(g, 1, 10, 10.0) == pytest.approx(np.mean(draws > g), abs=0.005)

    def test_monotone_to_one(self):
        g = case_b.threshold_from_alpha(0.05, 1, 10)
        vals = np.array([case_b.predicted_detection_probability(g, 1, 10, lam) for lam in range(0, 300, 10)])
        assert np.all(np.diff(vals) > -1e-12)
        assert vals[-1] > 0.9999

    def test_invalid_dof(self):
        with pytest.raises(ConfigurationError):
            case_b.predicted_detection_probability(1.0, 3, 4, 1.0)

    def test_periodogram_noncentrality(self):
        assert case_b.periodogram_noncentrality(np.array([1.0, 2.0]), 2.0, 70) == pytest.approx(70 * 5 / 4)


class TestDetect:
    def test_h0_false_alarm_rate(self):
        m = case_b.SubspaceModel.monomial(10, 1)
        z = rng_stream(8).standard_normal((10_000, 10))
        t = case_b.matched_subspace_statistic(z, m)
        rate = np.mean(t > case_b.threshold_from_alpha(0.1, 1, 10))
        assert abs(rate - 0.1) < 3 * math.sqrt(0.09 / 10_000)

    def test_strong_signal(self, rng):
        m = case_b.SubspaceModel.monomial(10, 1)
        res = case_b.detect(100 * m.basis[:, 0] + 0.01 * rng.standard_normal(10), m, 0.01)
        assert res.decision and not res.degenerate

    def test_degenerate_detects(self):
        m = case_b.SubspaceModel.monomial(10, 1)
        res = case_b.detect(m.basis[:, 1], m, 0.01)
        assert res.decision and res.degenerate and math.isinf(res.statistic)

    def test_accepts_frequency_observation(self):
        m = case_b.SubspaceModel.monomial(4, 0)
        obs = case_b.build_observation(np.ones((4, 3)) * np.array([[1], [2], [1], [2]]), (0, 3), sigma_w2_est=0.0)
        res = case_b.detect(obs, m, 0.1)
        assert res.statistic == pytest.approx(case_b.matched_subspace_statistic(obs.z, m))
