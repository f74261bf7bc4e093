import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relform import CovarianceSpec, NoiseStream, NotPositiveDefinite, build_covariance, sample_gaussian


class TestBuildCovariance:
    def test_uncorrelated_is_identity(self):
        assert np.array_equal(build_covariance(CovarianceSpec(2, 1.0, 0.0)), np.eye(2))

    def test_formula_evaluation(self):
        expected = np.array([[0.01, 0.005], [0.005, 0.01]])
        assert np.allclose(build_covariance(CovarianceSpec(2, 0.1, 0.5)), expected, atol=1e-18)

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(min_value=1, max_value=30),
        st.floats(min_value=0.01, max_value=10.0),
        st.floats(min_value=0.0, max_value=0.99),
    )
    def test_minimum_eigenvalue_oracle(self, dim, sigma, rho):
        mat = build_covariance(CovarianceSpec(dim, sigma, rho))
        eigvals = np.linalg.eigvalsh(mat)
        if dim > 1:
            assert eigvals[0] == pytest.approx(sigma**2 * (1 - rho), rel=1e-9)
        assert eigvals[0] > 0
        np.linalg.cholesky(mat)  # must not raise

    def test_exactly_symmetric_storage(self):
        mat = build_covariance(CovarianceSpec(7, 0.3, 0.8))
        assert np.array_equal(mat, mat.T)

    def test_rho_out_of_range(self):
        with pytest.raises(NotPositiveDefinite):
            build_covariance(CovarianceSpec(3, 1.0, 1.0))
        with pytest.raises(NotPositiveDefinite):
            build_covariance(CovarianceSpec(3, 1.0, -0.1))

    def test_zero_sigma_allowed(self):
        assert np.array_equal(build_covariance(CovarianceSpec(3, 0.0, 0.5)), np.zeros((3, 3)))

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            build_covariance(CovarianceSpec(3, -1.0, 0.0))


class TestSampling:
    def test_zero_covariance_returns_mean_exactly(self):
        stream = NoiseStream(1, "process")
        mean = np.array([1.5, -2.0])
        out = sample_gaussian(mean, np.zeros((2, 2)), stream)
        assert np.array_equal(out, mean)

    def test_reproducible_across_streams_with_equal_keys(self):
        a = NoiseStream(77, "measurement")
        b = NoiseStream(77, "measurement")
        cov = build_covariance(CovarianceSpec(3, 0.5, 0.2))
        for _ in range(5):
            assert np.array_equal(
                sample_gaussian(np.zeros(3), cov, a), sample_gaussian(np.zeros(3), cov, b)
            )

    def test_distinct_stream_ids_differ(self):
        a = NoiseStream(77, "process")
        b = NoiseStream(77, "measurement")
        cov = np.eye(2)
        assert not np.array_equal(
            sample_gaussian(np.zeros(2), cov, a), sample_gaussian(np.zeros(2), cov, b)
        )

    def test_sample_mean_statistical_oracle(self):
        n = 10**5
        stream = NoiseStream(5, "measurement")
        cov = build_covariance(CovarianceSpec(2, 0.7, 0.4))
        mean = np.array([2.0, -1.0])
        draws = np.array([sample_gaussian(mean, cov, stream) for _ in range(n)])
        tol = 4 * 0.7 / np.sqrt(n)
        assert np.all(np.abs(draws.mean(axis=0) - mean) < tol)

    def test_sample_covariance_statistical_oracle(self):
        n = 10**5
        stream = NoiseStream(6, "process")
        cov = build_covariance(CovarianceSpec(3, 1.3, 0.6))
        draws = np.array([sample_gaussian(np.zeros(3), cov, stream) for _ in range(n)])
        sample_cov = np.cov(draws.T)
        assert np.linalg.norm(sample_cov - cov) < 0.05 * np.linalg.norm(cov)

    def test_non_psd_covariance_rejected(self):
        stream = NoiseStream(2, "process")
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(NotPositiveDefinite):
            sample_gaussian(np.zeros(2), bad, stream)

    def test_dimension_mismatch_rejected(self):
        stream = NoiseStream(2, "process")
        with pytest.raises(ValueError):
            sample_gaussian(np.zeros(3), np.eye(2), stream)

    def test_bulk_draws_match_sequential_draws(self):
        # The generator consumes values sequentially, so one (n, d) draw
        # must equal n consecutive d-draws; the batched simulator paths
        # rely on this.
        a = NoiseStream(9, "init")
        b = NoiseStream(9, "init")
        bulk = a.standard_normal((4, 3))
        seq = np.array([b.standard_normal(3) for _ in range(4)])
        assert np.array_equal(bulk, seq)
