import numpy as np
import pytest

from mimoq.numerics import RngStream
from mimoq.uncertainty import head_stats, lcb, royston_min_coefficient


class TestHeadStats:
    def test_basic(self):
        stats = head_stats([3.0, -1.0, 2.0, -1.0])
        assert stats.min == -1.0
        assert stats.argmin == 1  # ties break to the lowest index
        assert stats.mean == pytest.approx(0.75)

    def test_population_std(self):
        q = np.array([1.0, 2.0, 3.0, 4.0])
        stats = head_stats(q)
        assert stats.std == pytest.approx(np.sqrt(np.mean((q - 2.5) ** 2)))
        assert stats.std == pytest.approx(np.std(q))  # ddof=0

    def test_single_head(self):
        stats = head_stats([5.0])
        assert stats.min == 5.0 and stats.std == 0.0 and stats.argmin == 0

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            head_stats([])
        with pytest.raises(ValueError):
            head_stats([1.0, float("nan")])


class TestRoystonCoefficient:
    def test_k1_is_exactly_zero(self):
        assert royston_min_coefficient(1) == 0.0

    def test_monotone_increasing(self):
        vals = [royston_min_coefficient(k) for k in range(1, 30)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_against_monte_carlo_expected_min(self):
        # oracle: E[min of K standard normals] by Monte Carlo; the closed
        # form is an approximation so the tolerance is loose at small K
        rng = RngStream(123)
        for k, tol in ((1, 0.01), (10, 0.03), (20, 0.03)):
            draws = rng.standard_normal((200_000, k))
            mc = -float(draws.min(axis=1).mean())
            assert royston_min_coefficient(k) == pytest.approx(mc, abs=tol)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            royston_min_coefficient(0)


class TestLcb:
    def test_reduces_mean_by_scaled_std(self):
        c10 = royston_min_coefficient(10)
        assert lcb(2.0, 0.5, 10) == pytest.approx(2.0 - c10 * 0.5)

    def test_k1_is_mean(self):
        assert lcb(3.7, 9.0, 1) == 3.7

    def test_zero_sigma_is_mean(self):
        assert lcb(-1.2, 0.0, 15) == -1.2

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            lcb(0.0, -0.1, 5)
