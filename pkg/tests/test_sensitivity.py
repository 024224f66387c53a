import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoflow.errors import TimeAtOrPastHorizon
from infoflow.io import read_csv
from infoflow.model import MarketModel
from infoflow.sensitivity import (
    _constant_posterior,
    expected_fisher,
    fisher_direct,
    fisher_surface,
    fisher_variance_form,
    posterior_sigma_derivative,
    rao_divergence,
)

from oracles import ConstantRateBHM, trapezoid


@pytest.fixture
def degenerate():
    return MarketModel([0.0, 1.0], [0.0, 1.0], [1.0], [1.0], 1.0)


class TestFisher:
    def test_time_zero(self, three_value_model):
        assert fisher_direct(three_value_model, 0.8, 0.0, 0.3) == 0.0
        assert fisher_variance_form(three_value_model, 0.8, 0.0, 0.3) == 0.0
        assert np.all(posterior_sigma_derivative(three_value_model, 0.8, 0.0, 2.0) == 0.0)

    def test_degenerate_cash(self, degenerate):
        for t in (0.2, 0.9):
            assert fisher_direct(degenerate, 1.3, t, 0.4) == 0.0
            assert fisher_variance_form(degenerate, 1.3, t, 0.4) == pytest.approx(0.0, abs=1e-20)

    def test_horizon(self, three_value_model):
        with pytest.raises(TimeAtOrPastHorizon):
            fisher_direct(three_value_model, 1.0, 1.0, 0.0)

    def test_posterior_uses_cash_law_only(self, three_value_model):
        ref = ConstantRateBHM(three_value_model.x, three_value_model.p, 0.9, 1.0)
        assert np.allclose(_constant_posterior(three_value_model, 0.9, 0.4, 0.3), ref.posterior(0.4, 0.3), atol=1e-15)

    @settings(max_examples=80, deadline=None)
    @given(st.floats(0.05, 4.0), st.floats(0.01, 0.98), st.floats(-3.0, 5.0))
    def test_identity_and_nonnegativity(self, sigma, t, xi):
        m = MarketModel([0, 0.5, 1], [0.1, 0.15, 0.75], [1.0], [1.0], 1.0)
        g = fisher_direct(m, sigma, t, xi)
        assert g >= 0
        assert abs(g - fisher_variance_form(m, sigma, t, xi)) <= 1e-10 * max(1.0, g)

    def test_printed_prefactor_differs_by_sigma_t(self, three_value_model):
        """The variance form with a sigma*t prefactor is off by exactly that factor."""
        for sigma, t, xi in ((0.5, 0.3, 0.2), (1.5, 0.7, 1.1), (2.0, 0.9, -0.4)):
            unit = fisher_variance_form(three_value_model, sigma, t, xi)
            printed = fisher_variance_form(three_value_model, sigma, t, xi, prefactor="as_printed")
            assert printed == pytest.approx(sigma * t * unit, rel=1e-14)
            assert abs(printed - fisher_direct(three_value_model, sigma, t, xi)) > 1e-6

    def test_unknown_prefactor(self, three_value_model):
        with pytest.raises(ValueError):
            fisher_variance_form(three_value_model, 1.0, 0.5, 0.0, prefactor="squared")

    def test_derivative_finite_differences(self, three_value_model):
        h = 1e-5
        for s in np.linspace(0.2, 3.0, 8):
            for t in (0.05, 0.5, 0.95):
                for xi in np.linspace(-1, 2, 7):
                    exact = posterior_sigma_derivative(three_value_model, s, t, xi)
                    fd = (_constant_posterior(three_value_model, s + h, t, xi)
                          - _constant_posterior(three_value_model, s - h, t, xi)) / (2 * h)
                    # central differences carry ~eps/h absolute rounding error
                    assert np.linalg.norm(exact - fd) <= 1e-6 * np.linalg.norm(exact) + 1e-10

    def test_derivative_sums_to_zero(self, three_value_model):
        d = posterior_sigma_derivative(three_value_model, 1.1, 0.6, 0.4)
        assert abs(d.sum()) <= 1e-14


class TestExpectedFisher:
    def test_small_n_rejected(self, three_value_model):
        with pytest.raises(ValueError):
            expected_fisher(three_value_model, 1.0, 0.5, 50, 0)

    def test_time_zero(self, three_value_model):
        assert expected_fisher(three_value_model, 1.0, 0.0, 100, 0) == (0.0, 0.0)

    def test_small_time(self, three_value_model):
        g, _ = expected_fisher(three_value_model, 1.0, 1e-4, 1000, 0)
        assert 0 <= g < 1e-3

    def test_error_shrinks_with_paths(self, three_value_model):
        _, se1 = expected_fisher(three_value_model, 1.0, 0.5, 4000, 1)
        _, se2 = expected_fisher(three_value_model, 1.0, 0.5, 8000, 2)
        assert se2 / se1 == pytest.approx(1 / math.sqrt(2), rel=0.3)

    def test_deterministic(self, three_value_model):
        assert expected_fisher(three_value_model, 0.7, 0.5, 500, 9) == expected_fisher(three_value_model, 0.7, 0.5, 500, 9)

    def test_adjacent_ordering(self, three_value_model):
        sig = np.round(np.arange(0.1, 1.51, 0.1), 10)
        est = [expected_fisher(three_value_model, s, 0.5, 1000, 3) for s in sig]
        for (ga, sa), (gb, sb) in zip(est[:-1], est[1:]):
            assert gb - ga >= -2 * math.hypot(sa, sb)

    def test_surface(self, three_value_model, tmp_path):
        curve = fisher_surface(three_value_model, [0.5, 1.0], [0.0, 0.5], 200, 4)
        assert curve.expected_g.shape == (2, 2) and np.all(curve.expected_g >= 0)
        header, rows = read_csv(curve.to_csv(tmp_path / "f.csv"))
        assert header == ["sigma", "t", "expected_g", "std_err"] and len(rows) == 4


class TestRao:
    def test_empty_interval(self, three_value_model):
        assert rao_divergence(three_value_model, 0.7, 0.7, 0.5, 0.2) == 0.0

    def test_reversed_interval(self, three_value_model):
        with pytest.raises(ValueError):
            rao_divergence(three_value_model, 0.9, 0.5, 0.5, 0.2)

    def test_additivity(self, three_value_model):
        ab = rao_divergence(three_value_model, 0.3, 0.8, 0.5, 0.2)
        bc = rao_divergence(three_value_model, 0.8, 1.6, 0.5, 0.2)
        ac = rao_divergence(three_value_model, 0.3, 1.6, 0.5, 0.2)
        assert abs(ac - ab - bc) <= 1e-7

    def test_trapezoid_oracle(self, three_value_model):
        got = rao_divergence(three_value_model, 0.5, 0.9, 0.5, 0.2)
        ref = trapezoid(lambda u: math.sqrt(fisher_direct(three_value_model, u, 0.5, 0.2)), 0.5, 0.9, 10_000)
        assert abs(got - ref) <= 1e-6

    def test_monotone_in_endpoints(self, three_value_model):
        vals = [rao_divergence(three_value_model, 0.5, b, 0.5, 0.2) for b in (0.6, 0.8, 1.0, 1.5)]
        assert all(a < b for a, b in zip(vals[:-1], vals[1:]))
        lows = [rao_divergence(three_value_model, a, 1.5, 0.5, 0.2) for a in (0.2, 0.6, 1.0)]
        assert all(a > b for a, b in zip(lows[:-1], lows[1:]))
