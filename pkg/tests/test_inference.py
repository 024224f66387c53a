import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from infoflow.errors import TimeAtOrPastHorizon
from infoflow.inference import (
    bond_price,
    conditional_moments,
    entropy,
    entropy_of,
    posterior,
    terminal_limit_check,
)
from infoflow.model import MarketModel
from infoflow.paths import TimeGrid, make_ensemble, information_path

from oracles import ConstantRateBHM, bayes_posterior


class TestPosterior:
    def test_time_zero_ignores_xi(self, binary_model):
        for xi in (-5.0, 0.0, 3.3):
            st_ = posterior(binary_model, 0.0, xi)
            assert np.array_equal(st_.marginal_probs, binary_model.p)
            assert st_.xi == 0.0

    def test_single_flow_matches_constant_rate_formula(self):
        m = MarketModel([0, 1], [0.2, 0.8], [0.7], [1.0], 1.0)
        ref = ConstantRateBHM(m.x, m.p, 0.7, 1.0)
        for t in np.linspace(0, 0.99, 12):
            for xi in np.linspace(-2, 2, 12):
                assert np.max(np.abs(posterior(m, t, xi).marginal_probs - ref.posterior(t, xi))) <= 1e-12

    def test_mixture_oracle_point(self, binary_model):
        got = posterior(binary_model, 0.5, 0.3).marginal_probs
        ref = bayes_posterior(binary_model.x, binary_model.p, binary_model.sigma, binary_model.q, 1.0, 0.5, 0.3)
        assert np.max(np.abs(got - ref)) <= 1e-12

    def test_moments_are_consistent(self, binary_model):
        s = posterior(binary_model, 0.4, 0.25)
        w = np.exp(s.joint_log_weights - s.joint_log_weights.max())
        w /= w.sum()
        sx = binary_model.x[:, None] * binary_model.sigma[None, :]
        assert s.cond_mean_X == pytest.approx(float(w.sum(axis=1) @ binary_model.x), abs=1e-15)
        assert s.cond_mean_sigmaX == pytest.approx(float(np.sum(w * sx)), abs=1e-15)
        raw = float(np.sum(w * binary_model.x[:, None] * sx)) - s.cond_mean_X * s.cond_mean_sigmaX
        assert s.cond_cov == pytest.approx(raw, abs=1e-14)

    def test_state_is_read_only(self, binary_model):
        s = posterior(binary_model, 0.4, 0.25)
        with pytest.raises(ValueError):
            s.marginal_probs[0] = 1.0

    def test_horizon_rejected(self, binary_model):
        with pytest.raises(TimeAtOrPastHorizon):
            posterior(binary_model, 1.0, 0.0)
        with pytest.raises(TimeAtOrPastHorizon):
            bond_price(binary_model, 1.5, 0.0)

    def test_normalisation_on_stress_grid(self):
        m = MarketModel([0, 0.3, 1], [0.2, 0.3, 0.5], [0.5, 0.9, 2.0], [0.3, 0.3, 0.4], 2.0)
        lim = 10 * 2.0 * 1.0 * 2.0
        t = np.array([0.0, 0.5, 1.0, 1.9, 0.996 * 2.0])[:, None]
        xi = np.linspace(-lim, lim, 401)[None, :]
        pi = conditional_moments(m, t, xi).pi
        assert np.all(np.isfinite(pi)) and np.all((pi >= 0) & (pi <= 1))
        assert np.max(np.abs(pi.sum(axis=-1) - 1)) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.0, 0.995), st.floats(-50, 50))
    def test_normalisation_property(self, t, xi):
        m = MarketModel([0, 0.5, 1], [0.1, 0.15, 0.75], [0.3, 2.7], [0.5, 0.5], 1.0)
        pi = posterior(m, t, xi).marginal_probs
        assert abs(pi.sum() - 1) <= 1e-12 and np.all(pi >= 0)

    def test_markov_property(self, binary_model):
        """The posterior given the whole observed path equals the posterior given its last value."""
        m = binary_model
        pts = np.array([0.1, 0.3, 0.45, 0.7, 0.9])
        cov = np.minimum.outer(pts, pts) - np.outer(pts, pts) / m.horizon
        grid = TimeGrid(np.concatenate([[0.0], pts]), m.horizon)
        for seed in range(5):
            xi = information_path(m, grid, seed).xi[1:]
            logs = np.array([[math.log(p) + math.log(q) + multivariate_normal.logpdf(xi, s * x * pts, cov)
                              for s, q in zip(m.sigma, m.q)] for x, p in zip(m.x, m.p)])
            w = np.exp(logs - logs.max())
            path_post = w.sum(axis=1) / w.sum()
            assert np.max(np.abs(path_post - posterior(m, pts[-1], xi[-1]).marginal_probs)) <= 1e-10

    def test_vectorised_matches_scalar(self, binary_model):
        t = np.array([0.0, 0.2, 0.7])
        xi = np.array([0.1, -0.4, 1.3])
        vec = conditional_moments(binary_model, t, xi)
        for j in range(3):
            s = posterior(binary_model, t[j], xi[j])
            assert np.array_equal(vec.pi[j], s.marginal_probs)


class TestBondPrice:
    def test_prior_mean_at_zero(self, binary_model):
        assert bond_price(binary_model, 0.0, 0.0) == pytest.approx(0.8, abs=1e-15)

    def test_discounting(self):
        m = MarketModel([0, 1], [0.2, 0.8], [0.6, 0.8], [0.5, 0.5], 2.0, 0.05)
        assert bond_price(m, 0.5, 0.0) == pytest.approx(math.exp(-0.05 * 1.5) * posterior(m, 0.5, 0.0).cond_mean_X)

    def test_constant_rate_reduction(self):
        m = MarketModel([0, 1], [0.2, 0.8], [0.3, 0.7], [0.0, 1.0], 1.0, 0.02)
        ref = ConstantRateBHM(m.x, m.p, 0.7, 1.0, 0.02)
        for t in (0.0, 0.3, 0.9):
            for xi in (-1.0, 0.2, 1.5):
                assert abs(bond_price(m, t, xi) - ref.price(t, xi)) <= 1e-12

    def test_limit_large_xi(self, binary_model):
        assert bond_price(binary_model, 0.5, 50.0) == pytest.approx(1.0, abs=1e-12)
        assert bond_price(binary_model, 0.5, -50.0) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("model", [
        MarketModel([0, 1], [0.2, 0.8], [0.3, 2.7], [0.5, 0.5], 1.0),
        MarketModel([0, 0.4, 1], [0.3, 0.3, 0.4], [1.3], [1.0], 1.0),
    ])
    def test_increasing_in_xi(self, model):
        xi = np.linspace(-2, 3, 2001)
        for t in (0.1, 0.5, 0.95):
            b = bond_price(model, np.full_like(xi, t), xi)
            d = np.diff(b)
            assert np.all(d >= -4e-16)  # rounding once saturated
            assert np.all(d[b[1:] < 1 - 1e-9] > 0)

    def test_flow_mixture_can_break_monotonicity(self):
        # x = 0.4 at the fast rate outweighs x = 1 at the slow rate around xi = 1
        m = MarketModel([0, 0.4, 1], [0.3, 0.3, 0.4], [0.3, 2.7], [0.5, 0.5], 1.0)
        assert bond_price(m, 0.95, 1.0) < bond_price(m, 0.95, 0.7)


class TestEntropy:
    @pytest.mark.parametrize("pi, expected", [((1.0, 0.0), 0.0), ((0.5, 0.5), math.log(2)),
                                              ((0.2, 0.8), 0.5004024235381879)])
    def test_values(self, pi, expected):
        assert float(entropy_of(pi)) == pytest.approx(expected, abs=1e-15)

    def test_paper_prior_rounded(self):
        assert round(float(entropy_of((0.2, 0.8))), 6) == 0.500402

    def test_state(self, binary_model):
        assert entropy(posterior(binary_model, 0.0, 0.0)) == pytest.approx(0.5004024235381879)


class TestTerminalLimit:
    def test_fraction_of_paths(self, binary_model):
        g = TimeGrid.uniform(1.0, 100)
        ens = make_ensemble(binary_model, g, 5000, master_seed=12)
        hits = [terminal_limit_check(p, binary_model) for p in ens if p.scenario_cash == 1.0 and p.scenario_flow == 0.8]
        assert len(hits) > 1000
        assert np.mean(hits) >= 0.95

    def test_grid_at_zero(self, binary_model):
        p = information_path(binary_model, TimeGrid([0.0], 1.0), 1)
        assert terminal_limit_check(p, binary_model) is False

    def test_degenerate_prior(self):
        m = MarketModel([0, 1], [0.0, 1.0], [0.6, 0.8], [0.5, 0.5], 1.0)
        g = TimeGrid.uniform(1.0, 10)
        assert all(terminal_limit_check(information_path(m, g, s), m) for s in range(20))
