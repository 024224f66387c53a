"""Fisher information of the constant-rate model with respect to the flow rate.

Only the cash law, horizon and rate of the supplied model are used; the flow
rate is the explicit ``sigma`` argument.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.integrate import IntegrationWarning

from infoflow.errors import QuadratureFailure
from infoflow.inference import check_time, log_joint_weights
from infoflow.io import write_csv
from infoflow.model import MarketModel
from infoflow.paths import _generator


def _constant_posterior(model: MarketModel, sigma, t, xi) -> np.ndarray:
    logw = log_joint_weights(model.with_constant_flow(sigma), t, xi)[..., 0]
    logw = logw - np.max(logw, axis=-1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=-1, keepdims=True)


def _score_terms(model: MarketModel, sigma, t, xi) -> np.ndarray:
    """``x_i xi - sigma x_i^2 t`` for every cash value (last axis)."""
    x = model.x
    t = np.asarray(t, dtype=float)[..., None]
    xi = np.asarray(xi, dtype=float)[..., None]
    return x * xi - sigma * x * x * t


def posterior_sigma_derivative(model: MarketModel, sigma: float, t, xi) -> np.ndarray:
    """Closed-form ``d pi_i / d sigma`` of the constant-rate posterior."""
    t = check_time(model, t)
    xi = np.where(t == 0, 0.0, xi)
    pi = _constant_posterior(model, sigma, t, xi)
    d = _score_terms(model, sigma, t, xi)
    dbar = np.sum(pi * d, axis=-1, keepdims=True)
    c = (model.horizon / (model.horizon - t))[..., None]
    return c * pi * (d - dbar)


def fisher_direct(model: MarketModel, sigma: float, t, xi):
    """``g_t(sigma) = sum_i (d pi_i / d sigma)^2 / pi_i``; zero-mass outcomes contribute 0."""
    t = check_time(model, t)
    xi = np.where(t == 0, 0.0, xi)
    pi = _constant_posterior(model, sigma, t, xi)
    dpi = posterior_sigma_derivative(model, sigma, t, xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pi > 0, dpi * dpi / np.where(pi > 0, pi, 1.0), 0.0)
    g = terms.sum(axis=-1)
    return float(g) if np.ndim(g) == 0 else g


FISHER_PREFACTORS = ("unit", "as_printed")


def fisher_variance_form(model: MarketModel, sigma: float, t, xi, prefactor: str = "unit"):
    """Fisher information as a scaled conditional variance of ``X_T beta_t``.

    Given ``xi_t``, outcome ``i`` implies ``beta_t = xi_t - sigma x_i t``; the
    variance of ``x_i beta_t`` under the posterior is scaled by
    ``(T / (T - t))^2``.  ``prefactor="as_printed"`` multiplies in an extra
    ``sigma * t`` (which breaks agreement with :func:`fisher_direct` unless
    ``sigma t = 1``).
    """
    t = check_time(model, t)
    xi = np.where(t == 0, 0.0, xi)
    pi = _constant_posterior(model, sigma, t, xi)
    beta = np.asarray(xi, dtype=float)[..., None] - sigma * model.x * np.asarray(t)[..., None]
    prod = model.x * beta
    mean = np.sum(pi * prod, axis=-1, keepdims=True)
    var = np.sum(pi * (prod - mean) ** 2, axis=-1)
    c = model.horizon / (model.horizon - t)
    g = c * c * var
    if prefactor == "as_printed":
        g = sigma * t * g
    elif prefactor != "unit":
        raise ValueError(f"prefactor must be one of {FISHER_PREFACTORS}")
    return float(g) if np.ndim(g) == 0 else g


def simulate_terminal_info(model: MarketModel, sigma: float, t: float, n_paths: int, rng) -> np.ndarray:
    """Draws of ``xi_t`` under the constant-rate model (exact marginal law)."""
    v = t * (model.horizon - t) / model.horizon
    x = rng.choice(model.x, size=n_paths, p=model.p)
    return sigma * x * t + np.sqrt(v) * rng.standard_normal(n_paths)


def expected_fisher(model: MarketModel, sigma: float, t: float, n_paths: int, seed: int) -> tuple[float, float]:
    """Monte Carlo mean of ``g_t(sigma)`` over paths simulated at ``sigma``, with its standard error."""
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    check_time(model, t)
    if t == 0:
        return 0.0, 0.0
    xi = simulate_terminal_info(model, sigma, t, n_paths, _generator(seed))
    g = fisher_direct(model, sigma, np.full(n_paths, t), xi)
    return float(g.mean()), float(g.std(ddof=1) / np.sqrt(n_paths))


@dataclass(frozen=True)
class FisherCurve:
    sigma_grid: np.ndarray
    t_grid: np.ndarray
    expected_g: np.ndarray
    std_err: np.ndarray
    n_paths: int

    def to_csv(self, path):
        rows = ((s, t, self.expected_g[a, b], self.std_err[a, b])
                for a, s in enumerate(self.sigma_grid) for b, t in enumerate(self.t_grid))
        return write_csv(path, ["sigma", "t", "expected_g", "std_err"], rows)


def fisher_surface(model: MarketModel, sigmas, times, n_paths: int, seed: int) -> FisherCurve:
    """``E[g_t(sigma)]`` on a (sigma, t) grid; every node reuses ``seed``."""
    sigmas = np.asarray(sigmas, dtype=float)
    times = np.asarray(times, dtype=float)
    g = np.zeros((sigmas.size, times.size))
    se = np.zeros_like(g)
    for a, s in enumerate(sigmas):
        for b, t in enumerate(times):
            g[a, b], se[a, b] = expected_fisher(model, s, t, n_paths, seed)
    return FisherCurve(sigmas, times, g, se, n_paths)


def rao_divergence(model: MarketModel, sigma_a: float, sigma_b: float, t: float, xi: float,
                   epsabs: float = 1e-8, limit: int = 200) -> float:
    """``int_{sigma_a}^{sigma_b} sqrt(g_t(u)) du`` by adaptive quadrature."""
    if sigma_a > sigma_b:
        raise ValueError("sigma_a must not exceed sigma_b")
    check_time(model, t)
    if sigma_a == sigma_b:
        return 0.0

    def integrand(u):
        return np.sqrt(fisher_direct(model, u, t, xi))

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, abserr = integrate.quad(integrand, sigma_a, sigma_b, epsabs=epsabs, epsrel=0.0, limit=limit)
        except IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from None
    if abserr > epsabs:
        raise QuadratureFailure(f"estimated error {abserr:.3g} exceeds {epsabs:g}")
    return float(value)
