"""Mutual information between the information process and the cash flow.

Two independent routes are provided: adaptive quadrature of the joint
density, and the entropy identity ``J = H_0 - E[H_t]`` estimated by Monte
Carlo.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.integrate import IntegrationWarning
from scipy.special import logsumexp

from infoflow.errors import QuadratureFailure
from infoflow.inference import check_time, conditional_moments, entropy_of
from infoflow.io import write_csv
from infoflow.model import MarketModel
from infoflow.paths import _generator

WINDOW_SDS = 8.0
DENSITY_FLOOR = 1e-300


def _bridge_variance(model: MarketModel, t: float) -> float:
    return t * (model.horizon - t) / model.horizon


def _require_interior(model: MarketModel, t: float) -> None:
    check_time(model, t)
    if t <= 0:
        raise ValueError("t must be strictly positive")


def _log_joint_density(model: MarketModel, t: float, x) -> np.ndarray:
    """``log rho(x, i)`` with cash index on the last axis."""
    v = _bridge_variance(model, t)
    x = np.asarray(x, dtype=float)[..., None, None]
    mu = model.x[:, None] * model.sigma[None, :] * t
    with np.errstate(divide="ignore"):
        log_prior = np.log(model.p)[:, None] + np.log(model.q)[None, :]
    log_norm = -0.5 * (x - mu) ** 2 / v - 0.5 * math.log(2 * math.pi * v)
    return logsumexp(log_prior + log_norm, axis=-1)


def joint_density(model: MarketModel, t: float, x, i: int):
    """Density in ``x`` of ``{xi_t in dx, X_T = x_i}``."""
    _require_interior(model, t)
    val = np.exp(_log_joint_density(model, t, x)[..., i])
    return float(val) if np.ndim(val) == 0 else val


def info_density(model: MarketModel, t: float, x):
    """Marginal density of ``xi_t`` (sum of the joint density over cash values)."""
    _require_interior(model, t)
    val = np.exp(logsumexp(_log_joint_density(model, t, x), axis=-1))
    return float(val) if np.ndim(val) == 0 else val


def _mi_integrand(model: MarketModel, t: float, x: float) -> float:
    logj = _log_joint_density(model, t, x)
    log_marg = logsumexp(logj)
    total = 0.0
    for i, p_i in enumerate(model.cash_probs):
        if p_i == 0.0 or logj[i] < math.log(DENSITY_FLOOR):
            continue
        total += math.exp(logj[i]) * (logj[i] - log_marg - math.log(p_i))
    return total


def mutual_info_quadrature(model: MarketModel, t: float, epsabs: float = 1e-7,
                           return_error: bool = False):
    """``J(xi_t, X_T)`` by adaptive quadrature over the mixture's support window."""
    _require_interior(model, t)
    s = math.sqrt(_bridge_variance(model, t))
    means = np.unique(model.x[:, None] * model.sigma[None, :] * t)
    lo, hi = means.min() - WINDOW_SDS * s, means.max() + WINDOW_SDS * s
    # split at the component means so every piece sees at most a couple of bumps
    knots = np.concatenate([[lo], means, [hi]])
    total, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        for a, b in zip(knots[:-1], knots[1:]):
            if b <= a:
                continue
            try:
                val, abserr = integrate.quad(lambda x: _mi_integrand(model, t, x), a, b,
                                             epsabs=epsabs / len(knots), epsrel=0.0, limit=200)
            except IntegrationWarning as exc:
                raise QuadratureFailure(str(exc)) from None
            total += val
            err += abserr
    if err > epsabs:
        raise QuadratureFailure(f"estimated error {err:.3g} exceeds {epsabs:g}")
    return (total, err) if return_error else total


def prior_entropy(model: MarketModel) -> float:
    return float(entropy_of(model.p))


def mutual_info_entropy(model: MarketModel, t: float, n_paths: int, seed: int) -> tuple[float, float]:
    """``H_0 - E[H_t]`` with ``E[H_t]`` estimated over ``n_paths`` draws of ``xi_t``."""
    if n_paths < 1000:
        raise ValueError("n_paths must be at least 1000")
    check_time(model, t)
    rng = _generator(seed)
    x = rng.choice(model.x, size=n_paths, p=model.p)
    sigma = rng.choice(model.sigma, size=n_paths, p=model.q)
    z = rng.standard_normal(n_paths)
    xi = sigma * x * t + math.sqrt(_bridge_variance(model, t)) * z
    h = entropy_of(conditional_moments(model, np.full(n_paths, t), xi).pi)
    return prior_entropy(model) - float(h.mean()), float(h.std(ddof=1) / math.sqrt(n_paths))


@dataclass(frozen=True)
class MutualInfoCurve:
    t: np.ndarray
    j_quadrature: np.ndarray
    quad_error: np.ndarray
    j_entropy: np.ndarray
    std_err: np.ndarray

    def to_csv(self, path):
        rows = zip(self.t, self.j_quadrature, self.j_entropy, self.std_err)
        return write_csv(path, ["t", "J_quadrature", "J_entropy", "std_err"], rows)


def mutual_info_curve(model: MarketModel, times, n_paths: int, seed: int) -> MutualInfoCurve:
    """Both routes on a list of times; the Monte Carlo route reuses ``seed`` at every time."""
    times = np.asarray(times, dtype=float)
    jq, qe, je, se = (np.zeros(times.size) for _ in range(4))
    for j, t in enumerate(times):
        jq[j], qe[j] = mutual_info_quadrature(model, t, return_error=True)
        je[j], se[j] = mutual_info_entropy(model, t, n_paths, seed)
    return MutualInfoCurve(times, jq, qe, je, se)
