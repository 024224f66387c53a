"""Posterior law of (X_T, sigma) given the current information, and the bond price.

All weights are handled in log space.  The exponent carries the factor
``T / (T - t)``, which reaches 250 at ``t = 0.996 T``; exponentiating before
normalising overflows for moderately large ``xi``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from infoflow.errors import TimeAtOrPastHorizon
from infoflow.model import MarketModel, discount_to_maturity


def check_time(model: MarketModel, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t >= model.horizon):
        raise TimeAtOrPastHorizon(f"t must be < T = {model.horizon}")
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    return t


def log_joint_weights(model: MarketModel, t, xi) -> np.ndarray:
    """Unnormalised ``log p_ik(t, xi)`` with shape ``broadcast(t, xi) + (n, m)``.

    ``xi`` is ignored where ``t == 0`` (the information process starts at 0).
    """
    t = check_time(model, t)
    xi = np.asarray(xi, dtype=float)
    t, xi = np.broadcast_arrays(t, xi)
    xi = np.where(t == 0.0, 0.0, xi)
    a = model.x[:, None] * model.sigma[None, :]
    with np.errstate(divide="ignore"):
        log_prior = np.log(model.p)[:, None] + np.log(model.q)[None, :]
    c = (model.horizon / (model.horizon - t))[..., None, None]
    return log_prior + c * (a * xi[..., None, None] - 0.5 * a * a * t[..., None, None])


class Moments(NamedTuple):
    log_phi: np.ndarray        # log sum_ik p_ik(t, xi)
    weights: np.ndarray        # normalised joint posterior, (..., n, m)
    pi: np.ndarray             # marginal posterior of X_T, (..., n)
    mean_x: np.ndarray         # E[X_T | xi_t]
    mean_sx: np.ndarray        # E[sigma X_T | xi_t]
    cov: np.ndarray            # cov(X_T, sigma X_T | xi_t)


def conditional_moments(model: MarketModel, t, xi) -> Moments:
    """Vectorised posterior summaries over arrays of ``(t, xi)``."""
    logw = log_joint_weights(model, t, xi)
    top = np.max(logw, axis=(-2, -1), keepdims=True)
    w = np.exp(logw - top)
    total = w.sum(axis=(-2, -1), keepdims=True)
    # divide rather than subtract log-sums: exponents reach ~1e4 near T
    w = w / total
    log_phi = (top + np.log(total))[..., 0, 0]
    pi = w.sum(axis=-1)
    at_zero = np.broadcast_to(np.asarray(t) == 0.0, pi.shape[:-1])
    if np.any(at_zero):
        pi = np.where(at_zero[..., None], model.p, pi)
        log_phi = np.where(at_zero, 0.0, log_phi)
    x = model.x
    sx = x[:, None] * model.sigma[None, :]
    mean_x = pi @ x
    mean_sx = np.sum(w * sx, axis=(-2, -1))
    # centred form avoids cancellation when the posterior is concentrated
    dx = x[:, None] - mean_x[..., None, None]
    dsx = sx - mean_sx[..., None, None]
    cov = np.sum(w * dx * dsx, axis=(-2, -1))
    return Moments(log_phi, w, pi, mean_x, mean_sx, cov)


@dataclass(frozen=True)
class PosteriorState:
    t: float
    xi: float
    joint_log_weights: np.ndarray
    marginal_probs: np.ndarray
    cond_mean_X: float
    cond_mean_sigmaX: float
    cond_cov: float


def posterior(model: MarketModel, t: float, xi: float) -> PosteriorState:
    """Posterior state at a single ``(t, xi)``."""
    m = conditional_moments(model, float(t), float(xi))
    logw = log_joint_weights(model, float(t), float(xi))
    for arr in (logw, m.pi):
        arr.setflags(write=False)
    return PosteriorState(
        t=float(t),
        xi=0.0 if t == 0 else float(xi),
        joint_log_weights=logw,
        marginal_probs=m.pi,
        cond_mean_X=float(m.mean_x),
        cond_mean_sigmaX=float(m.mean_sx),
        cond_cov=float(m.cov),
    )


def bond_price(model: MarketModel, t, xi):
    """``P_tT E[X_T | xi_t]``; broadcasts over array inputs."""
    m = conditional_moments(model, t, xi)
    price = discount_to_maturity(model, t) * m.mean_x
    return float(price) if np.ndim(price) == 0 else price


def entropy_of(pi) -> np.ndarray:
    """Shannon entropy along the last axis with ``0 ln 0 = 0``."""
    pi = np.asarray(pi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pi > 0, pi * np.log(np.where(pi > 0, pi, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def entropy(state: PosteriorState) -> float:
    return float(entropy_of(state.marginal_probs))


def terminal_limit_check(path, model: MarketModel, delta: float = 0.05) -> bool:
    """Whether the posterior at the last grid point puts ``>= 1 - delta`` on the realised cash value."""
    t = path.grid.points[-1]
    pi = conditional_moments(model, t, path.xi[-1]).pi
    hit = np.isclose(model.x, path.scenario_cash, rtol=0, atol=0)
    return bool(pi[hit].sum() >= 1.0 - delta)
