"""European calls on the defaultable bond, the bridge measure and implied BHM volatility."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from infoflow.errors import (
    InfoFlowError,
    NoConvergence,
    NonPositiveFlowRate,
    StrikeOutOfRange,
    TargetOutOfRange,
)
from infoflow.inference import bond_price, conditional_moments
from infoflow.io import write_csv
from infoflow.model import MarketModel, discount
from infoflow.paths import InfoPath, PathEnsemble, TimeGrid, _generator

XI_TOL = 1e-12
PRICE_TOL = 1e-10
MAX_EXPANSIONS = 1100


@dataclass(frozen=True)
class OptionSpec:
    option_maturity: float
    strike: float

    def __post_init__(self):
        if not self.option_maturity > 0:
            raise ValueError("option maturity must be positive")
        if self.strike < 0:
            raise ValueError("strike must be non-negative")

    def check(self, model: MarketModel) -> None:
        if not self.option_maturity < model.horizon:
            raise ValueError(f"option maturity must be < T = {model.horizon}")


def _discounts(model: MarketModel, spec: OptionSpec) -> tuple[float, float]:
    spec.check(model)
    t = spec.option_maturity
    return discount(model, 0.0, t), discount(model, t, model.horizon)


def price_monotone_in_xi(model: MarketModel) -> bool:
    """Sufficient condition for ``B_tT`` to be increasing in ``xi`` at every ``t``.

    Holds when a single positive flow rate carries all the mass (the
    likelihood is then an exponential family in ``x``), or when the cash flow
    is binary with a zero low value and every flow rate is positive.  Mixtures
    over flow rates with three or more cash values can fail it.
    """
    sigma = model.sigma[model.q > 0]
    if np.any(sigma <= 0):
        return False
    support = model.cash_support()
    return sigma.size == 1 or support.size <= 1 or (support.size == 2 and support[0] == 0.0)


def critical_information(model: MarketModel, spec: OptionSpec) -> float:
    """The unique ``xi*`` with ``B_tT(xi*) = K``, by bracket expansion then bisection.

    Warns (``RuntimeWarning``) when :func:`price_monotone_in_xi` cannot
    guarantee the root is unique; the root found is then one of possibly
    several.
    """
    _, p_tt = _discounts(model, spec)
    if np.any(model.sigma[model.q > 0] <= 0):
        raise NonPositiveFlowRate("bond price is monotone in xi only for positive flow rates")
    if not price_monotone_in_xi(model):
        warnings.warn("bond price is not guaranteed monotone in xi for this model; "
                      "the critical level may not be unique", RuntimeWarning, stacklevel=2)
    support = model.cash_support()
    K, t = spec.strike, spec.option_maturity
    if not p_tt * support.min() < K < p_tt * support.max():
        raise StrikeOutOfRange(
            f"strike {K} outside attainable prices ({p_tt * support.min()}, {p_tt * support.max()})")

    def f(xi):
        return bond_price(model, t, xi) - K

    f0 = f(0.0)
    if f0 == 0.0:
        return 0.0
    step = 1.0 if f0 < 0 else -1.0
    near, far = 0.0, step
    for _ in range(MAX_EXPANSIONS):
        if (f(far) < 0) != (f0 < 0):
            break
        near, far = far, 2.0 * far
    else:
        raise NoConvergence("could not bracket the critical information level")
    lo, hi = (near, far) if near < far else (far, near)
    f_lo, f_hi = f(lo), f(hi)
    while hi - lo > XI_TOL:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if f_mid < 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return lo if abs(f_lo) <= abs(f_hi) else hi


def _degenerate_prices(model: MarketModel, spec: OptionSpec):
    """(call, put) when the strike lies outside the attainable bond-price range, else None."""
    p_0t, p_tt = _discounts(model, spec)
    support = model.cash_support()
    K = spec.strike
    forward = p_0t * (p_tt * model.mean_cash() - K)
    if K <= p_tt * support.min():
        return forward, 0.0
    if K >= p_tt * support.max():
        return 0.0, -forward
    return None


def _tail_terms(model: MarketModel, spec: OptionSpec):
    p_0t, p_tt = _discounts(model, spec)
    T, t, K = model.horizon, spec.option_maturity, spec.strike
    z_star = critical_information(model, spec) / math.sqrt(t * (T - t) / T)
    tau = t * T / (T - t)
    shift = math.sqrt(tau) * model.sigma[:, None] * model.x[None, :]
    weights = p_0t * model.q[:, None] * model.p[None, :] * (p_tt * model.x[None, :] - K)
    return weights, shift, z_star


def call_price_closed(model: MarketModel, spec: OptionSpec) -> float:
    """Closed-form call price as a Gaussian integral above the critical level."""
    degenerate = _degenerate_prices(model, spec)
    if degenerate is not None:
        return float(degenerate[0])
    weights, shift, z_star = _tail_terms(model, spec)
    return float(np.sum(weights * ndtr(shift - z_star)))


def put_price_closed(model: MarketModel, spec: OptionSpec) -> float:
    """Put on the bond, integrated below the critical level.

    Equal to ``call - P_0t (P_tT E[X_T] - K)`` but keeps full relative
    precision when the call is deep in the money.
    """
    degenerate = _degenerate_prices(model, spec)
    if degenerate is not None:
        return float(degenerate[1])
    weights, shift, z_star = _tail_terms(model, spec)
    return float(-np.sum(weights * ndtr(z_star - shift)))


def otm_kind(model: MarketModel, spec: OptionSpec) -> str:
    """``"put"`` when the call is in the money on the forward, else ``"call"``."""
    _, p_tt = _discounts(model, spec)
    return "put" if spec.strike < p_tt * model.mean_cash() else "call"


def bhm_call_price(model: MarketModel, sigma: float, spec: OptionSpec) -> float:
    """Call price under the constant-rate model with flow rate ``sigma``."""
    return call_price_closed(model.with_constant_flow(sigma), spec)


def bhm_put_price(model: MarketModel, sigma: float, spec: OptionSpec) -> float:
    return put_price_closed(model.with_constant_flow(sigma), spec)


def simulate_info_at(model: MarketModel, t: float, n_paths: int, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact draws of ``(X_T, sigma, xi_t)`` under the real-world construction."""
    x = rng.choice(model.x, size=n_paths, p=model.p)
    sigma = rng.choice(model.sigma, size=n_paths, p=model.q)
    z = rng.standard_normal(n_paths)
    v = t * (model.horizon - t) / model.horizon
    return x, sigma, sigma * x * t + math.sqrt(v) * z


def call_price_mc(model: MarketModel, spec: OptionSpec, n_paths: int, seed: int) -> tuple[float, float]:
    """Monte Carlo call price and standard error."""
    if n_paths < 1000:
        raise ValueError("n_paths must be at least 1000")
    p_0t, _ = _discounts(model, spec)
    t = spec.option_maturity
    _, _, xi = simulate_info_at(model, t, n_paths, _generator(seed))
    payoff = p_0t * np.maximum(bond_price(model, np.full(n_paths, t), xi) - spec.strike, 0.0)
    return float(payoff.mean()), float(payoff.std(ddof=1) / math.sqrt(n_paths))


PHI_SCHEMES = ("euler", "milstein")


@dataclass(frozen=True)
class PhiPath:
    grid: TimeGrid
    phi_inverse: np.ndarray
    phi_inverse_discrete: np.ndarray
    scheme: str = "euler"


def _phi_inverse(model: MarketModel, points: np.ndarray, xi: np.ndarray,
                 scheme: str = "euler") -> tuple[np.ndarray, np.ndarray]:
    if scheme not in PHI_SCHEMES:
        raise ValueError(f"scheme must be one of {PHI_SCHEMES}")
    T = model.horizon
    m = conditional_moments(model, points, xi)
    exact = np.exp(-m.log_phi)
    c = T / (T - points[:-1])
    drift = (xi[..., :-1] - T * m.mean_sx[..., :-1]) / (T - points[:-1])
    dt = np.diff(points)
    dw = np.diff(xi, axis=-1) + dt * drift
    theta = c * m.mean_sx[..., :-1]
    log_inc = -theta * dw - 0.5 * theta * theta * dt
    if scheme == "milstein":
        # d theta / d xi = c^2 var(sigma X | xi)
        sx = model.x[:, None] * model.sigma[None, :]
        var_sx = np.sum(m.weights * (sx - m.mean_sx[..., None, None]) ** 2, axis=(-2, -1))
        log_inc -= 0.5 * c * c * var_sx[..., :-1] * (dw * dw - dt)
    log_disc = np.zeros_like(xi)
    log_disc[..., 1:] = np.cumsum(log_inc, axis=-1)
    return exact, np.exp(log_disc)


def phi_inverse_path(path: InfoPath, model: MarketModel, scheme: str = "euler") -> PhiPath:
    """Density process of the bridge measure along a path.

    ``phi_inverse`` is the exact value ``1 / sum_ik p_ik(t, xi_t)``.
    ``phi_inverse_discrete`` integrates the stochastic-exponential form on
    the reconstructed innovations, with left-point Euler steps (strong order
    1/2) or with the Milstein correction (strong order 1).
    """
    exact, disc = _phi_inverse(model, path.grid.points, np.asarray(path.xi), scheme)
    return PhiPath(path.grid, exact, disc, scheme)


def ensemble_phi_inverse(ensemble: PathEnsemble, model: MarketModel,
                         scheme: str = "euler") -> tuple[np.ndarray, np.ndarray]:
    return _phi_inverse(model, ensemble.grid.points, ensemble.xi, scheme)


@dataclass(frozen=True)
class BridgeMeasureReport:
    t: float
    n_paths: int
    bridge_variance: float
    weight_mean: float
    weight_mean_se: float
    mean: float
    mean_se: float
    second_moment: float
    second_moment_se: float
    cash_freq: np.ndarray
    cash_freq_se: np.ndarray
    cash_probs: np.ndarray
    n_se: float = 4.0

    @property
    def mean_ok(self) -> bool:
        return abs(self.mean) <= self.n_se * self.mean_se

    @property
    def variance_ok(self) -> bool:
        return abs(self.second_moment - self.bridge_variance) <= self.n_se * self.second_moment_se

    @property
    def law_ok(self) -> bool:
        return bool(np.all(np.abs(self.cash_freq - self.cash_probs) <= self.n_se * self.cash_freq_se + 1e-15))

    @property
    def passed(self) -> bool:
        return self.mean_ok and self.variance_ok and self.law_ok


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def bridge_measure_check(model: MarketModel, t: float, n_paths: int, seed: int,
                         n_se: float = 4.0) -> BridgeMeasureReport:
    """Reweight real-world draws of ``xi_t`` by ``1/Phi_t`` and compare with a Brownian bridge.

    Moments of ``xi_t`` use ``1/Phi_t`` itself.  The law of ``X_T`` is not a
    function of ``xi_t``, so it is reweighted by the per-scenario density
    ``exp(-T/(T-t) (sigma X xi - sigma^2 X^2 t / 2))``, whose conditional
    expectation given ``xi_t`` is ``1/Phi_t``.  Its variance grows like
    ``exp(sigma^2 X^2 t T / (T - t))``, so the law check is only informative
    when that exponent is moderate.
    """
    if n_paths < 10_000:
        raise ValueError("n_paths must be at least 10,000")
    x, sigma, xi = simulate_info_at(model, t, n_paths, _generator(seed))
    w = np.exp(-conditional_moments(model, np.full(n_paths, t), xi).log_phi)
    wm, wm_se = _mean_se(w)
    m1, m1_se = _mean_se(w * xi)
    m2, m2_se = _mean_se(w * xi * xi)
    c = model.horizon / (model.horizon - t)
    w_full = np.exp(-c * (sigma * x * xi - 0.5 * (sigma * x) ** 2 * t))
    freq, freq_se = zip(*(_mean_se(w_full * (x == xv)) for xv in model.x))
    return BridgeMeasureReport(
        t=t, n_paths=n_paths, bridge_variance=t * (model.horizon - t) / model.horizon,
        weight_mean=wm, weight_mean_se=wm_se, mean=m1, mean_se=m1_se,
        second_moment=m2, second_moment_se=m2_se,
        cash_freq=np.array(freq), cash_freq_se=np.array(freq_se), cash_probs=model.p.copy(),
        n_se=n_se,
    )


def bhm_price_limits(template: MarketModel, spec: OptionSpec, kind: str = "call") -> tuple[float, float]:
    """Option prices of the constant-rate model as ``sigma -> 0`` and ``sigma -> inf``."""
    p_0t, p_tt = _discounts(template, spec)
    sign = {"call": 1.0, "put": -1.0}[kind]
    payoff_no_info = max(sign * (p_tt * template.mean_cash() - spec.strike), 0.0)
    payoff_full = np.maximum(sign * (p_tt * template.x - spec.strike), 0.0)
    return p_0t * payoff_no_info, p_0t * float(np.dot(template.p, payoff_full))


def implied_bhm_sigma(template: MarketModel, spec: OptionSpec, target_price: float,
                      sigma_init: float | None = None, kind: str = "call", max_iter: int = 300) -> float:
    """Constant flow rate whose option price equals ``target_price``.

    ``kind`` selects whether the target is a call or a put price; inverting
    the out-of-the-money side avoids losing the time value to rounding.
    Geometric bracket expansion around ``sigma_init`` is followed by
    bisection, relying on the constant-rate price increasing in sigma.
    """
    if kind not in ("call", "put"):
        raise ValueError("kind must be 'call' or 'put'")
    no_info, full_info = bhm_price_limits(template, spec, kind)
    if not no_info < target_price < full_info:
        raise TargetOutOfRange(
            f"target {target_price!r} not strictly inside ({no_info!r}, {full_info!r})")
    if sigma_init is None:
        sigma_init = template.mean_flow() if template.mean_flow() > 0 else 1.0
    pricer = bhm_call_price if kind == "call" else bhm_put_price

    def price(s):
        return pricer(template, s, spec)

    lo = hi = float(sigma_init)
    for _ in range(max_iter):
        if price(lo) <= target_price:
            break
        lo *= 0.5
    else:
        raise NoConvergence("could not bracket implied sigma from below")
    for _ in range(max_iter):
        if price(hi) >= target_price:
            break
        hi *= 2.0
    else:
        raise NoConvergence("could not bracket implied sigma from above")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * hi or mid in (lo, hi):
            break
        if price(mid) < target_price:
            lo = mid
        else:
            hi = mid
    sigma = 0.5 * (lo + hi)
    residual = abs(price(sigma) - target_price)
    if residual > PRICE_TOL:
        raise NoConvergence(f"price residual {residual:.3g} exceeds {PRICE_TOL:g}")
    return sigma


@dataclass(frozen=True)
class VolSurface:
    strikes: np.ndarray
    maturities: np.ndarray
    prices: np.ndarray              # (maturity, strike)
    implied_sigma: np.ndarray       # NaN where not converged
    convergence_flags: np.ndarray

    def to_csv(self, path):
        rows = ((t, k, self.prices[a, b], self.implied_sigma[a, b], bool(self.convergence_flags[a, b]))
                for a, t in enumerate(self.maturities) for b, k in enumerate(self.strikes))
        return write_csv(path, ["maturity", "strike", "price", "implied_sigma", "converged"], rows)


def vol_surface(model: MarketModel, strikes, maturities, bhm_template: MarketModel,
                sigma_init: float | None = None, workers: int = 1) -> VolSurface:
    """Implied constant flow rate at every (maturity, strike) node of the random-rate model."""
    strikes = np.asarray(strikes, dtype=float).reshape(-1)
    maturities = np.asarray(maturities, dtype=float).reshape(-1)
    nodes = [(t, k) for t in maturities for k in strikes]

    def solve(node):
        t, k = node
        spec = OptionSpec(t, k)
        price = call_price_closed(model, spec)
        try:
            kind = otm_kind(model, spec)
            target = price if kind == "call" else put_price_closed(model, spec)
            return price, implied_bhm_sigma(bhm_template, spec, target, sigma_init, kind), True
        except InfoFlowError:
            return price, math.nan, False

    if workers > 1 and len(nodes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, nodes))
    else:
        results = [solve(n) for n in nodes]
    shape = (maturities.size, strikes.size)
    prices = np.array([r[0] for r in results], dtype=float).reshape(shape)
    sig = np.array([r[1] for r in results], dtype=float).reshape(shape)
    flags = np.array([r[2] for r in results], dtype=bool).reshape(shape)
    return VolSurface(strikes, maturities, prices, sig, flags)
