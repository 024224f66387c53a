"""Market model definition, measurability validation and source aggregation.

A market model couples a discrete law for the terminal cash flow ``X_T`` with
an independent discrete law for the information flow rate ``sigma``.  The
market observes ``xi_t = sigma * X_T * t + beta_t`` where ``beta`` is a
Brownian bridge pinned at 0 and ``T``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from infoflow.errors import BadInterval, InvalidModel, NegativeEffectiveRate

PROB_TOL = 1e-12
COLLISION_RTOL = 1e-12


@dataclass(frozen=True)
class MarketModel:
    """Discrete cash-flow law, discrete flow-rate law, horizon and flat rate.

    Attributes
    ----------
    cash_values, cash_probs
        Support ``x_i`` (strictly increasing) and a priori probabilities ``p_i``.
    flow_values, flow_probs
        Support ``sigma_k`` (pairwise distinct) and probabilities ``q_k``.
    horizon
        Bond maturity ``T`` in years.
    short_rate
        Continuously compounded flat rate ``r``; ``P_tT = exp(-r (T - t))``.
    """

    cash_values: tuple[float, ...]
    cash_probs: tuple[float, ...]
    flow_values: tuple[float, ...]
    flow_probs: tuple[float, ...]
    horizon: float
    short_rate: float = 0.0

    def __post_init__(self):
        for name in ("cash_values", "cash_probs", "flow_values", "flow_probs"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "short_rate", float(self.short_rate))
        self._validate()

    def _validate(self):
        if len(self.cash_values) == 0 or len(self.flow_values) == 0:
            raise InvalidModel("cash and flow laws must be non-empty")
        if len(self.cash_values) != len(self.cash_probs):
            raise InvalidModel("cash_values and cash_probs differ in length")
        if len(self.flow_values) != len(self.flow_probs):
            raise InvalidModel("flow_values and flow_probs differ in length")
        for name, probs in (("cash_probs", self.cash_probs), ("flow_probs", self.flow_probs)):
            if any(not (0.0 <= p <= 1.0) for p in probs):
                raise InvalidModel(f"{name} entries must lie in [0, 1]")
            if abs(math.fsum(probs) - 1.0) > PROB_TOL:
                raise InvalidModel(f"{name} must sum to 1 (got {math.fsum(probs)!r})")
        if any(b <= a for a, b in zip(self.cash_values, self.cash_values[1:])):
            raise InvalidModel("cash_values must be strictly increasing")
        if len(set(self.flow_values)) != len(self.flow_values):
            raise InvalidModel("flow_values must be pairwise distinct")
        if not all(math.isfinite(v) for v in self.cash_values + self.flow_values):
            raise InvalidModel("cash and flow values must be finite")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InvalidModel("horizon must be positive")

    # numpy views used by the numerical modules
    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.cash_values)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.cash_probs)

    @property
    def sigma(self) -> np.ndarray:
        return np.asarray(self.flow_values)

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self.flow_probs)

    @property
    def n_cash(self) -> int:
        return len(self.cash_values)

    @property
    def n_flow(self) -> int:
        return len(self.flow_values)

    def mean_cash(self) -> float:
        return float(np.dot(self.p, self.x))

    def mean_flow(self) -> float:
        return float(np.dot(self.q, self.sigma))

    def cash_support(self) -> np.ndarray:
        """Cash values carrying positive prior mass."""
        return self.x[self.p > 0]

    def with_flow(self, values: Sequence[float], probs: Sequence[float] | None = None) -> "MarketModel":
        """Copy of the model with the flow-rate law replaced.

        A single value with no probabilities gives the constant-rate model.
        """
        values = tuple(values)
        if probs is None:
            if len(values) != 1:
                raise InvalidModel("probs required for more than one flow value")
            probs = (1.0,)
        return replace(self, flow_values=tuple(values), flow_probs=tuple(probs))

    def with_constant_flow(self, sigma: float) -> "MarketModel":
        return self.with_flow((float(sigma),))

    def to_dict(self) -> dict:
        return {
            "cash_values": list(self.cash_values),
            "cash_probs": list(self.cash_probs),
            "flow_values": list(self.flow_values),
            "flow_probs": list(self.flow_probs),
            "horizon": self.horizon,
            "short_rate": self.short_rate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MarketModel":
        try:
            return cls(
                cash_values=data["cash_values"],
                cash_probs=data["cash_probs"],
                flow_values=data["flow_values"],
                flow_probs=data["flow_probs"],
                horizon=data["horizon"],
                short_rate=data.get("short_rate", 0.0),
            )
        except KeyError as exc:
            raise InvalidModel(f"missing model field {exc.args[0]!r}") from None
        except TypeError as exc:
            raise InvalidModel(str(exc)) from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MarketModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MeasurabilityReport:
    is_measurable: bool
    collisions: list = field(default_factory=list)

    def describe(self) -> str:
        if self.is_measurable:
            return "measurable: no terminal-information collisions"
        lines = ["NOT measurable: X_T cannot be recovered from xi_T for"]
        for (xa, sa), (xb, sb) in self.collisions:
            lines.append(
                f"  (x={xa:g}, sigma={sa:g}) and (x={xb:g}, sigma={sb:g}) -> xi_T = {sa * xa:g} T"
            )
        return "\n".join(lines)


def find_collisions(cash_values: Sequence[float], flow_values: Sequence[float]) -> list:
    """Pairs of (cash, flow) outcomes sharing a terminal product but not a cash value.

    Order of the inputs is irrelevant to whether collisions exist; each
    colliding pair is listed once, as ``((x_a, s_a), (x_b, s_b))`` with the
    first element preceding the second in input order.
    """
    outcomes = [(float(x), float(s)) for x in cash_values for s in flow_values]
    collisions = []
    for (xa, sa), (xb, sb) in itertools.combinations(outcomes, 2):
        if xa == xb:
            continue
        a, b = sa * xa, sb * xb
        if abs(a - b) <= COLLISION_RTOL * max(abs(a), abs(b)):
            collisions.append(((xa, sa), (xb, sb)))
    return collisions


def validate_measurability(model: MarketModel) -> MeasurabilityReport:
    """Check that distinct cash values never produce the same terminal information."""
    collisions = find_collisions(model.cash_values, model.flow_values)
    return MeasurabilityReport(is_measurable=not collisions, collisions=collisions)


@dataclass(frozen=True)
class SourceSpec:
    """Several information sources on the same cash flow with correlated noise."""

    source_rates: tuple[float, ...]
    noise_correlation: np.ndarray

    def __post_init__(self):
        rates = tuple(float(s) for s in self.source_rates)
        rho = np.array(self.noise_correlation, dtype=float, ndmin=2)
        object.__setattr__(self, "source_rates", rates)
        object.__setattr__(self, "noise_correlation", rho)
        n = len(rates)
        if n == 0:
            raise InvalidModel("at least one information source is required")
        if rho.shape != (n, n):
            raise InvalidModel(f"correlation matrix must be {n}x{n}, got {rho.shape}")
        if np.max(np.abs(rho - rho.T)) > 1e-12:
            raise InvalidModel("correlation matrix must be symmetric")
        if np.max(np.abs(np.diag(rho) - 1.0)) > 1e-12:
            raise InvalidModel("correlation matrix must have unit diagonal")
        if np.min(np.linalg.eigvalsh(rho)) <= 0:
            raise InvalidModel("correlation matrix must be positive definite")


EFFECTIVE_RATE_FORMULAS = ("as_printed", "quadratic_form")


def effective_flow_rate(spec: SourceSpec, formula: str = "as_printed") -> float:
    """Flow rate of the single information process equivalent to several sources.

    ``formula="as_printed"`` evaluates

        (sum_i s_i^2 R_ii - 2 sum_{i != j} s_i s_j R_ij) / det(rho)

    with ``R = inv(rho)``.  ``formula="quadratic_form"`` evaluates the
    precision-weighted ``s^T R s``.  Both coincide for diagonal ``rho``.
    """
    s = np.asarray(spec.source_rates)
    rho = spec.noise_correlation
    inv = np.linalg.inv(rho)
    if formula == "as_printed":
        diag = float(np.sum(s**2 * np.diag(inv)))
        off = float(s @ inv @ s) - diag
        value = (diag - 2.0 * off) / float(np.linalg.det(rho))
    elif formula == "quadratic_form":
        value = float(s @ inv @ s)
    else:
        raise ValueError(f"unknown formula {formula!r}; expected one of {EFFECTIVE_RATE_FORMULAS}")
    if value < 0:
        raise NegativeEffectiveRate(f"squared effective rate is negative ({value!r})")
    return math.sqrt(value)


def discount(model: MarketModel, from_t: float, to_t: float) -> float:
    """Deterministic discount factor exp(-r (to_t - from_t))."""
    if from_t > to_t:
        raise BadInterval(f"from_t={from_t} exceeds to_t={to_t}")
    if from_t < 0 or to_t > model.horizon:
        raise BadInterval(f"interval [{from_t}, {to_t}] outside [0, {model.horizon}]")
    return math.exp(-model.short_rate * (to_t - from_t))


def discount_to_maturity(model: MarketModel, t):
    """Vectorised ``P_tT`` for times ``t`` (array or scalar), no range checks."""
    return np.exp(-model.short_rate * (model.horizon - np.asarray(t, dtype=float)))
