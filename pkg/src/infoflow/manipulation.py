"""Price manipulation as pricing under a falsely announced flow rate.

The market is driven by the true flow rate, but prices are set with the
posterior computed under ``believed_flow``.  Both price paths are read off
the same information path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from infoflow.dynamics import conditional_skewness
from infoflow.errors import InvalidModel
from infoflow.inference import bond_price
from infoflow.io import write_csv
from infoflow.model import MarketModel
from infoflow.paths import TimeGrid, make_ensemble


@dataclass(frozen=True)
class ConjugateEnsembles:
    model_true: MarketModel
    model_believed: MarketModel
    grid: TimeGrid
    cash: np.ndarray
    price_true: np.ndarray        # (paths, grid)
    price_believed: np.ndarray

    def __len__(self) -> int:
        return self.cash.size

    def to_csv(self, path):
        t = self.grid.points

        def rows():
            for j in range(len(self)):
                for tj, a, b in zip(t, self.price_true[j], self.price_believed[j]):
                    yield (j, tj, a, b)

        return write_csv(path, ["path_id", "t", "price_true", "price_believed"], rows())


def conjugate_paths(model_true: MarketModel, believed_flow: float, grid: TimeGrid, seed: int,
                    n_paths: int = 1000, workers: int = 1) -> ConjugateEnsembles:
    """Paired true/believed price paths over a shared set of information paths."""
    if model_true.n_flow != 1:
        raise InvalidModel("the true model must have a single flow rate")
    believed = model_true.with_constant_flow(believed_flow)
    ens = make_ensemble(model_true, grid, n_paths, seed, workers=workers)
    t = grid.points[None, :]
    return ConjugateEnsembles(
        model_true=model_true,
        model_believed=believed,
        grid=grid,
        cash=ens.cash,
        price_true=bond_price(model_true, t, ens.xi),
        price_believed=bond_price(believed, t, ens.xi),
    )


@dataclass(frozen=True)
class ManipulationReport:
    condition_cash: float
    t: np.ndarray
    skew_true: np.ndarray
    skew_believed: np.ndarray
    interior: tuple[float, float]
    opposite_fraction: float
    n_conditioned: int

    def to_csv(self, path):
        rows = zip(self.t, self.skew_true, self.skew_believed)
        return write_csv(path, ["t", "skew_true", "skew_believed"], rows)


def manipulation_report(ensembles: ConjugateEnsembles, condition_cash: float,
                        interior=(0.2, 0.8)) -> ManipulationReport:
    """Conditional skew curves of both price processes and how often their signs disagree.

    ``opposite_fraction`` is taken over grid points in
    ``[interior[0] T, interior[1] T]`` where both skews are defined.
    """
    if len(ensembles) < 1000:
        raise ValueError("manipulation report needs at least 1,000 paths")
    skew_true = conditional_skewness(ensembles.price_true, ensembles.cash, condition_cash)
    skew_believed = conditional_skewness(ensembles.price_believed, ensembles.cash, condition_cash)
    t = ensembles.grid.points
    T = ensembles.model_true.horizon
    lo, hi = interior[0] * T, interior[1] * T
    mask = (t >= lo) & (t <= hi) & np.isfinite(skew_true) & np.isfinite(skew_believed)
    frac = float(np.mean(np.sign(skew_true[mask]) * np.sign(skew_believed[mask]) < 0)) if mask.any() else 0.0
    return ManipulationReport(
        condition_cash=float(condition_cash), t=t, skew_true=skew_true, skew_believed=skew_believed,
        interior=(lo, hi), opposite_fraction=frac,
        n_conditioned=int(np.sum(ensembles.cash == condition_cash)),
    )

