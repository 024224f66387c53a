"""Exact simulation of Brownian bridges and information-process paths.

Reproducibility
---------------
Every random number is drawn from a numpy ``PCG64`` generator seeded through
``numpy.random.SeedSequence``.  Substreams are derived as::

    derive_seed(seed, *key) = SeedSequence(seed, spawn_key=key).generate_state(1, uint64)[0]

* path ``j`` of an ensemble with master seed ``M`` uses seed ``derive_seed(M, j)``;
* a path with seed ``s`` draws its scenario from ``derive_seed(s, 0)`` and its
  bridge from ``derive_seed(s, 1)``.

A scenario consumes two uniforms (cash first, then flow rate, each by inverse
CDF); a bridge consumes ``len(grid) - 1`` standard normals.  Nothing depends
on thread count or evaluation order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from infoflow.io import write_csv
from infoflow.model import MarketModel

DEFAULT_STEPS = 500
DEFAULT_TERMINAL_CUTOFF = 0.004


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic 64-bit child seed for the substream labelled ``key``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True)
class TimeGrid:
    """Observation times ``0 = t_0 < t_1 < ... <= (1 - cutoff) T``."""

    points: np.ndarray
    horizon: float
    terminal_cutoff: float = DEFAULT_TERMINAL_CUTOFF

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=1)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if pts.size == 0 or pts[0] != 0.0:
            raise ValueError("grid must start at t = 0")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if not 0.0 <= self.terminal_cutoff < 1.0:
            raise ValueError("terminal_cutoff must lie in [0, 1)")
        t_max = (1.0 - self.terminal_cutoff) * self.horizon
        if pts[-1] > t_max * (1 + 1e-14) or pts[-1] >= self.horizon:
            raise ValueError(f"last grid point {pts[-1]} exceeds cutoff time {t_max}")

    @classmethod
    def uniform(cls, horizon: float, steps: int = DEFAULT_STEPS,
                terminal_cutoff: float = DEFAULT_TERMINAL_CUTOFF) -> "TimeGrid":
        t_max = (1.0 - terminal_cutoff) * horizon
        return cls(np.linspace(0.0, t_max, int(steps) + 1), horizon, terminal_cutoff)

    def __len__(self) -> int:
        return self.points.size

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.points)


def _bridge_from_normals(horizon: float, points: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Forward conditional bridge recursion driven by normals ``z[..., j]``."""
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape[:-1] + (points.size,))
    T = horizon
    for j in range(points.size - 1):
        s, t = points[j], points[j + 1]
        shrink = (T - t) / (T - s)
        std = np.sqrt((t - s) * (T - t) / (T - s))
        out[..., j + 1] = out[..., j] * shrink + std * z[..., j]
    return out


def sample_bridge(horizon: float, grid: TimeGrid, seed: int) -> np.ndarray:
    """Brownian bridge on ``[0, horizon]`` sampled exactly at the grid points."""
    z = _generator(seed).standard_normal(len(grid) - 1)
    return _bridge_from_normals(horizon, grid.points, z)


def _inverse_cdf(probs: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    idx = min(idx, probs.size - 1)
    # skip zero-mass atoms that only a rounding shortfall could select
    while probs[idx] == 0.0 and idx > 0:
        idx -= 1
    return idx


def _scenario_indices(model: MarketModel, seed: int) -> tuple[int, int]:
    u = _generator(seed).random(2)
    return _inverse_cdf(model.p, u[0]), _inverse_cdf(model.q, u[1])


def sample_scenario(model: MarketModel, seed: int) -> tuple[float, float]:
    """Independent draw of ``(x_i, sigma_k)`` from the prior laws."""
    i, k = _scenario_indices(model, seed)
    return model.cash_values[i], model.flow_values[k]


@dataclass(frozen=True)
class InfoPath:
    scenario_cash: float
    scenario_flow: float
    grid: TimeGrid
    xi: np.ndarray
    bridge: np.ndarray
    seed: int


def information_path(model: MarketModel, grid: TimeGrid, seed: int) -> InfoPath:
    """One realisation of ``xi_t = sigma X_T t + beta_t`` on ``grid``."""
    cash, flow = sample_scenario(model, derive_seed(seed, 0))
    bridge = sample_bridge(model.horizon, grid, derive_seed(seed, 1))
    xi = flow * cash * grid.points + bridge
    return InfoPath(cash, flow, grid, xi, bridge, int(seed))


@dataclass(frozen=True)
class PathEnsemble:
    """Paths stored row-wise; row ``j`` was generated from ``seeds[j]``."""

    model: MarketModel
    grid: TimeGrid
    cash: np.ndarray
    flow: np.ndarray
    bridge: np.ndarray
    xi: np.ndarray
    seeds: np.ndarray
    master_seed: int

    def __len__(self) -> int:
        return self.cash.size

    def path(self, j: int) -> InfoPath:
        return InfoPath(float(self.cash[j]), float(self.flow[j]), self.grid,
                        self.xi[j], self.bridge[j], int(self.seeds[j]))

    def __iter__(self):
        return (self.path(j) for j in range(len(self)))

    def to_csv(self, path):
        t = self.grid.points

        def rows():
            for j in range(len(self)):
                for tj, x, b in zip(t, self.xi[j], self.bridge[j]):
                    yield (j, tj, x, b, self.cash[j], self.flow[j])

        return write_csv(path, ["path_id", "t", "xi", "bridge", "scenario_cash", "scenario_flow"], rows())


def _path_draws(model: MarketModel, n_steps: int, master_seed: int, j: int):
    seed = derive_seed(master_seed, j)
    i, k = _scenario_indices(model, derive_seed(seed, 0))
    z = _generator(derive_seed(seed, 1)).standard_normal(n_steps)
    return seed, i, k, z


def make_ensemble(model: MarketModel, grid: TimeGrid, n_paths: int, master_seed: int,
                  workers: int = 1) -> PathEnsemble:
    """Generate ``n_paths`` independent paths; ``workers`` only changes speed."""
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    n_steps = len(grid) - 1

    def task(j):
        return _path_draws(model, n_steps, master_seed, j)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            draws = list(pool.map(task, range(n_paths), chunksize=256))
    else:
        draws = [task(j) for j in range(n_paths)]

    seeds = np.array([d[0] for d in draws], dtype=np.uint64)
    cash = model.x[np.array([d[1] for d in draws])]
    flow = model.sigma[np.array([d[2] for d in draws])]
    z = np.array([d[3] for d in draws]).reshape(n_paths, n_steps)
    bridge = _bridge_from_normals(model.horizon, grid.points, z)
    xi = (flow * cash)[:, None] * grid.points[None, :] + bridge
    return PathEnsemble(model, grid, cash, flow, bridge, xi, seeds, int(master_seed))
