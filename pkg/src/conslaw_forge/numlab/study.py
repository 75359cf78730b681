"""Refinement studies: observed orders of solution errors and balance residuals."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..conslaw import ConservedVector
from .balance import discrete_balances
from .config import ConfigError, SimulationConfig
from .solver import Trajectory, solve


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("CONSLAW_FORGE_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def observed_orders(errors, ratio: float = 2.0) -> list[float]:
    """log_ratio(e_k / e_{k+1}) for consecutive levels (nan when an error is zero)."""
    out = []
    for a, b in zip(errors, errors[1:]):
        out.append(math.log(a / b, ratio) if a > 0 and b > 0 else float("nan"))
    return out


@dataclass
class StudyResult:
    kind: str
    levels: list
    errors: list
    orders: list

    def to_dict(self) -> dict:
        return {"kind": self.kind, "levels": self.levels, "errors": self.errors, "orders": self.orders}


def _levels(config: SimulationConfig, levels: int) -> list[SimulationConfig]:
    if levels < 3:
        raise ConfigError("a convergence study needs at least 3 levels")
    return [config.refined(2**k) for k in range(levels)]


def _coarsen(u: np.ndarray, factor: int) -> np.ndarray:
    """Average ``factor``^d blocks of cells (nested grids)."""
    for a in range(u.ndim):
        shape = list(u.shape)
        shape[a : a + 1] = [shape[a] // factor, factor]
        u = u.reshape(shape).mean(axis=a + 1)
    return u


def space_study(config: SimulationConfig, levels: int = 3) -> StudyResult:
    """Max-norm solution error per level; against ``config.exact`` if given,
    else against the finest level (restricted by block averaging)."""
    cfgs = _levels(config, levels)
    finals = _map(lambda c: solve(c).final, cfgs)
    errors = []
    if config.exact is not None:
        for c, st in zip(cfgs, finals):
            errors.append(float(np.max(np.abs(st.u - c.exact_field(st.t)))))
        orders = observed_orders(errors)
    else:
        fine = finals[-1].u
        for k, st in enumerate(finals[:-1]):
            ref = _coarsen(fine, 2 ** (levels - 1 - k))
            errors.append(float(np.max(np.abs(st.u - ref))))
        orders = observed_orders(errors)
    return StudyResult("space", [list(c.n) for c in cfgs], errors, orders)


def time_study(config: SimulationConfig, levels: int = 3) -> StudyResult:
    """Fixed grid, dt halved per level; errors between consecutive levels."""
    if levels < 3:
        raise ConfigError("a convergence study needs at least 3 levels")
    base = config.dt
    if base is None:
        u0 = config.initial_field()
        from .solver import stable_dt

        base = stable_dt(config, u0)
        if not np.isfinite(base):
            base = config.T / 8 if config.T > 0 else 1.0
    cfgs = [replace(config, dt=base / 2**k) for k in range(levels)]
    finals = _map(lambda c: solve(c).final.u, cfgs)
    diffs = [float(np.max(np.abs(a - b))) for a, b in zip(finals, finals[1:])]
    return StudyResult("time", [c.dt for c in cfgs], diffs, observed_orders(diffs))


def convergence_study(config: SimulationConfig, levels: int = 3, kind: str = "space") -> StudyResult:
    if kind == "space":
        return space_study(config, levels)
    if kind == "time":
        return time_study(config, levels)
    raise ConfigError("study kind must be 'space' or 'time'")


@dataclass
class BalanceStudy:
    reports: list
    metric: str = "max_cumulative"

    @property
    def values(self) -> list[float]:
        return [getattr(r, self.metric) for r in self.reports]

    @property
    def ratios(self) -> list[float]:
        v = self.values
        return [a / b if b > 0 else float("inf") for a, b in zip(v, v[1:])]

    @property
    def orders(self) -> list[float]:
        return observed_orders(self.values)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "reports": [r.to_dict() for r in self.reports],
            "ratios": self.ratios,
            "orders": self.orders,
        }


def balance_studies(
    config: SimulationConfig, vectors, cells: list[int], region=None, metric: str = "max_cumulative"
) -> list[BalanceStudy]:
    """Refinement studies of several vectors; one run per grid level."""
    if len(cells) < 3:
        raise ConfigError("a convergence study needs at least 3 levels")
    vectors = list(vectors)
    per_level = _map(lambda n: discrete_balances(Trajectory.replay(config.with_cells(n)), vectors, region), cells)
    return [BalanceStudy([level[k] for level in per_level], metric) for k in range(len(vectors))]


def balance_study(
    config: SimulationConfig, cv: ConservedVector, cells: list[int], region=None, metric: str = "max_cumulative"
) -> BalanceStudy:
    """discrete_balance of ``cv`` on grids with ``cells`` per axis."""
    return balance_studies(config, [cv], cells, region, metric)[0]
