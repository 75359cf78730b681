"""Discrete balance laws for conserved vectors on simulated trajectories.

For a box R (the whole domain or a sub-box aligned with cell faces) the
residual of step n is

    r_n = Q(t_{n+1}) - Q(t_n) + dt_n * (B(t_n) + B(t_{n+1})) / 2,

where Q is the midpoint-rule integral of C^1 over R and B the outward flux
of (C^2, C^3, C^4) through the boundary of R.  On walls, u and its normal
derivative come from quadratic extrapolation of the three nearest cells;
on interior faces from the two adjacent cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..conslaw import ConservedVector, expand
from ..core.atoms import (
    U,
    ConstrainedFuncSym,
    FuncSym,
    IndependentVar,
    JetCoord,
    Parameter,
    WaveSym,
)
from ..core.evaluate import JetPoint, evaluate
from ..core.expr import Expr
from ..core.render import atom_text, to_text
from .config import AXES, ConfigError, SimulationConfig
from .solver import Trajectory


class UnavailableJetError(ConfigError):
    """A component needs data the grid cannot supply (e.g. u_z in 2D)."""


@dataclass
class BalanceReport:
    name: str
    n: tuple
    times: np.ndarray
    residuals: np.ndarray
    region: tuple
    components: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.residuals)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residuals))) if self.steps else 0.0

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.residuals)

    @property
    def max_cumulative(self) -> float:
        """max_n |sum_{k<=n} r_k|: the balance defect accumulated over the run."""
        return float(np.max(np.abs(self.cumulative))) if self.steps else 0.0

    @property
    def max_rate(self) -> float:
        """max_n |r_n| / dt_n."""
        if not self.steps:
            return 0.0
        return float(np.max(np.abs(self.residuals) / np.diff(self.times)))

    def to_dict(self) -> dict:
        return {
            "vector": self.name,
            "components": self.components,
            "cells": list(self.n),
            "region": [list(r) for r in self.region],
            "steps": self.steps,
            "max_abs_residual": self.max_abs,
            "max_cumulative_residual": self.max_cumulative,
            "max_residual_rate": self.max_rate,
        }


def _check_vector(cv: ConservedVector, config: SimulationConfig) -> list[Expr]:
    cv = expand(cv)
    variables = ("t",) + AXES[: config.dims]
    if tuple(cv.variables) != variables:
        raise UnavailableJetError(
            f"vector has variables {cv.variables}, the run provides {variables}"
        )
    for comp in cv.components:
        for a in comp.atoms():
            if isinstance(a, JetCoord):
                if a.dep != "u":
                    raise UnavailableJetError("components still contain v; supply a substitution")
                if a.order > 1:
                    raise UnavailableJetError(f"jet {a.name} is not available (first-order jets only)")
                if any(s not in variables[1:] for s in a.index):
                    raise UnavailableJetError(f"jet {a.name} is not available on a {config.dims}D grid")
            elif isinstance(a, IndependentVar) and a.name not in variables:
                raise UnavailableJetError(f"variable {a.name} is not part of a {config.dims}D run")
            elif isinstance(a, Parameter) and a.name not in config.params:
                raise UnavailableJetError(f"no value for parameter {a.name}")
            elif isinstance(a, WaveSym) and a.freq not in config.params:
                raise UnavailableJetError(f"no value for parameter {a.freq}")
            elif isinstance(a, FuncSym) and a.name not in config.models:
                raise UnavailableJetError(f"no model for {atom_text(a)}")
            elif isinstance(a, ConstrainedFuncSym):
                raise UnavailableJetError(f"constrained function {a.name} has no numeric value")
    return list(cv.components)


def _snap_region(config: SimulationConfig, region) -> tuple[tuple[int, int], ...]:
    if region is None:
        return tuple((0, k) for k in config.n)
    if len(region) != config.dims:
        raise ConfigError("region needs one [lo, hi] pair per axis")
    out = []
    for (lo, hi), h, k in zip(region, config.spacing, config.n):
        i0, i1 = int(round(lo / h)), int(round(hi / h))
        if not 0 <= i0 < i1 <= k:
            raise ConfigError(f"region [{lo}, {hi}] is empty or outside the domain")
        out.append((i0, i1))
    return tuple(out)


def _point(config: SimulationConfig, coords: dict, jets: dict, t: float) -> JetPoint:
    values = {IndependentVar("t"): t}
    for name, arr in coords.items():
        values[IndependentVar(name)] = arr
    for name, val in config.params.items():
        values[Parameter(name)] = val
    values[U] = jets[()]
    for idx, arr in jets.items():
        if idx:
            values[JetCoord("u", idx)] = arr
    return JetPoint(values, dict(config.models))


def _tangential_derivative(w: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    if w.shape[axis] == 1:
        return np.zeros_like(w)
    if periodic:
        return (np.roll(w, -1, axis=axis) - np.roll(w, 1, axis=axis)) / (2 * h)
    return np.gradient(w, h, axis=axis, edge_order=2)


def _face_data(config: SimulationConfig, u: np.ndarray, axis: int, i_f: int):
    """u and first derivatives on the face with index ``i_f`` normal to ``axis``."""
    n, h = config.n[axis], config.spacing[axis]
    periodic = config.boundary == "periodic"
    take = lambda i: np.take(u, [i % n], axis=axis)  # noqa: E731
    if not periodic and i_f == 0:
        u0, u1, u2 = take(0), take(1), take(2)
        ub = (15 * u0 - 10 * u1 + 3 * u2) / 8
        un = (-2 * u0 + 3 * u1 - u2) / h
    elif not periodic and i_f == n:
        u0, u1, u2 = take(n - 1), take(n - 2), take(n - 3)
        ub = (15 * u0 - 10 * u1 + 3 * u2) / 8
        un = (2 * u0 - 3 * u1 + u2) / h
    else:
        left, right = take(i_f - 1), take(i_f)
        ub = 0.5 * (left + right)
        un = (right - left) / h
    jets = {(): ub, (AXES[axis],): un}
    for b in range(config.dims):
        if b != axis:
            jets[(AXES[b],)] = _tangential_derivative(ub, b, config.spacing[b], periodic)
    coords = {}
    for b, c in enumerate(config.centers()):
        coords[AXES[b]] = np.full((1,) * config.dims, i_f * h) if b == axis else c
    return coords, jets


def _cell_data(config: SimulationConfig, u: np.ndarray):
    periodic = config.boundary == "periodic"
    jets = {(): u}
    for b in range(config.dims):
        jets[(AXES[b],)] = _tangential_derivative(u, b, config.spacing[b], periodic)
    coords = {AXES[b]: c for b, c in enumerate(config.centers())}
    return coords, jets


def _restrict(arr: np.ndarray, box, skip: int | None = None) -> np.ndarray:
    index = tuple(
        slice(None) if (a == skip or arr.shape[a] == 1) else slice(lo, hi) for a, (lo, hi) in enumerate(box)
    )
    return arr[index]


class _Evaluator:
    def __init__(self, config: SimulationConfig, comps: list[Expr], region):
        self.config = config
        self.comps = comps
        self.box = _snap_region(config, region)

    def density(self, u: np.ndarray, t: float) -> float:
        coords, jets = _cell_data(self.config, u)
        val = np.broadcast_to(evaluate(self.comps[0], _point(self.config, coords, jets, t)), u.shape)
        return float(np.sum(_restrict(val, self.box)) * self.config.cell_volume)

    def boundary_flux(self, u: np.ndarray, t: float) -> float:
        cfg = self.config
        total = 0.0
        for a in range(cfg.dims):
            comp = self.comps[a + 1]
            if comp.is_zero:
                continue
            lo, hi = self.box[a]
            if cfg.boundary == "periodic" and lo == 0 and hi == cfg.n[a]:
                continue  # opposite faces coincide
            dS = math.prod(h for b, h in enumerate(cfg.spacing) if b != a)
            face_shape = tuple(1 if b == a else k for b, k in enumerate(cfg.n))
            for i_f, sign in ((hi, 1.0), (lo, -1.0)):
                coords, jets = _face_data(cfg, u, a, i_f)
                val = np.broadcast_to(evaluate(comp, _point(cfg, coords, jets, t)), face_shape)
                total += sign * float(np.sum(_restrict(val, self.box, skip=a))) * dS
        return total


def discrete_balances(trajectory: Trajectory, vectors, region=None) -> list[BalanceReport]:
    """Balance reports for several vectors from a single replay of the run."""
    config = trajectory.config
    evs = [_Evaluator(config, _check_vector(cv, config), region) for cv in vectors]
    times: list[float] = []
    residuals: list[list[float]] = [[] for _ in evs]
    prev: list[tuple[float, float]] = []
    for state in trajectory.states():
        cur = [(ev.density(state.u, state.t), ev.boundary_flux(state.u, state.t)) for ev in evs]
        if times:
            dt = state.t - times[-1]
            for k, ((Q0, B0), (Q, B)) in enumerate(zip(prev, cur)):
                residuals[k].append(Q - Q0 + dt * 0.5 * (B0 + B))
        times.append(state.t)
        prev = cur
    reports = []
    for cv, ev, res in zip(vectors, evs, residuals):
        box = tuple((lo * h, hi * h) for (lo, hi), h in zip(ev.box, config.spacing))
        reports.append(
            BalanceReport(
                cv.name or "vector",
                tuple(config.n),
                np.array(times),
                np.array(res),
                box,
                [to_text(c) for c in ev.comps],
            )
        )
    return reports


def discrete_balance(trajectory: Trajectory, cv: ConservedVector, region=None) -> BalanceReport:
    """Residual series of the integral balance law for ``cv`` along the run."""
    return discrete_balances(trajectory, [cv], region)[0]
