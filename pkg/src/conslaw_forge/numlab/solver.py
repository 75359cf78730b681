"""Explicit finite-volume solver for u_t = sum_a (k_a(u) u_a)_a + q(u).

Cell averages live at cell centres; the flux through the face between
cells i and i+1 is k(u_face) (u_{i+1} - u_i) / h with u_face the arithmetic
(or harmonic) mean, so interior fluxes telescope exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .config import AXIS_MODELS, ConfigError, SimulationConfig


class StabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimulationState:
    u: np.ndarray
    t: float
    step: int


def _slice(ndim: int, axis: int, sl: slice) -> tuple:
    index = [slice(None)] * ndim
    index[axis] = sl
    return tuple(index)


def _neighbours(u: np.ndarray, axis: int, periodic: bool) -> tuple[np.ndarray, np.ndarray]:
    if periodic:
        return u, np.roll(u, -1, axis=axis)
    return u[_slice(u.ndim, axis, slice(None, -1))], u[_slice(u.ndim, axis, slice(1, None))]


def _face_values(u: np.ndarray, axis: int, periodic: bool, mean: str) -> np.ndarray:
    """u at the faces between neighbours along ``axis`` (n faces if periodic, n-1 otherwise)."""
    left, right = _neighbours(u, axis, periodic)
    if mean == "harmonic":
        with np.errstate(divide="ignore", invalid="ignore"):
            hm = 2 * left * right / (left + right)
        return np.where(left + right == 0, 0.0, hm)
    return 0.5 * (left + right)


def face_values(config: SimulationConfig, u: np.ndarray) -> list[np.ndarray]:
    periodic = config.boundary == "periodic"
    return [_face_values(u, a, periodic, config.face_mean) for a in range(config.dims)]


def face_fluxes(config: SimulationConfig, u: np.ndarray, faces: list[np.ndarray] | None = None) -> list[np.ndarray]:
    """Diffusive flux k(u_face) du/dx at every interior (or periodic) face, per axis."""
    periodic = config.boundary == "periodic"
    faces = face_values(config, u) if faces is None else faces
    out = []
    for a, (h, uf) in enumerate(zip(config.spacing, faces)):
        left, right = _neighbours(u, a, periodic)
        out.append(config.models[AXIS_MODELS[a]](uf) * (right - left) / h)
    return out


def rhs(config: SimulationConfig, u: np.ndarray, faces: list[np.ndarray] | None = None) -> np.ndarray:
    periodic = config.boundary == "periodic"
    du = np.zeros_like(u)
    for a, (h, flux) in enumerate(zip(config.spacing, face_fluxes(config, u, faces))):
        if periodic:
            du += (flux - np.roll(flux, 1, axis=a)) / h
        else:
            # zero flux through the walls
            du[_slice(u.ndim, a, slice(None, -1))] += flux / h
            du[_slice(u.ndim, a, slice(1, None))] -= flux / h
    if "q" in config.models:
        du += config.models["q"](u)
    return du


def stable_dt(config: SimulationConfig, u: np.ndarray, faces: list[np.ndarray] | None = None) -> float:
    """sigma * min h^2 / (2 dims max k), with k over cells and faces of every axis."""
    faces = face_values(config, u) if faces is None else faces
    kmax = 0.0
    for a, uf in enumerate(faces):
        k = config.models[AXIS_MODELS[a]]
        kmax = max(kmax, float(np.max(k(u))))
        if uf.size:
            kmax = max(kmax, float(np.max(k(uf))))
    if not np.isfinite(kmax):
        raise StabilityError("non-finite diffusion coefficient")
    hmin2 = min(config.spacing) ** 2
    if kmax <= 0:
        return np.inf
    return config.safety * hmin2 / (2 * config.dims * kmax)


def iterate(config: SimulationConfig, u0: np.ndarray | None = None) -> Iterator[SimulationState]:
    """Yield the initial state and every subsequent state up to T."""
    u = config.initial_field() if u0 is None else np.array(u0, dtype=float)
    if u.shape != tuple(config.n):
        raise ConfigError(f"initial field has shape {u.shape}, expected {tuple(config.n)}")
    t, step = 0.0, 0
    yield SimulationState(u, t, step)
    while t < config.T * (1 - 1e-14):
        faces = face_values(config, u)
        dt = stable_dt(config, u, faces)
        if config.dt is not None:
            dt = min(dt, config.dt)
        if dt < config.dt_floor:
            raise StabilityError(f"stability clamp forced dt = {dt:.3e} below the floor {config.dt_floor:g} at t = {t:g}")
        dt = min(dt, config.T - t)
        u = u + dt * rhs(config, u, faces)
        if not np.all(np.isfinite(u)):
            raise StabilityError(f"non-finite values at t = {t + dt:g} (step {step + 1})")
        t += dt
        step += 1
        yield SimulationState(u, t, step)


@dataclass
class Trajectory:
    """Result of :func:`solve`.

    States are not all kept in memory: ``states()`` replays the
    (deterministic) run, while ``saved`` holds the states requested through
    ``save_every`` and the final state.
    """

    config: SimulationConfig
    times: np.ndarray
    final: SimulationState
    saved: list = field(default_factory=list)
    u0: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @classmethod
    def replay(cls, config: SimulationConfig, u0: np.ndarray | None = None) -> "Trajectory":
        """A trajectory that is only materialised when ``states()`` is iterated."""
        first = next(iterate(config, u0))
        return cls(config, np.array([0.0]), first, [], None if u0 is None else first.u)

    def states(self) -> Iterator[SimulationState]:
        return iterate(self.config, self.u0)


def solve(
    config: SimulationConfig,
    save_every: int | None = None,
    observer: Callable[[SimulationState], None] | None = None,
    u0: np.ndarray | None = None,
) -> Trajectory:
    times = []
    saved = []
    state = None
    for state in iterate(config, u0):
        times.append(state.t)
        if save_every and state.step % save_every == 0:
            saved.append(state)
        if observer is not None:
            observer(state)
    assert state is not None
    if not saved or saved[-1].step != state.step:
        saved.append(state)
    return Trajectory(config, np.array(times), state, saved, None if u0 is None else np.array(u0, dtype=float))
