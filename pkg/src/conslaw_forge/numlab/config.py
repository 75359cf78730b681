"""Simulation configuration.

A config is a JSON (or TOML) document::

    {
      "dims": 2,
      "extents": [1.0, 1.0],          # domain [0, L] per axis
      "n": [64, 64],                  # cells per axis (an int means all axes)
      "T": 0.05,
      "dt": null,                     # requested step; always clamped for stability
      "safety": 0.9,
      "boundary": "zero-flux",        # or "periodic"
      "face_mean": "arithmetic",      # or "harmonic"
      "models": {"f": {"kind": "power", "n": 1}, "g": {"kind": "power", "n": 2}},
      "params": {"omega": 1.0},
      "initial": "1 + 0.5*cos(pi*x)*cos(pi*y)",
      "exact": null                   # optional closed form in x, y, z, t
    }

``models.q`` adds a source term u_t = ... + q(u).  ``initial`` may also be
``{"samples": [...]}`` with values in row-major (x, y, z) order.
"""

from __future__ import annotations

import ast
import json
import math
import operator
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..core.evaluate import FunctionModel, model_from_dict

MAX_CELLS_3D = 64
AXES = ("x", "y", "z")
AXIS_MODELS = ("f", "g", "h")


class ConfigError(ValueError):
    pass


# -- closed-form expressions --------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "tanh": np.tanh, "abs": np.abs, "maximum": np.maximum, "minimum": np.minimum,
}
_CONSTS = {"pi": math.pi, "e": math.e}


def eval_closed_form(text: str, env: dict):
    """Evaluate an arithmetic expression over numpy arrays (no arbitrary code)."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad expression {text!r}: {exc.msg}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise ConfigError(f"unsupported syntax in {text!r}")

    return ev(tree)


# -- config --------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    dims: int
    extents: tuple[float, ...]
    n: tuple[int, ...]
    T: float
    models: dict = field(default_factory=dict)
    initial: object = "0"
    boundary: str = "zero-flux"
    face_mean: str = "arithmetic"
    safety: float = 0.9
    dt: float | None = None
    params: dict = field(default_factory=dict)
    exact: str | None = None
    dt_floor: float = 1e-12

    def __post_init__(self):
        if self.dims not in (1, 2, 3):
            raise ConfigError("dims must be 1, 2 or 3")
        if len(self.extents) != self.dims or len(self.n) != self.dims:
            raise ConfigError("extents and n need one entry per dimension")
        if any(L <= 0 for L in self.extents):
            raise ConfigError("extents must be positive")
        if any(k < 3 for k in self.n):
            raise ConfigError("at least 3 cells per axis are required")
        if self.dims == 3 and max(self.n) > MAX_CELLS_3D:
            raise ConfigError(f"3D runs are limited to {MAX_CELLS_3D} cells per axis")
        if not 0 < self.safety <= 1:
            raise ConfigError("safety factor must lie in (0, 1]")
        if self.T < 0:
            raise ConfigError("T must be nonnegative")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.boundary not in ("periodic", "zero-flux"):
            raise ConfigError("boundary must be 'periodic' or 'zero-flux'")
        if self.face_mean not in ("arithmetic", "harmonic"):
            raise ConfigError("face_mean must be 'arithmetic' or 'harmonic'")
        for name in AXIS_MODELS[: self.dims]:
            if name not in self.models:
                raise ConfigError(f"model for {name} is required in {self.dims}D")
        for name, m in self.models.items():
            if not isinstance(m, FunctionModel):
                raise ConfigError(f"model {name} is not a FunctionModel")

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / k for L, k in zip(self.extents, self.n))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    def centers(self) -> list[np.ndarray]:
        """Broadcastable cell-centre coordinates, one array per axis."""
        out = []
        for a, (h, k) in enumerate(zip(self.spacing, self.n)):
            shape = [1] * self.dims
            shape[a] = k
            out.append(((np.arange(k) + 0.5) * h).reshape(shape))
        return out

    def coordinate_env(self, t: float = 0.0) -> dict:
        env = {name: c for name, c in zip(AXES, self.centers())}
        env["t"] = t
        env.update(self.params)
        return env

    def initial_field(self) -> np.ndarray:
        shape = tuple(self.n)
        if isinstance(self.initial, dict):
            data = np.asarray(self.initial.get("samples"), dtype=float)
            if data.size != math.prod(shape):
                raise ConfigError(f"initial samples need {math.prod(shape)} values")
            return data.reshape(shape).copy()
        if isinstance(self.initial, str):
            u = eval_closed_form(self.initial, self.coordinate_env())
            return np.broadcast_to(np.asarray(u, dtype=float), shape).copy()
        raise ConfigError("initial must be an expression or {'samples': [...]}")

    def exact_field(self, t: float) -> np.ndarray | None:
        if self.exact is None:
            return None
        u = eval_closed_form(self.exact, self.coordinate_env(t))
        return np.broadcast_to(np.asarray(u, dtype=float), tuple(self.n)).copy()

    def refined(self, factor: int) -> "SimulationConfig":
        """Same problem on a grid with ``factor`` times more cells per axis."""
        initial = self.initial
        if isinstance(initial, dict):
            raise ConfigError("sampled initial data cannot be refined")
        return replace(self, n=tuple(k * factor for k in self.n))

    def with_cells(self, n: int | tuple[int, ...]) -> "SimulationConfig":
        n = (n,) * self.dims if isinstance(n, int) else tuple(n)
        return replace(self, n=n)

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "extents": list(self.extents),
            "n": list(self.n),
            "T": self.T,
            "dt": self.dt,
            "safety": self.safety,
            "boundary": self.boundary,
            "face_mean": self.face_mean,
            "models": {k: m.to_dict() for k, m in sorted(self.models.items())},
            "params": dict(sorted(self.params.items())),
            "initial": self.initial if isinstance(self.initial, str) else {"samples": "<%d values>" % np.size(self.initial.get("samples"))},
            "exact": self.exact,
        }


KNOWN_KEYS = {
    "dims", "extents", "n", "T", "dt", "safety", "boundary", "face_mean", "models", "params",
    "initial", "exact", "dt_floor",
}


def config_from_dict(d: dict) -> SimulationConfig:
    unknown = set(d) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        dims = int(d["dims"])
        n = d["n"]
        n = (int(n),) * dims if isinstance(n, (int, float)) else tuple(int(k) for k in n)
        extents = d.get("extents", [1.0] * dims)
        extents = (float(extents),) * dims if isinstance(extents, (int, float)) else tuple(map(float, extents))
        models = {k: model_from_dict(v) for k, v in d.get("models", {}).items()}
        return SimulationConfig(
            dims=dims,
            extents=extents,
            n=n,
            T=float(d["T"]),
            models=models,
            initial=d.get("initial", "0"),
            boundary=d.get("boundary", "zero-flux"),
            face_mean=d.get("face_mean", "arithmetic"),
            safety=float(d.get("safety", 0.9)),
            dt=None if d.get("dt") is None else float(d["dt"]),
            params={k: float(v) for k, v in d.get("params", {}).items()},
            exact=d.get("exact"),
            dt_floor=float(d.get("dt_floor", 1e-12)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def read_document(path: str | Path) -> dict:
    """Load a JSON or TOML document by extension."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path: str | Path) -> SimulationConfig:
    return config_from_dict(read_document(path))
