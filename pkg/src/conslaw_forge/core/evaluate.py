"""Numeric evaluation of expressions at jet points.

Values may be floats or numpy arrays (evaluation is vectorised).  The
coefficient functions f, g, h, q are supplied as :class:`FunctionModel`
objects that know their derivatives and antiderivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .atoms import (
    U,
    Atom,
    ConstrainedFuncSym,
    FuncSym,
    IndependentVar,
    JetCoord,
    Parameter,
    WaveSym,
)
from .expr import Expr


class MissingAssignmentError(KeyError):
    def __init__(self, atom: Atom):
        from .render import atom_text

        self.atom = atom
        super().__init__(f"no value assigned to {atom_text(atom)}")


class FunctionModel:
    """A concrete coefficient function u -> value with derivatives."""

    def __call__(self, u, order: int = 0):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerLaw(FunctionModel):
    """c * u**n"""

    n: float
    c: float = 1.0

    def __call__(self, u, order: int = 0):
        if order == -1:
            if self.n == -1:
                return self.c * np.log(u)
            return self.c * u ** (self.n + 1) / (self.n + 1)
        coef = self.c
        for j in range(order):
            coef *= self.n - j
        if coef == 0:
            return 0.0 * u
        return coef * u ** (self.n - order)

    def to_dict(self):
        return {"kind": "power", "n": self.n, "c": self.c}


@dataclass(frozen=True)
class Exponential(FunctionModel):
    """c * exp(b*u)"""

    c: float = 1.0
    b: float = 1.0

    def __call__(self, u, order: int = 0):
        return self.c * self.b**order * np.exp(self.b * u)

    def to_dict(self):
        return {"kind": "exp", "c": self.c, "b": self.b}


@dataclass(frozen=True)
class Constant(FunctionModel):
    k: float

    def __call__(self, u, order: int = 0):
        if order == -1:
            return self.k * u
        return (self.k if order == 0 else 0.0) + 0.0 * u

    def to_dict(self):
        return {"kind": "const", "k": self.k}


@dataclass(frozen=True)
class Scaled(FunctionModel):
    """s * base, with the derivative index shifted by ``shift`` (shift=-1 gives s*antiderivative)."""

    base: FunctionModel
    s: float = 1.0
    shift: int = 0

    def __call__(self, u, order: int = 0):
        return self.s * self.base(u, order + self.shift)

    def to_dict(self):
        return {"kind": "scaled", "s": self.s, "shift": self.shift, "base": self.base.to_dict()}


@dataclass(frozen=True)
class Table(FunctionModel):
    """Piecewise-linear interpolation of sampled values (value only)."""

    u: tuple
    values: tuple

    def __call__(self, u, order: int = 0):
        if order != 0:
            raise ValueError("tabulated models provide values only")
        return np.interp(u, self.u, self.values)

    def to_dict(self):
        return {"kind": "table", "u": list(self.u), "values": list(self.values)}


def model_from_dict(d: Mapping) -> FunctionModel:
    kind = d["kind"]
    if kind == "power":
        return PowerLaw(float(d["n"]), float(d.get("c", 1.0)))
    if kind == "exp":
        return Exponential(float(d.get("c", 1.0)), float(d.get("b", 1.0)))
    if kind == "const":
        return Constant(float(d["k"]))
    if kind == "scaled":
        return Scaled(model_from_dict(d["base"]), float(d.get("s", 1.0)), int(d.get("shift", 0)))
    if kind == "table":
        return Table(tuple(map(float, d["u"])), tuple(map(float, d["values"])))
    raise ValueError(f"unknown function model {kind!r}")


@dataclass
class JetPoint:
    """Numeric assignment for the atoms of an expression.

    ``values`` maps atoms to numbers (or arrays); ``models`` maps function
    names to :class:`FunctionModel`; ``resolver`` is consulted for atoms
    missing from ``values`` (e.g. jets computed from a closed-form field).
    """

    values: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    resolver: Callable[[Atom], object] | None = None

    def lookup(self, a: Atom):
        if a in self.values:
            return self.values[a]
        if isinstance(a, FuncSym):
            model = self.models.get(a.name)
            if model is None:
                raise MissingAssignmentError(a)
            return model(self.lookup(U), a.order)
        if isinstance(a, WaveSym):
            w = self.lookup(Parameter(a.freq))
            xv = self.lookup(IndependentVar(a.var))
            if a.fn == "cos":
                return np.cos(w * xv)
            if a.fn == "sin":
                return np.sin(w * xv)
            return np.exp(a.sign * w * xv)
        if self.resolver is not None:
            val = self.resolver(a)
            if val is not None:
                return val
        raise MissingAssignmentError(a)


def evaluate(e: Expr, p: JetPoint):
    """Evaluate ``e`` at ``p``; returns a float or an array."""
    total = 0.0
    cache: dict = {}
    for mono, c in Expr.coerce(e).terms.items():
        term = float(c)
        for a, k in mono:
            if a not in cache:
                cache[a] = p.lookup(a)
            term = term * cache[a] ** k
        total = total + term
    if isinstance(total, np.ndarray):
        return total
    return float(total)


DEFAULT_MODELS = {
    "f": PowerLaw(2.0, 1.0),
    "g": Exponential(1.0, 0.5),
    "h": PowerLaw(3.0, 0.5),
    "q": PowerLaw(1.5, 0.7),
}


def random_jet_point(
    exprs,
    rng: np.random.Generator,
    samples: int = 1,
    models: Mapping[str, FunctionModel] | None = None,
    fixed: Mapping[Atom, float] | None = None,
) -> JetPoint:
    """Independent random values for every atom occurring in ``exprs``.

    Parameters and u are drawn from [0.5, 1.5] (function models stay
    positive and finite); everything else from [-1, 1].
    """
    atoms: set = set()
    for e in exprs:
        atoms |= Expr.coerce(e).atoms()
    atoms.add(U)
    for a in list(atoms):
        if isinstance(a, WaveSym):
            atoms.add(Parameter(a.freq))
            atoms.add(IndependentVar(a.var))
    values = dict(fixed or {})
    for a in sorted(atoms, key=lambda a: a.sort_key()):
        if a in values or isinstance(a, (FuncSym, WaveSym)):
            continue
        if isinstance(a, Parameter) or a == U:
            values[a] = rng.uniform(0.5, 1.5, samples)
        else:
            values[a] = rng.uniform(-1.0, 1.0, samples)
    return JetPoint(values, dict(models or DEFAULT_MODELS))


@dataclass(frozen=True)
class PlaneWaveField:
    """u(t,x,y,z) = mean + amp*sin(phase + k . X); all jets in closed form."""

    mean: float
    amp: float
    k: tuple = (0.3, 0.7, -0.4, 0.5)
    phase: float = 0.2

    def jet(self, index: tuple[str, ...], X: Mapping[str, float]):
        order = len(index)
        kv = dict(zip(("t", "x", "y", "z"), self.k))
        theta = self.phase + sum(kv[s] * X[s] for s in kv)
        if order == 0:
            return self.mean + self.amp * np.sin(theta)
        coef = self.amp * math.prod(kv[s] for s in index)
        return coef * np.sin(theta + order * math.pi / 2)


def field_jet_point(
    X: Mapping[str, float],
    fields: Mapping[str, PlaneWaveField],
    params: Mapping[str, float] | None = None,
    models: Mapping[str, FunctionModel] | None = None,
) -> JetPoint:
    """Jet point induced by closed-form fields for u (and v) at location X."""
    values = {IndependentVar(s): X[s] for s in ("t", "x", "y", "z")}
    for name, val in (params or {}).items():
        values[Parameter(name)] = val

    def resolver(a: Atom):
        if isinstance(a, JetCoord) and a.dep in fields:
            return fields[a.dep].jet(a.index, X)
        if isinstance(a, ConstrainedFuncSym) and a.name in fields:
            return fields[a.name].jet(a.index, X)
        return None

    return JetPoint(values, dict(models or DEFAULT_MODELS), resolver)
