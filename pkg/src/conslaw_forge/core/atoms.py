"""Atoms of the jet-space algebra.

Every expression is a polynomial in atoms.  Atoms are hashable, immutable
and totally ordered; the global order (independent variables, parameters,
function symbols, constrained functions and waves, jet coordinates) fixes
the canonical form of an :class:`~conslaw_forge.core.expr.Expr`.
"""

from __future__ import annotations

from dataclasses import dataclass

INDEPENDENT_VARS = ("t", "x", "y", "z")
DEPENDENT_VARS = ("u", "v")

# antiderivative letters for the coefficient functions
ANTIDERIVATIVE_NAMES = {"f": "F", "g": "G", "h": "H", "q": "Q"}
_FROM_ANTIDERIVATIVE = {v: k for k, v in ANTIDERIVATIVE_NAMES.items()}

_VAR_RANK = {name: i for i, name in enumerate(INDEPENDENT_VARS + ("u",))}


def sort_index(index) -> tuple[str, ...]:
    """Canonical multi-index: sorted by t < x < y < z < u."""
    return tuple(sorted(index, key=lambda s: (_VAR_RANK.get(s, 99), s)))


def add_index(index: tuple[str, ...], *extra: str) -> tuple[str, ...]:
    return sort_index(index + tuple(extra))


def remove_index(index: tuple[str, ...], sub: tuple[str, ...]) -> tuple[str, ...] | None:
    """Multiset difference ``index - sub`` or None when ``sub`` is not contained."""
    rest = list(index)
    for s in sub:
        if s not in rest:
            return None
        rest.remove(s)
    return tuple(rest)


class Atom:
    """Base class; subclasses are frozen dataclasses."""

    rank: int = 99

    def sort_key(self) -> tuple:
        raise NotImplementedError

    def __lt__(self, other: "Atom") -> bool:
        return self.sort_key() < other.sort_key()


@dataclass(frozen=True, eq=True)
class IndependentVar(Atom):
    name: str
    rank = 0

    def __post_init__(self):
        if self.name not in INDEPENDENT_VARS:
            raise ValueError(f"unknown independent variable {self.name!r}")

    def sort_key(self):
        return (self.rank, _VAR_RANK[self.name])


@dataclass(frozen=True, eq=True)
class Parameter(Atom):
    name: str
    rank = 1

    def sort_key(self):
        return (self.rank, self.name)


@dataclass(frozen=True, eq=True)
class FuncSym(Atom):
    """``name^(order)(u)``; order -1 is the antiderivative (F' = f)."""

    name: str
    order: int = 0
    rank = 2

    def __post_init__(self):
        if self.order < -1:
            raise ValueError("function-symbol order must be >= -1")

    def sort_key(self):
        return (self.rank, self.name, self.order)

    @property
    def display_name(self) -> str:
        if self.order == -1:
            return ANTIDERIVATIVE_NAMES.get(self.name, self.name.upper())
        return self.name if self.order == 0 else f"{self.name}{self.order}"


@dataclass(frozen=True, eq=True)
class ConstrainedFuncSym(Atom):
    """A function of a subset of the variables, e.g. alpha(t, y) or phi(t,x,y,z,u).

    ``index`` is the (sorted) multi-index of partial derivatives taken.
    """

    name: str
    args: tuple[str, ...]
    index: tuple[str, ...] = ()
    rank = 3

    def __post_init__(self):
        object.__setattr__(self, "index", sort_index(self.index))
        bad = [s for s in self.index if s not in self.args]
        if bad:
            raise ValueError(f"{self.name} does not depend on {bad}")

    def sort_key(self):
        return (self.rank, 0, self.name, len(self.index), tuple(_VAR_RANK[s] for s in self.index))

    def differentiate(self, *vars_: str) -> "ConstrainedFuncSym":
        return ConstrainedFuncSym(self.name, self.args, self.index + tuple(vars_))


@dataclass(frozen=True, eq=True)
class WaveSym(Atom):
    """cos(w*x), sin(w*x) or exp(sign*w*x) for a parameter ``freq`` and variable ``var``."""

    fn: str
    freq: str
    var: str
    sign: int = 1
    rank = 3

    def __post_init__(self):
        if self.fn not in ("cos", "sin", "exp"):
            raise ValueError(f"unsupported wave {self.fn!r}")
        if self.sign not in (1, -1) or (self.fn != "exp" and self.sign != 1):
            raise ValueError("only exp waves carry a sign")

    def sort_key(self):
        return (self.rank, 1, self.var, self.freq, self.fn, -self.sign)


@dataclass(frozen=True, eq=True)
class JetCoord(Atom):
    dep: str
    index: tuple[str, ...] = ()
    rank = 4

    def __post_init__(self):
        if self.dep not in DEPENDENT_VARS:
            raise ValueError(f"unknown dependent variable {self.dep!r}")
        object.__setattr__(self, "index", sort_index(self.index))
        if any(s not in INDEPENDENT_VARS for s in self.index):
            raise ValueError(f"bad jet index {self.index}")

    @property
    def order(self) -> int:
        return len(self.index)

    def sort_key(self):
        return (self.rank, self.dep, len(self.index), tuple(_VAR_RANK[s] for s in self.index))

    def differentiate(self, *vars_: str) -> "JetCoord":
        return JetCoord(self.dep, self.index + tuple(vars_))

    @property
    def name(self) -> str:
        return self.dep + ("_" + "".join(self.index) if self.index else "")


def func_from_name(name: str) -> FuncSym:
    """Parse ``f``, ``f1``, ``f2``, ``F`` style names."""
    if name in _FROM_ANTIDERIVATIVE:
        return FuncSym(_FROM_ANTIDERIVATIVE[name], -1)
    base, digits = name[0], name[1:]
    if base not in ANTIDERIVATIVE_NAMES or (digits and not digits.isdigit()):
        raise ValueError(f"not a function symbol: {name!r}")
    return FuncSym(base, int(digits) if digits else 0)


U = JetCoord("u")
V = JetCoord("v")
