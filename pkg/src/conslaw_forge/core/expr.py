"""Canonical jet-space expressions and the calculus on them.

An :class:`Expr` is a fully expanded sum of monomials with exact rational
coefficients.  Two expressions are equal iff their canonical term maps are
equal, so ``equivalent(a, b)`` is just ``(a - b).is_zero``.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Mapping

from .atoms import (
    U,
    Atom,
    ConstrainedFuncSym,
    FuncSym,
    IndependentVar,
    JetCoord,
    Parameter,
    WaveSym,
    remove_index,
)

Monomial = tuple  # tuple[tuple[Atom, int], ...], sorted by atom order
ONE_MONO: Monomial = ()


def _mono_from_powers(powers: dict) -> Monomial:
    # exp(+wx) * exp(-wx) = 1
    waves = [a for a in powers if isinstance(a, WaveSym) and a.fn == "exp" and a.sign == 1]
    for a in waves:
        b = WaveSym("exp", a.freq, a.var, -1)
        if b in powers:
            k = min(powers[a], powers[b])
            powers[a] -= k
            powers[b] -= k
    items = [(a, p) for a, p in powers.items() if p != 0]
    items.sort(key=lambda ap: ap[0].sort_key())
    return tuple(items)


def mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    powers = dict(m1)
    for a, p in m2:
        powers[a] = powers.get(a, 0) + p
    return _mono_from_powers(powers)


def mono_key(m: Monomial) -> tuple:
    return (sum(p for _, p in m), tuple((a.sort_key(), p) for a, p in m))


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    if isinstance(c, float):
        return Fraction(c).limit_denominator(10**12)
    raise TypeError(f"cannot use {type(c).__name__} as a coefficient")


class Expr:
    """Immutable polynomial over atoms with rational coefficients."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Fraction] | None = None):
        clean = {}
        if terms:
            for m, c in terms.items():
                if c != 0:
                    clean[m] = _as_fraction(c)
        self._terms = clean
        self._hash = None

    # -- constructors -------------------------------------------------------
    @classmethod
    def const(cls, c) -> "Expr":
        return cls({ONE_MONO: _as_fraction(c)})

    @classmethod
    def atom(cls, a: Atom, power: int = 1) -> "Expr":
        return cls({((a, power),): Fraction(1)})

    @classmethod
    def coerce(cls, other) -> "Expr":
        if isinstance(other, Expr):
            return other
        if isinstance(other, Atom):
            return cls.atom(other)
        return cls.const(other)

    # -- introspection -------------------------------------------------------
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self) -> list[tuple[Monomial, Fraction]]:
        return sorted(self._terms.items(), key=lambda mc: mono_key(mc[0]))

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def atoms(self) -> set[Atom]:
        return {a for m in self._terms for a, _ in m}

    def is_constant(self) -> bool:
        return all(m == ONE_MONO for m in self._terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not a constant")
        return self._terms.get(ONE_MONO, Fraction(0))

    def coefficient(self, mono: Monomial) -> Fraction:
        return self._terms.get(mono, Fraction(0))

    def max_jet_order(self, dep: str = "u") -> int:
        orders = [a.order for a in self.atoms() if isinstance(a, JetCoord) and a.dep == dep]
        return max(orders, default=-1)

    def degree_in(self, atom: Atom) -> int:
        return max((dict(m).get(atom, 0) for m in self._terms), default=0)

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other) -> "Expr":
        other = Expr.coerce(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0) + c
        return Expr(out)

    __radd__ = __add__

    def __neg__(self) -> "Expr":
        return Expr({m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "Expr":
        return self + (-Expr.coerce(other))

    def __rsub__(self, other) -> "Expr":
        return Expr.coerce(other) - self

    def __mul__(self, other) -> "Expr":
        other = Expr.coerce(other)
        out: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = mono_mul(m1, m2)
                out[m] = out.get(m, 0) + c1 * c2
        return Expr(out)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Expr":
        other = Expr.coerce(other)
        if not other.is_constant() or other.is_zero:
            raise ZeroDivisionError("division only by a nonzero rational constant")
        c = other.constant_value()
        return Expr({m: v / c for m, v in self._terms.items()})

    def __pow__(self, n: int) -> "Expr":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only nonnegative integer powers")
        out = Expr.const(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def scale(self, c) -> "Expr":
        c = _as_fraction(c)
        return Expr({m: v * c for m, v in self._terms.items()})

    # -- equality ------------------------------------------------------------
    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Expr.const(other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __repr__(self) -> str:
        from .render import to_text

        return f"Expr({to_text(self)!r})"

    def __str__(self) -> str:
        from .render import to_text

        return to_text(self)

    # -- structural helpers -------------------------------------------------
    def split(self, is_marker: Callable[[Atom], bool]) -> dict[Monomial, "Expr"]:
        """Group terms by the sub-monomial of marker atoms.

        Returns ``{marker monomial: coefficient Expr}`` such that
        ``sum(Expr({m: 1}) * c) == self``.
        """
        groups: dict[Monomial, dict] = {}
        for m, c in self._terms.items():
            marker = tuple((a, p) for a, p in m if is_marker(a))
            rest = tuple((a, p) for a, p in m if not is_marker(a))
            g = groups.setdefault(marker, {})
            g[rest] = g.get(rest, 0) + c
        return {k: Expr(v) for k, v in groups.items()}

    def map_atoms(self, fn: Callable[[Atom], Atom]) -> "Expr":
        out: dict = {}
        for m, c in self._terms.items():
            powers: dict = {}
            for a, p in m:
                b = fn(a)
                powers[b] = powers.get(b, 0) + p
            nm = _mono_from_powers(powers)
            out[nm] = out.get(nm, 0) + c
        return Expr(out)

    def divide_monomial(self, mono: Monomial) -> "Expr":
        out = {}
        for m, c in self._terms.items():
            powers = dict(m)
            for a, p in mono:
                if powers.get(a, 0) < p:
                    raise ValueError("monomial does not divide expression")
                powers[a] -= p
            out[_mono_from_powers(powers)] = c
        return Expr(out)


def monomial_expr(mono: Monomial, coeff=1) -> Expr:
    return Expr({mono: _as_fraction(coeff)})


def var(name: str) -> Expr:
    return Expr.atom(IndependentVar(name))


def param(name: str) -> Expr:
    return Expr.atom(Parameter(name))


def jet(dep: str, index: str | Iterable[str] = ()) -> Expr:
    return Expr.atom(JetCoord(dep, tuple(index)))


def func(name: str, order: int = 0) -> Expr:
    return Expr.atom(FuncSym(name, order))


def equivalent(a: Expr, b: Expr) -> bool:
    return (Expr.coerce(a) - Expr.coerce(b)).is_zero


def normalize(e: Expr) -> Expr:
    # Exprs are canonical on construction; kept as an explicit operation.
    return Expr(e.terms)


def content_monomial(e: Expr, is_factor: Callable[[Atom], bool]) -> Monomial:
    """Largest monomial in the selected atoms dividing every term of ``e``."""
    if e.is_zero:
        return ONE_MONO
    common: dict | None = None
    for m in e.terms:
        powers = {a: p for a, p in m if is_factor(a)}
        if common is None:
            common = powers
        else:
            common = {a: min(p, powers[a]) for a, p in common.items() if a in powers}
    return _mono_from_powers(dict(common or {}))


# -- calculus --------------------------------------------------------------


@lru_cache(maxsize=None)
def _atom_total_derivative(a: Atom, v: str) -> Expr:
    if isinstance(a, IndependentVar):
        return Expr.const(1 if a.name == v else 0)
    if isinstance(a, Parameter):
        return Expr()
    if isinstance(a, FuncSym):
        return Expr.atom(FuncSym(a.name, a.order + 1)) * Expr.atom(JetCoord("u", (v,)))
    if isinstance(a, JetCoord):
        return Expr.atom(a.differentiate(v))
    if isinstance(a, ConstrainedFuncSym):
        out = Expr()
        if v in a.args:
            out = out + Expr.atom(a.differentiate(v))
        if "u" in a.args:
            out = out + Expr.atom(a.differentiate("u")) * Expr.atom(JetCoord("u", (v,)))
        return out
    if isinstance(a, WaveSym):
        if a.var != v:
            return Expr()
        w = Expr.atom(Parameter(a.freq))
        if a.fn == "cos":
            return -w * Expr.atom(WaveSym("sin", a.freq, a.var))
        if a.fn == "sin":
            return w * Expr.atom(WaveSym("cos", a.freq, a.var))
        return w * Expr.atom(a) * a.sign
    raise TypeError(a)


@lru_cache(maxsize=None)
def _atom_partial_u(a: Atom) -> Expr:
    if a == U:
        return Expr.const(1)
    if isinstance(a, FuncSym):
        return Expr.atom(FuncSym(a.name, a.order + 1))
    if isinstance(a, ConstrainedFuncSym) and "u" in a.args:
        return Expr.atom(a.differentiate("u"))
    return Expr()


def _leibniz(e: Expr, atom_derivative: Callable[[Atom], Expr]) -> Expr:
    out: dict = {}
    for mono, c in e.terms.items():
        for i, (a, p) in enumerate(mono):
            da = atom_derivative(a)
            if da.is_zero:
                continue
            rest = mono[:i] + (((a, p - 1),) if p > 1 else ()) + mono[i + 1 :]
            for m2, c2 in da.terms.items():
                m = mono_mul(rest, m2)
                out[m] = out.get(m, 0) + c * p * c2
    return Expr(out)


def total_derivative(e: Expr, var_name: str) -> Expr:
    """D_i: differentiate along ``var_name`` chaining through every jet."""
    if isinstance(var_name, IndependentVar):
        var_name = var_name.name
    return _leibniz(Expr.coerce(e), lambda a: _atom_total_derivative(a, var_name))


def total_derivatives(e: Expr, index: Iterable[str]) -> Expr:
    for s in index:
        e = total_derivative(e, s)
    return e


def jet_partial(e: Expr, a: Atom) -> Expr:
    """Formal partial derivative on jet space.

    All atoms are independent coordinates, except that ``u`` itself is the
    argument of the function symbols (so d f(u)/du = f'(u)) and of
    constrained functions that list ``u`` among their arguments.
    """
    e = Expr.coerce(e)
    if a == U:
        return _leibniz(e, _atom_partial_u)
    return _leibniz(e, lambda b: Expr.const(1) if b == a else Expr())


def substitute(e: Expr, bindings: Mapping[Atom, Expr]) -> Expr:
    """Simultaneous substitution.

    Binding ``v`` (the order-zero jet of v) also binds every jet ``v_I`` to
    ``D_I`` of the image, unless a jet is bound explicitly, in which case the
    explicit image must agree with the derived one.
    """
    e = Expr.coerce(e)
    bindings = {k: Expr.coerce(val) for k, val in bindings.items()}
    v0 = JetCoord("v")
    derived_v = v0 in bindings
    for a, img in bindings.items():
        if derived_v and isinstance(a, JetCoord) and a.dep == "v" and a.index:
            expected = total_derivatives(bindings[v0], a.index)
            if not equivalent(expected, img):
                raise ValueError(f"binding for {a.name} is inconsistent with the binding for v")

    images: dict[Atom, Expr] = {}

    def image(a: Atom) -> Expr | None:
        if a in images:
            return images[a]
        if a in bindings:
            img = bindings[a]
        elif derived_v and isinstance(a, JetCoord) and a.dep == "v":
            img = total_derivatives(bindings[v0], a.index)
        else:
            img = None
        images[a] = img
        return img

    out = Expr()
    acc: dict = {}
    for mono, c in e.terms.items():
        kept = []
        factor = Expr.const(c)
        for a, p in mono:
            img = image(a)
            if img is None:
                kept.append((a, p))
            else:
                factor = factor * (img**p)
        if kept:
            factor = factor * Expr({tuple(kept): Fraction(1)})
        for m, cc in factor.terms.items():
            acc[m] = acc.get(m, 0) + cc
    out = Expr(acc)
    return out


# -- rewriting -------------------------------------------------------------


class Rule:
    """Oriented rewrite ``head -> replacement`` closed under differentiation.

    For jets and constrained functions any derivative of ``head`` is rewritten
    by differentiating ``replacement``; for function symbols every higher
    derivative order is rewritten by differentiating in u.
    """

    __slots__ = ("head", "replacement")

    def __init__(self, head: Atom, replacement: Expr):
        self.head = head
        self.replacement = Expr.coerce(replacement)

    def __repr__(self) -> str:
        from .render import atom_text

        return f"Rule({atom_text(self.head)} -> {self.replacement})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Rule) and (self.head, self.replacement) == (other.head, other.replacement)

    def __hash__(self) -> int:
        return hash((self.head, self.replacement))

    def match(self, a: Atom) -> Expr | None:
        h = self.head
        if isinstance(h, JetCoord):
            if not (isinstance(a, JetCoord) and a.dep == h.dep):
                return None
            extra = remove_index(a.index, h.index)
            return None if extra is None else total_derivatives(self.replacement, extra)
        if isinstance(h, ConstrainedFuncSym):
            if not (isinstance(a, ConstrainedFuncSym) and a.name == h.name and a.args == h.args):
                return None
            extra = remove_index(a.index, h.index)
            if extra is None:
                return None
            out = self.replacement
            for s in extra:
                out = jet_partial(out, U) if s == "u" else _partial_explicit(out, s)
            return out
        if isinstance(h, FuncSym):
            if not (isinstance(a, FuncSym) and a.name == h.name and a.order >= h.order):
                return None
            out = self.replacement
            for _ in range(a.order - h.order):
                out = jet_partial(out, U)
            return out
        if a == h:
            return self.replacement
        return None


def _partial_explicit(e: Expr, v: str) -> Expr:
    """Partial derivative along ``v`` of functions of (t,x,y,z) only."""

    def d(a: Atom) -> Expr:
        if isinstance(a, (IndependentVar, WaveSym)):
            return _atom_total_derivative(a, v)
        if isinstance(a, ConstrainedFuncSym):
            return Expr.atom(a.differentiate(v)) if v in a.args else Expr()
        if isinstance(a, (Parameter, FuncSym, JetCoord)):
            if isinstance(a, Parameter):
                return Expr()
            raise ValueError("explicit partial of a jet-dependent replacement")
        raise TypeError(a)

    return _leibniz(e, d)


def rewrite(e: Expr, rules: Iterable[Rule], max_rounds: int = 64) -> Expr:
    """Apply ``rules`` until no atom matches."""
    rules = list(rules)
    if not rules:
        return Expr.coerce(e)
    cache: dict[Atom, Expr | None] = {}

    def lookup(a: Atom) -> Expr | None:
        if a not in cache:
            hit = None
            for r in rules:
                hit = r.match(a)
                if hit is not None:
                    break
            cache[a] = hit
        return cache[a]

    e = Expr.coerce(e)
    for _ in range(max_rounds):
        bindings = {a: img for a in e.atoms() if (img := lookup(a)) is not None}
        if not bindings:
            return e
        e = _plain_substitute(e, bindings)
    raise RuntimeError("rewrite rules did not terminate")


def _plain_substitute(e: Expr, bindings: Mapping[Atom, Expr]) -> Expr:
    acc: dict = {}
    for mono, c in e.terms.items():
        kept = []
        factor = Expr.const(c)
        for a, p in mono:
            if a in bindings:
                factor = factor * (bindings[a] ** p)
            else:
                kept.append((a, p))
        if kept:
            factor = factor * Expr({tuple(kept): Fraction(1)})
        for m, cc in factor.terms.items():
            acc[m] = acc.get(m, 0) + cc
    return Expr(acc)


def iter_jets(e: Expr, dep: str = "u") -> Iterator[JetCoord]:
    for a in sorted(e.atoms(), key=lambda a: a.sort_key()):
        if isinstance(a, JetCoord) and a.dep == dep:
            yield a
