"""Recursive-descent parser for the equation grammar.

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("-" | "+") unary | power
    power   := primary ("^" integer)?
    primary := number | "(" expr ")" | name | name "(" args ")"

Names: t x y z; u v and their jets (u_x, v_xy, ...); total derivatives
Dt() Dx() Dy() Dz(); function symbols f g h q with derivative suffixes
(f1 = f', f2 = f'') and antiderivatives F G H, written f(u) or bare f;
waves cos(w*x), sin(w*x), exp(w*x), exp(-w*x); constrained functions such
as alpha(t,y) with derivative suffixes (alpha_yy); declared parameters.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from .atoms import (
    INDEPENDENT_VARS,
    ConstrainedFuncSym,
    IndependentVar,
    JetCoord,
    Parameter,
    WaveSym,
    func_from_name,
)
from .expr import Expr, total_derivative

DEFAULT_PARAMS = (
    tuple(f"a{i}" for i in range(1, 9))
    + ("A1", "A2", "B1", "B2", "omega", "delta", "r", "k")
)
DEFAULT_FIELDS = {
    "alpha": ("t", "y"),
    "beta": ("t", "y"),
    "gamma": ("t", "y"),
    "sigma": ("t", "y"),
    "phi": ("t", "x", "y", "z", "u"),
}
_FUNC_RE = re.compile(r"^(?:[fghq]\d*|[FGH])$")
_JET_RE = re.compile(r"^([uv])(?:_([txyz]+))?$")
_DERIV_OPS = {"Dt": "t", "Dx": "x", "Dy": "y", "Dz": "z"}


class ParseError(ValueError):
    def __init__(self, message: str, position: int | None = None, text: str = ""):
        self.position = position
        self.text = text
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{where}")


class UnknownSymbolError(ParseError):
    pass


@dataclass
class Registry:
    """Names the parser accepts beyond the fixed vocabulary."""

    params: set[str] = field(default_factory=lambda: set(DEFAULT_PARAMS))
    fields: dict[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_FIELDS))

    def describe(self) -> str:
        return (
            "variables t x y z; jets u, v, u_<idx>, v_<idx>; operators Dt Dx Dy Dz; "
            "functions f g h q (suffix n = n-th derivative) F G H; waves sin cos exp; "
            f"fields {', '.join(sorted(self.fields))}; parameters {', '.join(sorted(self.params))}"
        )


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<name>[A-Za-z][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, registry: Registry):
        self.text = text
        self.registry = registry
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def error(self, msg: str, pos: int | None = None) -> ParseError:
        return ParseError(msg, self.tok[2] if pos is None else pos, self.text)

    def expect(self, value: str):
        kind, val, pos = self.tok
        if val != value or kind == "end":
            raise self.error(f"expected {value!r}, found {val or 'end of input'!r}")
        self.i += 1

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok[0] != "end":
            raise self.error(f"unexpected {self.tok[1]!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op = self.tok[1]
            self.i += 1
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            op, pos = self.tok[1], self.tok[2]
            self.i += 1
            rhs = self.unary()
            if op == "*":
                e = e * rhs
            else:
                if not rhs.is_constant() or rhs.is_zero:
                    raise ParseError("division only by a nonzero number", pos, self.text)
                e = e / rhs
        return e

    def unary(self) -> Expr:
        if self.tok[0] == "op" and self.tok[1] in ("-", "+"):
            op = self.tok[1]
            self.i += 1
            e = self.unary()
            return -e if op == "-" else e
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.i += 1
            neg = False
            if self.tok[1] == "-":
                neg = True
                self.i += 1
            kind, val, pos = self.tok
            if kind != "num" or "." in val:
                raise self.error("exponent must be an integer")
            self.i += 1
            n = int(val)
            if neg:
                if not base.is_constant() or base.is_zero:
                    raise ParseError("negative powers only of nonzero numbers", pos, self.text)
                return Expr.const(Fraction(1) / base.constant_value() ** n)
            return base**n
        return base

    def args(self) -> list[Expr]:
        self.expect("(")
        out = [self.expr()]
        while self.tok[1] == ",":
            self.i += 1
            out.append(self.expr())
        self.expect(")")
        return out

    def raw_args(self) -> list[str]:
        """Argument names of a field call such as alpha(t, y)."""
        self.expect("(")
        names = []
        while True:
            kind, val, pos = self.tok
            if kind != "name":
                raise self.error("expected a variable name")
            names.append(val)
            self.i += 1
            if self.tok[1] == ",":
                self.i += 1
                continue
            break
        self.expect(")")
        return names

    def primary(self) -> Expr:
        kind, val, pos = self.tok
        if kind == "num":
            self.i += 1
            return Expr.const(Fraction(val))
        if kind == "op" and val == "(":
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if kind != "name":
            raise self.error(f"unexpected {val or 'end of input'!r}")
        self.i += 1
        has_call = self.tok[1] == "("
        if val in _DERIV_OPS:
            (arg,) = self._single_arg(val)
            return total_derivative(arg, _DERIV_OPS[val])
        if val in ("sin", "cos", "exp"):
            (arg,) = self._single_arg(val)
            return self.wave(val, arg, pos)
        if _FUNC_RE.match(val):
            if has_call:
                (arg,) = self._single_arg(val)
                if arg != Expr.atom(JetCoord("u")):
                    raise ParseError(f"{val} takes the argument u", pos, self.text)
            return Expr.atom(func_from_name(val))
        if val in INDEPENDENT_VARS and not has_call:
            return Expr.atom(IndependentVar(val))
        m = _JET_RE.match(val)
        if m and not has_call:
            return Expr.atom(JetCoord(m.group(1), tuple(m.group(2) or "")))
        base, _, idx = val.partition("_")
        if base in self.registry.fields:
            args = self.registry.fields[base]
            if has_call:
                given = self.raw_args()
                if tuple(given) != args:
                    raise ParseError(
                        f"{base} is declared with arguments ({', '.join(args)})", pos, self.text
                    )
            try:
                return Expr.atom(ConstrainedFuncSym(base, args, tuple(idx)))
            except ValueError as exc:
                raise ParseError(str(exc), pos, self.text) from None
        if val in self.registry.params and not has_call:
            return Expr.atom(Parameter(val))
        raise UnknownSymbolError(
            f"unknown symbol {val!r}; known: {self.registry.describe()}", pos, self.text
        )

    def _single_arg(self, name: str) -> list[Expr]:
        if self.tok[1] != "(":
            raise self.error(f"{name} needs a parenthesised argument")
        args = self.args()
        if len(args) != 1:
            raise self.error(f"{name} takes one argument")
        return args

    def wave(self, fn: str, arg: Expr, pos: int) -> Expr:
        items = arg.items()
        ok = len(items) == 1 and abs(items[0][1]) == 1
        if ok:
            mono, c = items[0]
            atoms = dict(mono)
            params = [a for a in atoms if isinstance(a, Parameter)]
            vars_ = [a for a in atoms if isinstance(a, IndependentVar)]
            ok = len(atoms) == 2 and len(params) == 1 and len(vars_) == 1 and set(atoms.values()) == {1}
        if not ok:
            raise ParseError(f"{fn}() argument must be parameter*variable", pos, self.text)
        sign = int(c)
        w, x = params[0].name, vars_[0].name
        if fn == "exp":
            return Expr.atom(WaveSym("exp", w, x, sign))
        e = Expr.atom(WaveSym(fn, w, x))
        return -e if (fn == "sin" and sign < 0) else e


def parse(text: str, registry: Registry | None = None) -> Expr:
    """Parse grammar text into a canonical :class:`Expr`."""
    return _Parser(text, registry or Registry()).parse()
