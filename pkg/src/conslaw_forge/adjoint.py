"""Formal Lagrangian, Euler operator and adjoint equations.

Equations are stored as ``F = 0`` with the sign the user wrote: a body
``lhs = rhs`` becomes ``F = rhs - lhs`` (so ``u_t = ...`` gives ``F = -u_t + ...``).
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction

from .core.atoms import INDEPENDENT_VARS, V, FuncSym, IndependentVar, JetCoord
from .core.expr import Expr, Rule, jet_partial, rewrite, total_derivatives
from .core.parser import ParseError, Registry, parse
from .core.render import to_text

U_T = JetCoord("u", ("t",))


class EquationError(ValueError):
    pass


@dataclass(frozen=True)
class DifferentialEquation:
    """A scalar second-order equation ``F = 0``."""

    F: Expr
    variables: tuple[str, ...] = ("t", "x", "y", "z")
    dep: str = "u"
    relations: tuple[Rule, ...] = ()
    params: frozenset = frozenset()
    name: str = ""
    source: str = ""
    convention: str = "F = rhs - lhs"
    fields: tuple = ()

    def __post_init__(self):
        other = "v" if self.dep == "u" else "u"
        if self.dep == "u" and any(
            isinstance(a, JetCoord) and a.dep == other for a in self.F.atoms()
        ):
            raise EquationError("equation in u must not contain jets of v")
        order = self.F.max_jet_order(self.dep)
        if order > 2:
            raise EquationError(f"jet order {order} exceeds the supported order 2")

    @property
    def spatial(self) -> tuple[str, ...]:
        return tuple(s for s in self.variables if s != "t")

    @property
    def time_coefficient(self) -> Fraction:
        """Coefficient of u_t in F (must be a nonzero rational)."""
        c = jet_partial(self.F, U_T)
        if not c.is_constant() or c.is_zero:
            raise EquationError("F must contain u_t linearly with a constant coefficient")
        return c.constant_value()

    @property
    def solved_form(self) -> Expr | None:
        """Right-hand side R with u_t = R on solutions, if the equation is evolutionary."""
        try:
            c = self.time_coefficient
        except EquationError:
            return None
        rest = self.F - Expr.atom(U_T).scale(c)
        if any(isinstance(a, JetCoord) and a.dep == "u" and "t" in a.index for a in rest.atoms()):
            return None
        return -rest / c

    @property
    def function_names(self) -> set[str]:
        return {a.name for a in self.F.atoms() if isinstance(a, FuncSym)}

    @property
    def uses_antiderivatives(self) -> bool:
        return any(isinstance(a, FuncSym) and a.order == -1 for a in self.F.atoms())

    def solution_rule(self) -> Rule:
        rhs = self.solved_form
        if rhs is None:
            raise EquationError("equation is not of evolution type u_t = R")
        return Rule(U_T, rhs)

    def simplify(self, e: Expr) -> Expr:
        """Apply the declared function relations."""
        return rewrite(e, self.relations)

    def text(self) -> str:
        return to_text(self.F)


def on_solutions(e: Expr, eq: DifferentialEquation) -> Expr:
    """Eliminate u_t and all its derivatives using the solved form."""
    return eq.simplify(rewrite(e, [eq.solution_rule()]))


# -- operators ---------------------------------------------------------------


def formal_lagrangian(eq: DifferentialEquation) -> Expr:
    return Expr.atom(V) * eq.F


def variational_derivative(
    e: Expr, dep: str = "u", variables: tuple[str, ...] = INDEPENDENT_VARS
) -> Expr:
    """Euler operator ``sum_J (-D)_J dL/du_J``.

    One term per (sorted) multi-index J, so ``D_i D_k dL/du_ik`` is counted
    once for i != k; total derivatives act on every dependent variable.
    """
    e = Expr.coerce(e)
    base = JetCoord(dep)
    out = jet_partial(e, base)
    for a in e.atoms():
        if not (isinstance(a, JetCoord) and a.dep == dep and a.order > 0):
            continue
        term = total_derivatives(jet_partial(e, a), a.index)
        out = out + (term if a.order % 2 == 0 else -term)
    return out


def adjoint_equation(eq: DifferentialEquation) -> DifferentialEquation:
    """F* = delta(v F)/delta u, as an equation in v."""
    Fstar = eq.simplify(variational_derivative(formal_lagrangian(eq), eq.dep, eq.variables))
    return DifferentialEquation(
        Fstar,
        eq.variables,
        "v",
        eq.relations,
        eq.params,
        name=f"adjoint of {eq.name}" if eq.name else "adjoint",
        convention=eq.convention,
        fields=eq.fields,
    )


# -- equation files ----------------------------------------------------------

_HEADER_RE = re.compile(r"^\s*([A-Za-z_]+)\s*:\s*(.*)$")
_FIELD_DECL_RE = re.compile(r"^([A-Za-z]+)\s*\(([^)]*)\)$")


def parse_equation(
    body: str,
    *,
    registry: Registry | None = None,
    variables: tuple[str, ...] | None = None,
    relations: tuple[Rule, ...] = (),
    name: str = "",
) -> DifferentialEquation:
    """Parse ``lhs = rhs`` (F = rhs - lhs) or a bare ``F``."""
    registry = registry or Registry()
    if body.count("=") > 1:
        raise ParseError("at most one '=' allowed", body.index("=", body.index("=") + 1), body)
    if "=" in body:
        lhs, rhs = body.split("=")
        F = _parse_at(rhs, registry, len(lhs) + 1) - _parse_at(lhs, registry, 0)
    else:
        F = parse(body, registry)
    if variables is None:
        used = {a.name for a in F.atoms() if isinstance(a, IndependentVar)}
        used |= {s for a in F.atoms() if isinstance(a, JetCoord) for s in a.index}
        variables = tuple(s for s in INDEPENDENT_VARS if s == "t" or s in used)
    return DifferentialEquation(
        F,
        tuple(variables),
        relations=tuple(relations),
        params=frozenset(registry.params),
        name=name,
        source=body.strip(),
        fields=tuple(sorted(registry.fields.items())),
    )


def _parse_at(text: str, registry: Registry, offset: int) -> Expr:
    try:
        return parse(text, registry)
    except ParseError as exc:
        pos = None if exc.position is None else exc.position + offset
        raise type(exc)(str(exc).rsplit(" at position", 1)[0], pos, text) from None


def parse_relation(text: str, registry: Registry) -> Rule:
    """``q1 = r*f``: every derivative of q of order >= 1 becomes r times f's."""
    if "=" not in text:
        raise ParseError("relation needs '='", None, text)
    lhs, rhs = (s.strip() for s in text.split("=", 1))
    head = parse(lhs, registry)
    atoms = head.atoms()
    if len(head) != 1 or len(atoms) != 1 or head.items()[0][1] != 1:
        raise ParseError("relation head must be a single symbol", 0, text)
    (atom,) = atoms
    return Rule(atom, parse(rhs, registry))


def load_equation(text: str) -> DifferentialEquation:
    """Read an equation file: ``key: value`` header lines, then the equation.

    Header keys: ``name``, ``vars`` (e.g. ``t x y``), ``params``,
    ``relation`` (repeatable, e.g. ``q1 = r*f``) and ``fields`` (e.g.
    ``alpha(t,y)``).  The body follows a ``---`` line or an ``equation:`` key.
    """
    registry = Registry()
    header: dict[str, list[str]] = {}
    body_lines: list[str] = []
    in_body = False
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if in_body:
            body_lines.append(line)
            continue
        if line.strip() == "---":
            in_body = True
            continue
        m = _HEADER_RE.match(line)
        if m and m.group(1).lower() == "equation":
            in_body = True
            if m.group(2).strip():
                body_lines.append(m.group(2))
            continue
        if m:
            header.setdefault(m.group(1).lower(), []).append(m.group(2).strip())
            continue
        in_body = True
        body_lines.append(line)
    if not body_lines:
        raise ParseError("equation file has no equation body", None, text)

    for p in itertools.chain.from_iterable(h.replace(",", " ").split() for h in header.get("params", [])):
        registry.params.add(p)
    for decl in itertools.chain.from_iterable(h.split(";") for h in header.get("fields", [])):
        decl = decl.strip()
        if not decl:
            continue
        m = _FIELD_DECL_RE.match(decl.replace(" ", ""))
        if not m:
            raise ParseError(f"bad field declaration {decl!r}", None, decl)
        registry.fields[m.group(1)] = tuple(s for s in m.group(2).split(",") if s)
    variables = None
    if "vars" in header:
        variables = tuple(header["vars"][-1].replace(",", " ").split())
        bad = [s for s in variables if s not in INDEPENDENT_VARS]
        if bad:
            raise ParseError(f"unknown variables {bad}", None, header["vars"][-1])
    relations = tuple(parse_relation(r, registry) for r in header.get("relation", []))
    name = header.get("name", [""])[-1]
    return parse_equation(
        " ".join(body_lines), registry=registry, variables=variables, relations=relations, name=name
    )
