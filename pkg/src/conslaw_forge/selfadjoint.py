"""Substitutions v = phi(x, u) that make an equation nonlinearly self-adjoint.

The pipeline is: insert a generic phi(t, x, y, z, u) into the adjoint
equation, fix the multiplier from the u_t coefficient, split the remainder
by jet monomials and function symbols (treated as independent), and solve
the resulting linear system for phi over a closed library of families:
multilinear polynomials, trigonometric/exponential pairs from w'' + r w = 0,
and coefficient functions constrained by a backward heat equation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .adjoint import U_T, DifferentialEquation, adjoint_equation, on_solutions
from .core.atoms import (
    V,
    Atom,
    ConstrainedFuncSym,
    FuncSym,
    IndependentVar,
    JetCoord,
    Parameter,
    WaveSym,
    sort_index,
)
from .core.expr import (
    Expr,
    Rule,
    content_monomial,
    jet_partial,
    rewrite,
    substitute,
)
from .core.render import to_json, to_text

PHI = "phi"
COEFFICIENT_FUNCTIONS = ("alpha", "beta", "gamma", "sigma", "kappa", "mu", "nu", "rho")
ANSATZ_CHOICES = ("auto", "poly", "trig", "exp", "constrained")

TAG_POLYNOMIAL = "solvable-polynomial"
TAG_ODE = "ODE-branch"
TAG_CONSTRAINED = "constrained-symbol"
TAG_INCONSISTENT = "inconsistent"


class OutsideAnsatzError(ValueError):
    """The determining system has a shape the solver library does not cover."""


class NotSelfAdjointError(ValueError):
    """The determining system forces phi = 0."""


class VerificationError(AssertionError):
    def __init__(self, message: str, residual: Expr):
        self.residual = residual
        super().__init__(f"{message}: residual {to_text(residual)}")


@dataclass(frozen=True)
class DeterminingSystem:
    equation: DifferentialEquation
    constraints: tuple[Expr, ...]
    tag: str
    phi_args: tuple[str, ...]
    multiplier: Expr
    dropped_args: tuple[str, ...] = ()
    raw: tuple[Expr, ...] = ()

    @property
    def phi(self) -> ConstrainedFuncSym:
        return ConstrainedFuncSym(PHI, self.phi_args)

    def to_dict(self) -> dict:
        return {
            "constraints": [to_text(c) for c in self.constraints],
            "tag": self.tag,
            "phi_args": list(self.phi_args),
            "independent_of": list(self.dropped_args),
            "lambda": to_text(self.multiplier),
        }


@dataclass(frozen=True)
class Substitution:
    """v = phi with free parameters and (optionally) constrained coefficient functions."""

    phi: Expr
    params: tuple[str, ...] = ()
    constraints: tuple[Expr, ...] = ()
    rules: tuple[Rule, ...] = ()
    v_rules: tuple[Rule, ...] = ()
    family: str = "explicit"
    functions: tuple[str, ...] = ()

    def __post_init__(self):
        if Expr.coerce(self.phi).is_zero:
            raise ValueError("the substitution phi must not vanish")

    def specialize(self, values: dict[str, int | Fraction]) -> "Substitution":
        """Fix some of the free parameters to numbers."""
        bindings: dict[Atom, Expr] = {Parameter(p): Expr.const(c) for p, c in values.items() if p in self.params}
        phi = substitute(self.phi, bindings)
        return Substitution(
            phi,
            tuple(p for p in self.params if p not in values),
            self.constraints,
            self.rules,
            self.v_rules,
            self.family,
            self.functions,
        )

    def to_dict(self) -> dict:
        return {
            "phi": to_text(self.phi),
            "phi_json": to_json(self.phi),
            "params": list(self.params),
            "functions": list(self.functions),
            "constraints": [to_text(c) + " = 0" for c in self.constraints],
            "family": self.family,
        }


def _phi_atoms(e: Expr) -> list[ConstrainedFuncSym]:
    return [a for a in e.atoms() if isinstance(a, ConstrainedFuncSym) and a.name == PHI]


def _lead(c: Expr) -> ConstrainedFuncSym:
    """Leading phi-jet: one containing t if any, else the highest order."""
    atoms = _phi_atoms(c)
    return max(atoms, key=lambda a: ("t" in a.index, len(a.index), a.index))


def _normalize_constraint(c: Expr) -> Expr:
    for mono in c.terms:
        phis = [(a, p) for a, p in mono if isinstance(a, ConstrainedFuncSym) and a.name == PHI]
        if len(phis) != 1 or phis[0][1] != 1:
            raise OutsideAnsatzError(f"determining equation {to_text(c)} is not linear in phi")
    common = content_monomial(c, lambda a: isinstance(a, (Parameter, IndependentVar)) or a == JetCoord("u"))
    if common:
        c = c.divide_monomial(common)
    lead = _lead(c)
    lead_coeff = jet_partial(c, lead)
    if lead_coeff.is_constant():
        c = c / lead_coeff.constant_value()
    else:
        # strip the rational content so the representation is canonical
        first = lead_coeff.items()[0][1]
        c = c / first
    return c


def _sort_constraints(cs) -> tuple[Expr, ...]:
    unique: dict[Expr, None] = {}
    for c in cs:
        if not c.is_zero:
            unique.setdefault(c, None)

    def key(c: Expr):
        lead = _lead(c)
        return (len(lead.index) == 0, lead.sort_key(), len(c))

    return tuple(sorted(unique, key=key))


def _is_marker(a: Atom) -> bool:
    return isinstance(a, FuncSym) or (isinstance(a, JetCoord) and a.dep == "u" and a.order > 0)


def determining_system(eq: DifferentialEquation) -> DeterminingSystem:
    """Linear system on phi equivalent to F*|_{v=phi} = lambda F."""
    Fstar = adjoint_equation(eq).F
    args = tuple(eq.variables) + ("u",)
    phi = ConstrainedFuncSym(PHI, args)
    S = substitute(Fstar, {V: Expr.atom(phi)})
    lam = jet_partial(S, U_T) / eq.time_coefficient
    R = eq.simplify(S - lam * eq.F)
    groups = R.split(_is_marker)
    raw = tuple(_normalize_constraint(c) for c in groups.values() if not c.is_zero)
    constraints = _sort_constraints(raw)

    dropped: tuple[str, ...] = ()
    phi_u = Expr.atom(ConstrainedFuncSym(PHI, args, ("u",)))
    if phi_u in constraints:
        new_args = tuple(s for s in args if s != "u")
        dropped = ("u",)

        def collapse(e: Expr) -> Expr:
            bindings = {
                a: (Expr() if "u" in a.index else Expr.atom(ConstrainedFuncSym(PHI, new_args, a.index)))
                for a in _phi_atoms(e)
            }
            return substitute(e, bindings)

        constraints = _sort_constraints(_normalize_constraint(c) for c in map(collapse, constraints) if c)
        lam = collapse(lam)
        args = new_args

    if any(c == Expr.atom(ConstrainedFuncSym(PHI, args)) for c in constraints):
        tag = TAG_INCONSISTENT
    elif any("t" in _lead(c).index and len(c) > 1 for c in constraints):
        tag = TAG_CONSTRAINED
    elif any(len(c) > 1 for c in constraints):
        tag = TAG_ODE
    else:
        tag = TAG_POLYNOMIAL
    return DeterminingSystem(eq, constraints, tag, args, lam, dropped, raw)


# -- solving -----------------------------------------------------------------


def _square_root_param(r: Expr) -> tuple[int, str] | None:
    """r = s * w^2 with s = +-1 and w a parameter -> (s, w)."""
    items = r.items()
    if len(items) != 1:
        return None
    mono, c = items[0]
    if abs(c) != 1 or len(mono) != 1:
        return None
    (a, p), = mono
    if not isinstance(a, Parameter) or p != 2:
        return None
    return int(c), a.name


@dataclass
class _Plan:
    const: set = field(default_factory=set)
    affine: set = field(default_factory=set)
    waves: dict = field(default_factory=dict)  # var -> (fn, freq)
    heat: tuple | None = None  # (space var, k Expr)


def _plan(sys: DeterminingSystem) -> _Plan | None:
    """Per-variable classification; None means phi = 0 is forced."""
    plan = _Plan()
    phi0 = ConstrainedFuncSym(PHI, sys.phi_args)
    for c in sys.constraints:
        atoms = _phi_atoms(c)
        if len(c) == 1:
            (a,) = atoms
            idx = a.index
            if idx == ():
                return None
            if len(idx) == 1:
                plan.const.add(idx[0])
            elif len(idx) == 2 and idx[0] == idx[1]:
                plan.affine.add(idx[0])
            else:
                raise OutsideAnsatzError(f"outside ansatz library: {to_text(c)} = 0")
            continue
        lead = _lead(c)
        others = [a for a in atoms if a != lead]
        if len(others) != 1:
            raise OutsideAnsatzError(f"outside ansatz library: {to_text(c)} = 0")
        (other,) = others
        coeff = jet_partial(c, other)
        if len(lead.index) == 2 and lead.index[0] == lead.index[1] and other == phi0 and "t" not in lead.index:
            s = lead.index[0]
            sq = _square_root_param(coeff)
            if sq is None:
                raise OutsideAnsatzError(
                    f"outside ansatz library: cannot decide the sign of {to_text(coeff)} in "
                    f"{to_text(c)} = 0; specialise it as +omega^2 or -delta^2"
                )
            sign, w = sq
            if s in plan.waves:
                raise OutsideAnsatzError(f"conflicting equations for {s}")
            plan.waves[s] = ("trig" if sign > 0 else "exp", w)
        elif lead.index == ("t",) and len(other.index) == 2 and other.index[0] == other.index[1]:
            if plan.heat is not None:
                raise OutsideAnsatzError("more than one heat-type constraint")
            plan.heat = (other.index[0], coeff)
        else:
            raise OutsideAnsatzError(f"outside ansatz library: {to_text(c)} = 0")

    plan.affine -= plan.const
    for s in sys.phi_args:
        claims = [s in plan.const, s in plan.affine, s in plan.waves]
        if plan.heat is not None:
            claims.append(s in ("t", plan.heat[0]))
        if sum(claims) > 1:
            raise OutsideAnsatzError(f"conflicting equations for phi in {s}")
        if sum(claims) == 0:
            raise OutsideAnsatzError(f"phi is unconstrained in {s}; outside ansatz library")
    return plan


def _monomials(vars_: list[str]) -> list[tuple[str, ...]]:
    subsets = [c for n in range(len(vars_), -1, -1) for c in itertools.combinations(vars_, n)]
    return subsets  # (-degree, lexicographic) order: xyz, xy, xz, yz, x, y, z, ()


def _wave_basis(s: str, kind: str, w: str) -> list[Expr]:
    if kind == "trig":
        return [Expr.atom(WaveSym("cos", w, s)), Expr.atom(WaveSym("sin", w, s))]
    return [Expr.atom(WaveSym("exp", w, s, 1)), Expr.atom(WaveSym("exp", w, s, -1))]


def _family_name(plan: _Plan) -> str:
    parts = []
    if plan.waves:
        parts.append("+".join(k for k, _ in plan.waves.values()))
    if plan.heat:
        parts.append("constrained")
    return "/".join(parts) if parts else "polynomial"


def _check_ansatz(plan: _Plan, ansatz: str):
    if ansatz == "auto":
        return
    kinds = {k for k, _ in plan.waves.values()}
    needed = set(kinds)
    if plan.heat:
        needed.add("constrained")
    allowed = {"poly": set(), "trig": {"trig"}, "exp": {"exp"}, "constrained": {"constrained", "trig", "exp"}}[ansatz]
    if not needed <= allowed or (ansatz != "poly" and ansatz not in needed):
        raise OutsideAnsatzError(f"family {_family_name(plan)!r} is outside the requested ansatz {ansatz!r}")


def solve_family(sys: DeterminingSystem, ansatz: str = "auto") -> Substitution | None:
    """General solution of the system, or None when only phi = 0 solves it."""
    if ansatz not in ANSATZ_CHOICES:
        raise ValueError(f"ansatz must be one of {ANSATZ_CHOICES}")
    if "u" in sys.phi_args:
        raise OutsideAnsatzError("phi depends on u; outside ansatz library")
    plan = _plan(sys)
    if plan is None:
        return None
    _check_ansatz(plan, ansatz)

    poly_vars = [s for s in sys.phi_args if s in plan.affine]
    monos = _monomials(poly_vars)
    wave_vars = [s for s in sys.phi_args if s in plan.waves]
    if len(wave_vars) > 1:
        raise OutsideAnsatzError("more than one oscillatory/exponential direction")
    waves = _wave_basis(wave_vars[0], *plan.waves[wave_vars[0]]) if wave_vars else [Expr.const(1)]

    phi = Expr()
    params: list[str] = []
    functions: list[str] = []
    constraints: list[Expr] = []
    rules: list[Rule] = []
    for i, (mono, wave) in enumerate(_terms_order(monos, waves, plan, wave_vars)):
        basis = wave
        for s in mono:
            basis = basis * Expr.atom(IndependentVar(s))
        if plan.heat:
            space, k = plan.heat
            name = COEFFICIENT_FUNCTIONS[i] if i < len(COEFFICIENT_FUNCTIONS) else f"c{i + 1}"
            fargs = tuple(sort_index(("t", space)))
            fn = ConstrainedFuncSym(name, fargs)
            coef = Expr.atom(fn)
            functions.append(name)
            lap = Expr.atom(fn.differentiate(space, space))
            constraints.append(Expr.atom(fn.differentiate("t")) + k * lap)
            rules.append(Rule(fn.differentiate("t"), -k * lap))
        else:
            name = _param_name(i, mono, monos, waves)
            params.append(name)
            coef = Expr.atom(Parameter(name))
        phi = phi + coef * basis

    v_rules = tuple(_v_rule(c) for c in sys.constraints)
    return Substitution(
        phi,
        tuple(sorted(params, key=_param_sort_key)),
        tuple(constraints),
        tuple(rules),
        v_rules,
        _family_name(plan),
        tuple(functions),
    )


def _terms_order(monos, waves, plan, wave_vars):
    if len(waves) == 1:
        return [(m, waves[0]) for m in monos]
    return [(m, w) for m in monos for w in waves]


def _param_name(i: int, mono, monos, waves) -> str:
    if len(waves) == 1:
        return f"a{i + 1}"
    letter = chr(ord("A") + monos.index(mono))
    return f"{letter}{i % len(waves) + 1}"


def _param_sort_key(name: str):
    return (name[0], int(name[1:]))


def _v_rule(c: Expr) -> Rule:
    """Rewrite rule on jets of v equivalent to the phi-constraint c = 0."""
    lead = _lead(c)
    coeff = jet_partial(c, lead)
    rest = c - coeff * Expr.atom(lead)
    if not coeff.is_constant():
        raise OutsideAnsatzError(f"cannot orient {to_text(c)}")

    def to_v(a: Atom) -> Atom:
        if isinstance(a, ConstrainedFuncSym) and a.name == PHI:
            return JetCoord("v", a.index)
        return a

    return Rule(JetCoord("v", lead.index), (-rest / coeff.constant_value()).map_atoms(to_v))


def solve_substitution(sys: DeterminingSystem, ansatz: str = "auto") -> Substitution:
    if sys.tag == TAG_INCONSISTENT:
        raise NotSelfAdjointError("not nonlinearly self-adjoint: the determining system forces phi = 0")
    family = solve_family(sys, ansatz)
    if family is None:
        raise NotSelfAdjointError("not nonlinearly self-adjoint: the determining system forces phi = 0")
    return family


def self_adjointness_residual(eq: DifferentialEquation, s: Substitution) -> tuple[Expr, Expr]:
    """(lambda, F*|_{v=phi} - lambda F) with the substitution's rewrites applied."""
    Fstar = adjoint_equation(eq).F
    S = substitute(Fstar, {V: s.phi})
    lam = jet_partial(S, U_T) / eq.time_coefficient
    residual = rewrite(eq.simplify(S - lam * eq.F), s.rules)
    return rewrite(lam, s.rules), residual


def verify_substitution(eq: DifferentialEquation, s: Substitution) -> Expr:
    """Check F*|_{v=phi} = lambda F identically; returns lambda."""
    lam, residual = self_adjointness_residual(eq, s)
    if not residual.is_zero:
        raise VerificationError("substitution does not satisfy the self-adjointness condition", residual)
    return lam


def numeric_self_adjointness_check(eq, s, samples: int = 1000, seed: int = 0) -> float:
    """Max |F*|_{v=phi}| over random jets on the solution manifold."""
    import numpy as np

    from .core.evaluate import evaluate, random_jet_point

    Fstar = adjoint_equation(eq).F
    S = rewrite(eq.simplify(substitute(Fstar, {V: s.phi})), s.rules)
    expr = on_solutions(S, eq)
    rng = np.random.default_rng(seed)
    point = random_jet_point([expr], rng, samples)
    return float(np.max(np.abs(evaluate(expr, point)))) if not expr.is_zero else 0.0
