"""Conserved vectors from point symmetries of nonlinearly self-adjoint equations.

Vectors are built in terms of the adjoint variable v (with rewrite rules that
encode the determining system) and only expanded with v = phi on request.
Reduction moves total-derivative summands between components; every move
is recorded in the vector's trail.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

from .adjoint import U_T, DifferentialEquation, formal_lagrangian, on_solutions
from .core.atoms import (
    ANTIDERIVATIVE_NAMES,
    INDEPENDENT_VARS,
    U,
    V,
    Atom,
    ConstrainedFuncSym,
    FuncSym,
    IndependentVar,
    JetCoord,
    Parameter,
    WaveSym,
    remove_index,
    sort_index,
)
from .core.expr import (
    Expr,
    Rule,
    content_monomial,
    jet_partial,
    rewrite,
    substitute,
    total_derivative,
    total_derivatives,
)
from .core.render import to_json, to_latex, to_text, vector_latex
from .selfadjoint import Substitution

AXIS_FUNCTIONS = {"x": "f", "y": "g", "z": "h"}


class DivergenceError(ArithmeticError):
    """Div C is not a combination of F and its derivatives."""

    def __init__(self, message: str, residual: Expr):
        self.residual = residual
        super().__init__(f"{message}: residual {to_text(residual)}")


@dataclass(frozen=True)
class SymmetryGenerator:
    """X = xi^i d/dx^i + eta d/du."""

    xi: tuple[tuple[str, Expr], ...] = ()
    eta: Expr = field(default_factory=Expr)
    name: str = ""

    @classmethod
    def make(cls, xi: Mapping[str, object] | None = None, eta=0, name: str = "") -> "SymmetryGenerator":
        pairs = tuple((s, Expr.coerce(c)) for s, c in sorted((xi or {}).items()) if not Expr.coerce(c).is_zero)
        return cls(pairs, Expr.coerce(eta), name)

    @classmethod
    def translation(cls, var: str) -> "SymmetryGenerator":
        index = INDEPENDENT_VARS.index(var) + 1
        return cls.make({var: 1}, 0, f"X{index}")

    def to_dict(self) -> dict:
        return {"name": self.name, "xi": {s: to_text(c) for s, c in self.xi}, "eta": to_text(self.eta)}


def translations(variables: Iterable[str]) -> list[SymmetryGenerator]:
    return [SymmetryGenerator.translation(s) for s in variables]


def characteristic(X: SymmetryGenerator) -> Expr:
    """W = eta - xi^j u_j."""
    W = X.eta
    for s, c in X.xi:
        W = W - c * Expr.atom(JetCoord("u", (s,)))
    return W


@dataclass(frozen=True)
class Transfer:
    """C^source -= D_via(P) and C^target += D_source-axis(P)."""

    kind: str
    source: int
    target: int
    term: Expr

    def to_dict(self, variables) -> dict:
        return {
            "kind": self.kind,
            "from": f"C{self.source + 1}",
            "to": f"C{self.target + 1}",
            "term": to_text(self.term),
        }


@dataclass(frozen=True)
class ConservedVector:
    components: tuple[Expr, ...]
    variables: tuple[str, ...]
    rules: tuple[Rule, ...] = ()
    mu: Expr | None = None
    generator: SymmetryGenerator | None = None
    substitution: Substitution | None = None
    trail: tuple[Transfer, ...] = ()
    name: str = ""
    status: str = "derived"

    def __post_init__(self):
        if len(self.components) != len(self.variables):
            raise ValueError("one component per independent variable required")

    @property
    def in_v(self) -> bool:
        return any(isinstance(a, JetCoord) and a.dep == "v" for c in self.components for a in c.atoms())

    def divergence(self) -> Expr:
        out = Expr()
        for c, s in zip(self.components, self.variables):
            out = out + total_derivative(c, s)
        return rewrite(out, self.rules)

    def normal(self, e: Expr) -> Expr:
        return rewrite(e, self.rules)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "components": [to_text(c) for c in self.components],
            "components_json": [to_json(c) for c in self.components],
            "mu": None if self.mu is None else to_text(self.mu),
            "trivial": is_trivial(self),
            "status": self.status,
            "provenance": {
                "generator": None if self.generator is None else self.generator.to_dict(),
                "substitution": None if self.substitution is None else to_text(self.substitution.phi),
                "trail": [t.to_dict(self.variables) for t in self.trail],
            },
        }

    def latex(self) -> str:
        return vector_latex(self.components)


# -- construction -------------------------------------------------------------


def _second_partial(L: Expr, i: str, j: str) -> Expr:
    """dL/du_ij with the symmetric convention for mixed derivatives."""
    d = jet_partial(L, JetCoord("u", (i, j)))
    return d if i == j else d / 2


def conserved_vector(
    eq: DifferentialEquation, X: SymmetryGenerator, s: Substitution | None = None
) -> ConservedVector:
    """C^i = W [dL/du_i - D_j dL/du_ij] + D_j(W) dL/du_ij with L = v F."""
    L = formal_lagrangian(eq)
    W = characteristic(X)
    rules = _rules(eq, s)
    comps = []
    for i in eq.variables:
        bracket = jet_partial(L, JetCoord("u", (i,)))
        tail = Expr()
        for j in eq.variables:
            Lij = _second_partial(L, i, j)
            if Lij.is_zero:
                continue
            bracket = bracket - total_derivative(Lij, j)
            tail = tail + total_derivative(W, j) * Lij
        comps.append(rewrite(eq.simplify(W * bracket + tail), rules))
    cv = ConservedVector(tuple(comps), tuple(eq.variables), rules, None, X, s, (), _label(X, "raw"))
    return replace(cv, mu=_safe_mu(cv, eq))


def _rules(eq: DifferentialEquation, s: Substitution | None) -> tuple[Rule, ...]:
    out = list(eq.relations)
    if s is not None:
        out += list(s.v_rules) + list(s.rules)
    return tuple(out)


def _label(X: SymmetryGenerator | None, what: str) -> str:
    return f"{X.name} {what}".strip() if X is not None and X.name else what


def _safe_mu(cv: ConservedVector, eq: DifferentialEquation) -> Expr | None:
    try:
        return divergence_residual(cv, eq)
    except DivergenceError:
        return None


def expand(cv: ConservedVector) -> ConservedVector:
    """Eliminate v with the substitution (no-op for vectors free of v)."""
    s = cv.substitution
    if s is None or not cv.in_v:
        return cv
    rules = tuple(r for r in cv.rules if not (isinstance(r.head, JetCoord) and r.head.dep == "v"))

    def ex(e: Expr | None) -> Expr | None:
        return None if e is None else rewrite(substitute(e, {V: s.phi}), rules)

    return replace(cv, components=tuple(ex(c) for c in cv.components), mu=ex(cv.mu), rules=rules)


# -- divergence and characteristic ---------------------------------------------


def _t_count(a: JetCoord) -> int:
    return a.index.count("t")


def characteristic_operator(cv: ConservedVector, eq: DifferentialEquation) -> dict[tuple[str, ...], Expr]:
    """Coefficients mu_J with Div C = sum_J mu_J D_J F identically."""
    c = eq.time_coefficient
    R0 = eq.F - Expr.atom(U_T).scale(c)
    D = cv.divergence()
    ops: dict[tuple[str, ...], Expr] = {}
    while True:
        tjets = [a for a in D.atoms() if isinstance(a, JetCoord) and a.dep == "u" and "t" in a.index]
        if not tjets:
            break
        a = max(tjets, key=lambda a: (_t_count(a), a.order, a.sort_key()))
        J = remove_index(a.index, ("t",))
        quotient, rest = {}, {}
        for mono, coef in D.terms.items():
            powers = dict(mono)
            if a in powers:
                powers[a] -= 1
                if powers[a] == 0:
                    del powers[a]
                key = tuple(sorted(powers.items(), key=lambda kv: kv[0].sort_key()))
                quotient[key] = quotient.get(key, 0) + coef
            else:
                rest[mono] = coef
        Q = Expr(quotient) / c
        ops[J] = ops.get(J, Expr()) + Q
        D = cv.normal(eq.simplify(Expr(rest) - Q * total_derivatives(R0, J)))
    if not D.is_zero:
        raise DivergenceError("divergence does not vanish on solutions", D)
    return {J: m for J, m in sorted(ops.items()) if not m.is_zero}


def divergence_residual(cv: ConservedVector, eq: DifferentialEquation) -> Expr:
    """The multiplier mu of Div C = mu F (integrated over derivative terms).

    When Div C involves derivatives of F, mu is the characteristic
    sum_J (-D)_J mu_J, which equals Div C / F for vectors of the form
    Div C = mu F and is unchanged by equivalence transfers.
    """
    out = Expr()
    for J, m in characteristic_operator(cv, eq).items():
        term = total_derivatives(m, J)
        out = out + (term if len(J) % 2 == 0 else -term)
    return cv.normal(eq.simplify(out))


def defining_identity_residual(cv: ConservedVector, eq: DifferentialEquation, mu: Expr | None = None) -> Expr:
    """Div C - mu F (zero for vectors whose divergence is a multiple of F)."""
    mu = cv.mu if mu is None else mu
    if mu is None:
        raise ValueError("vector has no multiplier")
    return cv.normal(eq.simplify(cv.divergence() - mu * eq.F))


def on_shell_divergence(cv: ConservedVector, eq: DifferentialEquation) -> Expr:
    return cv.normal(on_solutions(cv.divergence(), eq))


def is_trivial(cv: ConservedVector) -> bool:
    """Div C vanishes identically, without using the equation."""
    return cv.divergence().is_zero


def oracle_residual(
    cv: ConservedVector, eq: DifferentialEquation, samples: int = 1000, seed: int = 0, models=None
) -> tuple[float, dict | None]:
    """Max |Div C| on random jets of solutions, summed in floating point.

    Each D_i C^i is evaluated separately; the jets u_t, u_tx, ... get the
    numeric values of the corresponding derivatives of the solved form
    u_t = R, so cancellations happen numerically, not symbolically.
    Returns (max residual, worst sample as {atom text: value}).
    """
    import numpy as np

    from .core.evaluate import evaluate, random_jet_point
    from .core.render import atom_text

    R = eq.solved_form
    if R is None:
        raise ValueError("the oracle needs an evolution equation u_t = R")
    comps = expand(cv)
    terms = [comps.normal(eq.simplify(total_derivative(c, s))) for c, s in zip(comps.components, comps.variables)]

    def tjets(e: Expr) -> set:
        return {a for a in e.atoms() if isinstance(a, JetCoord) and a.dep == "u" and "t" in a.index}

    shell: dict[JetCoord, Expr] = {}
    queue = set().union(*(tjets(e) for e in terms))
    while queue:
        a = queue.pop()
        if a in shell:
            continue
        J = tuple(s for s in a.index if s != "t") + ("t",) * (_t_count(a) - 1)
        shell[a] = comps.normal(eq.simplify(total_derivatives(R, J)))
        queue |= tjets(shell[a]) - set(shell)
    rng = np.random.default_rng(seed)
    point = random_jet_point(terms + list(shell.values()), rng, samples, models)
    for a in sorted(shell, key=_t_count):
        point.values[a] = np.broadcast_to(evaluate(shell[a], point), (samples,))
    total = np.zeros(samples)
    for e in terms:
        total = total + evaluate(e, point)
    vals = np.abs(total)
    k = int(np.argmax(vals))
    worst = {atom_text(a): float(np.broadcast_to(v, (samples,))[k]) for a, v in point.values.items()}
    return float(vals[k]), worst


# -- reduction -------------------------------------------------------------------


def antiderivative_in_u(B: Expr) -> Expr | None:
    """P with dP/du = B when B is built from u-free factors, u^m or a single f, g, h; else None."""
    out = Expr()
    for mono, c in B.terms.items():
        powers = dict(mono)
        if any(isinstance(a, JetCoord) and a.dep == "u" and a.order > 0 for a in powers):
            return None
        funcs = [a for a in powers if isinstance(a, FuncSym) or (isinstance(a, ConstrainedFuncSym) and "u" in a.args)]
        m = powers.pop(U, 0)
        if not funcs:
            powers[U] = m + 1
            out = out + Expr({tuple(sorted(powers.items(), key=lambda kv: kv[0].sort_key())): Fraction(c, m + 1)})
            continue
        if m or len(funcs) != 1 or powers[funcs[0]] != 1 or not isinstance(funcs[0], FuncSym):
            return None
        fn = funcs[0]
        if fn.order == 0 and fn.name not in ANTIDERIVATIVE_NAMES:
            return None
        del powers[fn]
        powers[FuncSym(fn.name, fn.order - 1)] = 1
        out = out + Expr({tuple(sorted(powers.items(), key=lambda kv: kv[0].sort_key())): c})
    return out


def _linear_coefficient(e: Expr, a: Atom) -> Expr | None:
    if e.degree_in(a) != 1:
        return None
    return jet_partial(e, a)


def _fold_mode(eq: DifferentialEquation, fold: str) -> bool:
    if fold == "on":
        return True
    if fold == "off":
        return False
    if fold != "auto":
        raise ValueError("fold must be 'auto', 'on' or 'off'")
    return eq.uses_antiderivatives or "q" in eq.function_names


def reduce_vector(cv: ConservedVector, eq: DifferentialEquation, fold: str = "auto") -> ConservedVector:
    """Equivalent vector with a derivative-free density and simplified fluxes.

    Steps: eliminate u_t from the density; integrate the density by parts
    until it contains no derivatives of u (each D_s P moves as D_t P to C^s);
    eliminate u_t from the fluxes; fold second-order cross derivatives
    u_{jK} of each flux C^i into C^j (axis order).  With ``fold`` on
    (default for equations with a source or antiderivative symbols)
    first-order cross terms B u_j whose u-antiderivative P has
    D_j P = B u_j are folded as well.
    """
    vars_ = tuple(cv.variables)
    if vars_[0] != "t":
        raise ValueError("the first independent variable must be t")
    comps = list(cv.components)
    trail = list(cv.trail)
    norm = lambda e: cv.normal(eq.simplify(e))  # noqa: E731
    sol = eq.solution_rule()

    def move(kind: str, i: int, j: int, P: Expr):
        """C^i -= D_{x_j} P, C^j += D_{x_i} P."""
        comps[i] = norm(comps[i] - total_derivative(P, vars_[j]))
        comps[j] = norm(comps[j] + total_derivative(P, vars_[i]))
        trail.append(Transfer(kind, i, j, P))

    # density
    comps[0] = norm(rewrite(comps[0], [sol]))
    stuck: set = set()
    while True:
        jets = [
            a for a in comps[0].atoms()
            if isinstance(a, JetCoord) and a.dep == "u" and a.order > 0 and a not in stuck
        ]
        if not jets:
            break
        a = max(jets, key=lambda a: (a.order, a.sort_key()))
        s = a.index[-1]
        if s not in vars_ or s == "t":
            stuck.add(a)
            continue
        B = _linear_coefficient(comps[0], a)
        if B is None:
            stuck.add(a)
            continue
        if a.order >= 2:
            P = B * Expr.atom(JetCoord("u", a.index[:-1]))
        else:
            P = antiderivative_in_u(B)
            if P is None:
                stuck.add(a)
                continue
        # C^1 -= D_s P, C^s += D_t P
        move("density", 0, vars_.index(s), P)

    # fluxes
    for k in range(1, len(comps)):
        comps[k] = norm(rewrite(comps[k], [sol]))

    folding = _fold_mode(eq, fold)
    for i in range(1, len(comps)):
        axis = vars_[i]
        for a in sorted(comps[i].atoms(), key=lambda a: a.sort_key(), reverse=True):
            if not (isinstance(a, JetCoord) and a.dep == "u" and a.order == 2):
                continue
            if a.index == (axis, axis):
                continue
            j_var = next(s for s in a.index if s != axis)
            if j_var not in vars_ or j_var == "t":
                continue
            B = _linear_coefficient(comps[i], a)
            if B is None:
                continue
            K = remove_index(a.index, (j_var,))
            move("cross", i, vars_.index(j_var), B * Expr.atom(JetCoord("u", K)))
        if not folding:
            continue
        for j_var in vars_[1:]:
            if j_var == axis:
                continue
            uj = JetCoord("u", (j_var,))
            B = _linear_coefficient(comps[i], uj)
            if B is None:
                continue
            P = antiderivative_in_u(B)
            if P is None:
                continue
            if not norm(total_derivative(P, j_var) - B * Expr.atom(uj)).is_zero:
                continue
            move("antiderivative", i, vars_.index(j_var), P)

    out = replace(cv, components=tuple(comps), trail=tuple(trail), name=_label(cv.generator, "reduced"))
    return replace(out, mu=_safe_mu(out, eq))


# -- bases -----------------------------------------------------------------------


def _zero_symbols(e: Expr, params: set[str], functions: set[str], one: str | None) -> Expr:
    bindings: dict[Atom, Expr] = {}
    for a in e.atoms():
        if isinstance(a, Parameter) and a.name in params:
            bindings[a] = Expr.const(1 if a.name == one else 0)
        elif isinstance(a, ConstrainedFuncSym) and a.name in functions and a.name != one:
            bindings[a] = Expr()
    return substitute(e, bindings) if bindings else e


def _content_of_all(comps: Iterable[Expr]) -> tuple:
    total = {}
    for c in comps:
        for m in c.terms:
            total[m] = 1
    return content_monomial(Expr(total), lambda a: isinstance(a, Parameter))


def nontrivial_basis(family: ConservedVector, eq: DifferentialEquation) -> list[ConservedVector]:
    """Linearly independent nontrivial members, one per free symbol of the substitution."""
    fam = expand(family)
    s = fam.substitution
    if s is None:
        return [] if is_trivial(fam) else [fam]
    out: list[ConservedVector] = []
    rows: list[dict] = []
    for symbol in list(s.params) + list(s.functions):
        params, functions = set(s.params), set(s.functions)
        comps = tuple(fam.normal(_zero_symbols(c, params, functions, symbol)) for c in fam.components)
        common = _content_of_all(comps)
        if common:
            comps = tuple(c.divide_monomial(common) for c in comps)
        member = replace(fam, components=comps, name=f"{_label(fam.generator, '')}[{symbol}]".strip())
        if all(c.is_zero for c in comps) or is_trivial(member):
            continue
        row = coefficient_row(member)
        if rank(rows + [row]) > len(rows):
            rows.append(row)
            out.append(replace(member, mu=_safe_mu(member, eq)))
    return out


def coefficient_row(cv: ConservedVector) -> dict:
    return {(i, m): c for i, comp in enumerate(cv.components) for m, c in comp.terms.items()}


def rank(rows: list[dict]) -> int:
    """Exact rank of sparse rational rows (Gaussian elimination)."""
    pivots: list[tuple] = []
    reduced: list[dict] = []
    for row in rows:
        r = dict(row)
        for col, prow in zip(pivots, reduced):
            if col in r:
                factor = r[col] / prow[col]
                for k, val in prow.items():
                    nv = r.get(k, 0) - factor * val
                    if nv == 0:
                        r.pop(k, None)
                    else:
                        r[k] = nv
        if r:
            col = min(r, key=lambda k: (k[0], repr(k[1])))
            pivots.append(col)
            reduced.append(r)
    return len(pivots)


def independent_union(groups: Iterable[Iterable[ConservedVector]]) -> list[ConservedVector]:
    """Concatenate bases, keeping only vectors that raise the rank."""
    out: list[ConservedVector] = []
    rows: list[dict] = []
    for group in groups:
        for cv in group:
            row = coefficient_row(cv)
            if rank(rows + [row]) > len(rows):
                rows.append(row)
                out.append(cv)
    return out


# -- axis permutations ----------------------------------------------------------


def _permute_atom(a: Atom, perm: Mapping[str, str]) -> Atom:
    funcs = {AXIS_FUNCTIONS[k]: AXIS_FUNCTIONS[v] for k, v in perm.items() if k in AXIS_FUNCTIONS}
    if isinstance(a, IndependentVar):
        return IndependentVar(perm.get(a.name, a.name))
    if isinstance(a, JetCoord):
        return JetCoord(a.dep, tuple(perm.get(s, s) for s in a.index))
    if isinstance(a, FuncSym):
        return FuncSym(funcs.get(a.name, a.name), a.order)
    if isinstance(a, ConstrainedFuncSym):
        return ConstrainedFuncSym(
            a.name, sort_index(perm.get(s, s) for s in a.args), tuple(perm.get(s, s) for s in a.index)
        )
    if isinstance(a, WaveSym):
        return WaveSym(a.fn, a.freq, perm.get(a.var, a.var), a.sign)
    return a


def permute_expr(e: Expr, perm: Mapping[str, str]) -> Expr:
    return Expr.coerce(e).map_atoms(lambda a: _permute_atom(a, perm))


def _check_perm(perm: Mapping[str, str]) -> dict[str, str]:
    perm = {k: v for k, v in perm.items()}
    if sorted(perm) != sorted(perm.values()) or "t" in perm or any(k not in AXIS_FUNCTIONS for k in perm):
        raise ValueError("axis permutation must permute spatial variables")
    return perm


def permute_equation(eq: DifferentialEquation, perm: Mapping[str, str]) -> DifferentialEquation:
    perm = _check_perm(perm)
    rels = tuple(Rule(_permute_atom(r.head, perm), permute_expr(r.replacement, perm)) for r in eq.relations)
    return replace(eq, F=permute_expr(eq.F, perm), relations=rels)


def permute_axes(cv: ConservedVector, perm: Mapping[str, str]) -> ConservedVector:
    """Relabel spatial axes, coefficient functions and components together.

    The substitution is kept when its determining rules are invariant under
    the permutation (then only the parameters are relabelled implicitly);
    otherwise phi is permuted as well.
    """
    perm = _check_perm(perm)
    vars_ = tuple(cv.variables)
    comps = [Expr()] * len(vars_)
    for k, s in enumerate(vars_):
        target = perm.get(s, s)
        if target not in vars_:
            raise ValueError(f"axis {target} is not a variable of this vector")
        comps[vars_.index(target)] = permute_expr(cv.components[k], perm)
    rules = tuple(Rule(_permute_atom(r.head, perm), permute_expr(r.replacement, perm)) for r in cv.rules)
    s = cv.substitution
    if s is not None:
        v_rules = tuple(Rule(_permute_atom(r.head, perm), permute_expr(r.replacement, perm)) for r in s.v_rules)
        if set(v_rules) == set(s.v_rules) and set(rules) == set(cv.rules):
            rules = cv.rules
        else:
            s = replace(
                s,
                phi=permute_expr(s.phi, perm),
                v_rules=v_rules,
                rules=tuple(Rule(_permute_atom(r.head, perm), permute_expr(r.replacement, perm)) for r in s.rules),
                constraints=tuple(permute_expr(c, perm) for c in s.constraints),
            )
    X = cv.generator
    if X is not None:
        X = SymmetryGenerator.make(
            {perm.get(v, v): permute_expr(c, perm) for v, c in X.xi},
            permute_expr(X.eta, perm),
            _permuted_name(X, perm),
        )
    mu = None if cv.mu is None else permute_expr(cv.mu, perm)
    trail = tuple(
        Transfer(t.kind, vars_.index(perm.get(vars_[t.source], vars_[t.source])),
                 vars_.index(perm.get(vars_[t.target], vars_[t.target])), permute_expr(t.term, perm))
        for t in cv.trail
    )
    return ConservedVector(tuple(comps), vars_, rules, mu, X, s, trail, cv.name, cv.status)


def _permuted_name(X: SymmetryGenerator, perm) -> str:
    if len(X.xi) == 1 and X.eta.is_zero and X.xi[0][1] == Expr.const(1):
        var = perm.get(X.xi[0][0], X.xi[0][0])
        return f"X{INDEPENDENT_VARS.index(var) + 1}"
    return X.name


# -- presentation -----------------------------------------------------------------


def _pull_sign(e: Expr) -> tuple[int, Expr]:
    signs = [1 if c > 0 else -1 for _, c in e.items()]
    neg = signs.count(-1)
    pos = len(signs) - neg
    if neg > pos or (neg == pos and signs and signs[0] < 0):
        return -1, -e
    return 1, e


def conservation_form(cv: ConservedVector, eq: DifferentialEquation, style: str = "plain") -> str:
    """``D_t[C1] + D_x[C2] + ... = 0`` with overall signs pulled out of the brackets."""
    fmt = to_latex if style == "latex" else to_text
    parts = []
    for c, s in zip(cv.components, cv.variables):
        if c.is_zero:
            continue
        sign, body = _pull_sign(c)
        op = f"D_{s}" if style != "latex" else f"D_{{{s}}}"
        lb, rb = ("\\left[", "\\right]") if style == "latex" else ("[", "]")
        parts.append((sign, f"{op}{lb}{fmt(body)}{rb}"))
    if not parts:
        return "0 = 0"
    text = ("-" if parts[0][0] < 0 else "") + parts[0][1]
    for sign, body in parts[1:]:
        text += (" - " if sign < 0 else " + ") + body
    return text + " = 0"


def conservation_equation(cv: ConservedVector, eq: DifferentialEquation, style: str = "plain") -> str:
    """``D_t(C1) + ... = mu * (F)`` using the stored multiplier."""
    fmt = to_latex if style == "latex" else to_text
    lhs = " + ".join(f"D_{s}(C{k + 1})" for k, s in enumerate(cv.variables))
    mu = cv.mu if cv.mu is not None else divergence_residual(cv, eq)
    return f"{lhs} = ({fmt(mu)})*({fmt(eq.F)})"
