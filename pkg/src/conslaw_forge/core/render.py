"""Text, LaTeX and JSON forms of expressions.

The text form is the input grammar, so ``parse(to_text(e)) == e``.

JSON schema (one object per expression)::

    {"terms": [{"coeff": "-3/2", "factors": [[ATOM, power], ...]}, ...]}

where ATOM is one of::

    {"kind": "var",   "name": "x"}
    {"kind": "param", "name": "omega"}
    {"kind": "func",  "name": "f", "order": 1}          # order -1: antiderivative
    {"kind": "field", "name": "alpha", "args": ["t", "y"], "index": "yy"}
    {"kind": "wave",  "fn": "cos", "freq": "omega", "var": "x", "sign": 1}
    {"kind": "jet",   "dep": "u", "index": "xy"}
"""

from __future__ import annotations

from fractions import Fraction

from .atoms import (
    Atom,
    ConstrainedFuncSym,
    FuncSym,
    IndependentVar,
    JetCoord,
    Parameter,
    WaveSym,
)
from .expr import Expr

GREEK = {
    "alpha", "beta", "gamma", "delta", "epsilon", "kappa", "lambda", "mu", "nu",
    "omega", "phi", "psi", "rho", "sigma", "tau", "theta", "xi", "eta", "zeta",
}


def atom_text(a: Atom) -> str:
    if isinstance(a, (IndependentVar, Parameter)):
        return a.name
    if isinstance(a, FuncSym):
        return f"{a.display_name}(u)"
    if isinstance(a, JetCoord):
        return a.name
    if isinstance(a, ConstrainedFuncSym):
        return a.name + ("_" + "".join(a.index) if a.index else "")
    if isinstance(a, WaveSym):
        sign = "-" if a.sign < 0 else ""
        return f"{a.fn}({sign}{a.freq}*{a.var})"
    raise TypeError(a)


def _coeff_text(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def to_text(e: Expr) -> str:
    e = Expr.coerce(e)
    if e.is_zero:
        return "0"
    parts = []
    for mono, c in e.items():
        factors = [atom_text(a) + (f"^{p}" if p > 1 else "") for a, p in mono]
        mag = abs(c)
        if not factors:
            body = _coeff_text(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = _coeff_text(mag) + "*" + "*".join(factors)
        sign = "-" if c < 0 else "+"
        parts.append((sign, body))
    first_sign, first = parts[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


# -- LaTeX ------------------------------------------------------------------


def _latex_name(name: str) -> str:
    base = name.rstrip("0123456789")
    digits = name[len(base):]
    core = f"\\{base}" if base in GREEK else base
    return core + (f"_{{{digits}}}" if digits else "")


def atom_latex(a: Atom) -> str:
    if isinstance(a, IndependentVar):
        return a.name
    if isinstance(a, Parameter):
        return _latex_name(a.name)
    if isinstance(a, FuncSym):
        if a.order == -1:
            return f"{{\\cal {a.display_name}}}(u)"
        primes = {0: "", 1: "'", 2: "''", 3: "'''"}.get(a.order, f"^{{({a.order})}}")
        return f"{a.name}{primes}(u)"
    if isinstance(a, JetCoord):
        return a.dep + (f"_{{{''.join(a.index)}}}" if a.index else "")
    if isinstance(a, ConstrainedFuncSym):
        base = _latex_name(a.name)
        return base + (f"_{{{''.join(a.index)}}}" if a.index else "")
    if isinstance(a, WaveSym):
        arg = f"{_latex_name(a.freq)} {a.var}"
        if a.fn == "exp":
            return f"{{\\rm e}}^{{{'-' if a.sign < 0 else ''}{arg}}}"
        return f"\\{a.fn}({arg})"
    raise TypeError(a)


def to_latex(e: Expr) -> str:
    e = Expr.coerce(e)
    if e.is_zero:
        return "0"
    out = ""
    for i, (mono, c) in enumerate(e.items()):
        factors = [atom_latex(a) + (f"^{{{p}}}" if p > 1 else "") for a, p in mono]
        # powers of jets read better as u_{x}^{2}
        mag = abs(c)
        if mag.denominator != 1:
            coeff = f"\\frac{{{mag.numerator}}}{{{mag.denominator}}}"
        else:
            coeff = "" if (mag == 1 and factors) else str(mag.numerator)
        body = (coeff + (" " if coeff and factors else "") + " ".join(factors)).strip()
        if i == 0:
            out = ("-" if c < 0 else "") + body
        else:
            out += (" - " if c < 0 else " + ") + body
    return out


def vector_latex(components, labels=None) -> str:
    """``align`` block with one component per line."""
    labels = labels or [f"C^{{{i + 1}}}" for i in range(len(components))]
    lines = [f"  {lab} &= {to_latex(c)}" for lab, c in zip(labels, components)]
    return "\\begin{align*}\n" + ",\\\\\n".join(lines) + ".\n\\end{align*}"


# -- JSON -------------------------------------------------------------------


def atom_to_json(a: Atom) -> dict:
    if isinstance(a, IndependentVar):
        return {"kind": "var", "name": a.name}
    if isinstance(a, Parameter):
        return {"kind": "param", "name": a.name}
    if isinstance(a, FuncSym):
        return {"kind": "func", "name": a.name, "order": a.order}
    if isinstance(a, ConstrainedFuncSym):
        return {"kind": "field", "name": a.name, "args": list(a.args), "index": "".join(a.index)}
    if isinstance(a, WaveSym):
        return {"kind": "wave", "fn": a.fn, "freq": a.freq, "var": a.var, "sign": a.sign}
    if isinstance(a, JetCoord):
        return {"kind": "jet", "dep": a.dep, "index": "".join(a.index)}
    raise TypeError(a)


def atom_from_json(d: dict) -> Atom:
    kind = d["kind"]
    if kind == "var":
        return IndependentVar(d["name"])
    if kind == "param":
        return Parameter(d["name"])
    if kind == "func":
        return FuncSym(d["name"], int(d["order"]))
    if kind == "field":
        return ConstrainedFuncSym(d["name"], tuple(d["args"]), tuple(d["index"]))
    if kind == "wave":
        return WaveSym(d["fn"], d["freq"], d["var"], int(d.get("sign", 1)))
    if kind == "jet":
        return JetCoord(d["dep"], tuple(d["index"]))
    raise ValueError(f"unknown atom kind {kind!r}")


def to_json(e: Expr) -> dict:
    return {
        "terms": [
            {"coeff": _coeff_text(c), "factors": [[atom_to_json(a), p] for a, p in mono]}
            for mono, c in Expr.coerce(e).items()
        ]
    }


def from_json(d: dict) -> Expr:
    out = Expr()
    for term in d["terms"]:
        powers = {}
        for atom_d, p in term["factors"]:
            a = atom_from_json(atom_d)
            powers[a] = powers.get(a, 0) + int(p)
        t = Expr.const(Fraction(term["coeff"]))
        for a, p in powers.items():
            t = t * Expr.atom(a, p)
        out = out + t
    return out
