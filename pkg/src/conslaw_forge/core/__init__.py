"""Exact jet-space algebra: atoms, canonical expressions, parsing and evaluation."""

from .atoms import (
    U,
    V,
    Atom,
    ConstrainedFuncSym,
    FuncSym,
    IndependentVar,
    JetCoord,
    Parameter,
    WaveSym,
)
from .evaluate import (
    Constant,
    Exponential,
    FunctionModel,
    JetPoint,
    MissingAssignmentError,
    PowerLaw,
    Scaled,
    evaluate,
    random_jet_point,
)
from .expr import (
    Expr,
    Rule,
    equivalent,
    jet_partial,
    normalize,
    rewrite,
    substitute,
    total_derivative,
    total_derivatives,
)
from .parser import ParseError, Registry, UnknownSymbolError, parse
from .render import from_json, to_json, to_latex, to_text

__all__ = [
    "U", "V", "Atom", "ConstrainedFuncSym", "FuncSym", "IndependentVar", "JetCoord",
    "Parameter", "WaveSym", "Constant", "Exponential", "FunctionModel", "JetPoint",
    "MissingAssignmentError", "PowerLaw", "Scaled", "evaluate", "random_jet_point",
    "Expr", "Rule", "equivalent", "jet_partial", "normalize", "rewrite", "substitute",
    "total_derivative", "total_derivatives", "ParseError", "Registry",
    "UnknownSymbolError", "parse", "from_json", "to_json", "to_latex", "to_text",
]
