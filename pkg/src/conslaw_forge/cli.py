"""Command-line front end: ``conslaw-forge <command> ...``.

Exit codes: 0 success, 1 verification failure, 2 input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from . import __version__
from .adjoint import DifferentialEquation, EquationError, adjoint_equation, load_equation
from .conslaw import (
    ConservedVector,
    DivergenceError,
    SymmetryGenerator,
    conservation_form,
    conserved_vector,
    defining_identity_residual,
    divergence_residual,
    expand,
    independent_union,
    is_trivial,
    nontrivial_basis,
    oracle_residual,
    reduce_vector,
    translations,
)
from .core.atoms import INDEPENDENT_VARS, JetCoord
from .core.parser import ParseError, Registry, parse
from .core.render import to_latex, to_text, vector_latex
from .selfadjoint import (
    ANSATZ_CHOICES,
    NotSelfAdjointError,
    OutsideAnsatzError,
    Substitution,
    VerificationError,
    determining_system,
    solve_substitution,
    verify_substitution,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
BUILTIN = "builtin:"
RUN_KEYS = {"equation", "vectors", "study", "region", "snapshots"}


class InputError(Exception):
    """Bad files or options; maps to exit code 2."""


class Failure(Exception):
    """A verification did not pass; maps to exit code 1."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report


# -- manifest and output -----------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    inputs: dict
    options: dict
    version: str = __version__
    input_hash: str = ""
    timestamp: str = ""

    def __post_init__(self):
        h = hashlib.sha256()
        for name in sorted(self.inputs):
            h.update(name.encode() + b"\0" + self.inputs[name].encode() + b"\0")
        self.input_hash = h.hexdigest()
        if not self.timestamp:
            self.timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def to_dict(self) -> dict:
        return asdict(self)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


@dataclass
class Output:
    fmt: str
    out: Path | None
    lines: list = field(default_factory=list)

    def say(self, text: str = "") -> None:
        self.lines.append(text)

    def emit(self, manifest: RunManifest, result: dict) -> None:
        report = {"manifest": manifest.to_dict(), "result": result}
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            (self.out / "report.json").write_text(dumps(report))
        if self.fmt == "json":
            sys.stdout.write(dumps(report))
        else:
            sys.stdout.write("\n".join(self.lines) + "\n")


def read_input(path: str) -> tuple[str, str]:
    """(display name, text); ``builtin:NAME`` reads a bundled data file."""
    if path.startswith(BUILTIN):
        name = path[len(BUILTIN):]
        try:
            return path, resources.files("conslaw_forge.data").joinpath(name).read_text()
        except (FileNotFoundError, IsADirectoryError):
            raise InputError(f"no bundled file {name!r}; see `conslaw-forge list`") from None
    try:
        return path, Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None


def read_equation(path: str) -> tuple[DifferentialEquation, str]:
    name, text = read_input(path)
    try:
        return load_equation(text), text
    except ParseError as exc:
        raise InputError(f"{name}: {exc}{_caret(exc)}") from None
    except EquationError as exc:
        raise InputError(f"{name}: {exc}") from None


def _caret(exc: ParseError) -> str:
    if exc.position is None or not exc.text or "\n" in exc.text:
        return ""
    return f"\n  {exc.text}\n  {' ' * exc.position}^"


def _fmt(fmt: str):
    return to_latex if fmt == "latex" else to_text


# -- adjoint -------------------------------------------------------------------------


def cmd_adjoint(args, out: Output) -> tuple[dict, dict, int]:
    eq, text = read_equation(args.equation)
    adj = adjoint_equation(eq)
    out.say(f"F*  = {_fmt(args.format)(adj.F)}")
    result = {"equation": to_text(eq.F), "adjoint": to_text(adj.F), "adjoint_latex": to_latex(adj.F)}
    return {args.equation: text}, result, EXIT_OK


# -- self-adjointness ------------------------------------------------------------------


def _solve(eq: DifferentialEquation, ansatz: str):
    system = determining_system(eq)
    return system, solve_substitution(system, ansatz)


def cmd_selfadjoint(args, out: Output) -> tuple[dict, dict, int]:
    eq, text = read_equation(args.equation)
    f = _fmt(args.format)
    system = determining_system(eq)
    result = {"equation": to_text(eq.F), "determining_system": system.to_dict()}
    out.say("determining system:")
    for c in system.constraints:
        out.say(f"  {f(c)} = 0")
    out.say(f"  [{system.tag}]")
    code = EXIT_OK
    try:
        s = solve_substitution(system, args.ansatz)
        lam = verify_substitution(eq, s)
    except NotSelfAdjointError as exc:
        result["self_adjoint"] = False
        result["reason"] = str(exc)
        out.say(str(exc))
    except OutsideAnsatzError as exc:
        result["self_adjoint"] = None
        result["reason"] = str(exc)
        out.say(f"undecided: {exc}")
        code = EXIT_FAIL
    except VerificationError as exc:
        result["self_adjoint"] = None
        result["reason"] = str(exc)
        out.say(f"verification failed: {exc}")
        code = EXIT_FAIL
    else:
        result.update({"self_adjoint": True, "substitution": s.to_dict(), "lambda": to_text(lam)})
        out.say(f"v = {f(s.phi)}")
        if s.params:
            out.say(f"  parameters: {', '.join(s.params)}")
        for c in s.constraints:
            out.say(f"  with {f(c)} = 0")
        out.say(f"lambda = {f(lam)}  (F* = lambda F verified)")
    return {args.equation: text}, result, code


# -- conservation laws -------------------------------------------------------------------


def parse_symmetries(specs: list[str] | None, eq: DifferentialEquation) -> list[SymmetryGenerator]:
    """Names X1..X4 (translations in t, x, y, z) or variable names; default: all translations."""
    if not specs:
        return translations(eq.variables)
    out = []
    for spec in specs:
        for item in spec.replace(",", " ").split():
            var = item
            if item.upper().startswith("X") and item[1:].isdigit():
                k = int(item[1:]) - 1
                var = INDEPENDENT_VARS[k] if 0 <= k < len(INDEPENDENT_VARS) else ""
            if var not in eq.variables:
                raise InputError(f"unknown symmetry {item!r} for variables {' '.join(eq.variables)}")
            out.append(SymmetryGenerator.translation(var))
    return out


def _vector_dict(cv: ConservedVector, eq: DifferentialEquation) -> dict:
    d = cv.to_dict()
    d["conservation_form"] = conservation_form(cv, eq)
    return d


def _show_vector(out: Output, cv: ConservedVector, eq: DifferentialEquation, fmt: str) -> None:
    mu = "?" if cv.mu is None else _fmt(fmt)(cv.mu)
    flag = "  [trivial]" if is_trivial(cv) else ""
    out.say(f"  {cv.name}  (mu = {mu}){flag}")
    if fmt == "latex":
        out.say(vector_latex(cv.components))
        out.say(f"  {conservation_form(cv, eq, 'latex')}")
    else:
        for k, c in enumerate(cv.components, 1):
            out.say(f"    C{k} = {to_text(c)}")


def derive_vectors(eq: DifferentialEquation, gens, ansatz: str = "auto"):
    """(per-generator records, independent basis) for the given generators."""
    s = solve_substitution(determining_system(eq), ansatz)
    records, groups = [], []
    for X in gens:
        raw = conserved_vector(eq, X, s)
        red = reduce_vector(raw, eq)
        basis = [] if is_trivial(red) else nontrivial_basis(red, eq)
        records.append((X, raw, red, basis))
        groups.append(basis)
    return s, records, independent_union(groups)


def cmd_conslaws(args, out: Output) -> tuple[dict, dict, int]:
    eq, text = read_equation(args.equation)
    fmt = "latex" if args.latex else args.format
    gens = parse_symmetries(args.symmetry, eq)
    try:
        s, records, union = derive_vectors(eq, gens, args.ansatz)
    except (NotSelfAdjointError, OutsideAnsatzError) as exc:
        out.say(f"no conserved vectors: {exc}")
        return {args.equation: text}, {"equation": to_text(eq.F), "error": str(exc)}, EXIT_FAIL
    out.say(f"substitution v = {_fmt(fmt)(s.phi)}")
    result = {"equation": to_text(eq.F), "substitution": s.to_dict(), "generators": []}
    for X, raw, red, basis in records:
        out.say(f"{X.name}:")
        for cv in (raw, red):
            _show_vector(out, cv, eq, fmt)
        if not basis:
            out.say("  all conserved vectors trivial")
        for cv in basis:
            _show_vector(out, cv, eq, fmt)
        result["generators"].append(
            {
                "generator": X.to_dict(),
                "raw": _vector_dict(raw, eq),
                "reduced": _vector_dict(red, eq),
                "basis": [_vector_dict(cv, eq) for cv in basis],
            }
        )
    result["independent"] = [cv.name for cv in union]
    result["rank"] = len(union)
    if union:
        out.say(f"{len(union)} linearly independent nontrivial conserved vectors: {', '.join(result['independent'])}")
    else:
        out.say("all conserved vectors trivial")
    return {args.equation: text}, result, EXIT_OK


# -- verification ----------------------------------------------------------------------------


def _registry(eq: DifferentialEquation) -> Registry:
    return Registry(set(eq.params), dict(eq.fields))


def load_vectors(doc: dict | list, eq: DifferentialEquation, ansatz: str = "auto") -> list[ConservedVector]:
    """Vectors from ``{"vectors": [{"name", "components": [...], "v"?}]}``.

    ``v`` is an explicit substitution, or ``"auto"`` (default when the
    components contain v) to keep v subject to the solved determining system.
    """
    items = doc.get("vectors") if isinstance(doc, dict) else doc
    if not isinstance(items, list) or not items:
        raise InputError("vectors file needs a non-empty 'vectors' list")
    reg = _registry(eq)
    solved = None
    out = []
    for k, item in enumerate(items):
        if not isinstance(item, dict) or "components" not in item:
            raise InputError(f"vector {k}: expected an object with 'components'")
        comps = item["components"]
        if len(comps) != len(eq.variables):
            raise InputError(f"vector {k}: {len(comps)} components for variables {' '.join(eq.variables)}")
        try:
            exprs = tuple(eq.simplify(parse(str(c), reg)) for c in comps)
        except ParseError as exc:
            raise InputError(f"vector {k}: {exc}{_caret(exc)}") from None
        name = str(item.get("name", f"vector {k + 1}"))
        spec = item.get("v")
        uses_v = any(isinstance(a, JetCoord) and a.dep == "v" for e in exprs for a in e.atoms())
        s = None
        if spec == "auto" or (spec is None and uses_v):
            if solved is None:
                try:
                    solved = _solve(eq, ansatz)[1]
                except (NotSelfAdjointError, OutsideAnsatzError) as exc:
                    raise InputError(f"vector {k}: v cannot be resolved: {exc}") from None
            s = solved
        elif spec is not None:
            try:
                s = Substitution(parse(str(spec), reg))
            except ParseError as exc:
                raise InputError(f"vector {k}: substitution: {exc}") from None
        rules = tuple(eq.relations) + (() if s is None else tuple(s.v_rules) + tuple(s.rules))
        cv = ConservedVector(exprs, tuple(eq.variables), rules, None, None, s, (), name, "input")
        if s is not None and spec not in (None, "auto"):
            cv = expand(cv)
        out.append(cv)
    return out


def _verify_symbolic(cv, eq, out):
    try:
        mu = divergence_residual(cv, eq)
    except DivergenceError as exc:
        out.say(f"  {cv.name}: FAIL  {exc}")
        return False, {"name": cv.name, "pass": False, "residual": to_text(exc.residual)}
    identity = defining_identity_residual(cv, eq, mu)
    row = {"name": cv.name, "pass": True, "mu": to_text(mu), "trivial": is_trivial(cv),
           "defining_identity_residual": to_text(identity)}
    note = "" if identity.is_zero else "  (Div C = mu F only up to derivatives of F)"
    out.say(f"  {cv.name}: PASS  mu = {to_text(mu)}{'  [trivial]' if row['trivial'] else ''}{note}")
    return True, row


def _verify_oracle(cv, eq, out, samples, seed, tol):
    worst_val, worst = oracle_residual(cv, eq, samples, seed)
    ok = worst_val < tol
    row = {"name": cv.name, "pass": ok, "max_residual": worst_val, "samples": samples, "seed": seed}
    if not ok:
        row["failing_sample"] = worst
    out.say(f"  {cv.name}: {'PASS' if ok else 'FAIL'}  max |Div C| = {worst_val:.3e} over {samples} samples")
    return ok, row


def cmd_verify(args, out: Output) -> tuple[dict, dict, int]:
    eq, text = read_equation(args.equation)
    vname, vtext = read_input(args.vectors)
    try:
        doc = json.loads(vtext)
    except json.JSONDecodeError as exc:
        raise InputError(f"{vname}: {exc}") from None
    vectors = load_vectors(doc, eq, args.ansatz)
    inputs = {args.equation: text, args.vectors: vtext}
    rows, ok = [], True
    out.say(f"{args.mode} verification of {len(vectors)} vector(s)")
    if args.mode == "numeric":
        if not args.config:
            raise InputError("numeric mode needs --config")
        from .numlab import ConfigError, StabilityError, UnavailableJetError
        from .numlab.study import balance_study

        cname, ctext = read_input(args.config)
        inputs[args.config] = ctext
        try:
            cfg, _ = _split_config(cname, ctext)
            for cv in vectors:
                cells = [cfg.n[0] * 2**k for k in range(args.levels)]
                st = balance_study(cfg, expand(cv), cells, args.region and json.loads(args.region))
                passed = all(o >= args.min_order for o in st.orders)
                ok &= passed
                rows.append({"name": cv.name, "pass": passed, **st.to_dict()})
                orders = ", ".join(f"{o:.2f}" for o in st.orders)
                out.say(f"  {cv.name}: {'PASS' if passed else 'FAIL'}  cumulative residuals "
                        f"{', '.join(f'{v:.3e}' for v in st.values)}; orders {orders}")
        except (ConfigError, UnavailableJetError) as exc:
            raise InputError(str(exc)) from None
        except StabilityError as exc:
            raise Failure(str(exc)) from None
    else:
        for cv in vectors:
            if args.mode == "symbolic":
                passed, row = _verify_symbolic(cv, eq, out)
            else:
                passed, row = _verify_oracle(cv, eq, out, args.samples, args.seed, args.tol)
            ok &= passed
            rows.append(row)
    result = {"equation": to_text(eq.F), "mode": args.mode, "vectors": rows, "pass": ok}
    return inputs, result, EXIT_OK if ok else EXIT_FAIL


# -- simulation ---------------------------------------------------------------------------------


def _split_config(name: str, text: str):
    """(SimulationConfig, run options) from a JSON/TOML document."""
    from .numlab.config import ConfigError, config_from_dict

    try:
        if name.endswith(".toml"):
            if sys.version_info >= (3, 11):
                import tomllib
            else:
                import tomli as tomllib
            doc = tomllib.loads(text)
        else:
            doc = json.loads(text)
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError(f"{name}: expected a table/object")
    run = {k: doc.pop(k) for k in list(doc) if k in RUN_KEYS}
    try:
        return config_from_dict(doc), run
    except ConfigError as exc:
        raise InputError(f"{name}: {exc}") from None


def _relative(base: str, ref: str) -> str:
    if ref.startswith(BUILTIN) or Path(ref).is_absolute():
        return ref
    if base.startswith(BUILTIN):
        return BUILTIN + ref
    return str(Path(base).parent / ref)


def _run_vectors(run: dict, base: str, cfg, inputs: dict, ansatz: str) -> tuple[list, list]:
    """Vectors to check and the names of skipped ones."""
    from .numlab.balance import UnavailableJetError, _check_vector

    spec = run.get("vectors")
    if spec is None:
        return [], []
    if "equation" not in run:
        raise InputError("'vectors' needs an 'equation' entry")
    eq, etext = read_equation(_relative(base, run["equation"]))
    inputs[run["equation"]] = etext
    if spec == "auto":
        _, _, vectors = derive_vectors(eq, translations(eq.variables), ansatz)
    else:
        if isinstance(spec, str):
            vname, vtext = read_input(_relative(base, spec))
            inputs[spec] = vtext
            spec = json.loads(vtext)
        vectors = load_vectors(spec, eq, ansatz)
    usable, skipped = [], []
    for cv in vectors:
        try:
            _check_vector(cv, cfg)
            usable.append(expand(cv))
        except UnavailableJetError as exc:
            skipped.append(f"{cv.name}: {exc}")
    return usable, skipped


def cmd_simulate(args, out: Output) -> tuple[dict, dict, int]:
    from .numlab import ConfigError, StabilityError, discrete_balances, solve
    from .numlab.io import write_residual_csv, write_snapshot
    from .numlab.study import balance_studies, convergence_study

    cname, ctext = read_input(args.config)
    inputs = {args.config: ctext}
    cfg, run = _split_config(cname, ctext)
    try:
        vectors, skipped = _run_vectors(run, cname, cfg, inputs, args.ansatz)
        every = int(run.get("snapshots", 0) or 0)
        traj = solve(cfg, save_every=every or None)
        mass0 = float(cfg.initial_field().sum() * cfg.cell_volume)
        mass1 = float(traj.final.u.sum() * cfg.cell_volume)
        result = {
            "config": cfg.to_dict(),
            "steps": traj.steps,
            "final_time": traj.final.t,
            "min": float(traj.final.u.min()),
            "max": float(traj.final.u.max()),
            "mass_change": mass1 - mass0,
            "skipped_vectors": skipped,
            "balance": [],
        }
        out.say(f"{traj.steps} steps to t = {traj.final.t:g} on {'x'.join(map(str, cfg.n))} cells")
        out.say(f"  u in [{result['min']:.6g}, {result['max']:.6g}], mass change {result['mass_change']:.3e}")
        region = run.get("region")
        for rep in discrete_balances(traj, vectors, region):
            result["balance"].append(rep.to_dict())
            out.say(f"  balance {rep.name}: max |r| = {rep.max_abs:.3e}, max |cumulative r| = {rep.max_cumulative:.3e}")
            if args.out:
                write_residual_csv(rep, Path(args.out) / f"residuals_{_slug(rep.name)}.csv")
        for line in skipped:
            out.say(f"  skipped {line}")
        study = run.get("study")
        if study:
            kind = study.get("kind", "balance")
            levels = int(study.get("levels", 3))
            if kind == "balance":
                cells = [cfg.n[0] * 2**k for k in range(levels)]
                if levels < 3:
                    raise ConfigError("a convergence study needs at least 3 levels")
                rows = []
                out.say(f"balance refinement study, cells {cells}:")
                for cv, st in zip(vectors, balance_studies(cfg, vectors, cells, region)):
                    rows.append({"name": cv.name, **st.to_dict()})
                    out.say(f"  {cv.name}: orders " + ", ".join(f"{o:.2f}" for o in st.orders))
                result["study"] = {"kind": "balance", "cells": cells, "vectors": rows}
            else:
                st = convergence_study(cfg, levels, kind)
                result["study"] = st.to_dict()
                out.say(f"{kind} refinement study:")
                out.say("  level  error        order")
                for k, (lv, e) in enumerate(zip(st.levels, st.errors)):
                    order = f"{st.orders[k - 1]:.3f}" if k else ""
                    out.say(f"  {k:5d}  {e:.5e}  {order}")
        if args.out:
            outdir = Path(args.out)
            outdir.mkdir(parents=True, exist_ok=True)
            for state in traj.saved:
                write_snapshot(outdir / f"snapshot_{state.step:06d}.bin", state.u, cfg.extents, state.t)
    except ConfigError as exc:
        raise InputError(str(exc)) from None
    except StabilityError as exc:
        raise Failure(f"simulation aborted: {exc}") from None
    return inputs, result, EXIT_OK


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in name).strip("_") or "vector"


def cmd_list(args, out: Output) -> tuple[dict, dict, int]:
    names = sorted(p.name for p in resources.files("conslaw_forge.data").iterdir() if p.suffix in (".eq", ".json", ".toml"))
    for n in names:
        out.say(BUILTIN + n)
    return {}, {"bundled": names}, EXIT_OK


# -- entry point ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("plain", "latex", "json"), default="plain")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--samples", type=int, default=1000)
    common.add_argument("--out", metavar="DIR", help="write report.json (and data files) here")
    common.add_argument("--ansatz", choices=ANSATZ_CHOICES, default="auto")

    p = argparse.ArgumentParser(prog="conslaw-forge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("adjoint", parents=[common], help="print the adjoint equation F* = delta(vF)/delta u")
    a.add_argument("equation")
    a.set_defaults(func=cmd_adjoint)

    s = sub.add_parser("selfadjoint", parents=[common], help="solve and verify nonlinear self-adjointness")
    s.add_argument("equation")
    s.set_defaults(func=cmd_selfadjoint)

    c = sub.add_parser("conslaws", parents=[common], help="conserved vectors from translation symmetries")
    c.add_argument("equation")
    c.add_argument("--symmetry", action="append", help="generators, e.g. 'X2,X3' or 'x' (default: all translations)")
    c.add_argument("--latex", action="store_true", help="LaTeX displays (same as --format latex)")
    c.set_defaults(func=cmd_conslaws)

    v = sub.add_parser("verify", parents=[common], help="check conserved vectors from a JSON file")
    v.add_argument("equation")
    v.add_argument("vectors")
    v.add_argument("--mode", choices=("symbolic", "oracle", "numeric"), default="symbolic")
    v.add_argument("--tol", type=float, default=1e-10, help="oracle tolerance")
    v.add_argument("--config", help="simulation config for numeric mode")
    v.add_argument("--levels", type=int, default=3, help="refinement levels for numeric mode")
    v.add_argument("--min-order", type=float, default=1.8, help="required observed order in numeric mode")
    v.add_argument("--region", help="sub-box as JSON, e.g. '[[0.25,0.75],[0.25,0.75]]'")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("simulate", parents=[common], help="run a simulation and balance checks")
    m.add_argument("config")
    m.set_defaults(func=cmd_simulate)

    ls = sub.add_parser("list", parents=[common], help="list bundled equation and config files")
    ls.set_defaults(func=cmd_list)
    return p


def _options(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command") and v is not None}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Output(args.format, Path(args.out) if args.out else None)
    try:
        inputs, result, code = args.func(args, out)
    except InputError as exc:
        print(f"conslaw-forge: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Failure as exc:
        print(f"conslaw-forge: {exc}", file=sys.stderr)
        return EXIT_FAIL
    manifest = RunManifest(args.command, inputs, _options(args))
    out.emit(manifest, result)
    return code


if __name__ == "__main__":
    sys.exit(main())
