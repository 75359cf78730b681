import json
from dataclasses import replace

import pytest

from conslaw_forge.cli import derive_vectors
from conslaw_forge.conslaw import (
    ConservedVector,
    DivergenceError,
    SymmetryGenerator,
    characteristic,
    coefficient_row,
    conserved_vector,
    defining_identity_residual,
    divergence_residual,
    expand,
    independent_union,
    is_trivial,
    nontrivial_basis,
    on_shell_divergence,
    oracle_residual,
    permute_axes,
    permute_equation,
    rank,
    reduce_vector,
    translations,
)
from conslaw_forge.core import parse
from conslaw_forge.selfadjoint import determining_system, solve_substitution

P = parse
X2 = SymmetryGenerator.translation("x")


@pytest.fixture(scope="module")
def heat3d():
    from conftest import builtin_text
    from conslaw_forge.adjoint import load_equation

    eq = load_equation(builtin_text("heat3d.eq"))
    return eq, solve_substitution(determining_system(eq))


def test_characteristic_of_translation():
    assert characteristic(X2) == P("-u_x")
    assert SymmetryGenerator.make({"x": 1}, 0, "X2") == X2
    assert [g.name for g in translations(("t", "x", "y"))] == ["X1", "X2", "X3"]


def test_reduced_vector_in_v(heat3d):
    eq, s = heat3d
    red = reduce_vector(conserved_vector(eq, X2, s), eq)
    assert red.components == (
        P("-u*v_x"),
        P("f*u_x*v_x - g*u_y*v_y - h*u_z*v_z"),
        P("g*(u_x*v_y + u_y*v_x)"),
        P("h*(u_x*v_z + u_z*v_x)"),
    )
    assert red.mu == P("v_x")
    assert [t.kind for t in red.trail] == ["density", "cross", "cross"]


def test_reduction_keeps_mu(heat3d):
    eq, s = heat3d
    for X in translations(eq.variables):
        raw = conserved_vector(eq, X, s)
        red = reduce_vector(raw, eq)
        assert on_shell_divergence(raw, eq) == on_shell_divergence(red, eq)
        assert red.mu is None or defining_identity_residual(red, eq).is_zero


def test_raw_vector_divergence_needs_derivatives_of_F(heat3d):
    eq, s = heat3d
    raw = conserved_vector(eq, X2, s)
    assert raw.mu == P("v_x")
    assert not defining_identity_residual(raw, eq).is_zero


def test_permutation_maps_x_family_to_y_family(heat3d):
    eq, s = heat3d
    red2 = reduce_vector(conserved_vector(eq, X2, s), eq)
    red3 = reduce_vector(conserved_vector(eq, SymmetryGenerator.translation("y"), s), eq)
    swapped = permute_axes(red2, {"x": "y", "y": "x"})
    assert swapped.components == red3.components
    assert swapped.generator.name == "X3"
    assert swapped.mu == P("v_y")


def test_identity_permutation(heat3d):
    eq, s = heat3d
    red = reduce_vector(conserved_vector(eq, X2, s), eq)
    same = permute_axes(red, {})
    assert same.components == red.components and same.mu == red.mu


def test_permuted_equation_is_invariant(heat3d):
    eq, _ = heat3d
    assert permute_equation(eq, {"x": "z", "z": "x"}).F == eq.F


def test_bad_permutation():
    cv = ConservedVector((P("u"), P("0")), ("t", "x"))
    with pytest.raises(ValueError):
        permute_axes(cv, {"t": "x", "x": "t"})


def test_permuting_x_family_gives_z_basis(heat3d):
    eq, s = heat3d
    red2 = reduce_vector(conserved_vector(eq, X2, s), eq)
    perm = {"x": "z", "z": "x"}
    permuted = {tuple(expand(b).components) for b in nontrivial_basis(permute_axes(red2, perm), eq)}
    direct = reduce_vector(conserved_vector(eq, SymmetryGenerator.translation("z"), s), eq)
    assert permuted == {tuple(expand(b).components) for b in nontrivial_basis(direct, eq)}


def test_density_vector_reproduces_equation(heat3d):
    eq, s = heat3d
    basis = nontrivial_basis(reduce_vector(conserved_vector(eq, X2, s), eq), eq)
    cv = expand(next(b for b in basis if b.name == "X2[a5]"))
    # F is stored as rhs - u_t, so Div C reproduces it with a plus sign
    assert cv.divergence() == eq.F
    assert cv.mu == P("1")


def test_basis_counts(equation):
    counts = {}
    for name, X in [("heat3d.eq", None), ("source_omega.eq", X2), ("source_delta.eq", X2)]:
        eq = equation(name)
        gens = translations(eq.variables) if X is None else [X]
        counts[name] = len(derive_vectors(eq, gens)[2])
    assert counts == {"heat3d.eq": 10, "source_omega.eq": 4, "source_delta.eq": 4}


def test_delta_case_vectors_are_derived(equation):
    eq = equation("source_delta.eq")
    _, _, union = derive_vectors(eq, [X2])
    for cv in union:
        assert defining_identity_residual(cv, eq).is_zero
        assert oracle_residual(cv, eq, samples=200, seed=2)[0] < 1e-10


def test_independent_union_drops_duplicates(heat3d):
    eq, s = heat3d
    basis = nontrivial_basis(reduce_vector(conserved_vector(eq, X2, s), eq), eq)
    union = independent_union([basis, basis, [replace(basis[0], name="copy")]])
    assert len(union) == len(basis)
    assert rank([coefficient_row(b) for b in basis + basis]) == len(basis)


def test_trivial_vector_detection():
    curl = ConservedVector((P("0"), P("-u_y"), P("u_x")), ("t", "x", "y"))
    assert is_trivial(curl)
    assert not is_trivial(ConservedVector((P("u"), P("0"), P("0")), ("t", "x", "y")))


def test_negative_control_fails_symbolically(heat3d):
    eq, s = heat3d
    basis = nontrivial_basis(reduce_vector(conserved_vector(eq, X2, s), eq), eq)
    good = expand(basis[0])
    c = list(good.components)
    c[1] = -c[1]
    with pytest.raises(DivergenceError) as info:
        divergence_residual(replace(good, components=tuple(c)), eq)
    assert not info.value.residual.is_zero


def test_oracle_is_deterministic(heat3d):
    eq, s = heat3d
    raw = conserved_vector(eq, X2, s)
    assert oracle_residual(raw, eq, samples=100, seed=5) == oracle_residual(raw, eq, samples=100, seed=5)


def test_report_is_json_serialisable(heat3d):
    eq, s = heat3d
    red = reduce_vector(conserved_vector(eq, X2, s), eq)
    d = json.loads(json.dumps(red.to_dict()))
    assert d["mu"] == "v_x" and d["trivial"] is False
    assert d["provenance"]["generator"] is not None
    assert red.latex().count("\\\\") >= 3
