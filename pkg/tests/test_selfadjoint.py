import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conslaw_forge.core import parse
from conslaw_forge.selfadjoint import (
    NotSelfAdjointError,
    OutsideAnsatzError,
    Substitution,
    VerificationError,
    determining_system,
    numeric_self_adjointness_check,
    self_adjointness_residual,
    solve_substitution,
    verify_substitution,
)

P = parse

SELF_ADJOINT = [
    "heat3d.eq", "heat2d.eq", "source_omega.eq", "source_delta.eq",
    "constant_g.eq", "constant_g_omega.eq", "constant_g_delta.eq", "linear_heat.eq",
]


def test_determining_system_of_heat3d(equation):
    sys = determining_system(equation("heat3d.eq"))
    assert sys.tag != "inconsistent"
    assert sorted(map(str, sys.constraints)) == ["phi_t", "phi_xx", "phi_yy", "phi_zz"]
    assert sys.dropped_args == ("u",) and sys.multiplier.is_zero


@pytest.mark.parametrize("name", SELF_ADJOINT)
def test_round_trip(equation, name):
    eq = equation(name)
    s = solve_substitution(determining_system(eq))
    verify_substitution(eq, s)
    assert numeric_self_adjointness_check(eq, s, samples=1000, seed=3) < 1e-10


def test_lambda_vanishes_without_constraint_rewrite_fails(equation):
    eq = equation("constant_g.eq")
    s = solve_substitution(determining_system(eq))
    lam, residual = self_adjointness_residual(eq, s)
    assert lam.is_zero and residual.is_zero
    # without the alpha_t -> -k alpha_yy rewrites the residual survives
    bare = Substitution(s.phi, s.params, s.constraints, (), s.v_rules, s.family, s.functions)
    with pytest.raises(VerificationError):
        verify_substitution(eq, bare)


def test_phi_equal_u_is_rejected_with_residual(equation):
    eq = equation("heat3d.eq")
    with pytest.raises(VerificationError) as info:
        verify_substitution(eq, Substitution(P("u")))
    assert "f1(u)" in str(info.value)


def test_arbitrary_source_not_self_adjoint(equation):
    with pytest.raises(NotSelfAdjointError):
        solve_substitution(determining_system(equation("source2d.eq")))


def test_unspecified_sign_of_r_is_outside_ansatz(equation):
    sys = determining_system(equation("source_r.eq"))
    with pytest.raises(OutsideAnsatzError):
        solve_substitution(sys)


def test_zero_substitution_rejected():
    with pytest.raises(ValueError):
        Substitution(P("0"))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=8, max_size=8))
def test_every_specialisation_of_the_family_verifies(heat3d, values):
    if not any(values):
        return
    s = solve_substitution(determining_system(heat3d))
    chosen = s.specialize({f"a{i + 1}": v for i, v in enumerate(values)})
    verify_substitution(heat3d, chosen)


@pytest.fixture(scope="module")
def heat3d():
    from conftest import builtin_text
    from conslaw_forge.adjoint import load_equation

    return load_equation(builtin_text("heat3d.eq"))
