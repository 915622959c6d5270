import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from kinetic_continua import analytic as A
from kinetic_continua.constitutive import MaterialParams
from kinetic_continua.errors import AlphaZero, ShapeMismatch
from kinetic_continua.solver import FieldState, Grid

pos = st.floats(0.05, 5.0)


@given(pos, pos, st.floats(-3.0, 3.0), st.floats(0.0, 2.0), st.floats(-3.0, 3.0))
def test_stationary_shear_solves_the_algebraic_system(rho, alpha, gamma, eta3, L12):
    s = A.stationary_shear(rho, alpha, gamma, eta3, L12)
    scale = 1 + np.abs(s.H).max() * rho * (1 + abs(L12) + alpha)
    assert A.shear_residual(s) < 1e-12 * scale
    assert np.allclose(s.B, s.L)
    assert s.B12 == L12


@given(pos, pos, st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_stationary_entries_match_printed_formulas(rho, alpha, gamma, L12):
    H = A.stationary_shear(rho, alpha, gamma, 0.0, L12).H
    assert np.isclose(H[1, 1], gamma * L12**2 / (4 * alpha * rho), rtol=1e-14, atol=0)
    assert np.isclose(H[0, 1], -gamma * L12**3 / (4 * alpha**2 * rho), rtol=1e-14, atol=0)
    assert H[0, 2] == H[1, 2] == H[2, 2] == 0.0


@given(pos, pos, st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.2, 5.0))
def test_h11_factor_two_matches_couette_stress(alpha, gamma, u, delta, rho):
    s = A.stationary_shear(rho, alpha, gamma, 0.0, u / delta)
    coeff = A.example4_stress_coefficient(gamma, alpha, u, delta)
    assert np.isclose(s.extra_stress[0, 0], coeff, rtol=1e-13)
    ex = A.example_fields("4", A.MaterialParams(alpha=alpha, gamma=gamma), rho=rho, u=u, delta=delta)
    assert ex.observables["stress_11_coefficient"] == coeff


def test_printed_h11_leaves_a_residual():
    rho, alpha, gamma, l = 1.0, 0.7, 0.9, 1.3
    printed = A.printed_stationary_H(rho, alpha, gamma, l)
    s = A.stationary_shear(rho, alpha, gamma, 0.0, l)
    res = A.algebraic_residuals(rho, s.L, s.B, s.Y, printed, alpha, gamma, 0.0)["ferment"]
    assert np.isclose(abs(res[0, 0]), gamma * l**4 / (4 * alpha**2), rtol=1e-12)
    assert A.PRINTED_H11_FACTOR == 1.0 and A.DERIVED_H11_FACTOR == 2.0


def test_zero_shear_and_zero_gamma_give_zero_ferment():
    assert np.array_equal(A.stationary_shear(1.0, 1.0, 0.0, 0.1, 2.0).H, np.zeros((3, 3)))
    assert np.array_equal(A.stationary_shear(1.0, 1.0, 0.5, 0.1, 0.0).H, np.zeros((3, 3)))


def test_alpha_zero():
    with pytest.raises(AlphaZero):
        A.stationary_shear(1.0, 0.0, 1.0, 0.0, 1.0)
    rep = A.example4_alpha_zero(rho=2.0, gamma=0.8, u_mag=1.5, delta=0.5)
    L12 = 3.0
    assert np.isclose(rep.H12, 0.8 * L12 / 16.0)
    assert np.isclose(rep.residual_22, 0.8 * L12**2 / 4)
    assert not rep.consistent
    assert np.isclose(rep.printed_H12, 0.8 * 1.5**2 / (16.0 * 0.5))
    assert A.example4_alpha_zero(1.0, 0.0, 1.0, 1.0).consistent


@given(pos, st.floats(0.0, 5.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_dispersion_roots_satisfy_relation(beta, u, alpha, gamma_hat):
    d = A.dispersion(beta, u, alpha, gamma_hat)
    for z, r in zip(d.roots, d.residuals()):
        scale = beta * z * z + abs(u * z) + abs(alpha - gamma_hat)
        assert abs(r) <= 1e-12 * max(scale, 1e-300)
        assert abs(beta * z * z - u * z + alpha - gamma_hat) <= 1e-12 * max(scale, 1e-300)


@given(pos, st.floats(0.01, 5.0), st.floats(0.0, 5.0))
@example(beta=2.5, u=0.25, gamma_hat=1.0)  # alpha - gamma_hat loses digits to cancellation
def test_double_root(beta, u, gamma_hat):
    alpha = gamma_hat + u * u / (4 * beta)
    d = A.dispersion(beta, u, alpha, gamma_hat)
    assert len(d.roots) == 2
    assert np.allclose(d.roots, u / (2 * beta), rtol=1e-6)


def test_dispersion_regimes_and_cases():
    d = A.dispersion(1.0, 3.0, 2.0, 0.0)
    assert d.roots == (1.0, 2.0)
    assert d.regime == "two decay modes"
    assert d.decaying_root == 1.0
    assert d.interval == (0.0, 2.25)
    d = A.dispersion(0.5, 2.0, 0.3, 0.3)
    assert np.allclose(d.roots, (0.0, 4.0))
    assert A.dispersion(1.0, 1.0, 5.0, 0.0).roots == ()
    diff = A.dispersion(0.05, 1.0, 1.0, 0.5, convention="diffusive")
    assert np.isclose(diff.decaying_root, 0.48808848170151536, rtol=1e-12)
    with pytest.raises(ValueError):
        A.dispersion(0.0, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        A.dispersion(1.0, 1.0, 1.0, 0.0, convention="other")


EXAMPLES = [
    ("1", MaterialParams(), dict(u=(1.0, 0, 0), v=(0, 0.7, 0))),
    ("2_temporal", MaterialParams(alpha=1.3, beta=0.2), dict(v=(0, 1.0, 0))),
    ("2_spatial", MaterialParams(alpha=1.3), dict(u=(2.0, 0, 0), v=(0, 1.0, 0.5))),
    ("3", MaterialParams(alpha=1.0, beta=0.05, gamma_hat=0.5), dict(u=(1.0, 0, 0), v=(0, 1.0, 0), chi0=2.0)),
    ("4", MaterialParams(alpha=0.8, gamma=0.6, eta3=0.3, eta1=0.1), dict(u=1.5, Y33=1.0, delta=0.5)),
]


@pytest.mark.parametrize("which,params,kw", EXAMPLES, ids=[e[0] for e in EXAMPLES])
def test_examples_satisfy_balance_laws_pointwise(which, params, kw):
    ex = A.example_fields(which, params, rho=1.4, **kw)
    z1, z2 = np.meshgrid(np.linspace(0, 2, 5), np.linspace(0, 1, 4), indexing="ij")
    for t in (0.0, 0.6):
        res = A.pointwise_residuals(ex.point(z1, z2, t), params)
        for name, r in res.items():
            assert np.abs(r).max() < 1e-13, (name, np.abs(r).max())


def test_example_observables():
    ex = A.example_fields("1", MaterialParams(), rho=2.0, v=(0, 0.5, 0))
    assert ex.observables["wall_pressure"] == 2.0 * 0.25 == ex.observables["pressure_formula"]
    ex = A.example_fields("2_spatial", MaterialParams(alpha=1.5), u=(3.0, 0, 0))
    assert ex.observables["decay_rate"] == 0.5
    ex = A.example_fields("2_spatial", MaterialParams(alpha=1.5), u=(1.0, 0, 0))
    assert ex.observables["decay_rate"] == ex.observables["printed_decay_rate"]


@pytest.mark.parametrize(
    "which,params,kw",
    [
        ("1", MaterialParams(alpha=1.0), {}),
        ("2_spatial", MaterialParams(alpha=1.0, beta=0.1), {}),
        ("3", MaterialParams(alpha=1.0, beta=0.05), dict(v=(1.0, 0, 0))),
        ("3", MaterialParams(alpha=1.0, beta=0.05), dict(u=(0, 1.0, 0))),
        ("nope", MaterialParams(), {}),
    ],
)
def test_example_preconditions(which, params, kw):
    with pytest.raises(ValueError):
        A.example_fields(which, params, **kw)


def test_verify_against_solver():
    grid = Grid(cells=(4, 0))
    ex = A.example_fields("2_temporal", MaterialParams(alpha=1.0))
    e = ex.state(grid, 0.0)
    a = ex.state(grid, 0.0)
    a.H = a.H * (1 + 1e-3)
    err = A.verify_against_solver(e, a)
    assert err["rho"]["linf"] == 0.0
    assert np.isclose(err["H"]["linf"], 1e-3)
    assert len(A.verify_against_solver([e, e], [a, a])) == 2
    with pytest.raises(ShapeMismatch):
        A.verify_against_solver([e], [a, a])
    bad = FieldState.uniform((3, 1))
    with pytest.raises(ShapeMismatch):
        A.verify_against_solver(e, bad)
