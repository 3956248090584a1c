import numpy as np
import pytest

from qlipdg.fespace import DgFunction, DgSpace, broken_h1_seminorm, l2_project
from qlipdg.ipdg import (
    DiscretizationParams,
    apply_discrete_operator,
    assemble_jacobian,
    assemble_residual,
    form_vector,
    load_vector,
    penalty_sigma,
    reconstruction_data,
    semilinear_form,
)
from qlipdg.mesh import build_structured_mesh
from qlipdg.oswald import oswald_interpolate
from qlipdg.problem import preset_nonlinearity
from qlipdg.verify import distorted_mesh, jacobian_fd_error, linear_coercivity

LINEAR = preset_nonlinearity("linear")
HRS = preset_nonlinearity("hrs")


def random_function(space, seed):
    return DgFunction(space, np.random.default_rng(seed).standard_normal(space.ndof))


@pytest.mark.parametrize("theta", [2, -2, 0.5])
def test_theta_validated(theta):
    with pytest.raises(ValueError, match="theta"):
        DiscretizationParams(theta=theta)


@pytest.mark.parametrize("c", [1.0, 0.5, -3.0])
def test_penalty_validated(c):
    with pytest.raises(ValueError, match="c_sigma"):
        DiscretizationParams(c_sigma=c)


def test_penalty_formula():
    params = DiscretizationParams(c_sigma=10.0)
    assert penalty_sigma(0.5, 2, params) == pytest.approx(80.0)
    assert penalty_sigma(1.0, 1, params) == pytest.approx(10.0)
    assert penalty_sigma(0.3, 4, params) == pytest.approx(4 * penalty_sigma(0.3, 2, params))


@pytest.mark.parametrize("theta", [-1, 0, 1])
def test_form_vanishes_at_zero(theta):
    space = DgSpace(distorted_mesh(), 2)
    params = DiscretizationParams(theta)
    v = random_function(space, 0)
    assert semilinear_form(space.zero(), v, 0.0, params, HRS) == 0.0


def test_conforming_reduction_to_dirichlet_form():
    space = DgSpace(build_structured_mesh(), 4)
    bub = lambda x: x[..., 0] * (1 - x[..., 0]) * x[..., 1] * (1 - x[..., 1])  # noqa: E731
    w = l2_project(bub, space)
    v = l2_project(lambda x: bub(x) * (1 + x[..., 0]), space)
    gw, gv = w.gradients(), v.gradients()
    dirichlet = np.einsum("kq,kqa,kqa->", space.wdet, gw, gv)
    for theta in (-1, 0, 1):
        assert semilinear_form(w, v, 0.0, DiscretizationParams(theta), LINEAR) == pytest.approx(dirichlet, rel=1e-10)


def test_sipg_symmetry():
    space = DgSpace(distorted_mesh(), 3)
    params = DiscretizationParams(-1)
    w, v = random_function(space, 1), random_function(space, 2)
    a = semilinear_form(w, v, 0.0, params, LINEAR)
    b = semilinear_form(v, w, 0.0, params, LINEAR)
    assert a == pytest.approx(b, rel=1e-12)
    J = assemble_jacobian(space.zero(), 0.0, params, LINEAR)
    assert abs(J - J.T).max() <= 1e-12 * abs(J).max()


def test_semilinear_form_needs_shared_space():
    a = DgSpace(build_structured_mesh(), 1)
    b = DgSpace(build_structured_mesh(), 1)
    with pytest.raises(ValueError):
        semilinear_form(a.zero(), b.zero(), 0.0, DiscretizationParams(), LINEAR)


def test_residual_of_zero_state():
    space = DgSpace(build_structured_mesh(nx=2, ny=2), 2)
    r = assemble_residual(space.zero(), lambda t, x: np.ones(x.shape[:-1]), 0.0, DiscretizationParams(), HRS)
    integrals = np.einsum("kq,qi->ki", space.wdet, space.phi).ravel()
    np.testing.assert_allclose(r, -integrals, atol=1e-15)


@pytest.mark.parametrize("name", ["linear", "hrs", "arctan"])
@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("theta", [-1, 0, 1])
def test_jacobian_matches_central_differences(name, p, theta):
    space = DgSpace(distorted_mesh(), p)
    err = jacobian_fd_error(space, preset_nonlinearity(name), DiscretizationParams(theta), np.random.default_rng(p))
    assert err <= 1e-6


def test_linear_jacobian_is_state_independent():
    space = DgSpace(distorted_mesh(), 2)
    params = DiscretizationParams(0)
    J0 = assemble_jacobian(space.zero(), 0.0, params, LINEAR)
    J1 = assemble_jacobian(random_function(space, 3), 0.0, params, LINEAR)
    assert abs(J0 - J1).max() == 0.0
    u = random_function(space, 4)
    np.testing.assert_allclose(J0 @ u.coeffs, form_vector(u, 0.0, params, LINEAR), atol=1e-11)


def test_jacobian_sparsity_follows_adjacency():
    mesh = build_structured_mesh(nx=3, ny=3)
    space = DgSpace(mesh, 1)
    J = assemble_jacobian(random_function(space, 5), 0.0, DiscretizationParams(1), HRS).tocoo()
    nb = space.nb
    pairs = set(zip(J.row // nb, J.col // nb))
    for k in range(mesh.n_elements):
        for m in range(mesh.n_elements):
            adjacent = k == m or m in mesh.neighbors(k)
            if not adjacent:
                assert (k, m) not in pairs


def test_discrete_operator_of_zero():
    space = DgSpace(build_structured_mesh(nx=2, ny=2), 2)
    assert not apply_discrete_operator(space.zero(), 0.0, DiscretizationParams(), HRS).coeffs.any()


def test_discrete_operator_consistency():
    space = DgSpace(distorted_mesh(), 2)
    params = DiscretizationParams(-1)
    Z, V = random_function(space, 6), random_function(space, 7)
    AZ = apply_discrete_operator(Z, 0.0, params, HRS)
    lhs = -np.einsum("kq,kq,kq->", space.wdet, AZ.values(), V.values())
    assert lhs == pytest.approx(semilinear_form(Z, V, 0.0, params, HRS), rel=1e-11)


def test_weak_laplacian_identity():
    space = DgSpace(build_structured_mesh(nx=2, ny=2), 3)
    Z = l2_project(lambda x: x[..., 0] * (1 - x[..., 0]) * x[..., 1] * (1 - x[..., 1]), space)
    V = oswald_interpolate(random_function(space, 8))
    AZ = apply_discrete_operator(Z, 0.0, DiscretizationParams(0), LINEAR)
    lhs = -np.einsum("kq,kq,kq->", space.wdet, AZ.values(), V.values())
    assert lhs == pytest.approx(np.einsum("kq,kqa,kqa->", space.wdet, Z.gradients(), V.gradients()), rel=1e-10)


def test_reconstruction_datum_for_discrete_source():
    space = DgSpace(build_structured_mesh(nx=2, ny=2), 2)
    U = random_function(space, 9)
    src = l2_project(lambda x: x[..., 0] ** 2 - x[..., 1], space)
    f = lambda t, x: x[..., 0] ** 2 - x[..., 1]  # noqa: E731
    data = reconstruction_data(U, f, 0.0, DiscretizationParams(), HRS)
    np.testing.assert_allclose(data.oscillation_values(), 0.0, atol=1e-13)
    np.testing.assert_allclose(data.values(), data.minus_AU.values(), atol=1e-12)
    np.testing.assert_allclose(data.f_proj.coeffs, src.coeffs, atol=1e-14)


def test_reconstruction_datum_zero():
    space = DgSpace(build_structured_mesh(nx=2, ny=2), 2)
    zero = lambda t, x: np.zeros(x.shape[:-1])  # noqa: E731
    data = reconstruction_data(space.zero(), zero, 0.0, DiscretizationParams(), HRS)
    assert not data.values().any()


def test_datum_matches_solution_residual():
    # <g, V> = B(U, V) for every discrete V, whatever U is
    space = DgSpace(distorted_mesh(), 2)
    params = DiscretizationParams(0)
    U = random_function(space, 10)
    f = lambda t, x: np.sin(3 * x[..., 0]) * np.exp(x[..., 1])  # noqa: E731
    data = reconstruction_data(U, f, 0.0, params, HRS)
    g = np.einsum("kq,kq,qi->ki", space.wdet, data.values(), space.phi).ravel()
    np.testing.assert_allclose(g, form_vector(U, 0.0, params, HRS), atol=1e-11)


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_coercivity_witness(p):
    space = DgSpace(build_structured_mesh(nx=4, ny=4), p)
    for theta in (-1, 0, 1):
        assert linear_coercivity(space, DiscretizationParams(theta, 10.0)) >= 0.25


def test_small_penalty_loses_coercivity():
    space = DgSpace(build_structured_mesh(nx=4, ny=4), 1)
    assert linear_coercivity(space, DiscretizationParams(-1, 1.01)) < 0.25


def test_load_vector_of_constant():
    space = DgSpace(build_structured_mesh(nx=2, ny=2), 1)
    F = load_vector(space, lambda t, x: 2.0 + 0 * x[..., 0], 0.0)
    assert F.reshape(4, 4)[:, 0].sum() == pytest.approx(2.0)
    assert broken_h1_seminorm(space.zero()) == 0.0
