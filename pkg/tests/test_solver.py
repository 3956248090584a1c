import numpy as np
import pytest
import scipy.sparse as sp

from qlipdg.estimator import steady_estimate
from qlipdg.fespace import DgSpace, broken_l2_norm, energy_norm, l2_error, l2_project
from qlipdg.ipdg import DiscretizationParams, assemble_jacobian, form_vector, load_vector, reconstruction_data
from qlipdg.mesh import build_structured_mesh
from qlipdg.problem import ProblemSpec, manufactured_problem, preset_nonlinearity, zero_problem
from qlipdg.solver import (
    LinearSolveError,
    NewtonConfig,
    NewtonDivergence,
    march_parabolic,
    oracle_energy_error,
    reconstruction_oracle,
    solve_elliptic,
    solve_linear,
    time_grid,
)

PARAMS = DiscretizationParams(0, 10.0)


def bubble(t, x):
    return x[..., 0] * (1 - x[..., 0]) * x[..., 1] * (1 - x[..., 1])


def bubble_source(t, x):
    X, Y = x[..., 0], x[..., 1]
    return 2 * Y * (1 - Y) + 2 * X * (1 - X)


def poisson_bubble():
    nl = preset_nonlinearity("linear")
    return ProblemSpec("bubble", nl, bubble_source, lambda x: bubble(0, x), exact=bubble, steady=True)


def test_newton_config_validated():
    with pytest.raises(ValueError):
        NewtonConfig(tol=0)
    with pytest.raises(ValueError):
        NewtonConfig(max_iter=0)


def test_linear_problem_takes_one_newton_step():
    space = DgSpace(build_structured_mesh(nx=3, ny=3), 2)
    rng = np.random.default_rng(0)
    guess = space.function(rng.standard_normal(space.ndof))
    _, info = solve_elliptic(poisson_bubble(), space, PARAMS, initial=guess)
    assert info.iterations == 1


@pytest.mark.parametrize("theta", [-1, 0, 1])
def test_polynomial_reproduction(theta):
    space = DgSpace(build_structured_mesh(nx=3, ny=2), 2)
    U, _ = solve_elliptic(poisson_bubble(), space, DiscretizationParams(theta))
    assert l2_error(U, bubble, t=0.0) <= 1e-10
    assert energy_norm(U, 10.0, lambda t, x: np.zeros(x.shape), t=0.0) == pytest.approx(
        energy_norm(l2_project(bubble, space, t=0.0), 10.0), rel=1e-9
    )


def test_higher_degree_is_more_accurate():
    spec = manufactured_problem("steady_quasilinear")
    mesh = build_structured_mesh(nx=8, ny=8)
    errs = []
    for p in (1, 2):
        U, _ = solve_elliptic(spec, DgSpace(mesh, p), PARAMS)
        errs.append(energy_norm(U, 10.0, spec.exact_grad, t=0.0))
    assert errs[1] < errs[0]


def test_newton_converges_quadratically():
    spec = manufactured_problem("quasilinear_smooth")
    space = DgSpace(build_structured_mesh(nx=8, ny=8), 2)
    _, info = solve_elliptic(spec, space, PARAMS, NewtonConfig(tol=1e-13), t=0.5)
    # drop entries at the rounding floor of the residual
    hist = np.array([r for r in info.history if r > 1e-12])
    quad = [(a, b) for a, b in zip(hist[:-1], hist[1:]) if a < 1e-3]
    assert quad
    assert all(b <= a**2 for a, b in quad)
    logs = np.log(hist[-3:])
    assert (logs[2] - logs[1]) / (logs[1] - logs[0]) >= 1.8


def test_newton_divergence_reported():
    spec = manufactured_problem("quasilinear_smooth")
    space = DgSpace(build_structured_mesh(nx=4, ny=4), 2)
    with pytest.raises(NewtonDivergence) as exc:
        march_parabolic(spec, space, PARAMS, 0.05, NewtonConfig(tol=1e-14, max_iter=1))
    assert exc.value.step == 1


def test_solve_linear_identity():
    r = np.arange(5.0)
    np.testing.assert_allclose(solve_linear(sp.identity(5), r), r)


def test_solve_linear_random_system():
    rng = np.random.default_rng(1)
    A = sp.random(60, 60, density=0.1, random_state=2) + 10 * sp.identity(60)
    b = rng.standard_normal(60)
    x = solve_linear(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_solve_linear_singular():
    with pytest.raises(LinearSolveError):
        solve_linear(sp.csr_matrix((3, 3)), np.ones(3))


def test_sipg_jacobian_admits_cholesky():
    space = DgSpace(build_structured_mesh(nx=3, ny=3), 2)
    J = assemble_jacobian(space.zero(), 0.0, DiscretizationParams(-1), preset_nonlinearity("linear")).toarray()
    np.linalg.cholesky(0.5 * (J + J.T))


def test_time_grid():
    np.testing.assert_allclose(time_grid(0.1, 0.03), np.linspace(0, 0.1, 5))
    assert len(time_grid(0.1, 0.025)) == 5
    with pytest.raises(ValueError):
        time_grid(0.1, 0.0)


def test_zero_data_stays_zero():
    spec = zero_problem("hrs", T=0.05)
    space = DgSpace(build_structured_mesh(nx=3, ny=3), 2)
    series = march_parabolic(spec, space, PARAMS, 0.01)
    assert not series.coeffs.any()
    assert len(series) == 6


def test_heat_decay_final_norm():
    spec = manufactured_problem("heat_decay", T=0.1)
    space = DgSpace(build_structured_mesh(nx=8, ny=8), 2)
    series = march_parabolic(spec, space, PARAMS, 1e-3)
    exact = 0.5 * np.exp(-2 * np.pi**2 * 0.1)
    assert broken_l2_norm(series.snapshot(-1)) == pytest.approx(exact, rel=0.02)


def test_temporal_error_subordinate():
    spec = manufactured_problem("quasilinear_smooth", T=0.1)
    space = DgSpace(build_structured_mesh(nx=4, ny=4), 1)
    finals = []
    for dt in (0.01, 0.005):
        s = march_parabolic(spec, space, PARAMS, dt)
        finals.append(s.snapshot(-1))
    spatial = l2_error(finals[1], spec.exact, t=0.1)
    change = abs(l2_error(finals[0], spec.exact, t=0.1) - spatial)
    assert change < spatial


def test_stability_without_source():
    spec = manufactured_problem("heat_decay", T=0.05)
    for nl in ("linear", "hrs", "arctan"):
        s = ProblemSpec("free", preset_nonlinearity(nl), spec.f, spec.u0, T=0.05)
        series = march_parabolic(s, DgSpace(build_structured_mesh(nx=4, ny=4), 2), PARAMS, 0.005)
        norms = [broken_l2_norm(series.snapshot(n)) for n in range(len(series))]
        assert np.all(np.diff(norms) <= 0)


def test_time_series_consistency():
    spec = manufactured_problem("quasilinear_smooth", T=0.02)
    space = DgSpace(build_structured_mesh(nx=4, ny=4), 2)
    tol = 1e-10
    series = march_parabolic(spec, space, PARAMS, 0.005, NewtonConfig(tol=tol))
    M = space.mass_matrix()
    for n in range(1, len(series)):
        t = series.times[n]
        r = M @ series.rates[n] + form_vector(series.snapshot(n), t, PARAMS, spec.nonlinearity) - load_vector(space, spec.f, t)
        assert np.abs(r).max() <= tol
    np.testing.assert_allclose(series.rates[0], series.rates[1])


def test_initial_value_is_projection():
    spec = manufactured_problem("heat_decay", T=0.01)
    space = DgSpace(build_structured_mesh(nx=2, ny=2), 2)
    series = march_parabolic(spec, space, PARAMS, 0.01)
    np.testing.assert_allclose(series.coeffs[0], l2_project(spec.u0, space).coeffs)


def test_oracle_of_zero_state():
    space = DgSpace(build_structured_mesh(nx=2, ny=2), 1)
    zero = lambda t, x: np.zeros(x.shape[:-1])  # noqa: E731
    nl = preset_nonlinearity("hrs")
    data = reconstruction_data(space.zero(), zero, 0.0, PARAMS, nl)
    res = reconstruction_oracle(space.zero(), data, PARAMS, nl)
    assert not res.w.coeffs.any()


def test_oracle_solves_conforming_poisson():
    # g is -AU + f - Pi f; with U the DG solution of a bubble, g = f reproduces the bubble
    spec = poisson_bubble()
    space = DgSpace(build_structured_mesh(nx=2, ny=2), 1)
    U, _ = solve_elliptic(spec, space, PARAMS)
    data = reconstruction_data(U, spec.f, 0.0, PARAMS, spec.nonlinearity)
    res = reconstruction_oracle(U, data, PARAMS, spec.nonlinearity)
    assert res.w.space.p == 3
    assert l2_error(res.w, bubble, t=0.0) <= 1e-10


def test_oracle_error_bounded_by_estimator():
    spec = manufactured_problem("steady_quasilinear")
    ratios = []
    for n in (2, 4, 8):
        space = DgSpace(build_structured_mesh(nx=n, ny=n), 1)
        U, _ = solve_elliptic(spec, space, PARAMS)
        data = reconstruction_data(U, spec.f, 0.0, PARAMS, spec.nonlinearity)
        err = oracle_energy_error(reconstruction_oracle(U, data, PARAMS, spec.nonlinearity), 10.0)
        ratios.append(steady_estimate(U, spec, PARAMS).estimate / err)
    assert min(ratios) >= 1
    assert max(ratios) / min(ratios) <= 3


def test_oracle_refinement_argument():
    space = DgSpace(build_structured_mesh(), 1)
    with pytest.raises(ValueError):
        reconstruction_oracle(space.zero(), None, PARAMS, preset_nonlinearity("linear"), refinements=2)
