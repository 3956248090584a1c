"""Newton and backward-Euler solvers for the IPDG discretisation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace import DgFunction, DgSpace, interpolate_from_coarse, l2_project
from .ipdg import assemble_form_and_jacobian, form_vector, load_vector
from .mesh import refine_uniform
from .oswald import OswaldOperator

log = logging.getLogger(__name__)


class NewtonDivergence(RuntimeError):
    def __init__(self, message, step=None, history=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step
        self.history = history or []


class LinearSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 30
    max_halvings: int = 20

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Newton tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("Newton needs at least one iteration")


@dataclass
class NewtonInfo:
    iterations: int = 0
    history: list = field(default_factory=list)

    @property
    def residual(self):
        return self.history[-1] if self.history else float("nan")


def solve_linear(J, r, rtol=1e-12, refinements=3):
    """Solve ``J x = r`` by sparse LU with iterative refinement.

    Raises :class:`LinearSolveError` if the factorisation is singular or the
    relative residual stays above ``rtol``.
    """
    J = sp.csc_matrix(J)
    r = np.asarray(r, dtype=float)
    try:
        lu = spla.splu(J)
    except RuntimeError as exc:
        raise LinearSolveError(f"sparse LU failed: {exc}") from exc
    x = lu.solve(r)
    scale = max(np.linalg.norm(r), np.finfo(float).tiny)
    for _ in range(refinements):
        res = r - J @ x
        if np.linalg.norm(res) <= rtol * scale:
            break
        x += lu.solve(res)
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("linear solve produced non-finite values")
    rel = np.linalg.norm(r - J @ x) / scale
    if rel > rtol:
        raise LinearSolveError(f"relative linear residual {rel:.3e} above {rtol:.1e}")
    return x


def newton(residual_and_jacobian, x0, config, step=None):
    """Damped Newton iteration on the max-norm of the residual.

    ``residual_and_jacobian(x, jacobian)`` returns ``(r, J)``; with
    ``jacobian=False`` only ``r`` is needed.  Step lengths are halved until
    the residual decreases, at most ``config.max_halvings`` times.
    """
    x = np.array(x0, dtype=float)
    r, J = residual_and_jacobian(x, True)
    info = NewtonInfo(history=[float(np.abs(r).max())])
    while info.history[-1] > config.tol:
        if info.iterations >= config.max_iter:
            raise NewtonDivergence(
                f"no convergence in {config.max_iter} iterations "
                f"(residual {info.history[-1]:.3e})",
                step,
                info.history,
            )
        try:
            dx = solve_linear(J, -r)
        except LinearSolveError as exc:
            raise NewtonDivergence(str(exc), step, info.history) from exc
        lam = 1.0
        current = info.history[-1]
        for _ in range(config.max_halvings + 1):
            trial = x + lam * dx
            r_trial, _ = residual_and_jacobian(trial, False)
            norm = float(np.abs(r_trial).max())
            if norm <= config.tol or norm < (1.0 - 1e-4 * lam) * current:
                break
            lam *= 0.5
        x = trial
        info.iterations += 1
        r, J = residual_and_jacobian(x, True)
        info.history.append(float(np.abs(r).max()))
        if not np.isfinite(info.history[-1]):
            raise NewtonDivergence("residual became non-finite", step, info.history)
    return x, info


def solve_elliptic(spec, space, params, config=None, initial=None, t=0.0, rhs=None):
    """Solve B(U, V) = <rhs(t), V> for all V (rhs defaults to the problem source).

    Returns ``(U, info)``.
    """
    config = config or NewtonConfig()
    nl = spec.nonlinearity
    rhs = spec.f if rhs is None else rhs
    F = load_vector(space, rhs, t)

    def fun(c, jac):
        U = DgFunction(space, c)
        if jac:
            b, J = assemble_form_and_jacobian(U, t, params, nl)
            return b - F, J
        return form_vector(U, t, params, nl) - F, None

    x0 = np.zeros(space.ndof) if initial is None else initial.coeffs
    c, info = newton(fun, x0, config)
    return DgFunction(space, c), info


@dataclass(eq=False)
class TimeSeries:
    """Snapshots U^n on a strictly increasing time grid.

    ``rates[n]`` is the backward difference (U^n - U^{n-1}) / dt_n; at n = 0
    the first difference is repeated.
    """

    space: DgSpace
    times: np.ndarray
    coeffs: np.ndarray  # (N + 1, ndof)
    newton_iterations: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.coeffs):
            raise ValueError("one snapshot per time level is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def snapshot(self, n):
        return DgFunction(self.space, self.coeffs[n])

    @property
    def rates(self):
        if len(self.times) < 2:
            return np.zeros_like(self.coeffs)
        d = np.diff(self.coeffs, axis=0) / np.diff(self.times)[:, None]
        return np.concatenate([d[:1], d])

    def rate(self, n):
        return DgFunction(self.space, self.rates[n])


def time_grid(T, dt):
    """Uniform grid on [0, T] with step at most ``dt``."""
    if not T > 0 or not dt > 0:
        raise ValueError("final time and time step must be positive")
    n = int(np.ceil(T / dt - 1e-12))
    return np.linspace(0.0, T, n + 1)


def march_parabolic(spec, space, params, dt, config=None, callback=None):
    """Backward Euler: <(U^{n+1} - U^n)/dt, V> + B(U^{n+1}, V) = <f(t_{n+1}), V>.

    U^0 is the L^2 projection of the initial datum.  ``callback(n, U)`` is
    called after every accepted step.  For a linear coefficient the step
    matrix is factored once and each step is a single solve.
    """
    config = config or NewtonConfig()
    nl = spec.nonlinearity
    times = time_grid(spec.T, dt)
    U0 = l2_project(spec.u0, space)
    M = space.mass_matrix()
    coeffs = np.empty((len(times), space.ndof))
    coeffs[0] = U0.coeffs
    iterations = []
    steps = np.diff(times)
    linear_lu = None
    if nl.is_linear and np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
        J = assemble_form_and_jacobian(space.zero(), times[0], params, nl)[1]
        A = (M / steps[0] + J).tocsc()
        try:
            linear_lu = (A, spla.splu(A))
        except RuntimeError as exc:
            raise NewtonDivergence(f"sparse LU failed: {exc}", 1) from exc
    for n in range(len(times) - 1):
        t1, tau = times[n + 1], steps[n]
        F = load_vector(space, spec.f, t1)
        MUold = M @ coeffs[n]

        def fun(c, jac, t1=t1, tau=tau, F=F, MUold=MUold):
            U = DgFunction(space, c)
            base = (M @ c - MUold) / tau - F
            if jac:
                b, J = assemble_form_and_jacobian(U, t1, params, nl)
                return base + b, (J + M / tau).tocsr()
            return base + form_vector(U, t1, params, nl), None

        if linear_lu is not None:
            c, its = _linear_step(linear_lu, fun, F + MUold / tau, config, n + 1)
        else:
            c, info = newton(fun, coeffs[n], config, step=n + 1)
            its = info.iterations
        coeffs[n + 1] = c
        iterations.append(its)
        if callback is not None:
            callback(n + 1, DgFunction(space, c))
    log.debug("marched %d steps, Newton iterations %s", len(times) - 1, iterations)
    return TimeSeries(space, times, coeffs, iterations)


def _linear_step(factored, fun, rhs, config, step):
    """One Newton step from zero with a prefactored matrix, with iterative refinement."""
    A, lu = factored
    c = lu.solve(rhs)
    for _ in range(3):
        r, _ = fun(c, False)
        if np.abs(r).max() <= config.tol:
            return c, 1
        c -= lu.solve(r)
    r, _ = fun(c, False)
    if not np.abs(r).max() <= config.tol:
        raise NewtonDivergence(f"linear step residual {np.abs(r).max():.3e} above tolerance", step)
    return c, 1


@dataclass(eq=False)
class OracleResult:
    w: DgFunction
    info: NewtonInfo
    coarse: DgFunction


def reconstruction_oracle(U, data, params, nl, config=None, refinements=1, degree_increase=2):
    """Conforming approximation of the elliptic reconstruction.

    Solves <alpha(w), grad v> = <g, v> for all v in the continuous subspace
    (zero boundary values) of degree ``p + degree_increase`` on the mesh
    refined ``refinements`` times.  ``data`` is the
    :class:`~qlipdg.ipdg.ReconstructionData` of ``U``.
    """
    if refinements != 1:
        raise ValueError("the oracle supports exactly one refinement level")
    config = config or NewtonConfig()
    coarse = U.space
    fine_mesh = refine_uniform(coarse.mesh)
    fine = DgSpace(fine_mesh, coarse.p + degree_increase)
    P = OswaldOperator(fine).prolongation()

    ref_parent = fine_mesh.child_offset[:, None, :] + 0.5 * (fine.ref[None] + 1.0)
    disc, _ = data.minus_AU.evaluate_many(fine_mesh.parent, ref_parent)
    fproj, _ = data.f_proj.evaluate_many(fine_mesh.parent, ref_parent)
    g = disc + data.f(data.t, fine.X) - fproj
    G = ((fine.wdet * g) @ fine.phi).ravel()
    Gr = P.T @ G
    t = data.t

    def fun(c, jac):
        W = DgFunction(fine, P @ c)
        if jac:
            b, J = assemble_form_and_jacobian(W, t, params, nl)
            return P.T @ b - Gr, (P.T @ J @ P).tocsr()
        return P.T @ form_vector(W, t, params, nl) - Gr, None

    c, info = newton(fun, np.zeros(P.shape[1]), config)
    return OracleResult(DgFunction(fine, P @ c), info, U)


def oracle_energy_error(result, c_sigma):
    """Energy norm of w - U: broken gradients on the fine mesh, jumps of U on coarse faces."""
    from .fespace import face_weighted_norm

    U = result.coarse
    w = result.w
    Uf = interpolate_from_coarse(U, w.space)
    d = w.gradients() - Uf.gradients()
    vol = np.einsum("kq,kqa,kqa->", w.space.wdet, d, d)
    jmp = face_weighted_norm(U, "sigma", c_sigma) ** 2
    return float(np.sqrt(vol + jmp))
