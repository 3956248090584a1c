"""Property suites behind ``qlipdg verify``.

Each suite returns a :class:`SuiteResult` with a pass flag and the measured
quantities.  The report lists one line per suite followed by details.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .basis import QuadratureRule
from .fespace import (
    DgFunction,
    DgSpace,
    average,
    average_vector,
    energy_matrix,
    face_trace,
    jump_vector,
    l2_project,
)
from .ipdg import (
    DiscretizationParams,
    assemble_jacobian,
    form_vector,
    load_vector,
    reconstruction_data,
    semilinear_form,
)
from .mesh import build_structured_mesh, make_mesh
from .oswald import measured_c3, oswald_sweep
from .problem import PRESET_NAMES, check_hypotheses, manufactured_problem, preset_nonlinearity
from .solver import NewtonConfig, march_parabolic, solve_elliptic

COERCIVITY_FACTOR = 0.25


@dataclass
class SuiteResult:
    name: str
    passed: bool
    details: list = field(default_factory=list)
    measured: dict = field(default_factory=dict)

    def line(self):
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'}"


def distorted_mesh(nx=3, ny=2, amplitude=0.08, rng=0):
    """Structured mesh of the unit square with interior vertices jittered."""
    base = build_structured_mesh(nx=nx, ny=ny)
    v = base.vertices.copy()
    interior = (v[:, 0] > 0) & (v[:, 0] < 1) & (v[:, 1] > 0) & (v[:, 1] < 1)
    jitter = np.random.default_rng(rng).uniform(-1, 1, v.shape) * amplitude / max(nx, ny)
    v[interior] += jitter[interior]
    return make_mesh(v, base.elements, base.domain)


def suite_hypotheses(seed=0, samples=10_000):
    res = SuiteResult("hypotheses", True)
    for name in PRESET_NAMES:
        nl = preset_nonlinearity(name)
        rep = check_hypotheses(nl, samples=samples, rng=seed)
        ok = rep.passed
        if name == "linear":
            ok = ok and abs(rep.lipschitz - 1) <= 1e-12 and abs(rep.monotonicity - 1) <= 1e-12
        res.passed &= ok
        res.measured[name] = (rep.lipschitz, rep.monotonicity)
        res.details.append(
            f"{name}: lipschitz {rep.lipschitz:.12g} <= {rep.a_upper:.12g}, "
            f"monotonicity {rep.monotonicity:.12g} >= {rep.a_lower:.12g} over {rep.pairs} pairs"
        )
    return res


def suite_quadrature(max_points=10):
    res = SuiteResult("quadrature", True)
    worst = 0.0
    for n in range(1, max_points + 1):
        rule = QuadratureRule(n)
        x, w = rule.points_1d, rule.weights_1d
        for k in range(rule.exact_degree + 1):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            worst = max(worst, abs(w @ x**k - exact))
    res.passed = worst <= 1e-13
    res.measured["max_moment_error"] = worst
    res.details.append(f"max monomial moment error {worst:.3e} for 1..{max_points} points")
    return res


def _random_field(rng):
    a = rng.uniform(0.5, 3.0, 4)
    return lambda x: np.sin(a[0] * x[..., 0] + a[1]) * np.cos(a[2] * x[..., 1]) + a[3] * x[..., 0] * x[..., 1]


def suite_projection(seed=0):
    rng = np.random.default_rng(seed)
    res = SuiteResult("projection", True)
    mesh = distorted_mesh(rng=seed)
    for p in (1, 2, 3, 4):
        space = DgSpace(mesh, p)
        f = _random_field(rng)
        Pf = l2_project(f, space)
        fv = f(space.X)
        resid = np.einsum("kq,kq,qi->ki", space.wdet, fv - Pf.values(), space.phi)
        fnorm = np.sqrt(np.einsum("kq,kq->", space.wdet, fv**2))
        phinorm = np.sqrt(np.einsum("kii->ki", space.mass))
        orth = float(np.max(np.abs(resid) / (fnorm * phinorm)))
        idem = float(np.max(np.abs(l2_project(Pf, space).coeffs - Pf.coeffs)))
        ok = orth <= 1e-10 and idem <= 1e-12
        res.passed &= ok
        res.details.append(f"p={p}: orthogonality {orth:.3e}, idempotence {idem:.3e}")
    return res


def magic_formula_sides(u):
    """Both sides of sum_K int_dK u grad u . n = sum_e [u].{grad u} + {u}[grad u]."""
    fd = u.space.faces
    tr = face_trace(u)
    n = fd.normal
    lhs = np.einsum(
        "fq,fq->",
        fd.ds,
        tr.value_plus * np.einsum("fqa,fqa->fq", tr.grad_plus, n)
        - fd.interior[:, None] * tr.value_minus * np.einsum("fqa,fqa->fq", tr.grad_minus, n),
    )
    vjump = (tr.value_plus - tr.value_minus)[..., None] * n
    avg_grad = average_vector(tr.grad_plus, tr.grad_minus, fd)
    rhs_a = np.einsum("fq,fqa,fqa->", fd.ds, vjump, avg_grad)
    rhs_b = np.einsum("fq,fq,fq->", fd.ds * fd.interior[:, None], average(u), jump_vector(tr.grad_plus, tr.grad_minus, fd))
    return float(lhs), float(rhs_a + rhs_b)


def suite_jump_identity(seed=0, trials=5):
    rng = np.random.default_rng(seed)
    res = SuiteResult("jump_identity", True)
    space = DgSpace(distorted_mesh(rng=seed), 2)
    worst = 0.0
    for _ in range(trials):
        u = DgFunction(space, rng.standard_normal(space.ndof))
        lhs, rhs = magic_formula_sides(u)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1.0))
    res.passed = worst <= 1e-10
    res.measured["relative_gap"] = worst
    res.details.append(f"max relative gap {worst:.3e} over {trials} random functions")
    return res


def suite_oswald(factor=2.0):
    table = oswald_sweep()
    c0 = np.array([c[0] for c in table.values()])
    c1 = np.array([c[1] for c in table.values()])
    spread0 = float(c0.max() / c0.min())
    spread1 = float(c1.max() / c1.min())
    res = SuiteResult("oswald", spread0 <= factor and spread1 <= factor)
    for (n, p), (a, b) in table.items():
        res.details.append(f"mesh {n}x{n} p={p}: L2 constant {a:.6g}, gradient constant {b:.6g}")
    res.details.append(f"spread (max/min): L2 {spread0:.4g}, gradient {spread1:.4g}, allowed {factor:g}")
    c3 = measured_c3()
    res.details.append(f"C3 = 2 x worst constant = {c3:.6g}")
    res.measured.update(spread_l2=spread0, spread_gradient=spread1, C3=c3)
    return res


def jacobian_fd_error(space, nl, params, rng, eps=1e-7):
    """Relative gap between the assembled Jacobian action and a central difference."""
    U = DgFunction(space, rng.standard_normal(space.ndof))
    V = rng.standard_normal(space.ndof)
    J = assemble_jacobian(U, 0.3, params, nl)
    JV = J @ V
    rp = form_vector(DgFunction(space, U.coeffs + eps * V), 0.3, params, nl)
    rm = form_vector(DgFunction(space, U.coeffs - eps * V), 0.3, params, nl)
    fd = (rp - rm) / (2 * eps)
    return float(np.linalg.norm(fd - JV) / np.linalg.norm(JV))


def suite_jacobian(seed=0, presets=PRESET_NAMES, tol=1e-6):
    rng = np.random.default_rng(seed)
    res = SuiteResult("jacobian", True)
    mesh = distorted_mesh(rng=seed)
    worst = 0.0
    for p in (1, 2, 3):
        space = DgSpace(mesh, p)
        for name in presets:
            nl = preset_nonlinearity(name)
            for theta in (-1, 0, 1):
                err = jacobian_fd_error(space, nl, DiscretizationParams(theta, 10.0), rng)
                worst = max(worst, err)
                if err > tol:
                    res.passed = False
                    res.details.append(f"{name} p={p} theta={theta}: relative gap {err:.3e}")
    res.measured["worst"] = worst
    res.details.append(f"worst relative gap {worst:.3e} (tolerance {tol:g})")
    return res


def galerkin_gap(U, rhs_vector, params, nl, f, t):
    """max_i |B(U, phi_i) - <g, phi_i>| and max_i |<g, phi_i> - rhs_i|."""
    space = U.space
    data = reconstruction_data(U, f, t, params, nl)
    M = space.mass_matrix()
    g_vec = M @ data.minus_AU.coeffs + load_vector(space, f, t) - M @ data.f_proj.coeffs
    b = form_vector(U, t, params, nl)
    return float(np.abs(b - g_vec).max()), float(np.abs(g_vec - rhs_vector).max())


def suite_galerkin(theta=0, c_sigma=10.0, tol=1e-10):
    res = SuiteResult("galerkin", True)
    params = DiscretizationParams(theta, c_sigma)
    newton = NewtonConfig(tol=tol)
    space = DgSpace(build_structured_mesh(nx=4, ny=4), 2)

    spec = manufactured_problem("steady_quasilinear")
    U, _ = solve_elliptic(spec, space, params, newton)
    ident, sol = galerkin_gap(U, load_vector(space, spec.f, 0.0), params, spec.nonlinearity, spec.f, 0.0)
    worst_ident, worst_sol = ident, sol
    res.details.append(f"steady: identity {ident:.3e}, datum vs source {sol:.3e}")

    spec = manufactured_problem("quasilinear_smooth", T=0.01)
    series = march_parabolic(spec, space, params, 2.5e-3, newton)
    M = space.mass_matrix()
    rates = series.rates
    for n in range(1, len(series)):
        t = series.times[n]
        rhs = load_vector(space, spec.f, t) - M @ rates[n]
        ident, sol = galerkin_gap(series.snapshot(n), rhs, params, spec.nonlinearity, spec.f, t)
        worst_ident = max(worst_ident, ident)
        worst_sol = max(worst_sol, sol)
    res.details.append(f"parabolic: identity {worst_ident:.3e}, <g,V> - <f - U_t,V> {worst_sol:.3e}")
    res.passed = worst_ident <= 10 * tol and worst_sol <= 10 * tol
    res.measured.update(identity=worst_ident, datum=worst_sol)
    return res


def linear_coercivity(space, params):
    """Smallest value of B(V, V) / |||V|||^2 for the linear coefficient (exact)."""
    A = assemble_jacobian(space.zero(), 0.0, params, preset_nonlinearity("linear")).toarray()
    N = energy_matrix(space, params.c_sigma).toarray()
    return float(sla.eigh(0.5 * (A + A.T), N, eigvals_only=True, subset_by_index=[0, 0])[0])


def suite_coercivity(theta=0, c_sigma=10.0, seed=0, samples=5, meshes=(4, 8, 16), degrees=(1, 2, 3, 4)):
    rng = np.random.default_rng(seed)
    res = SuiteResult("coercivity", True)
    worst_exact = np.inf
    for n in (2, 4):
        mesh = build_structured_mesh(nx=n, ny=n)
        for p in degrees:
            space = DgSpace(mesh, p)
            for th in (-1, 0, 1):
                lam = linear_coercivity(space, DiscretizationParams(th, c_sigma))
                worst_exact = min(worst_exact, lam)
                if lam < COERCIVITY_FACTOR:
                    res.passed = False
                    res.details.append(f"linear exact: mesh {n}x{n} p={p} theta={th}: {lam:.4g}")
    res.details.append(f"linear exact worst B(V,V)/|||V|||^2 = {worst_exact:.4g} (C_sigma = {c_sigma:g})")

    params = DiscretizationParams(theta, c_sigma)
    worst_random = np.inf
    for name in ("hrs", "arctan"):
        nl = preset_nonlinearity(name)
        for n in meshes:
            mesh = build_structured_mesh(nx=n, ny=n)
            for p in degrees:
                space = DgSpace(mesh, p)
                N = energy_matrix(space, c_sigma)
                for _ in range(samples):
                    V = DgFunction(space, rng.standard_normal(space.ndof))
                    ratio = semilinear_form(V, V, 0.0, params, nl) / (nl.a_lower * float(V.coeffs @ (N @ V.coeffs)))
                    worst_random = min(worst_random, ratio)
    res.details.append(
        f"random V (hrs, arctan): worst B(V,V)/(a_lower |||V|||^2) = {worst_random:.4g} (theta = {theta})"
    )
    res.passed &= worst_random >= COERCIVITY_FACTOR
    res.measured.update(linear_exact=worst_exact, random=worst_random)
    return res


def run_verify(theta=0, c_sigma=10.0, seed=0):
    """All suites in a fixed order."""
    return [
        suite_hypotheses(seed),
        suite_quadrature(),
        suite_projection(seed),
        suite_jump_identity(seed),
        suite_oswald(),
        suite_jacobian(seed),
        suite_galerkin(theta, c_sigma),
        suite_coercivity(theta, c_sigma, seed),
    ]


def format_report(results):
    lines = [r.line() for r in results]
    for r in results:
        lines.append("")
        lines.append(f"[{r.name}]")
        lines.extend(f"  {d}" for d in r.details)
    passed = all(r.passed for r in results)
    lines.append("")
    lines.append(f"overall: {'PASS' if passed else 'FAIL'}")
    return "\n".join(lines) + "\n"
