"""hp-explicit a posteriori estimators and the parabolic energy-norm bound.

For U in S^p with reconstruction datum g the squared spatial estimator is

    E = C_est sum_K ( eta_K^2 + osc_K )

    eta_K^2 = h_K^2/p^2 ||P(g + div alpha(U))||_K^2
            + h_K/p     ||P_e [alpha(U)]||_{dK \\ dOmega}^2
            + C_sigma^2 p^3/h_K ||[U]||_{dK}^2

with P the L^2 projection onto S^{p-1} and P_e its trace analogue on faces;
``osc_K`` collects the (1 - P) parts of the first two terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fespace import (
    energy_norm,
    face_project,
    face_trace,
    face_weighted_norm,
    jump_vector,
    l2_error,
    project_quadrature_values,
)
from .ipdg import reconstruction_data
from .problem import divergence_of_flux

C_EST = 1.0


@dataclass(frozen=True, eq=False)
class EstimatorBreakdown:
    """Per-element contributions to the squared elliptic estimator."""

    residual: np.ndarray
    flux_jump: np.ndarray
    penalty: np.ndarray
    osc_residual: np.ndarray
    osc_flux: np.ndarray
    c_est: float = C_EST

    @property
    def eta_squared(self):
        return self.residual + self.flux_jump + self.penalty

    @property
    def oscillation(self):
        return self.osc_residual + self.osc_flux

    @property
    def total(self):
        """E, the squared estimator."""
        return float(self.c_est * np.sum(self.eta_squared + self.oscillation))

    @property
    def estimate(self):
        """E^{1/2}, comparable with the energy error."""
        return float(np.sqrt(self.total))

    def sums(self):
        return {
            "residual": float(self.residual.sum()),
            "flux_jump": float(self.flux_jump.sum()),
            "penalty": float(self.penalty.sum()),
            "oscillation": float(self.oscillation.sum()),
        }


def _element_residual(U, data, nl):
    sp = U.space
    t = data.t
    divflux = divergence_of_flux(nl, t, sp.X, U.gradients(), U.hessians())
    R = data.values() + divflux
    if sp.p >= 1:
        lower = sp.lower()
        RL = project_quadrature_values(R, lower).values()
    else:
        RL = np.zeros_like(R)
    proj = np.einsum("kq,kq->k", sp.wdet, RL**2)
    rest = np.einsum("kq,kq->k", sp.wdet, (R - RL) ** 2)
    return proj, rest


def _flux_jumps(U, t, nl):
    """Per-face ||P_e [alpha(U)]||^2 and ||(1 - P_e)[alpha(U)]||^2 on interior faces."""
    sp = U.space
    fd = sp.faces
    tr = face_trace(U)
    jmp = jump_vector(nl.flux(t, fd.X, tr.grad_plus), nl.flux(t, fd.X, tr.grad_minus), fd)
    jmp = np.where(fd.interior[:, None], jmp, 0.0)
    proj = face_project(jmp, fd.s, fd.ws, sp.p - 1)
    return (
        np.einsum("fq,fq->f", fd.ds, proj**2),
        np.einsum("fq,fq->f", fd.ds, (jmp - proj) ** 2),
    )


def _to_elements(fd, per_face, nel, interior_only):
    out = np.zeros(nel)
    np.add.at(out, fd.plus, per_face if not interior_only else np.where(fd.interior, per_face, 0.0))
    np.add.at(out, fd.minus[fd.interior], per_face[fd.interior])
    return out


def eta_elliptic(U, data, params, nl, c_est=C_EST):
    """Elliptic estimator of U for the datum carried by ``data``.

    ``data`` is the :class:`~qlipdg.ipdg.ReconstructionData` of U.  The
    divergence of alpha(U) is expanded elementwise by the chain rule.
    """
    sp = U.space
    mesh = sp.mesh
    fd = sp.faces
    p = sp.p
    if p < 1:
        raise ValueError("the estimator needs p >= 1")
    hk = mesh.element_diameter
    nel = mesh.n_elements

    res_p, res_o = _element_residual(U, data, nl)
    fj_p, fj_o = _flux_jumps(U, data.t, nl)
    tr = face_trace(U)
    ujump = np.einsum("fq,fq->f", fd.ds, (tr.value_plus - tr.value_minus) ** 2)

    return EstimatorBreakdown(
        residual=hk**2 / p**2 * res_p,
        flux_jump=hk / p * _to_elements(fd, fj_p, nel, True),
        penalty=params.c_sigma**2 * p**3 / hk * _to_elements(fd, ujump, nel, False),
        osc_residual=hk**2 / p**2 * res_o,
        osc_flux=hk / p * _to_elements(fd, fj_o, nel, True),
        c_est=c_est,
    )


def oscillation(U, data, params, nl):
    """Per-element oscillation: the parts of the residuals invisible to S^{p-1}."""
    return eta_elliptic(U, data, params, nl).oscillation


def steady_estimate(U, spec, params, t=0.0):
    """Estimator breakdown of a steady solve with the problem source as datum."""
    data = reconstruction_data(U, spec.f, t, params, spec.nonlinearity)
    return eta_elliptic(U, data, params, spec.nonlinearity)


@dataclass(frozen=True)
class BoundConstants:
    a_lower: float
    a_upper: float
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    C_PF: float
    C_sigma: float
    C_est: float = C_EST
    notes: dict = field(default_factory=dict, compare=False)

    def printed_variants(self):
        """The alternative reading 1 + (2 a_upper a_lower)^{-1/2}, (2 a_upper a_lower)^{-1/2}."""
        r = 1.0 / np.sqrt(2.0 * self.a_upper * self.a_lower)
        return {"C1": 1.0 + r, "C2": r}


def populate_constants(nl, mesh, space, params, measured_c3):
    """Bound constants for the nonlinearity, domain and penalty.

    C1 = 1 + sqrt(2) a_upper/a_lower, C2 = sqrt(2)/a_lower, C4 = C1 sqrt(C3/C_sigma),
    C5 = C2 C_PF with C_PF = diam(Omega)/pi.
    """
    a_lo, a_up = float(nl.a_lower), float(nl.a_upper)
    if not a_lo > 0:
        raise ValueError(f"monotonicity constant must be positive, got {a_lo}")
    if not measured_c3 > 0:
        raise ValueError(f"C3 must be positive, got {measured_c3}")
    c1 = 1.0 + np.sqrt(2.0) * a_up / a_lo
    c2 = np.sqrt(2.0) / a_lo
    c_pf = mesh.domain_diameter / np.pi
    c3 = float(measured_c3)
    return BoundConstants(
        a_lower=a_lo,
        a_upper=a_up,
        C1=float(c1),
        C2=float(c2),
        C3=c3,
        C4=float(c1 * np.sqrt(c3 / params.c_sigma)),
        C5=float(c2 * c_pf),
        C_PF=float(c_pf),
        C_sigma=float(params.c_sigma),
        notes={
            "C1": "1 + sqrt(2) a_upper / a_lower",
            "C2": "sqrt(2) / a_lower",
            "C3": "measured Oswald constant",
            "C_PF": "diam / pi",
            "degree": space.p,
        },
    )


def _trapezoid(values, times):
    values = np.asarray(values, dtype=float)
    if len(values) == 1:
        return 0.0
    return float(np.trapezoid(values, times) if hasattr(np, "trapezoid") else np.trapz(values, times))


def true_error(series, spec, params):
    """(int_0^T |||U - u|||^2 dt)^{1/2} by the trapezoid rule, and the per-snapshot errors."""
    if not spec.has_exact:
        raise ValueError(f"problem {spec.name!r} has no exact solution")
    if len(series) == 0:
        raise ValueError("empty time series")
    profile = np.array(
        [
            energy_norm(series.snapshot(n), params.c_sigma, spec.exact_grad, t=t)
            for n, t in enumerate(series.times)
        ]
    )
    return float(np.sqrt(_trapezoid(profile**2, series.times))), profile


TERM_NAMES = ("elliptic", "initial_l2", "initial_jump", "penalty_jump", "rate_jump")


@dataclass(frozen=True, eq=False)
class ErrorReport:
    terms: dict
    true_error: float
    estimator_profile: np.ndarray
    error_profile: np.ndarray
    constants: BoundConstants

    @property
    def total(self):
        return float(sum(self.terms[k] for k in TERM_NAMES))

    @property
    def effectivity(self):
        if self.true_error > 0:
            return self.total / self.true_error
        return float("inf") if self.total > 0 else float("nan")


def accumulate_parabolic(series, spec, params, constants, with_error=True):
    """Time-accumulated energy-norm bound of a backward-Euler series.

    Terms: C1 (int E)^{1/2}, a_lower^{-1/2} ||u0 - U(0)||,
    a_lower^{-1/2} C3 ||(h/p^2)^{1/2}[U(0)]||, C4 ||sqrt(sigma)[U]||_{L2(L2)}
    and C5 ||(h/p^2)^{1/2}[U_t]||_{L2(L2)}, with U_t the stored backward
    differences and time integrals by the trapezoid rule.
    """
    if len(series) == 0:
        raise ValueError("empty time series")
    nl = spec.nonlinearity
    times = series.times
    E = np.empty(len(series))
    pen = np.empty(len(series))
    rate = np.empty(len(series))
    rates = series.rates
    for n, t in enumerate(times):
        U = series.snapshot(n)
        data = reconstruction_data(U, spec.f, t, params, nl)
        E[n] = eta_elliptic(U, data, params, nl, c_est=constants.C_est).total
        pen[n] = face_weighted_norm(U, "sigma", params.c_sigma) ** 2
        rate[n] = face_weighted_norm(series.space.function(rates[n]), "h/p2") ** 2

    U0 = series.snapshot(0)
    inv = 1.0 / np.sqrt(constants.a_lower)
    terms = {
        "elliptic": constants.C1 * np.sqrt(_trapezoid(E, times)),
        "initial_l2": inv * l2_error(U0, spec.u0),
        "initial_jump": inv * constants.C3 * face_weighted_norm(U0, "h/p2"),
        "penalty_jump": constants.C4 * np.sqrt(_trapezoid(pen, times)),
        "rate_jump": constants.C5 * np.sqrt(_trapezoid(rate, times)),
    }
    terms = {k: float(v) for k, v in terms.items()}
    if with_error and spec.has_exact:
        err, profile = true_error(series, spec, params)
    else:
        err, profile = float("nan"), np.full(len(series), np.nan)
    return ErrorReport(terms, err, E, profile, constants)
