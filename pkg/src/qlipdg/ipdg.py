"""Interior penalty DG form for the quasilinear operator.

    B(w, v) = sum_K int_K alpha(w) . grad v
            + int_Gamma theta {a(|[w]| / h) grad v} . [w] - {alpha(w)} . [v] + sigma [w] . [v]

with alpha(w) = a(|grad w|) grad w and sigma = C_sigma p^2 / h_e.  theta = -1
gives the symmetric scheme, 0 the incomplete and 1 the non-symmetric one.

Everything is assembled face- and element-wise with vectorised kernels and
scattered in a fixed order, so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fespace import DgFunction, face_trace, l2_project


@dataclass(frozen=True)
class DiscretizationParams:
    theta: int = 0
    c_sigma: float = 10.0

    def __post_init__(self):
        if self.theta not in (-1, 0, 1):
            raise ValueError(f"theta must be -1, 0 or 1, got {self.theta}")
        if not self.c_sigma > 1.0:
            raise ValueError(f"c_sigma must exceed 1, got {self.c_sigma}")


def penalty_sigma(h_e, p, params):
    """C_sigma p^2 / h_e."""
    return params.c_sigma * p**2 / np.asarray(h_e, dtype=float)


def load_vector(space, f, t):
    """<f(t), phi_i> for every basis function."""
    vals = np.asarray(f(t, space.X), dtype=float)
    return ((space.wdet * vals) @ space.phi).ravel()


def _face_geometry(space, params):
    fd = space.faces
    sigma = penalty_sigma(fd.h, space.p, params)
    return fd, sigma


def _assemble(U, t, params, nl, jacobian):
    space = U.space
    nel, nb = space.mesh.n_elements, space.nb

    # volume
    grad = U.gradients()
    wflux = space.wdet[..., None] * nl.flux(t, space.X, grad)
    b = np.matmul(wflux.reshape(nel, 1, -1), space.grad_t.reshape(nel, -1, nb))[:, 0]

    # faces
    fd, sigma = _face_geometry(space, params)
    tr = face_trace(U)
    n = fd.normal
    delta = tr.value_plus - tr.value_minus
    avg_p = fd.avg_plus[:, None]
    avg_m = fd.avg_minus[:, None]
    sgn_m = fd.sign_minus[:, None]
    flux_p = nl.flux(t, fd.X, tr.grad_plus)
    flux_m = nl.flux(t, fd.X, tr.grad_minus)
    avg_flux_n = avg_p * np.einsum("fqa,fqa->fq", flux_p, n) + avg_m * np.einsum(
        "fqa,fqa->fq", flux_m, n
    )
    s_jump = np.abs(delta) / fd.h[:, None]
    a_theta = nl.mu(t, fd.X, s_jump)
    ds = fd.ds
    sig = sigma[:, None]

    # test-side quantities: normal derivative weighted by the average, signed trace
    _, _, dn_p, dn_m = space.face_tables
    Tp = avg_p[..., None] * dn_p
    Tm = avg_m[..., None] * dn_m
    Pp = fd.phi_plus
    Pm = sgn_m[..., None] * fd.phi_minus

    coef_T = ds * params.theta * a_theta * delta
    coef_P = ds * (sig * delta - avg_flux_n)
    r_plus = np.matmul(coef_T[:, None, :], Tp)[:, 0] + np.matmul(coef_P[:, None, :], Pp)[:, 0]
    r_minus = np.matmul(coef_T[:, None, :], Tm)[:, 0] + np.matmul(coef_P[:, None, :], Pm)[:, 0]

    interior = fd.interior
    res = b.copy()
    np.add.at(res, fd.plus, r_plus)
    np.add.at(res, fd.minus[interior], r_minus[interior])
    res = res.ravel()
    if not jacobian:
        return res, None

    D = nl.flux_derivative(t, space.X, grad)
    K = np.einsum("kq,kqia,kqab,kqjb->kij", space.wdet, space.grad, D, space.grad, optimize=True)

    c_theta = nl.scalar_flux_derivative(t, fd.X, s_jump)
    Dp = nl.flux_derivative(t, fd.X, tr.grad_plus)
    Dm = nl.flux_derivative(t, fd.X, tr.grad_minus)
    # trial-side derivative of {alpha(w)} . n
    Fp = avg_p[..., None] * np.einsum("fqa,fqab,fqjb->fqj", n, Dp, fd.grad_plus, optimize=True)
    Fm = avg_m[..., None] * np.einsum("fqa,fqab,fqjb->fqj", n, Dm, fd.grad_minus, optimize=True)
    wT = ds * params.theta * c_theta
    wS = np.broadcast_to(ds * sig, ds.shape)

    def block(sel, TA, PA, PB, FB):
        return (
            np.einsum("fq,fqi,fqj->fij", wT[sel], TA[sel], PB[sel], optimize=True)
            - np.einsum("fq,fqi,fqj->fij", ds[sel], PA[sel], FB[sel], optimize=True)
            + np.einsum("fq,fqi,fqj->fij", wS[sel], PA[sel], PB[sel], optimize=True)
        )

    everything = slice(None)
    pp = block(everything, Tp, Pp, Pp, Fp)
    pm = block(interior, Tp, Pp, Pm, Fm)
    mp = block(interior, Tm, Pm, Pp, Fp)
    mm = block(interior, Tm, Pm, Pm, Fm)

    loc = np.arange(nb)
    ep, epi, em = fd.plus, fd.plus[interior], fd.minus[interior]

    def idx(rows_el, cols_el):
        r = (rows_el[:, None] * nb + loc)[:, :, None]
        c = (cols_el[:, None] * nb + loc)[:, None, :]
        return np.broadcast_to(r, (len(rows_el), nb, nb)), np.broadcast_to(c, (len(rows_el), nb, nb))

    ek = np.arange(nel)
    parts = [(ek, ek, K), (ep, ep, pp), (epi, em, pm), (em, epi, mp), (em, em, mm)]
    rows, cols, vals = [], [], []
    for re_, ce_, blk in parts:
        r, c = idx(re_, ce_)
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(blk.ravel())
    J = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.ndof, space.ndof),
    ).tocsr()
    return res, J


def form_vector(U, t, params, nl):
    """The vector B(U, phi_i)."""
    return _assemble(U, t, params, nl, jacobian=False)[0]


def semilinear_form(w, v, t, params, nl):
    """B(w, v) for two members of the same space."""
    if w.space is not v.space:
        raise ValueError("w and v must live in the same space")
    return float(form_vector(w, t, params, nl) @ v.coeffs)


def assemble_residual(U, rhs, t, params, nl):
    """B(U, phi_i) - <rhs(t), phi_i>."""
    return form_vector(U, t, params, nl) - load_vector(U.space, rhs, t)


def assemble_jacobian(U, t, params, nl):
    """Derivative of U -> B(U, phi_i) as a CSR matrix (rows i, columns j)."""
    return _assemble(U, t, params, nl, jacobian=True)[1]


def assemble_form_and_jacobian(U, t, params, nl):
    return _assemble(U, t, params, nl, jacobian=True)


def apply_discrete_operator(Z, t, params, nl):
    """AZ defined by <-AZ, V> = B(Z, V) for all V in the space."""
    return DgFunction(Z.space, -Z.space.solve_mass(form_vector(Z, t, params, nl)))


@dataclass(frozen=True, eq=False)
class ReconstructionData:
    """The datum g = -AU + f - Pi f, kept as its two parts.

    ``minus_AU`` is a member of S^p; the oscillation part ``f - Pi f`` is
    kept as the callable ``f`` with its projection ``f_proj`` so that it can
    be evaluated at any point.
    """

    minus_AU: DgFunction
    f: Callable
    f_proj: DgFunction
    t: float

    def projected(self):
        """Pi g, which is -AU because f - Pi f is orthogonal to the space."""
        return self.minus_AU

    def values(self):
        """g at the cell quadrature points of the space."""
        sp_ = self.minus_AU.space
        return self.minus_AU.values() + self.f(self.t, sp_.X) - self.f_proj.values()

    def oscillation_values(self):
        sp_ = self.minus_AU.space
        return self.f(self.t, sp_.X) - self.f_proj.values()


def reconstruction_data(U, f, t, params, nl):
    """Datum g of the elliptic problem whose IPDG solution is U."""
    minus_AU = -apply_discrete_operator(U, t, params, nl)
    return ReconstructionData(minus_AU, f, l2_project(f, U.space, t=t), t)

