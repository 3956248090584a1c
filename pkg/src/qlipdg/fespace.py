"""Discontinuous tensor-product Q_p spaces on quadrilateral meshes.

A :class:`DgSpace` precomputes, once, everything the forms and estimators
need at quadrature points: mapped points, Jacobians, physical basis
gradients, face traces from both sides, normals and face weights.  Degrees
of freedom are the coefficients of the mapped tensor Legendre basis, ordered
element by element (global index ``k * nb + local``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .basis import QuadratureRule, gauss_legendre, legendre_table, tensor_basis
from .mesh import bilinear_shape, face_reference_points


def map_geometry(corners, ref):
    """Points, Jacobians, determinants and inverse Jacobians of bilinear maps.

    ``corners`` has shape (nel, 4, 2); ``ref`` is (n, 2) shared by all
    elements or (nel, n, 2).
    """
    N, dN = bilinear_shape(ref)
    if ref.ndim == 2:
        X = np.einsum("qa,kac->kqc", N, corners)
        J = np.einsum("qar,kac->kqcr", dN, corners)
    else:
        X = np.einsum("kqa,kac->kqc", N, corners)
        J = np.einsum("kqar,kac->kqcr", dN, corners)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    Jinv = np.empty_like(J)
    Jinv[..., 0, 0] = J[..., 1, 1] / det
    Jinv[..., 1, 1] = J[..., 0, 0] / det
    Jinv[..., 0, 1] = -J[..., 0, 1] / det
    Jinv[..., 1, 0] = -J[..., 1, 0] / det
    return X, J, det, Jinv


def physical_gradients(ref_grad, Jinv):
    """Chain rule: grad_x phi = J^{-T} grad_ref phi."""
    if ref_grad.ndim == 3:
        return np.einsum("qbr,kqra->kqba", ref_grad, Jinv)
    return np.einsum("kqbr,kqra->kqba", ref_grad, Jinv)


@dataclass(frozen=True, eq=False)
class FaceData:
    """Quadrature data on every face of the mesh.

    Boundary faces carry zero minus-side weights, so formulas written with
    ``avg_plus``/``avg_minus`` and ``sign_minus`` reproduce the boundary
    conventions {q} = q+ and [q] = q+ n+ without branching.
    """

    plus: np.ndarray
    minus: np.ndarray
    interior: np.ndarray
    X: np.ndarray
    normal: np.ndarray
    ds: np.ndarray
    h: np.ndarray
    length: np.ndarray
    s: np.ndarray
    ws: np.ndarray
    phi_plus: np.ndarray
    grad_plus: np.ndarray
    phi_minus: np.ndarray
    grad_minus: np.ndarray

    @property
    def avg_plus(self):
        return np.where(self.interior, 0.5, 1.0)

    @property
    def avg_minus(self):
        return np.where(self.interior, 0.5, 0.0)

    @property
    def sign_minus(self):
        return np.where(self.interior, -1.0, 0.0)


class DgSpace:
    """Tensor-product Legendre space of uniform degree ``p`` on ``mesh``.

    ``nquad`` is the number of Gauss points per direction on cells and faces
    (default ``p + 3``).  Degree 0 is allowed so that S^{p-1} can be built
    for p = 1.
    """

    def __init__(self, mesh, p, nquad=None):
        if p < 0 or int(p) != p:
            raise ValueError(f"polynomial degree must be a non-negative integer, got {p}")
        self.mesh = mesh
        self.p = int(p)
        self.nb = (self.p + 1) ** 2
        self.ndof = mesh.n_elements * self.nb
        self.nq = int(nquad) if nquad is not None else self.p + 3
        self.rule = QuadratureRule(self.nq)

        ref, w = self.rule.cell()
        self.ref = ref
        self.weights = w
        self.phi, self.dphi_ref, self.hess_ref = tensor_basis(ref, self.p, hessian=True)
        corners = mesh.corners
        self.X, self.J, self.detJ, self.Jinv = map_geometry(corners, ref)
        if (self.detJ <= 0).any():
            raise ValueError("element map with non-positive Jacobian at a quadrature point")
        self.wdet = w[None, :] * self.detJ
        self.grad = physical_gradients(self.dphi_ref, self.Jinv)
        self.mass = np.einsum("kq,qi,qj->kij", self.wdet, self.phi, self.phi, optimize=True)

    def __repr__(self):
        return f"DgSpace(p={self.p}, elements={self.mesh.n_elements}, nquad={self.nq})"

    @cached_property
    def mass_cholesky(self):
        return np.array([sla.cholesky(m, lower=True) for m in self.mass])

    @cached_property
    def affine(self):
        c = self.mesh.corners
        mixed = 0.25 * (c[:, 0] - c[:, 1] + c[:, 2] - c[:, 3])
        return bool(np.abs(mixed).max() <= 1e-14 * (np.abs(c).max() + 1.0))

    @cached_property
    def mass_inverse(self):
        """Elementwise inverse mass blocks, (nel, nb, nb)."""
        eye = np.broadcast_to(np.eye(self.nb), self.mass.shape)
        return np.linalg.solve(self.mass, eye)

    def solve_mass(self, b):
        """Apply the block-diagonal inverse mass matrix to ``b`` (ndof,) or (nel, nb)."""
        b = np.asarray(b, dtype=float).reshape(self.mesh.n_elements, self.nb)
        out = np.matmul(self.mass_inverse, b[:, :, None])[:, :, 0]
        # one refinement step keeps the result at solve accuracy
        r = b - np.matmul(self.mass, out[:, :, None])[:, :, 0]
        out += np.matmul(self.mass_inverse, r[:, :, None])[:, :, 0]
        return out.ravel()

    def mass_matrix(self):
        return sp.block_diag(list(self.mass), format="csr")

    @cached_property
    def faces(self):
        return self._build_faces()

    @cached_property
    def grad_t(self):
        """Basis gradients laid out as (nel, nq^2, 2, nb) for batched products."""
        return np.ascontiguousarray(self.grad.transpose(0, 1, 3, 2))

    @cached_property
    def face_tables(self):
        """Face gradient tables as (nf, nq, 2, nb) and normal derivatives (nf, nq, nb), both sides."""
        fd = self.faces
        gp = np.ascontiguousarray(fd.grad_plus.transpose(0, 1, 3, 2))
        gm = np.ascontiguousarray(fd.grad_minus.transpose(0, 1, 3, 2))
        dn_p = np.matmul(fd.normal[:, :, None, :], gp)[:, :, 0]
        dn_m = np.matmul(fd.normal[:, :, None, :], gm)[:, :, 0]
        return gp, gm, dn_p, dn_m

    def _build_faces(self):
        mesh = self.mesh
        s, ws = gauss_legendre(self.nq)
        F = mesh.faces
        plus, lp, minus, lm = F[:, 0], F[:, 1], F[:, 2], F[:, 3]
        interior = minus >= 0
        minus_safe = np.where(interior, minus, plus)
        lm_safe = np.where(interior, lm, lp)

        tables = [tensor_basis(face_reference_points(f, s), self.p) for f in range(4)]
        tables_rev = [tensor_basis(face_reference_points(f, -s), self.p) for f in range(4)]
        ref_p = np.stack([face_reference_points(f, s) for f in range(4)])[lp]
        ref_m = np.stack([face_reference_points(f, -s) for f in range(4)])[lm_safe]

        corners = mesh.corners
        Xp, _, _, Jinv_p = map_geometry(corners[plus], ref_p)
        Xm, _, _, Jinv_m = map_geometry(corners[minus_safe], ref_m)
        if np.abs(Xp[interior] - Xm[interior]).max(initial=0.0) > 1e-10 * (1 + np.abs(Xp).max()):
            raise ValueError("face quadrature points do not match across an interior face")

        phi_p = np.stack([t[0] for t in tables])[lp]
        gref_p = np.stack([t[1] for t in tables])[lp]
        phi_m = np.stack([t[0] for t in tables_rev])[lm_safe]
        gref_m = np.stack([t[1] for t in tables_rev])[lm_safe]
        grad_p = physical_gradients(gref_p, Jinv_p)
        grad_m = physical_gradients(gref_m, Jinv_m)
        phi_m = np.where(interior[:, None, None], phi_m, 0.0)
        grad_m = np.where(interior[:, None, None, None], grad_m, 0.0)

        ends = mesh.vertices[mesh.face_vertices]
        t = ends[:, 1] - ends[:, 0]
        length = np.linalg.norm(t, axis=1)
        n = np.stack([t[:, 1], -t[:, 0]], axis=1) / length[:, None]
        normal = np.broadcast_to(n[:, None, :], Xp.shape).copy()
        ds = 0.5 * length[:, None] * ws[None, :]
        return FaceData(
            plus=plus,
            minus=minus_safe,
            interior=interior,
            X=Xp,
            normal=normal,
            ds=ds,
            h=mesh.face_meshsize,
            length=length,
            s=s,
            ws=ws,
            phi_plus=phi_p,
            grad_plus=grad_p,
            phi_minus=phi_m,
            grad_minus=grad_m,
        )

    def sigma(self, c_sigma):
        """Penalty C_sigma p^2 / h_e on every face."""
        return c_sigma * self.p**2 / self.mesh.face_meshsize

    def zero(self):
        return DgFunction(self, np.zeros(self.ndof))

    def function(self, coeffs):
        return DgFunction(self, coeffs)

    def lower(self):
        """The space S^{p-1} on the same mesh and quadrature (built once)."""
        if self.p < 1:
            raise ValueError("no lower space for p = 0")
        return self._lower

    @cached_property
    def _lower(self):
        return DgSpace(self.mesh, self.p - 1, nquad=self.nq)


@dataclass(eq=False)
class DgFunction:
    space: DgSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float).ravel()
        if self.coeffs.shape != (self.space.ndof,):
            raise ValueError(
                f"coefficient array has length {self.coeffs.size}, space has {self.space.ndof} dofs"
            )

    @property
    def local(self):
        return self.coeffs.reshape(self.space.mesh.n_elements, self.space.nb)

    def values(self):
        """Values at the cell quadrature points, shape (nel, nq^2)."""
        return self.local @ self.space.phi.T

    def gradients(self):
        """Physical gradients at the cell quadrature points, shape (nel, nq^2, 2)."""
        return np.matmul(self.space.grad_t, self.local[:, None, :, None])[..., 0]

    def hessians(self):
        """Physical second derivatives at the cell quadrature points, (nel, nq^2, 2, 2)."""
        space = self.space
        Jinv = space.Jinv
        nq2 = space.hess_ref.shape[0]
        table = space.hess_ref.reshape(nq2, space.nb, 4).transpose(1, 0, 2).reshape(space.nb, -1)
        href = (self.local @ table).reshape(-1, nq2, 2, 2)
        H = np.einsum("kqra,kqrs,kqsb->kqab", Jinv, href, Jinv, optimize=True)
        if not space.affine:
            # d(J^{-1})/dx_b = -J^{-1} (dJ/dx_b) J^{-1}; only d^2x/dxi deta is nonzero
            c = space.mesh.corners
            mixed = 0.25 * (c[:, 0] - c[:, 1] + c[:, 2] - c[:, 3])
            gref = np.einsum("kb,qbr->kqr", self.local, space.dphi_ref, optimize=True)
            dJ = np.zeros(Jinv.shape[:2] + (2, 2, 2))
            # dJ[..., c, r, m] = d J_{c r} / d xi_m
            dJ[..., :, 0, 1] = mixed[:, None, :]
            dJ[..., :, 1, 0] = mixed[:, None, :]
            dJdx = np.einsum("kqcrm,kqmb->kqcrb", dJ, Jinv)
            dJinv = -np.einsum("kqrc,kqcsb,kqsa->kqrab", Jinv, dJdx, Jinv, optimize=True)
            H = H + np.einsum("kqr,kqrab->kqab", gref, dJinv)
        return H

    def evaluate(self, element, ref):
        """Values and physical gradients on one element at reference points."""
        space = self.space
        if not 0 <= element < space.mesh.n_elements:
            raise IndexError(f"element {element} out of range")
        ref = np.atleast_2d(np.asarray(ref, dtype=float))
        val, gref = tensor_basis(ref, space.p)
        _, _, _, Jinv = map_geometry(space.mesh.corners[element : element + 1], ref)
        g = physical_gradients(gref, Jinv)[0]
        c = self.local[element]
        return val @ c, np.einsum("b,qba->qa", c, g)

    def evaluate_many(self, elements, ref):
        """Values and gradients at per-element reference points ``ref`` (n, m, 2)."""
        space = self.space
        val, gref = tensor_basis(ref, space.p)
        _, _, _, Jinv = map_geometry(space.mesh.corners[elements], ref)
        g = physical_gradients(gref, Jinv)
        c = self.local[elements]
        return np.einsum("nmb,nb->nm", val, c), np.einsum("nb,nmba->nma", c, g)

    def __add__(self, other):
        return DgFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return DgFunction(self.space, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return DgFunction(self.space, a * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return DgFunction(self.space, -self.coeffs)

    def copy(self):
        return DgFunction(self.space, self.coeffs.copy())


@dataclass(frozen=True)
class FaceTrace:
    """Values and gradients of a DG function on both sides of every face.

    Minus-side arrays are zero on boundary faces.
    """

    value_plus: np.ndarray
    value_minus: np.ndarray
    grad_plus: np.ndarray
    grad_minus: np.ndarray


def face_trace(u):
    fd = u.space.faces
    cp = u.local[fd.plus]
    cm = u.local[fd.minus]
    gp, gm, _, _ = u.space.face_tables
    return FaceTrace(
        value_plus=np.matmul(fd.phi_plus, cp[:, :, None])[..., 0],
        value_minus=np.matmul(fd.phi_minus, cm[:, :, None])[..., 0],
        grad_plus=np.matmul(gp, cp[:, None, :, None])[..., 0],
        grad_minus=np.matmul(gm, cm[:, None, :, None])[..., 0],
    )


def scalar_jump(u):
    """Signed scalar jump u+ - u- (u+ on the boundary); [u] = this times n+."""
    tr = face_trace(u)
    return tr.value_plus - tr.value_minus


def jump(u):
    """Vector jump [u] = u+ n+ + u- n- at face quadrature points, (nf, nq, 2)."""
    return scalar_jump(u)[..., None] * u.space.faces.normal


def average(u):
    """Average {u} of a scalar DG function (u+ on the boundary)."""
    fd = u.space.faces
    tr = face_trace(u)
    return fd.avg_plus[:, None] * tr.value_plus + fd.avg_minus[:, None] * tr.value_minus


def average_vector(phi_plus, phi_minus, fd):
    """Average {phi} of a vector field given both traces."""
    return fd.avg_plus[:, None, None] * phi_plus + fd.avg_minus[:, None, None] * phi_minus


def jump_vector(phi_plus, phi_minus, fd):
    """Scalar jump [phi] = phi+ . n+ + phi- . n- of a vector field."""
    d = phi_plus + fd.sign_minus[:, None, None] * phi_minus
    return np.einsum("fqa,fqa->fq", d, fd.normal)


def _callable_values(f, X, t):
    if t is None:
        return np.asarray(f(X), dtype=float)
    return np.asarray(f(t, X), dtype=float)


def project_quadrature_values(values, space):
    """L^2 projection of values given at ``space``'s cell quadrature points."""
    b = (space.wdet * np.broadcast_to(values, space.wdet.shape)) @ space.phi
    return DgFunction(space, space.solve_mass(b))


def l2_project(f, space, t=None):
    """Orthogonal L^2 projection onto ``space``.

    ``f`` is a callable of physical points (shape (..., 2)), or of ``(t, x)``
    when ``t`` is given, or a :class:`DgFunction` sharing the mesh and
    quadrature.
    """
    if isinstance(f, DgFunction):
        return project_quadrature_values(_values_on(f, space), space)
    return project_quadrature_values(_callable_values(f, space.X, t), space)


def _values_on(u, space):
    if u.space.mesh is not space.mesh or u.space.nq != space.nq:
        raise ValueError("projection between DG functions needs a shared mesh and quadrature")
    return u.values()


def l2_project_lower(f, space, t=None):
    """L^2 projection onto S^{p-1}, returned as a function of ``space.lower()``."""
    return l2_project(f, space.lower(), t=t)


def face_project(values, s, ws, degree):
    """L^2 projection of face traces onto polynomials of ``degree`` in the face parameter.

    ``values`` has shape (nf, nq) at Gauss points ``s`` with weights ``ws``.
    Straight faces have a constant arclength factor, so projecting in the
    parameter is the arclength projection.  Returns projected values at ``s``.
    """
    if degree < 0:
        return np.zeros_like(values)
    P = legendre_table(s, degree)
    scale = (2 * np.arange(degree + 1) + 1) / 2.0
    c = np.einsum("fq,q,qk->fk", values, ws, P) * scale
    return c @ P.T


def broken_l2_norm(u):
    return float(np.sqrt(np.einsum("kq,kq->", u.space.wdet, u.values() ** 2)))


def l2_error(u, exact, t=None):
    """||u - exact|| with ``exact`` a callable of physical points."""
    space = u.space
    d = u.values() - _callable_values(exact, space.X, t)
    return float(np.sqrt(np.einsum("kq,kq->", space.wdet, d**2)))


def broken_h1_seminorm(u):
    g = u.gradients()
    return float(np.sqrt(np.einsum("kq,kqa,kqa->", u.space.wdet, g, g)))


def face_weight(space, weight, c_sigma=None):
    """Per-face weights: 'sigma', 'h/p2', 'p2/h' or an explicit array."""
    h = space.mesh.face_meshsize
    p = max(space.p, 1)
    if isinstance(weight, str):
        if weight == "sigma":
            if c_sigma is None:
                raise ValueError("sigma weight needs c_sigma")
            return space.sigma(c_sigma)
        if weight == "h/p2":
            return h / p**2
        if weight == "p2/h":
            return p**2 / h
        raise ValueError(f"unknown face weight {weight!r}")
    return np.broadcast_to(np.asarray(weight, dtype=float), h.shape)


def face_jump_squares(u):
    """Per-face ||[u]||_e^2."""
    fd = u.space.faces
    return np.einsum("fq,fq->f", fd.ds, scalar_jump(u) ** 2)


def face_weighted_norm(u, weight, c_sigma=None, faces=None):
    """(sum_e w_e ||[u]||_e^2)^{1/2}, over all faces or the given subset."""
    w = face_weight(u.space, weight, c_sigma)
    sq = w * face_jump_squares(u)
    if faces is not None:
        sq = sq[faces]
    return float(np.sqrt(sq.sum()))


def jump_matrix(space):
    """Sparse map from coefficients to scalar jumps at face quadrature points."""
    fd = space.faces
    nf, nq, nb = fd.phi_plus.shape
    r = np.arange(nf * nq).reshape(nf, nq)
    rows = np.broadcast_to(r[:, :, None], (nf, nq, nb))
    cp = np.broadcast_to((fd.plus[:, None] * nb + np.arange(nb))[:, None, :], (nf, nq, nb))
    cm = np.broadcast_to((fd.minus[:, None] * nb + np.arange(nb))[:, None, :], (nf, nq, nb))
    vm = fd.sign_minus[:, None, None] * fd.phi_minus
    data = np.concatenate([fd.phi_plus.ravel(), vm.ravel()])
    return sp.csr_matrix(
        (data, (np.concatenate([rows.ravel(), rows.ravel()]), np.concatenate([cp.ravel(), cm.ravel()]))),
        shape=(nf * nq, space.ndof),
    )


def energy_matrix(space, c_sigma):
    """Sparse SPD matrix of the squared energy norm on ``space``."""
    K = sp.block_diag(
        list(np.einsum("kq,kqia,kqja->kij", space.wdet, space.grad, space.grad)), format="csr"
    )
    Jq = jump_matrix(space)
    W = sp.diags((space.faces.ds * space.sigma(c_sigma)[:, None]).ravel())
    return (K + Jq.T @ W @ Jq).tocsr()


def energy_norm(u, c_sigma, exact_grad=None, t=None):
    """Energy norm (sum ||grad u||^2 + sum sigma ||[u]||^2)^{1/2}.

    With ``exact_grad`` (a callable of points, or of ``(t, x)``) the norm of
    ``u - exact`` is returned; the exact field is taken in H^1_0 so it does
    not contribute to the jumps.
    """
    space = u.space
    g = u.gradients()
    if exact_grad is not None:
        g = g - _callable_values(exact_grad, space.X, t)
    vol = np.einsum("kq,kqa,kqa->", space.wdet, g, g)
    jmp = face_weighted_norm(u, "sigma", c_sigma) ** 2
    return float(np.sqrt(vol + jmp))


def interpolate_from_coarse(coarse, fine_space):
    """Exact transfer of a DG function on a mesh to its uniform refinement."""
    fine_mesh = fine_space.mesh
    if fine_mesh.parent is None:
        raise ValueError("target mesh carries no parent information")
    if fine_space.p < coarse.space.p:
        raise ValueError("target degree lower than source degree")
    ref_parent = fine_mesh.child_offset[:, None, :] + 0.5 * (fine_space.ref[None] + 1.0)
    vals, _ = coarse.evaluate_many(fine_mesh.parent, ref_parent)
    return project_quadrature_values(vals, fine_space)
