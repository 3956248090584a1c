"""Oswald averaging into the conforming subspace S^p cap H^1_0.

Modal coefficients are converted to values at the tensor Gauss-Lobatto
nodes of each element.  Nodes that coincide physically are averaged, nodes
on the boundary of the domain are set to zero, and the result is converted
back.  Lobatto nodes sit on element edges and corners, so matching nodal
values makes the traces agree along whole faces.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .basis import gauss_lobatto, lobatto_vandermonde
from .fespace import DgFunction, face_jump_squares, jump_matrix, map_geometry

_FACE_NODE_SELECT = {
    0: lambda a, b, p: b == 0,
    1: lambda a, b, p: a == p,
    2: lambda a, b, p: b == p,
    3: lambda a, b, p: a == 0,
}


@dataclass(frozen=True, eq=False)
class NodalNumbering:
    """Global numbering of the Lobatto nodes of every element."""

    ids: np.ndarray  # (nel, (p+1)^2) global node ids
    boundary: np.ndarray  # (n_global,) bool
    counts: np.ndarray  # (n_global,) copies of each node
    coords: np.ndarray  # (n_global, 2)

    @property
    def n_global(self):
        return len(self.counts)

    @cached_property
    def free(self):
        return np.flatnonzero(~self.boundary)


def nodal_numbering(space):
    mesh, p = space.mesh, space.p
    if p < 1:
        raise ValueError("Oswald averaging needs p >= 1")
    x, _ = gauss_lobatto(p)
    ref = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
    X, _, _, _ = map_geometry(mesh.corners, ref)
    scale = max(1.0, float(np.abs(X).max()))
    keys = np.round(X.reshape(-1, 2) / scale, 10)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    ids = inverse.reshape(mesh.n_elements, -1)
    coords = np.zeros((len(uniq), 2))
    coords[ids.ravel()] = X.reshape(-1, 2)

    a, b = np.divmod(np.arange((p + 1) ** 2), p + 1)
    boundary = np.zeros(len(uniq), dtype=bool)
    for f in mesh.boundary_faces:
        k, lf = mesh.faces[f, 0], mesh.faces[f, 1]
        boundary[ids[k, _FACE_NODE_SELECT[int(lf)](a, b, p)]] = True
    return NodalNumbering(ids=ids, boundary=boundary, counts=counts, coords=coords)


class OswaldOperator:
    """The averaging map I_Os : S^p -> S^p cap H^1_0 for one space."""

    def __init__(self, space):
        self.space = space
        self.numbering = nodal_numbering(space)
        self.V, self.Vinv = lobatto_vandermonde(space.p)

    def to_nodal(self, v):
        return v.local @ self.V.T

    def from_nodal(self, nodal):
        return DgFunction(self.space, (nodal @ self.Vinv.T).ravel())

    def __call__(self, v):
        num = self.numbering
        nodal = self.to_nodal(v)
        sums = np.bincount(num.ids.ravel(), weights=nodal.ravel(), minlength=num.n_global)
        avg = sums / num.counts
        avg[num.boundary] = 0.0
        return self.from_nodal(avg[num.ids])

    def prolongation(self):
        """Sparse map from free global nodal values to modal DG coefficients.

        Its columns span S^p cap H^1_0 on this mesh.
        """
        num = self.numbering
        nel, nb = num.ids.shape
        col_of = -np.ones(num.n_global, dtype=np.int64)
        col_of[num.free] = np.arange(len(num.free))
        rows, cols, vals = [], [], []
        for k in range(nel):
            c = col_of[num.ids[k]]
            keep = c >= 0
            # modal_i = sum_n Vinv[i, n] nodal_n
            r = k * nb + np.repeat(np.arange(nb), keep.sum())
            rows.append(r)
            cols.append(np.tile(c[keep], nb))
            vals.append(self.Vinv[:, keep].ravel())
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nel * nb, len(num.free)),
        )


def oswald_interpolate(v):
    """Average ``v`` into the continuous subspace with zero boundary values."""
    return OswaldOperator(v.space)(v)


def oswald_ratios(v, op=None):
    """Ratios of the two Oswald approximation inequalities for one ``v``.

    Returns ``(r0, r1)`` with

        r0 = sum_K ||v - I v||^2_K        / sum_e (h_e / p^2) ||[v]||^2_e
        r1 = sum_K ||grad(v - I v)||^2_K  / sum_e (p^2 / h_e) ||[v]||^2_e

    or ``(0, 0)`` when ``v`` has no jumps.
    """
    space = v.space
    op = op or OswaldOperator(space)
    d = v - op(v)
    vals = d.values()
    grads = d.gradients()
    l2 = np.einsum("kq,kq->", space.wdet, vals**2)
    h1 = np.einsum("kq,kqa,kqa->", space.wdet, grads, grads)
    jsq = face_jump_squares(v)
    h = space.mesh.face_meshsize
    p2 = space.p**2
    den0 = float(np.sum(h / p2 * jsq))
    den1 = float(np.sum(p2 / h * jsq))
    if den0 <= 0.0:
        return 0.0, 0.0
    return float(l2 / den0), float(h1 / den1)


def measure_oswald_constants(space, samples=20, rng=None):
    """Largest ratios of :func:`oswald_ratios` over random members of ``space``.

    Coefficients are drawn standard normal with a seeded generator.
    """
    rng = np.random.default_rng(rng)
    op = OswaldOperator(space)
    worst0 = worst1 = 0.0
    for _ in range(samples):
        v = DgFunction(space, rng.standard_normal(space.ndof))
        r0, r1 = oswald_ratios(v, op)
        worst0 = max(worst0, r0)
        worst1 = max(worst1, r1)
    return worst0, worst1


def _range_basis(op):
    """Orthonormal nodal basis of the range of (I - I_Os), as a sparse matrix.

    A vector lies in that range iff the copies of every non-boundary global
    node sum to zero; boundary copies are unconstrained and element-interior
    nodes vanish.
    """
    num = op.numbering
    flat = num.ids.ravel()
    order = np.argsort(flat, kind="stable")
    starts = np.concatenate([[0], np.cumsum(num.counts)[:-1]])
    rows, cols, vals = [], [], []
    m = 0
    for g in range(num.n_global):
        idx = order[starts[g] : starts[g] + num.counts[g]]
        k = len(idx)
        if num.boundary[g]:
            rows.extend(idx)
            cols.extend(range(m, m + k))
            vals.extend([1.0] * k)
            m += k
        elif k >= 2:
            # Helmert contrasts: orthonormal and orthogonal to the ones vector
            for j in range(1, k):
                c = np.zeros(k)
                c[:j] = 1.0
                c[j] = -j
                c /= np.sqrt(j * (j + 1))
                rows.extend(idx)
                cols.extend([m] * k)
                vals.extend(c)
                m += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(flat), m))


def oswald_constants(space):
    """Sharp constants of the two Oswald inequalities on ``space``.

    Each is the largest generalized eigenvalue of (numerator form, weighted
    jump form) restricted to the range of I - I_Os, on which the jump form is
    positive definite.  Returns ``(c0, c1)`` for weights h_e/p^2 and p^2/h_e.
    """
    import scipy.linalg as sla

    op = OswaldOperator(space)
    Z = _range_basis(op)
    if Z.shape[1] == 0:
        return 0.0, 0.0
    to_modal = sp.block_diag([op.Vinv] * space.mesh.n_elements, format="csr")
    Zm = (to_modal @ Z).tocsc()
    M = sp.block_diag(list(space.mass), format="csr")
    K = sp.block_diag(
        list(np.einsum("kq,kqia,kqja->kij", space.wdet, space.grad, space.grad)), format="csr"
    )
    Jq = jump_matrix(space)
    fd = space.faces
    h = space.mesh.face_meshsize
    p2 = space.p**2
    out = []
    for num_form, w in ((M, h / p2), (K, p2 / h)):
        W = sp.diags((fd.ds * w[:, None]).ravel())
        JZ = Jq @ Zm
        A = (Zm.T @ num_form @ Zm).toarray()
        B = (JZ.T @ W @ JZ).toarray()
        top = sla.eigh(A, B, eigvals_only=True, subset_by_index=[len(A) - 1, len(A) - 1])
        out.append(float(top[0]))
    return tuple(out)


OSWALD_MESHES = (2, 4, 8)
OSWALD_DEGREES = (1, 2, 3, 4)


def oswald_sweep(meshes=OSWALD_MESHES, degrees=OSWALD_DEGREES, domain=((0.0, 1.0), (0.0, 1.0))):
    """Sharp Oswald constants on n x n meshes of ``domain`` for every degree.

    Returns a dict ``{(n, p): (c0, c1)}`` in a fixed order.
    """
    from .fespace import DgSpace
    from .mesh import build_structured_mesh

    out = {}
    for n in meshes:
        mesh = build_structured_mesh(domain, n, n)
        for p in degrees:
            out[(n, p)] = oswald_constants(DgSpace(mesh, p))
    return out


@lru_cache(maxsize=None)
def measured_c3(meshes=OSWALD_MESHES, degrees=OSWALD_DEGREES):
    """Twice the worst sharp Oswald constant of :func:`oswald_sweep`."""
    table = oswald_sweep(meshes, degrees)
    return 2.0 * max(max(c) for c in table.values())
