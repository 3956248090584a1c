"""One-dimensional Legendre machinery: quadrature, Lobatto nodes, basis tables."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    x, w = L.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n):
    """``n``-point Gauss-Legendre rule on (-1, 1); exact for degree 2n - 1."""
    if n < 1:
        raise ValueError("need at least one quadrature point")
    return _gauss_legendre(int(n))


@lru_cache(maxsize=None)
def _gauss_lobatto(p):
    if p == 1:
        x = np.array([-1.0, 1.0])
    else:
        interior = L.Legendre.basis(p).deriv().roots()
        x = np.concatenate([[-1.0], np.sort(interior.real), [1.0]])
    Pp = L.legval(x, np.eye(p + 1)[p])
    w = 2.0 / (p * (p + 1) * Pp**2)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_lobatto(p):
    """The p + 1 Gauss-Lobatto-Legendre nodes and weights on [-1, 1]."""
    if p < 1:
        raise ValueError("Lobatto nodes need p >= 1")
    return _gauss_lobatto(int(p))


def legendre_table(x, p, deriv=0):
    """Values of P_0..P_p (or their ``deriv``-th derivatives) at ``x``.

    Returns an array of shape (len(x), p + 1).
    """
    x = np.asarray(x, dtype=float)
    if deriv == 0:
        return L.legvander(x, p)
    out = np.empty(x.shape + (p + 1,))
    eye = np.eye(p + 1)
    for k in range(p + 1):
        out[..., k] = L.legval(x, L.legder(eye[k], deriv)) if k >= deriv else 0.0
    return out


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule with ``n`` points per direction."""

    n: int

    @property
    def points_1d(self):
        return gauss_legendre(self.n)[0]

    @property
    def weights_1d(self):
        return gauss_legendre(self.n)[1]

    @property
    def exact_degree(self):
        return 2 * self.n - 1

    def cell(self):
        x, w = gauss_legendre(self.n)
        ref = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
        return ref, np.outer(w, w).ravel()

    def face(self):
        return gauss_legendre(self.n)


def tensor_basis(ref, p, hessian=False):
    """Tensor Legendre basis P_i(xi) P_j(eta) at reference points.

    Local index is ``i * (p + 1) + j``.  Returns values (..., nb), reference
    gradients (..., nb, 2) and, with ``hessian=True``, reference second
    derivatives (..., nb, 2, 2).
    """
    ref = np.asarray(ref, dtype=float)
    xi, eta = ref[..., 0], ref[..., 1]
    Px, Py = legendre_table(xi, p), legendre_table(eta, p)
    dPx, dPy = legendre_table(xi, p, 1), legendre_table(eta, p, 1)
    shape = ref.shape[:-1] + ((p + 1) ** 2,)
    val = (Px[..., :, None] * Py[..., None, :]).reshape(shape)
    gx = (dPx[..., :, None] * Py[..., None, :]).reshape(shape)
    gy = (Px[..., :, None] * dPy[..., None, :]).reshape(shape)
    grad = np.stack([gx, gy], axis=-1)
    if not hessian:
        return val, grad
    d2Px, d2Py = legendre_table(xi, p, 2), legendre_table(eta, p, 2)
    hxx = (d2Px[..., :, None] * Py[..., None, :]).reshape(shape)
    hxy = (dPx[..., :, None] * dPy[..., None, :]).reshape(shape)
    hyy = (Px[..., :, None] * d2Py[..., None, :]).reshape(shape)
    hess = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
    return val, grad, hess


@lru_cache(maxsize=None)
def lobatto_vandermonde(p):
    """Modal-to-nodal matrix on the tensor Lobatto grid and its inverse.

    Nodal index is ``a * (p + 1) + b`` for the node (x_a, x_b).
    """
    x, _ = gauss_lobatto(p)
    ref = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
    V, _ = tensor_basis(ref, p)
    Vinv = np.linalg.inv(V)
    V.setflags(write=False)
    Vinv.setflags(write=False)
    return V, Vinv
