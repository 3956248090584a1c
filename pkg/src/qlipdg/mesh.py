"""Conforming quadrilateral meshes of rectangles.

Elements are bilinear images of the reference square (-1, 1)^2.  Vertices
of each element are stored counterclockwise starting from the image of
(-1, -1).  Local faces are numbered

    0: bottom  v0 -> v1   reference points (s, -1)
    1: right   v1 -> v2   reference points (1, s)
    2: top     v2 -> v3   reference points (-s, 1)
    3: left    v3 -> v0   reference points (-1, -s)

so that increasing ``s`` always walks the boundary of the element
counterclockwise.  On an interior face the element with the smaller index is
the "plus" side and the face normal points out of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LOCAL_FACE_VERTICES = ((0, 1), (1, 2), (2, 3), (3, 0))


class MeshError(ValueError):
    pass


def face_reference_points(local_face, s):
    """Reference coordinates of the points ``s`` on a local face."""
    s = np.asarray(s, dtype=float)
    one = np.ones_like(s)
    if local_face == 0:
        return np.stack([s, -one], axis=-1)
    if local_face == 1:
        return np.stack([one, s], axis=-1)
    if local_face == 2:
        return np.stack([-s, one], axis=-1)
    if local_face == 3:
        return np.stack([-one, -s], axis=-1)
    raise MeshError(f"invalid local face {local_face}")


def bilinear_shape(ref):
    """Bilinear shape functions and their reference derivatives.

    Returns ``N`` of shape (..., 4) and ``dN`` of shape (..., 4, 2).
    """
    xi = ref[..., 0]
    eta = ref[..., 1]
    N = 0.25 * np.stack(
        [(1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)],
        axis=-1,
    )
    dxi = 0.25 * np.stack([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)], axis=-1)
    deta = 0.25 * np.stack([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)], axis=-1)
    return N, np.stack([dxi, deta], axis=-1)


@dataclass(frozen=True)
class ElementMap:
    """Bilinear map from (-1, 1)^2 onto a quadrilateral with four corners."""

    corners: np.ndarray

    def __call__(self, ref):
        N, _ = bilinear_shape(np.asarray(ref, dtype=float))
        return N @ self.corners

    def jacobian(self, ref):
        """Jacobian matrices d(x, y)/d(xi, eta), shape (..., 2, 2)."""
        _, dN = bilinear_shape(np.asarray(ref, dtype=float))
        return np.einsum("...ar,ac->...cr", dN, self.corners)

    def mixed_derivative(self):
        """d^2 x / (d xi d eta); the only nonzero second derivative."""
        c = self.corners
        return 0.25 * (c[0] - c[1] + c[2] - c[3])

    def is_affine(self, tol=1e-14):
        scale = np.abs(self.corners).max() + 1.0
        return bool(np.abs(self.mixed_derivative()).max() <= tol * scale)


@dataclass(frozen=True)
class Face:
    """One face of the mesh, as seen from its plus element."""

    index: int
    plus: int
    plus_local: int
    minus: int
    minus_local: int
    vertices: tuple

    @property
    def is_boundary(self):
        return self.minus < 0


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    elements: np.ndarray
    domain: tuple
    # (nf, 4): plus, plus_local, minus, minus_local; minus = -1 on the boundary
    faces: np.ndarray = field(repr=False)
    face_vertices: np.ndarray = field(repr=False)
    element_faces: np.ndarray = field(repr=False)
    element_diameter: np.ndarray = field(repr=False)
    face_meshsize: np.ndarray = field(repr=False)
    face_length: np.ndarray = field(repr=False)
    # parent element and child position on refined meshes
    parent: np.ndarray | None = field(default=None, repr=False)
    child_offset: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def interior_faces(self):
        return np.flatnonzero(self.faces[:, 2] >= 0)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.faces[:, 2] < 0)

    @property
    def h(self):
        """Largest element diameter."""
        return float(self.element_diameter.max())

    @property
    def corners(self):
        """Element corner coordinates, shape (nel, 4, 2)."""
        return self.vertices[self.elements]

    def element_map(self, k):
        if not 0 <= k < self.n_elements:
            raise IndexError(f"element {k} out of range")
        return ElementMap(self.vertices[self.elements[k]])

    def face(self, f):
        plus, plus_local, minus, minus_local = (int(v) for v in self.faces[f])
        return Face(f, plus, plus_local, minus, minus_local, tuple(self.face_vertices[f]))

    def neighbors(self, k):
        out = []
        for f in self.element_faces[k]:
            plus, _, minus, _ = self.faces[f]
            if minus >= 0:
                out.append(int(minus if plus == k else plus))
        return out

    def element_areas(self):
        from .basis import gauss_legendre

        x, w = gauss_legendre(2)
        ref = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
        wq = np.outer(w, w).ravel()
        _, dN = bilinear_shape(ref)
        J = np.einsum("qar,kac->kqcr", dN, self.corners)
        return np.einsum("q,kq->k", wq, np.linalg.det(J))

    @property
    def shape_regularity_ratio(self):
        """max over elements of diam^2 / area."""
        return float((self.element_diameter**2 / self.element_areas()).max())

    @property
    def domain_diameter(self):
        (x0, x1), (y0, y1) = self.domain
        return float(np.hypot(x1 - x0, y1 - y0))


def face_normal(mesh, f):
    """Outward unit normal of face ``f`` seen from its plus element."""
    a, b = mesh.vertices[mesh.face_vertices[f]]
    t = b - a
    return np.array([t[1], -t[0]]) / np.hypot(*t)


def _build_topology(vertices, elements):
    nel = len(elements)
    corners = vertices[elements]
    pairs = corners[:, :, None, :] - corners[:, None, :, :]
    diam = np.linalg.norm(pairs, axis=-1).max(axis=(1, 2))
    seen = {}
    faces = []
    face_vertices = []
    element_faces = np.empty((nel, 4), dtype=np.int64)
    for k in range(nel):
        for lf, (i, j) in enumerate(LOCAL_FACE_VERTICES):
            a, b = int(elements[k, i]), int(elements[k, j])
            key = (min(a, b), max(a, b))
            if key in seen:
                f = seen.pop(key)
                if faces[f][2] >= 0:
                    raise MeshError("face shared by more than two elements")
                if face_vertices[f] != (b, a):
                    raise MeshError("inconsistent element orientation")
                faces[f][2] = k
                faces[f][3] = lf
            else:
                f = len(faces)
                seen[key] = f
                faces.append([k, lf, -1, -1])
                face_vertices.append((a, b))
            element_faces[k, lf] = f
    faces = np.array(faces, dtype=np.int64)
    face_vertices = np.array(face_vertices, dtype=np.int64)
    ends = vertices[face_vertices]
    length = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
    interior = faces[:, 2] >= 0
    h_e = diam[faces[:, 0]].copy()
    h_e[interior] = 0.5 * (diam[faces[interior, 0]] + diam[faces[interior, 2]])
    return faces, face_vertices, element_faces, diam, h_e, length


def _check_jacobians(vertices, elements):
    from .basis import gauss_legendre

    x, _ = gauss_legendre(6)
    pts = np.concatenate([x, [-1.0, 1.0]])
    ref = np.stack(np.meshgrid(pts, pts, indexing="ij"), axis=-1).reshape(-1, 2)
    _, dN = bilinear_shape(ref)
    J = np.einsum("qar,kac->kqcr", dN, vertices[elements])
    if (np.linalg.det(J) <= 0).any():
        raise MeshError("element map with non-positive Jacobian determinant")


def make_mesh(vertices, elements, domain, parent=None, child_offset=None):
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements, dtype=np.int64)
    _check_jacobians(vertices, elements)
    faces, face_vertices, element_faces, diam, h_e, length = _build_topology(vertices, elements)
    return Mesh(
        vertices=vertices,
        elements=elements,
        domain=domain,
        faces=faces,
        face_vertices=face_vertices,
        element_faces=element_faces,
        element_diameter=diam,
        face_meshsize=h_e,
        face_length=length,
        parent=parent,
        child_offset=child_offset,
    )


def build_structured_mesh(domain=((0.0, 1.0), (0.0, 1.0)), nx=1, ny=1):
    """Uniform ``nx`` by ``ny`` grid of rectangles on ``domain``.

    ``domain`` is ``((x0, x1), (y0, y1))``.  Element ``j * nx + i`` is the
    cell in column ``i`` and row ``j``.
    """
    (x0, x1), (y0, y1) = domain
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {domain}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v0 = (jj * (nx + 1) + ii).ravel()
    elements = np.column_stack([v0, v0 + 1, v0 + nx + 2, v0 + nx + 1])
    return make_mesh(vertices, elements, ((float(x0), float(x1)), (float(y0), float(y1))))


# child c occupies the reference sub-square with lower-left corner offset
_CHILD_OFFSETS = np.array([[-1.0, -1.0], [0.0, -1.0], [0.0, 0.0], [-1.0, 0.0]])


def refine_uniform(mesh):
    """Split every element into four through its reference midlines.

    Child ``4 * k + c`` of element ``k`` is the image of the reference
    sub-square ``offset + (0, 1)^2`` with offsets ordered counterclockwise
    from the lower-left.  ``parent`` and ``child_offset`` on the result let
    fields on ``mesh`` be evaluated on the children exactly.
    """
    index = {}
    new_vertices = list(mesh.vertices)

    def point(k, ref):
        x = tuple(ElementMap(mesh.corners[k])(np.asarray(ref)))
        key = (round(x[0], 12), round(x[1], 12))
        if key not in index:
            index[key] = len(new_vertices)
            new_vertices.append(np.array(x))
        return index[key]

    for i, v in enumerate(mesh.vertices):
        index[(round(v[0], 12), round(v[1], 12))] = i

    elements = []
    parent = []
    offsets = []
    for k in range(mesh.n_elements):
        for off in _CHILD_OFFSETS:
            sq = off + np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            elements.append([point(k, r) for r in sq])
            parent.append(k)
            offsets.append(off)
    return make_mesh(
        np.array(new_vertices),
        np.array(elements),
        mesh.domain,
        parent=np.array(parent, dtype=np.int64),
        child_offset=np.array(offsets),
    )


def child_to_parent_reference(mesh, ref):
    """Map reference points on children of a refined mesh to parent reference points."""
    if mesh.parent is None:
        raise MeshError("mesh has no parent information")
    return mesh.child_offset[:, None, :] + 0.5 * (np.asarray(ref) + 1.0)


def dump_mesh(mesh, path):
    """Plain-text dump: vertex lines then element lines."""
    lines = [f"# vertices {len(mesh.vertices)}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(f"# elements {mesh.n_elements}")
    lines += [" ".join(str(int(v)) for v in el) for el in mesh.elements]
    Path(path).write_text("\n".join(lines) + "\n")
