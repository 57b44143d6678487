"""Structured triangulations and finite-element building blocks.

This module owns the planar mesh type, the symmetric sparse-matrix container
used for all precision/FEM matrices, the lumped mass and stiffness assembly
for piecewise-linear elements, and barycentric observation projectors.

Meshes are regular grids of squares split into two triangles each, optionally
surrounded by extension layers so that latent fields are less distorted by
the zero-flux boundary of the discretized operator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.spatial import cKDTree

from .errors import AssemblyError, DimensionError, LocationError

__all__ = [
    "Mesh",
    "SparseSymmetric",
    "Projector",
    "build_grid_mesh",
    "grid_points",
    "assemble_mass",
    "assemble_stiffness",
    "make_projector",
    "write_mesh_csv",
    "read_mesh_csv",
]

# Barycentric tolerance for point-in-triangle tests, in domain units.
POINT_TOL = 1e-9


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation of a planar domain.

    Attributes
    ----------
    vertices : (n, 2) float array
        Vertex coordinates.
    triangles : (m, 3) int array
        Vertex index triples, counterclockwise.
    boundary : (n,) bool array
        True exactly on the outer rim of the mesh.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64))
        object.__setattr__(self, "boundary", np.asarray(self.boundary, dtype=bool))
        self.validate()

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def triangle_areas(self) -> np.ndarray:
        """Signed areas of all triangles (positive for CCW orientation)."""
        p = self.vertices
        t = self.triangles
        a = p[t[:, 1]] - p[t[:, 0]]
        b = p[t[:, 2]] - p[t[:, 0]]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def validate(self):
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise DimensionError("vertices must be an (n, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise DimensionError("triangles must be an (m, 3) array")
        if self.boundary.shape != (self.n_vertices,):
            raise DimensionError("boundary flags must match the vertex count")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= self.n_vertices
        ):
            raise DimensionError("triangle refers to a vertex index out of range")
        areas = self.triangle_areas()
        bad = np.nonzero(areas <= 0.0)[0]
        if bad.size:
            raise AssemblyError(f"triangle {bad[0]} has nonpositive signed area")
        self._check_conforming()

    def _check_conforming(self):
        # every undirected edge may be shared by at most two triangles,
        # and shared edges must appear once per orientation
        edges = {}
        for k, (a, b, c) in enumerate(self.triangles):
            for u, v in ((a, b), (b, c), (c, a)):
                key = (min(u, v), max(u, v))
                edges.setdefault(key, []).append(u < v)
        for key, orient in edges.items():
            if len(orient) > 2:
                raise AssemblyError(f"edge {key} is shared by more than two triangles")
            if len(orient) == 2 and orient[0] == orient[1]:
                raise AssemblyError(f"edge {key} has inconsistent orientation")


@dataclass(frozen=True)
class SparseSymmetric:
    """Symmetric sparse matrix stored once per (i <= j) entry.

    Entries are kept in canonical (row-major, column-ascending) order with
    duplicates summed and exact zeros dropped.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @staticmethod
    def from_triplets(n, rows, cols, vals) -> "SparseSymmetric":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if not (rows.shape == cols.shape == vals.shape):
            raise DimensionError("triplet arrays must share a shape")
        # fold everything into the upper triangle
        r = np.minimum(rows, cols)
        c = np.maximum(rows, cols)
        mat = sps.coo_matrix((vals, (r, c)), shape=(n, n)).tocsr()
        mat.sum_duplicates()
        coo = mat.tocoo()
        keep = coo.data != 0.0
        return SparseSymmetric(n, coo.row[keep], coo.col[keep], coo.data[keep])

    @staticmethod
    def from_scipy(mat, sym_tol=1e-10) -> "SparseSymmetric":
        mat = sps.csr_matrix(mat)
        if mat.shape[0] != mat.shape[1]:
            raise DimensionError("matrix must be square")
        asym = abs(mat - mat.T).max()
        scale = abs(mat).max() if mat.nnz else 0.0
        if scale and asym > sym_tol * scale:
            raise DimensionError(f"matrix is not symmetric (relative asymmetry {asym / scale:.2e})")
        coo = sps.triu(mat).tocoo()
        keep = coo.data != 0.0
        return SparseSymmetric(mat.shape[0], coo.row[keep], coo.col[keep], coo.data[keep])

    @property
    def nnz(self) -> int:
        return self.vals.size

    def to_scipy(self) -> sps.csc_matrix:
        """Expand to a full symmetric scipy CSC matrix."""
        upper = sps.coo_matrix((self.vals, (self.rows, self.cols)), shape=(self.n, self.n))
        off = self.rows != self.cols
        lower = sps.coo_matrix(
            (self.vals[off], (self.cols[off], self.rows[off])), shape=(self.n, self.n)
        )
        return (upper + lower).tocsc()

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n)
        on = self.rows == self.cols
        d[self.rows[on]] = self.vals[on]
        return d

    def scaled(self, factor: float) -> "SparseSymmetric":
        return SparseSymmetric(self.n, self.rows, self.cols, self.vals * factor)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "value"])
            for i, j, v in zip(self.rows, self.cols, self.vals):
                w.writerow([int(i), int(j), repr(float(v))])

    @staticmethod
    def read_csv(path, n=None) -> "SparseSymmetric":
        rows, cols, vals = [], [], []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(int(rec["i"]))
                cols.append(int(rec["j"]))
                vals.append(float(rec["value"]))
        if n is None:
            n = max(max(rows, default=-1), max(cols, default=-1)) + 1
        return SparseSymmetric.from_triplets(n, rows, cols, vals)


@dataclass(frozen=True)
class Projector:
    """Barycentric interpolation weights from mesh vertices to points.

    Each row holds the weights of one point in its containing triangle:
    at most 3 nonzeros, all in [0, 1], summing to 1.
    """

    matrix: sps.csr_matrix
    triangle_index: np.ndarray = field(default=None)

    @property
    def n_points(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.matrix.shape[1]

    def apply(self, vertex_field: np.ndarray) -> np.ndarray:
        return self.matrix @ vertex_field


def build_grid_mesh(nx: int, ny: int, spacing: float = 1.0, extension_layers: int = 0) -> Mesh:
    """Triangulate a regular nx-by-ny vertex grid with optional extension layers.

    The interior observation grid occupies [0, (nx-1)*spacing] x
    [0, (ny-1)*spacing]; extension vertices continue the lattice outward so
    that the rim sits `extension_layers` cells away from the data region.
    Each lattice cell is split into two CCW triangles along the same diagonal.
    """
    if nx < 2 or ny < 2:
        raise ValueError("nx and ny must be at least 2")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if extension_layers < 0:
        raise ValueError("extension_layers must be nonnegative")
    ext = int(extension_layers)
    mx, my = nx + 2 * ext, ny + 2 * ext
    xs = (np.arange(mx) - ext) * spacing
    ys = (np.arange(my) - ext) * spacing
    xx, yy = np.meshgrid(xs, ys)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    idx = np.arange(mx * my).reshape(my, mx)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    tri_a = np.column_stack([v00, v10, v11])
    tri_b = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * tri_a.shape[0], 3), dtype=np.int64)
    triangles[0::2] = tri_a
    triangles[1::2] = tri_b

    boundary = np.zeros((my, mx), dtype=bool)
    boundary[0, :] = boundary[-1, :] = True
    boundary[:, 0] = boundary[:, -1] = True
    return Mesh(vertices, triangles, boundary.ravel())


def grid_points(nx: int, ny: int, spacing: float = 1.0) -> np.ndarray:
    """Coordinates of the nx-by-ny observation grid (row-major, y-major)."""
    xs = np.arange(nx) * spacing
    ys = np.arange(ny) * spacing
    xx, yy = np.meshgrid(xs, ys)
    return np.column_stack([xx.ravel(), yy.ravel()])


def assemble_mass(mesh: Mesh) -> SparseSymmetric:
    """Lumped mass matrix: C_ii is one third of the area incident to vertex i.

    The trace equals the total mesh area and the diagonal is strictly
    positive on any valid mesh.
    """
    areas = mesh.triangle_areas()
    bad = np.nonzero(areas <= 0.0)[0]
    if bad.size:
        raise AssemblyError(f"triangle {bad[0]} is degenerate (area {areas[bad[0]]:g})")
    diag = np.zeros(mesh.n_vertices)
    np.add.at(diag, mesh.triangles.ravel(), np.repeat(areas / 3.0, 3))
    if np.any(diag <= 0.0):
        raise AssemblyError("mass matrix has a nonpositive diagonal entry")
    idx = np.arange(mesh.n_vertices)
    return SparseSymmetric.from_triplets(mesh.n_vertices, idx, idx, diag)


def assemble_stiffness(mesh: Mesh) -> SparseSymmetric:
    """Stiffness matrix of piecewise-linear elements, G_ij = <grad phi_i, grad phi_j>.

    Assembled per triangle from opposite-edge vectors: the local block is
    (e_i . e_j) / (4 A). Rows sum to zero since gradients of constants vanish.
    """
    p = mesh.vertices
    t = mesh.triangles
    areas = mesh.triangle_areas()
    bad = np.nonzero(areas <= 0.0)[0]
    if bad.size:
        raise AssemblyError(f"triangle {bad[0]} is degenerate (area {areas[bad[0]]:g})")
    # e_k is the edge opposite local vertex k
    e = np.stack(
        [
            p[t[:, 2]] - p[t[:, 1]],
            p[t[:, 0]] - p[t[:, 2]],
            p[t[:, 1]] - p[t[:, 0]],
        ],
        axis=1,
    )  # (m, 3, 2)
    local = np.einsum("mid,mjd->mij", e, e) / (4.0 * areas)[:, None, None]
    rows = np.repeat(t, 3, axis=1).ravel()  # i index per local pair
    cols = np.tile(t, (1, 3)).ravel()  # j index per local pair
    return SparseSymmetric.from_triplets(mesh.n_vertices, rows, cols, local.ravel())


def _barycentric(points: np.ndarray, tri_pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points w.r.t. matching triangles.

    points: (k, 2); tri_pts: (k, 3, 2). Returns (k, 3).
    """
    d1 = tri_pts[:, 1] - tri_pts[:, 0]
    d2 = tri_pts[:, 2] - tri_pts[:, 0]
    rhs = points - tri_pts[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    l1 = (rhs[:, 0] * d2[:, 1] - rhs[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * rhs[:, 1] - d1[:, 1] * rhs[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


def make_projector(mesh: Mesh, points) -> Projector:
    """Barycentric projector rows for a set of query points.

    Points must lie inside the mesh hull (within a small tolerance; hull
    points snap onto the nearest containing edge). Raises LocationError with
    the offending point index otherwise.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != 2:
        raise DimensionError("points must be an (m, 2) array")
    tri_pts = mesh.vertices[mesh.triangles]  # (m, 3, 2)
    centroids = tri_pts.mean(axis=1)
    tree = cKDTree(centroids)
    # longest edge bounds how far a containing triangle's centroid can be
    n_tri = mesh.n_triangles
    data, rows, cols = [], [], []
    tri_of = np.full(points.shape[0], -1, dtype=np.int64)
    for start_k in (8, 64):
        pending = np.nonzero(tri_of < 0)[0]
        if pending.size == 0:
            break
        k = min(start_k, n_tri)
        _, cand = tree.query(points[pending], k=k)
        cand = np.atleast_2d(cand)
        _locate(points, pending, cand, tri_pts, tri_of)
    pending = np.nonzero(tri_of < 0)[0]
    if pending.size:
        # exhaustive fallback for stragglers (rare; hull-adjacent points)
        all_tris = np.arange(n_tri)
        for pi in pending:
            _locate(points, np.array([pi]), all_tris[None, :], tri_pts, tri_of)
    missing = np.nonzero(tri_of < 0)[0]
    if missing.size:
        raise LocationError(f"point {missing[0]} at {tuple(points[missing[0]])} is outside the mesh hull")

    lam = _barycentric(points, tri_pts[tri_of])
    lam = np.clip(lam, 0.0, None)
    lam[lam < 1e-12] = 0.0
    lam /= lam.sum(axis=1, keepdims=True)
    for i in range(points.shape[0]):
        for loc in range(3):
            if lam[i, loc] > 0.0:
                rows.append(i)
                cols.append(int(mesh.triangles[tri_of[i], loc]))
                data.append(lam[i, loc])
    mat = sps.csr_matrix((data, (rows, cols)), shape=(points.shape[0], mesh.n_vertices))
    return Projector(mat, tri_of)


def _locate(points, pending, cand, tri_pts, tri_of):
    """Fill tri_of for pending points whose candidate list contains them."""
    for row, pi in enumerate(pending):
        cands = np.asarray(cand[row]).ravel()
        lam = _barycentric(
            np.repeat(points[pi][None, :], cands.size, axis=0), tri_pts[cands]
        )
        ok = np.nonzero(lam.min(axis=1) >= -POINT_TOL)[0]
        if ok.size:
            # deterministic choice: smallest triangle index among acceptable
            tri_of[pi] = cands[ok[np.argmin(cands[ok])]]


def write_mesh_csv(mesh: Mesh, vertices_path, triangles_path):
    """Export a mesh as the CSV pair (vertices: id,x,y,boundary; triangles: id,v0,v1,v2)."""
    with open(vertices_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "boundary"])
        for i, ((x, y), b) in enumerate(zip(mesh.vertices, mesh.boundary)):
            w.writerow([i, repr(float(x)), repr(float(y)), int(b)])
    with open(triangles_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "v0", "v1", "v2"])
        for i, (a, b, c) in enumerate(mesh.triangles):
            w.writerow([i, int(a), int(b), int(c)])


def read_mesh_csv(vertices_path, triangles_path) -> Mesh:
    with open(vertices_path, newline="") as fh:
        recs = list(csv.DictReader(fh))
    order = np.argsort([int(r["id"]) for r in recs])
    vertices = np.array([[float(recs[i]["x"]), float(recs[i]["y"])] for i in order])
    boundary = np.array([bool(int(recs[i]["boundary"])) for i in order])
    with open(triangles_path, newline="") as fh:
        recs = list(csv.DictReader(fh))
    order = np.argsort([int(r["id"]) for r in recs])
    triangles = np.array(
        [[int(recs[i]["v0"]), int(recs[i]["v1"]), int(recs[i]["v2"])] for i in order]
    )
    return Mesh(vertices, triangles, boundary)
