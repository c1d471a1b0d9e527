"""Oriented weighted pure 3-complexes and their boundary/Laplacian operators.

A complex stores tetrahedra over explicit 3D vertex coordinates; triangles
and edges are derived, deduplicated and kept in lexicographic order of their
ascending vertex tuples.  That ordering is the canonical row/column indexing
of every matrix built here, so solution vectors are reproducible across runs
and across processes.

Orientation convention: every stored simplex lists its vertices in ascending
index order.  The sign of an entry of a boundary matrix is then determined
solely by the position of the omitted vertex, alternating +,-,+,... starting
from the face that omits the last vertex... concretely column sigma of the
i-th operator holds (-1)^j at the face dropping the j-th vertex of sigma.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Complex3",
    "build_complex",
    "boundary_operator",
    "up_laplacian",
    "down_laplacian",
    "one_laplacian",
    "validate",
    "aspect_ratio",
    "min_enclosing_ball",
    "complex_to_dict",
    "complex_from_dict",
    "save_complex",
    "load_complex",
]


@dataclass
class Complex3:
    """A pure, oriented, weighted simplicial 3-complex embedded in R^3."""

    vertices: np.ndarray          # (nv, 3) float
    tets: np.ndarray              # (nt, 4) int, each row ascending, rows lex-sorted
    triangles: np.ndarray         # (nf, 3) derived, lex-sorted
    edges: np.ndarray             # (ne, 2) derived, lex-sorted
    weights: list[np.ndarray]     # [w0, w1, w2, w3], all > 0
    exterior_triangles: np.ndarray  # bool (nf,), True iff in exactly one tet
    exterior_edges: np.ndarray      # bool (ne,)
    exterior_vertices: np.ndarray   # bool (nv,)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_tets(self) -> int:
        return len(self.tets)

    @property
    def num_simplexes(self) -> int:
        return (self.num_vertices + self.num_edges
                + self.num_triangles + self.num_tets)

    def simplex_counts(self) -> tuple[int, int, int, int]:
        return (self.num_vertices, self.num_edges,
                self.num_triangles, self.num_tets)

    # -- index lookups ----------------------------------------------------

    def edge_ids(self, pairs: np.ndarray) -> np.ndarray:
        """Row indices in ``self.edges`` for ascending vertex pairs."""
        return _find_rows(self.edges, np.asarray(pairs), self.num_vertices)

    def triangle_ids(self, triples: np.ndarray) -> np.ndarray:
        """Row indices in ``self.triangles`` for ascending vertex triples."""
        return _find_rows(self.triangles, np.asarray(triples), self.num_vertices)

    # convenience wrappers, cached per instance

    def boundary(self, i: int) -> sp.csc_matrix:
        key = ("boundary", i)
        if key not in self._cache:
            self._cache[key] = boundary_operator(self, i)
        return self._cache[key]

    def lap_up(self, i: int = 1) -> sp.csr_matrix:
        key = ("up", i)
        if key not in self._cache:
            self._cache[key] = up_laplacian(self, i)
        return self._cache[key]

    def lap_down(self, i: int = 1) -> sp.csr_matrix:
        key = ("down", i)
        if key not in self._cache:
            self._cache[key] = down_laplacian(self, i)
        return self._cache[key]

    def lap1(self) -> sp.csr_matrix:
        if "lap1" not in self._cache:
            self._cache["lap1"] = one_laplacian(self)
        return self._cache["lap1"]


def _encode_rows(rows: np.ndarray, base: int) -> np.ndarray:
    """Injective integer key for small fixed-width index rows."""
    rows = np.asarray(rows, dtype=np.int64)
    code = rows[:, 0].copy()
    for k in range(1, rows.shape[1]):
        code = code * base + rows[:, k]
    return code


def _find_rows(table: np.ndarray, query: np.ndarray, base: int) -> np.ndarray:
    """Positions of `query` rows inside lex-sorted `table` (must all exist)."""
    tcode = _encode_rows(table, base)
    qcode = _encode_rows(query, base)
    pos = np.searchsorted(tcode, qcode)
    if pos.size and (pos.max() >= len(tcode) or np.any(tcode[pos] != qcode)):
        raise KeyError("simplex not present in complex")
    return pos


def build_complex(tets, coords, weights=None) -> Complex3:
    """Build a pure 3-complex from tetrahedra over explicit coordinates.

    Faces are derived and deduplicated; missing weights default to 1.
    Rejects duplicate tetrahedra and tetrahedra with repeated vertices.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValueError("coords must be an (n, 3) array")
    tets = np.asarray(tets, dtype=np.int64)
    if tets.ndim != 2 or tets.shape[1] != 4:
        raise ValueError("tets must be an (m, 4) array")
    nv = len(coords)
    if tets.size and (tets.min() < 0 or tets.max() >= nv):
        raise ValueError("tetrahedron references an invalid vertex index")

    tets = np.sort(tets, axis=1)
    if np.any(tets[:, :-1] == tets[:, 1:]):
        bad = np.where(np.any(tets[:, :-1] == tets[:, 1:], axis=1))[0][0]
        raise ValueError(f"degenerate tetrahedron (repeated vertex) at input row {bad}")
    order = np.lexsort(tets.T[::-1])
    tets = tets[order]
    if len(tets) > 1 and np.any(np.all(tets[:-1] == tets[1:], axis=1)):
        raise ValueError("duplicate tetrahedron")

    # derive triangles: the four faces of every tet, deduplicated
    faces = np.vstack([np.delete(tets, j, axis=1) for j in range(4)]) \
        if len(tets) else np.empty((0, 3), dtype=np.int64)
    triangles, tri_counts = _dedup_rows(faces)

    tri_edges = np.vstack([np.delete(triangles, j, axis=1) for j in range(3)]) \
        if len(triangles) else np.empty((0, 2), dtype=np.int64)
    edges, _ = _dedup_rows(tri_edges)

    # exterior classification: a triangle is exterior iff it bounds one tet
    exterior_tri = tri_counts == 1
    exterior_edge = np.zeros(len(edges), dtype=bool)
    exterior_vert = np.zeros(nv, dtype=bool)
    if exterior_tri.any():
        ext_t = triangles[exterior_tri]
        for j in range(3):
            eid = _find_rows(edges, np.delete(ext_t, j, axis=1), nv)
            exterior_edge[eid] = True
        exterior_vert[np.unique(ext_t)] = True

    counts = (nv, len(edges), len(triangles), len(tets))
    w = []
    for dim in range(4):
        if weights is not None and weights.get(f"w{dim}") is not None:
            wd = np.asarray(weights[f"w{dim}"], dtype=float)
            if wd.shape != (counts[dim],):
                raise ValueError(
                    f"w{dim} has length {wd.shape[0]}, expected {counts[dim]}")
            if np.any(wd <= 0):
                raise ValueError(f"w{dim} contains a nonpositive weight")
        else:
            wd = np.ones(counts[dim])
        w.append(wd)

    return Complex3(
        vertices=coords,
        tets=tets,
        triangles=triangles,
        edges=edges,
        weights=w,
        exterior_triangles=exterior_tri,
        exterior_edges=exterior_edge,
        exterior_vertices=exterior_vert,
    )


def _dedup_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lex-sorted unique rows plus multiplicities."""
    if len(rows) == 0:
        return rows, np.zeros(0, dtype=np.int64)
    uniq, counts = np.unique(rows, axis=0, return_counts=True)
    return uniq, counts


def boundary_operator(c: Complex3, i: int) -> sp.csc_matrix:
    """Signed incidence matrix from i-simplexes to their (i-1)-faces.

    Entries are stored as integers; column sigma has i+1 nonzeros with
    sign (-1)^j at the face omitting the j-th vertex of sigma.
    """
    if i == 1:
        simplexes, face_table = c.edges, None
    elif i == 2:
        simplexes, face_table = c.triangles, c.edges
    elif i == 3:
        simplexes, face_table = c.tets, c.triangles
    else:
        raise ValueError("boundary operator defined for i in {1, 2, 3}")

    k = i + 1
    n_cols = len(simplexes)
    face_rows = []
    for j in range(k):
        face = np.delete(simplexes, j, axis=1)
        if face_table is None:
            face_rows.append(face[:, 0])
        else:
            face_rows.append(_find_rows(face_table, face, c.num_vertices))
    rows = np.concatenate(face_rows)
    n_rows = c.num_vertices if face_table is None else len(face_table)
    cols = np.tile(np.arange(n_cols), k)
    signs = np.concatenate([np.full(n_cols, (-1) ** j, dtype=np.int64)
                            for j in range(k)])
    mat = sp.csc_matrix((signs, (rows, cols)), shape=(n_rows, n_cols), dtype=np.int64)
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return mat


def up_laplacian(c: Complex3, i: int) -> sp.csr_matrix:
    """d_{i+1} W_{i+1} d_{i+1}^T as a float CSR matrix."""
    if i not in (0, 1):
        raise ValueError("up-Laplacian supported for i in {0, 1}")
    d = c.boundary(i + 1).astype(float)
    w = sp.diags(c.weights[i + 1])
    out = (d @ w @ d.T).tocsr()
    out.eliminate_zeros()
    return out


def down_laplacian(c: Complex3, i: int) -> sp.csr_matrix:
    """d_i^T W_{i-1} d_i as a float CSR matrix."""
    if i not in (1, 2):
        raise ValueError("down-Laplacian supported for i in {1, 2}")
    d = c.boundary(i).astype(float)
    w = sp.diags(c.weights[i - 1])
    out = (d.T @ w @ d).tocsr()
    out.eliminate_zeros()
    return out


def one_laplacian(c: Complex3) -> sp.csr_matrix:
    return (down_laplacian(c, 1) + up_laplacian(c, 1)).tocsr()


def validate(c: Complex3) -> list[str]:
    """Structural checks; returns a list of violations (empty = valid).

    The chain-complex identities d1 d2 = 0 and d2 d3 = 0 are verified in
    exact integer arithmetic.
    """
    violations = []

    d1, d2, d3 = c.boundary(1), c.boundary(2), c.boundary(3)
    p12 = (d1 @ d2).tocoo()
    if np.any(p12.data != 0):
        violations.append("d1 d2 != 0")
    p23 = (d2 @ d3).tocoo()
    if np.any(p23.data != 0):
        violations.append("d2 d3 != 0")

    for dim, w in enumerate(c.weights):
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            violations.append(f"nonpositive weight in w{dim}")

    # closure: every face of every stored simplex is stored exactly once
    try:
        if len(c.tets):
            for j in range(4):
                c.triangle_ids(np.delete(c.tets, j, axis=1))
        if len(c.triangles):
            for j in range(3):
                c.edge_ids(np.delete(c.triangles, j, axis=1))
    except KeyError:
        violations.append("closure violated: missing face")
    for table in (c.edges, c.triangles, c.tets):
        if len(table) > 1 and np.any(np.all(table[:-1] == table[1:], axis=1)):
            violations.append("duplicate simplex")
        if len(table) and np.any(table[:, :-1] >= table[:, 1:]):
            violations.append("simplex vertices not ascending")

    # exterior flags must match triangle->tet incidence
    if len(c.tets):
        tri_counts = np.zeros(c.num_triangles, dtype=np.int64)
        for j in range(4):
            np.add.at(tri_counts, c.triangle_ids(np.delete(c.tets, j, axis=1)), 1)
        if not np.array_equal(tri_counts == 1, c.exterior_triangles):
            violations.append("exterior triangle flags inconsistent")
        if np.any(tri_counts > 2):
            violations.append("triangle contained in more than two tetrahedra")

    return violations


# -- tetrahedron quality ---------------------------------------------------

def min_enclosing_ball(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact minimum enclosing ball of at most four points in R^3.

    Case analysis over support sets of size 2, 3 and 4: the smallest
    candidate ball that contains all points wins.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n == 0:
        raise ValueError("need at least one point")
    if n == 1:
        return pts[0].copy(), 0.0
    if n > 4:
        raise ValueError("exact case analysis implemented for <= 4 points")

    scale = max(np.ptp(pts, axis=0).max(), 1e-300)
    tol = 1e-12 * scale
    best = None

    from itertools import combinations
    candidates = []
    for (i, j) in combinations(range(n), 2):
        center = 0.5 * (pts[i] + pts[j])
        candidates.append((center, 0.5 * np.linalg.norm(pts[i] - pts[j])))
    for tri in combinations(range(n), 3):
        cc = _circumcenter_triangle(pts[list(tri)])
        if cc is not None:
            candidates.append((cc, np.linalg.norm(cc - pts[tri[0]])))
    if n == 4:
        cc = _circumcenter_tet(pts)
        if cc is not None:
            candidates.append((cc, np.linalg.norm(cc - pts[0])))

    for center, radius in candidates:
        if np.all(np.linalg.norm(pts - center, axis=1) <= radius + tol):
            if best is None or radius < best[1]:
                best = (center, radius)
    assert best is not None, "minimum enclosing ball case analysis failed"
    return best


def _circumcenter_triangle(p):
    u, v = p[1] - p[0], p[2] - p[0]
    g = np.array([[u @ u, u @ v], [u @ v, v @ v]])
    rhs = 0.5 * np.array([u @ u, v @ v])
    det = np.linalg.det(g)
    if abs(det) <= 1e-14 * max((u @ u) * (v @ v), 1e-300):
        return None  # collinear
    s, t = np.linalg.solve(g, rhs)
    return p[0] + s * u + t * v


def _circumcenter_tet(p):
    a = 2.0 * (p[1:] - p[0])
    rhs = np.sum(p[1:] ** 2 - p[0] ** 2, axis=1)
    det = np.linalg.det(a)
    if abs(det) <= 1e-14 * max(np.abs(a).max() ** 3, 1e-300):
        return None  # coplanar
    return np.linalg.solve(a, rhs)


def aspect_ratio(c: Complex3, tet_index: int) -> float:
    """Enclosing-ball radius over inscribed-ball radius of one tetrahedron.

    The enclosing radius is the exact minimum enclosing ball of the four
    vertices; the inscribed radius is 3 * volume / surface area.
    """
    pts = c.vertices[c.tets[tet_index]]
    vol = abs(np.linalg.det(pts[1:] - pts[0])) / 6.0
    span = np.ptp(pts, axis=0).max()
    if vol <= 1e-14 * span ** 3:
        raise ValueError(f"degenerate geometry: tetrahedron {tet_index} has zero volume")
    area = 0.0
    for j in range(4):
        q = np.delete(pts, j, axis=0)
        area += 0.5 * np.linalg.norm(np.cross(q[1] - q[0], q[2] - q[0]))
    r_in = 3.0 * vol / area
    _, r_enc = min_enclosing_ball(pts)
    return r_enc / r_in


# -- JSON interchange ------------------------------------------------------

def complex_to_dict(c: Complex3) -> dict:
    out = {
        "vertices": c.vertices.tolist(),
        "tets": c.tets.tolist(),
    }
    if any(np.any(w != 1.0) for w in c.weights):
        out["weights"] = {f"w{d}": c.weights[d].tolist() for d in range(4)}
    return out


def complex_from_dict(data: dict) -> Complex3:
    return build_complex(data["tets"], data["vertices"], data.get("weights"))


def save_complex(c: Complex3, path) -> None:
    with open(path, "w") as f:
        json.dump(complex_to_dict(c), f)


def load_complex(path) -> Complex3:
    with open(path) as f:
        return complex_from_dict(json.load(f))
