"""Exact solver for first down-Laplacian systems and the approximate
projection onto gradients.

The solver runs entirely on a BFS spanning forest of the 1-skeleton: a
system in the incidence matrix is solved leaf-to-root in linear time, and
the explicit kernel of d1^T W0^(1/2) (one vector per connected component)
turns two forest solves plus one projection into an exact down-Laplacian
solve.  Everything here also works on arbitrary oriented graphs, which the
fast up-solver reuses for dual graphs of triangle discs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import NumericalError
from .pcg import LinearOperator, estimate_rel_condition, pcg

IMAGE_TOL = 1e-8
EXACT_TOL = 1e-10


@dataclass
class SpanningForest:
    """BFS forest of an oriented graph; root = smallest index per component."""

    n_vertices: int
    edges: np.ndarray          # (m, 2), tail -> head orientation
    component: np.ndarray      # (n,) component id
    roots: np.ndarray
    parent_edge: np.ndarray    # (n,) edge id into `edges`, -1 at roots
    parent_vertex: np.ndarray  # (n,) -1 at roots
    head_sign: np.ndarray      # (n,) +1 if vertex is the head of its parent edge
    levels: list               # vertex arrays by BFS depth, levels[0] = roots

    @classmethod
    def from_graph(cls, n_vertices: int, edges) -> "SpanningForest":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        m = len(edges)
        data = np.arange(m)
        adj = sp.csr_matrix(
            (np.concatenate([data, data]),
             (np.concatenate([edges[:, 0], edges[:, 1]]),
              np.concatenate([edges[:, 1], edges[:, 0]]))),
            shape=(n_vertices, n_vertices))
        if m:
            graph = sp.csr_matrix(
                (np.ones(2 * m),
                 (np.concatenate([edges[:, 0], edges[:, 1]]),
                  np.concatenate([edges[:, 1], edges[:, 0]]))),
                shape=(n_vertices, n_vertices))
        else:
            graph = sp.csr_matrix((n_vertices, n_vertices))
        ncomp, comp = connected_components(graph, directed=False)
        roots = np.array([np.flatnonzero(comp == k)[0] for k in range(ncomp)],
                         dtype=np.int64)

        parent_edge = np.full(n_vertices, -1, dtype=np.int64)
        parent_vertex = np.full(n_vertices, -1, dtype=np.int64)
        head_sign = np.zeros(n_vertices, dtype=np.int64)
        visited = np.zeros(n_vertices, dtype=bool)
        visited[roots] = True
        levels = [roots]
        frontier = roots
        while len(frontier):
            nxt = []
            for v in frontier:
                lo, hi = adj.indptr[v], adj.indptr[v + 1]
                for u, e in zip(adj.indices[lo:hi], adj.data[lo:hi]):
                    if not visited[u]:
                        visited[u] = True
                        parent_edge[u] = e
                        parent_vertex[u] = v
                        head_sign[u] = 1 if edges[e, 1] == u else -1
                        nxt.append(u)
            frontier = np.array(sorted(nxt), dtype=np.int64)
            if len(frontier):
                levels.append(frontier)
        return cls(n_vertices=n_vertices, edges=edges, component=comp,
                   roots=roots, parent_edge=parent_edge,
                   parent_vertex=parent_vertex, head_sign=head_sign,
                   levels=levels)

    # incidence convention: edge e = (u, v) has -1 at u and +1 at v

    def solve_transpose(self, b_edges: np.ndarray) -> np.ndarray:
        """y with (d^T y)[e] = y[head] - y[tail] = b[e] on forest edges;
        y is zero at the roots.  Exact when b is in Im(d^T)."""
        b_edges = np.asarray(b_edges, dtype=float)
        shape = (self.n_vertices,) + b_edges.shape[1:]
        y = np.zeros(shape)
        for level in self.levels[1:]:
            pe = self.parent_edge[level]
            y[level] = y[self.parent_vertex[level]] \
                + (self.head_sign[level].reshape((-1,) + (1,) * (b_edges.ndim - 1))
                   * b_edges[pe])
        return y

    def solve_head(self, b_vertices: np.ndarray) -> np.ndarray:
        """x supported on forest edges with (d x) = b; needs b to sum to
        zero on every component (checked by the caller's residual)."""
        b = np.asarray(b_vertices, dtype=float).copy()
        x = np.zeros((len(self.edges),) + b.shape[1:])
        sgn_shape = (-1,) + (1,) * (b.ndim - 1)
        for level in self.levels[:0:-1]:
            pe = self.parent_edge[level]
            sgn = self.head_sign[level].reshape(sgn_shape)
            vals = sgn * b[level]
            x[pe] = vals
            np.add.at(b, self.parent_vertex[level], sgn * vals)
        return x


class GraphDownLap:
    """Exact solver for d^T W d systems on an oriented graph, where d is the
    (n_vertices x n_edges) incidence matrix and W the vertex weights."""

    def __init__(self, n_vertices: int, edges, w_vertices=None):
        self.forest = SpanningForest.from_graph(n_vertices, edges)
        self.edges = self.forest.edges
        self.n_vertices = n_vertices
        self.w = np.ones(n_vertices) if w_vertices is None \
            else np.asarray(w_vertices, dtype=float)
        self.sqrt_w = np.sqrt(self.w)
        # kernel direction of d^T W^(1/2), one per component
        self.u = 1.0 / self.sqrt_w
        comp = self.forest.component
        ncomp = len(self.forest.roots)
        self.u_norm2 = np.zeros(ncomp)
        np.add.at(self.u_norm2, comp, self.u ** 2)
        m = len(self.edges)
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([np.arange(m), np.arange(m)])
        vals = np.concatenate([-np.ones(m), np.ones(m)])
        self.d = sp.csc_matrix((vals, (rows, cols)), shape=(n_vertices, m))
        self.lap = (self.d.T @ sp.diags(self.w) @ self.d).tocsr()

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.lap @ x

    def solve(self, b: np.ndarray, check: bool = True) -> np.ndarray:
        """Exact solve of (d^T W d) x = b for b in the image."""
        b = np.asarray(b, dtype=float)
        y = self.forest.solve_transpose(b)
        z = y / _col(self.sqrt_w, y.ndim)
        z1 = self._project_off_kernel(z)
        x = self.forest.solve_head(z1 / _col(self.sqrt_w, z1.ndim))
        if check:
            resid = np.linalg.norm(self.lap @ x - b)
            if resid > EXACT_TOL * max(np.linalg.norm(b), 1e-300):
                raise NumericalError(
                    "right-hand side is not in the image of the down-Laplacian")
        return x

    def _project_off_kernel(self, z: np.ndarray) -> np.ndarray:
        comp = self.forest.component
        u = _col(self.u, z.ndim)
        dots = np.zeros((len(self.forest.roots),) + z.shape[1:])
        np.add.at(dots, comp, u * z)
        return z - u * (dots[comp] / _col(self.u_norm2, z.ndim)[comp])


def _col(v, ndim):
    return v.reshape((-1,) + (1,) * (ndim - 1))


# -- complex-level API -------------------------------------------------------

def _down_state(c) -> GraphDownLap:
    if "down_state" not in c._cache:
        c._cache["down_state"] = GraphDownLap(c.num_vertices, c.edges,
                                              c.weights[0])
    return c._cache["down_state"]


def spanning_forest(c) -> SpanningForest:
    return _down_state(c).forest


def solve_partial1(c, b0) -> np.ndarray:
    """x with d1 x = b0 for b0 in Im(d1); x is supported on forest edges."""
    state = _down_state(c)
    b0 = np.asarray(b0, dtype=float)
    x = state.forest.solve_head(b0)
    resid = np.linalg.norm(state.d @ x - b0)
    if resid > IMAGE_TOL * max(np.linalg.norm(b0), 1e-300):
        raise NumericalError("b is not in the image of d1")
    return x


def solve_partial1_transpose(c, b1) -> np.ndarray:
    """y with d1^T y = b1 for b1 in Im(d1^T)."""
    state = _down_state(c)
    b1 = np.asarray(b1, dtype=float)
    y = state.forest.solve_transpose(b1)
    resid = np.linalg.norm(state.d.T @ y - b1)
    if resid > IMAGE_TOL * max(np.linalg.norm(b1), 1e-300):
        raise NumericalError("b is not in the image of d1^T")
    return y


def down_lap_solve(c, b) -> np.ndarray:
    """Exact solve of L1down x = b; errors when b is outside the image."""
    return _down_state(c).solve(b)


def down_projection(c, b, eps: float, max_iters=None):
    """Approximation of the orthogonal projection onto Im(d1^T).

    Solves the (unweighted) vertex Laplacian system behind the projection
    with Jacobi-preconditioned CG; falls back to a direct nested dissection
    factorization if CG stalls.  Contract: |p - P b| <= eps |P b|.
    """
    state = _down_state(c)
    b = np.asarray(b, dtype=float)
    g = state.d @ b  # in Im(d1) by construction
    # below this level g is cancellation noise from a curl-only input and
    # the projection itself sits at machine precision
    if np.linalg.norm(g) <= 1e-12 * np.linalg.norm(b):
        return np.zeros_like(b)

    lap0 = _unweighted_vertex_laplacian(c)
    a_op = LinearOperator(dim=c.num_vertices, apply=lambda v: lap0 @ v)

    kappa = _vertex_lap_condition(c, lap0)
    delta = max(eps, 1e-15) / (2.0 * np.sqrt(kappa))

    diag = lap0.diagonal()
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 0.0)
    jacobi = LinearOperator(dim=c.num_vertices, apply=lambda v: inv_diag * v)

    phi, rep = pcg(a_op, jacobi, g, tol=delta, max_iters=max_iters,
                   stage="down_projection")
    if not rep.converged:
        factor = _vertex_lap_factor(c, lap0)
        phi = factor.solve(g, check_image=False)
        resid = np.linalg.norm(lap0 @ phi - g)
        if resid > max(delta, 1e-12) * np.linalg.norm(g):
            raise NumericalError("down-projection solve failed to converge")
    return state.d.T @ phi


def _unweighted_vertex_laplacian(c):
    if "lap0_unweighted" not in c._cache:
        d = _down_state(c).d
        c._cache["lap0_unweighted"] = (d @ d.T).tocsr()
    return c._cache["lap0_unweighted"]


def _vertex_lap_condition(c, lap0) -> float:
    if "lap0_condition" not in c._cache:
        op = LinearOperator(dim=lap0.shape[0], apply=lambda v: lap0 @ v)
        est = estimate_rel_condition(op, LinearOperator.identity(lap0.shape[0]),
                                     iters=50)
        c._cache["lap0_condition"] = 2.0 * est
    return c._cache["lap0_condition"]


def _vertex_lap_factor(c, lap0):
    if "lap0_factor" not in c._cache:
        from .dissection import nd_cholesky
        c._cache["lap0_factor"] = nd_cholesky(lap0, c.vertices)
    return c._cache["lap0_factor"]
