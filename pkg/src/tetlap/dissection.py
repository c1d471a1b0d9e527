"""Geometric separators, nested dissection orderings, and rank-aware sparse
Cholesky factorization for PSD matrices whose nonzero graph is a mesh graph.

The factorization is multifrontal over the separator tree: every tree node
eliminates its block against a dense frontal matrix and passes a Schur
update to its parent.  Zero pivots of semidefinite inputs are skipped (the
corresponding factor column is zeroed), so the factor is rank-revealing and
solves against right-hand sides in the image remain exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import NumericalError

DEFAULT_BASE_CASE = 64
DEFAULT_PIVOT_TOL = 1e-12
# tested balance bound for the axis-median bisection separator
BALANCE_BOUND = 0.9


# -- separators -------------------------------------------------------------

def vertex_separator(points, adjacency, base_case: int = DEFAULT_BASE_CASE):
    """Split graph nodes into (A, B, S) with no A-B edges.

    Tries the axis-median plane on each coordinate axis, moves plane
    stragglers into S so that no edge crosses, and keeps the smallest
    feasible separator (balance <= BALANCE_BOUND).  Graphs at or below
    `base_case` nodes return everything as S.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    idx = np.arange(n)
    if n <= base_case:
        return idx[:0], idx[:0], idx
    adjacency = sp.csr_matrix(adjacency)

    best = None
    for axis in range(points.shape[1]):
        coord = points[:, axis]
        for value in _median_candidates(coord):
            a_mask = coord < value
            s_mask = coord == value
            b_mask = coord > value
            if not a_mask.any() or not b_mask.any():
                continue
            # any remaining A-B edge pulls its A endpoint into S
            cross = adjacency[a_mask][:, b_mask]
            if cross.nnz:
                bad = np.unique(cross.tocoo().row)
                a_idx = idx[a_mask]
                s_mask[a_idx[bad]] = True
                a_mask[a_idx[bad]] = False
            big = max(a_mask.sum(), b_mask.sum())
            if big > BALANCE_BOUND * n:
                continue
            score = (s_mask.sum(), big)
            if best is None or score < best[0]:
                best = (score, a_mask.copy(), b_mask.copy(), s_mask.copy())

    if best is None:
        # no balanced plane (e.g. all points coincide): fall back to an
        # index-median split with the adjacency frontier as separator
        half = n // 2
        order = np.lexsort(points.T)
        a_mask = np.zeros(n, dtype=bool)
        a_mask[order[:half]] = True
        b_mask = ~a_mask
        cross = adjacency[a_mask][:, b_mask]
        s_local = np.unique(cross.tocoo().col)
        s_mask = np.zeros(n, dtype=bool)
        s_mask[idx[b_mask][s_local]] = True
        b_mask &= ~s_mask
        if not a_mask.any() or not b_mask.any():
            return idx[:0], idx[:0], idx
        return idx[a_mask], idx[b_mask], idx[s_mask]

    _, a_mask, b_mask, s_mask = best
    return idx[a_mask], idx[b_mask], idx[s_mask]


def _median_candidates(coord):
    values = np.unique(coord)
    if len(values) == 1:
        return []
    below = np.searchsorted(np.sort(coord), values, side="left")
    target = len(coord) / 2
    order = np.argsort(np.abs(below - target))
    return values[order[:3]]


def edge_separator(c, edge_ids=None, base_case: int = DEFAULT_BASE_CASE):
    """Partition edges into triangle-disjoint sets (E_A, E_B) plus E_S.

    Runs the vertex separator on the 1-skeleton spanned by the edge set;
    E_S collects every edge incident to a separator vertex.
    """
    if edge_ids is None:
        edge_ids = np.arange(c.num_edges)
    edge_ids = np.asarray(edge_ids)
    pairs = c.edges[edge_ids]
    verts, local = np.unique(pairs, return_inverse=True)
    local = local.reshape(pairs.shape)
    nv = len(verts)
    adj = sp.csr_matrix((np.ones(len(local)), (local[:, 0], local[:, 1])),
                        shape=(nv, nv))
    a, b, s = vertex_separator(c.vertices[verts], adj + adj.T, base_case)
    side = np.zeros(nv, dtype=np.int8)  # 1=A, 2=B, 3=S
    side[a], side[b], side[s] = 1, 2, 3
    touches_s = (side[local] == 3).any(axis=1)
    in_a = (side[local] == 1).all(axis=1) & ~touches_s
    in_b = (side[local] == 2).all(axis=1) & ~touches_s
    e_s = ~(in_a | in_b)
    return edge_ids[in_a], edge_ids[in_b], edge_ids[e_s]


def triangle_separator(c, tri_ids=None, base_case: int = DEFAULT_BASE_CASE):
    """Partition triangles into edge-disjoint sets (T_A, T_B) plus T_S."""
    if tri_ids is None:
        tri_ids = np.arange(c.num_triangles)
    tri_ids = np.asarray(tri_ids)
    triples = c.triangles[tri_ids]
    verts, local = np.unique(triples, return_inverse=True)
    local = local.reshape(triples.shape)
    nv = len(verts)
    rows = np.concatenate([local[:, 0], local[:, 0], local[:, 1]])
    cols = np.concatenate([local[:, 1], local[:, 2], local[:, 2]])
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nv, nv))
    a, b, s = vertex_separator(c.vertices[verts], adj + adj.T, base_case)
    side = np.zeros(nv, dtype=np.int8)
    side[a], side[b], side[s] = 1, 2, 3
    touches_s = (side[local] == 3).any(axis=1)
    in_a = (side[local] == 1).all(axis=1) & ~touches_s
    in_b = (side[local] == 2).all(axis=1) & ~touches_s
    t_s = ~(in_a | in_b)
    return tri_ids[in_a], tri_ids[in_b], tri_ids[t_s]


# -- nested dissection ordering ---------------------------------------------

@dataclass
class NdNode:
    cols: np.ndarray                  # original indices eliminated here
    children: list = field(default_factory=list)
    start: int = -1                   # interval in permuted space, filled later
    stop: int = -1


@dataclass
class NdOrdering:
    """Separator-tree elimination ordering; separators come last."""
    perm: np.ndarray                  # position -> original index
    tree: NdNode
    n: int

    def __len__(self):
        return self.n


def nd_ordering(matrix, coords, base_case: int = DEFAULT_BASE_CASE,
                root_pin=None) -> NdOrdering:
    """Recursive geometric dissection of the nonzero graph of `matrix`.

    `coords` gives a 3D location per row (edge midpoints, triangle
    centroids, ...).  `root_pin` forces the given rows into the root
    separator, eliminated after everything else.
    """
    structure = sp.csr_matrix(matrix, copy=False).astype(bool)
    coords = np.asarray(coords, dtype=float)
    n = structure.shape[0]
    idx = np.arange(n)
    if root_pin is not None and len(root_pin):
        pin_mask = np.zeros(n, dtype=bool)
        pin_mask[np.asarray(root_pin)] = True
        inner = _nd_recurse(structure, coords, idx[~pin_mask], base_case)
        tree = NdNode(cols=idx[pin_mask], children=[inner])
    else:
        tree = _nd_recurse(structure, coords, idx, base_case)
    perm = np.empty(n, dtype=np.int64)
    _assign_intervals(tree, perm, 0)
    return NdOrdering(perm=perm, tree=tree, n=n)


def _nd_recurse(structure, coords, idx, base_case):
    if len(idx) <= base_case:
        return NdNode(cols=idx)
    sub = structure[idx][:, idx]
    a, b, s = vertex_separator(coords[idx], sub, base_case)
    if len(a) == 0 or len(b) == 0:
        return NdNode(cols=idx)
    node = NdNode(cols=idx[s],
                  children=[_nd_recurse(structure, coords, idx[a], base_case),
                            _nd_recurse(structure, coords, idx[b], base_case)])
    return node


def _assign_intervals(node, perm, offset):
    for ch in node.children:
        offset = _assign_intervals(ch, perm, offset)
    node.start, node.stop = offset, offset + len(node.cols)
    perm[node.start:node.stop] = node.cols
    return node.stop


# -- rank-aware sparse Cholesky ----------------------------------------------

@dataclass
class _NodeFactor:
    start: int
    stop: int
    kept: np.ndarray       # local bool mask of accepted pivots
    l11: np.ndarray        # dense lower-triangular block, zeroed at skips
    rows21: np.ndarray     # permuted row indices below the block
    l21: np.ndarray        # dense (len(rows21), block) sub-diagonal part


@dataclass
class CholeskyFactor:
    """P L L^T P^T factorization with skipped (rank-deficient) pivots."""

    perm: np.ndarray
    L: sp.csc_matrix
    rank: int
    pivot_tol: float
    kept: np.ndarray              # bool per permuted position
    matrix: sp.csr_matrix         # original matrix, for residual checks
    _nodes: list = field(default_factory=list, repr=False)

    @property
    def shape(self):
        return self.matrix.shape

    def solve(self, b, check_image: bool = True,
              image_tol: float = 1e-6) -> np.ndarray:
        return solve_with_factor(self, b, check_image=check_image,
                                 image_tol=image_tol)


def cholesky(matrix, ordering, pivot_tol: float = DEFAULT_PIVOT_TOL) -> CholeskyFactor:
    """Factor a symmetric PSD matrix along a nested dissection ordering.

    `ordering` is an NdOrdering or a plain permutation array (the latter is
    factored as a single dense block, desk scale only).  Pivots at or below
    pivot_tol * max(initial diagonal) are skipped; a pivot below the
    negative of that threshold raises NumericalError.
    """
    matrix = sp.csr_matrix(matrix).astype(float)
    n = matrix.shape[0]
    if isinstance(ordering, NdOrdering):
        perm, tree = ordering.perm, ordering.tree
    else:
        perm = np.asarray(ordering, dtype=np.int64)
        tree = NdNode(cols=perm.copy(), start=0, stop=n)
        tree.cols = np.arange(n)  # interval semantics below are positional
    mp = matrix[perm][:, perm].tocsc()
    scale = max(mp.diagonal().max(initial=0.0), 0.0)
    if scale <= 0.0:
        scale = 1.0

    nodes: list[_NodeFactor] = []
    _factor_node(tree, mp, scale, pivot_tol, nodes)
    nodes.sort(key=lambda nd: nd.start)

    kept = np.zeros(n, dtype=bool)
    coo_r, coo_c, coo_v = [], [], []
    for nd in nodes:
        kept[nd.start:nd.stop] = nd.kept
        bs = nd.stop - nd.start
        r, c = np.tril_indices(bs)
        v = nd.l11[r, c]
        keep = v != 0.0
        coo_r.append(r[keep] + nd.start)
        coo_c.append(c[keep] + nd.start)
        coo_v.append(v[keep])
        if len(nd.rows21):
            rr = np.repeat(nd.rows21, bs).reshape(len(nd.rows21), bs)
            cc = np.tile(np.arange(bs), (len(nd.rows21), 1)) + nd.start
            keep = nd.l21 != 0.0
            coo_r.append(rr[keep])
            coo_c.append(cc[keep])
            coo_v.append(nd.l21[keep])
    L = sp.csc_matrix(
        (np.concatenate(coo_v) if coo_v else [],
         (np.concatenate(coo_r) if coo_r else [],
          np.concatenate(coo_c) if coo_c else [])),
        shape=(n, n))

    return CholeskyFactor(perm=perm, L=L, rank=int(kept.sum()),
                          pivot_tol=pivot_tol, kept=kept, matrix=matrix,
                          _nodes=nodes)


def nd_cholesky(matrix, coords, base_case: int = DEFAULT_BASE_CASE,
                pivot_tol: float = DEFAULT_PIVOT_TOL, root_pin=None) -> CholeskyFactor:
    """Convenience wrapper: ordering + factorization in one call."""
    ordering = nd_ordering(matrix, coords, base_case=base_case, root_pin=root_pin)
    return cholesky(matrix, ordering, pivot_tol=pivot_tol)


def _factor_node(node, mp, scale, pivot_tol, out):
    child_updates = []
    for ch in node.children:
        child_updates.append(_factor_node(ch, mp, scale, pivot_tol, out))

    c0, c1 = node.start, node.stop
    bs = c1 - c0
    n = mp.shape[0]

    block_cols = mp[:, c0:c1].tocoo()
    above_from_m = np.unique(block_cols.row[block_cols.row >= c1])
    above = above_from_m
    for rows, _ in child_updates:
        above = np.union1d(above, rows[rows >= c1])

    na = len(above)
    front = np.zeros((bs + na, bs + na))
    # own matrix columns: diagonal block plus rows below it
    sel = block_cols.row >= c0
    r, cloc, v = block_cols.row[sel], block_cols.col[sel], block_cols.data[sel]
    in_block = r < c1
    front[r[in_block] - c0, cloc[in_block]] += v[in_block]
    if na:
        pos = np.searchsorted(above, r[~in_block])
        front[pos + bs, cloc[~in_block]] += v[~in_block]
    # child Schur updates (symmetric, scattered into the full front)
    for rows, upd in child_updates:
        # separator property: children may only touch their own ancestors
        assert len(rows) == 0 or rows.min() >= c0
        loc = np.where(rows < c1, rows - c0,
                       bs + np.searchsorted(above, rows))
        front[np.ix_(loc, loc)] += upd

    l11, kept_local = _dense_rank_chol(front[:bs, :bs], scale, pivot_tol)
    if na:
        f21 = front[bs:, :bs]
        l21 = np.zeros_like(f21)
        if kept_local.any():
            kk = kept_local
            l21[:, kk] = sla.solve_triangular(
                l11[np.ix_(kk, kk)], f21[:, kk].T, lower=True).T
        update = front[bs:, bs:] - l21 @ l21.T
    else:
        l21 = np.zeros((0, bs))
        update = np.zeros((0, 0))

    out.append(_NodeFactor(start=c0, stop=c1, kept=kept_local,
                           l11=l11, rows21=above, l21=l21))
    return above, update


def _dense_rank_chol(a, scale, pivot_tol):
    """Dense lower Cholesky that skips (zeroes) semidefinite pivots."""
    n = a.shape[0]
    thresh = pivot_tol * scale
    kept = np.ones(n, dtype=bool)
    if n == 0:
        return np.zeros((0, 0)), kept
    try:
        l = np.linalg.cholesky(a)
        if n == 0 or (l.diagonal() ** 2 > thresh).all():
            return l, kept
    except np.linalg.LinAlgError:
        pass
    a = a.copy()
    l = np.zeros_like(a)
    for j in range(n):
        d = a[j, j]
        if d <= thresh:
            if d < -thresh:
                raise NumericalError(
                    f"matrix is not positive semidefinite (pivot {d:.3e})")
            kept[j] = False
            continue
        root = np.sqrt(d)
        l[j, j] = root
        if j + 1 < n:
            col = a[j + 1:, j] / root
            l[j + 1:, j] = col
            a[j + 1:, j + 1:] -= np.outer(col, col)
    return l, kept


def solve_with_factor(factor: CholeskyFactor, b, check_image: bool = True,
                      image_tol: float = 1e-6) -> np.ndarray:
    """Solve M x = b through the factor; zero pivots get the zero-tail
    treatment, so the result is exact for b in Im(M)."""
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    bm = b.reshape(-1, 1) if single else b
    n = factor.matrix.shape[0]
    z = bm[factor.perm].copy()

    nodes = factor._nodes
    # forward: L y = P^T b, skipped pivots force y = 0
    for nd in nodes:
        seg = z[nd.start:nd.stop]
        y = np.zeros_like(seg)
        kk = nd.kept
        if kk.any():
            y[kk] = sla.solve_triangular(nd.l11[np.ix_(kk, kk)], seg[kk],
                                         lower=True)
        z[nd.start:nd.stop] = y
        if len(nd.rows21):
            z[nd.rows21] -= nd.l21 @ y
    # backward: L^T x = y
    for nd in reversed(nodes):
        seg = z[nd.start:nd.stop]
        if len(nd.rows21):
            seg = seg - nd.l21.T @ z[nd.rows21]
        x = np.zeros_like(seg)
        kk = nd.kept
        if kk.any():
            x[kk] = sla.solve_triangular(nd.l11[np.ix_(kk, kk)].T, seg[kk],
                                         lower=False)
        z[nd.start:nd.stop] = x

    x = np.empty_like(z)
    x[factor.perm] = z
    if check_image:
        resid = factor.matrix @ x - bm
        norm_b = np.linalg.norm(bm, axis=0)
        bad = np.linalg.norm(resid, axis=0) > image_tol * np.maximum(norm_b, 1e-300)
        if np.any(bad & (norm_b > 0)):
            raise NumericalError("right-hand side is not in the image of the matrix")
    return x[:, 0] if single else x
