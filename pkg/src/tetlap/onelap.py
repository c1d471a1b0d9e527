"""Full 1-Laplacian solver, Hodge decomposition, Betti diagnostics, and the
solver for unions of complexes glued along exterior simplexes.

The solve follows the split route: approximately project the right-hand
side onto curls and gradients, solve the up and down systems separately,
project the partial solutions back, and add.  The inner tolerance is
eps / (11 kappa) with kappa a safety-doubled estimate of the worse of the
two operator condition numbers.

A glued union usually has no global embedding, so the wall preconditioners
cannot be factored by one geometric dissection.  Instead the shared
simplexes form a small dense-Schur block on top of per-chunk nested
dissection factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import oracle
from .complexes import Complex3, build_complex
from .dissection import nd_cholesky
from .downlap import down_lap_solve, down_projection
from .errors import NumericalError
from .hollowing import Hollowing
from .pcg import LinearOperator, estimate_rel_condition, pcg
from .reports import SolveReport
from .uplap import UpSolverState, _up_solve_with_state, build_up_solver
from .upproj import UpProjectionState, build_up_projection, up_project

KAPPA_SAFETY = 2.0
KAPPA_ITERS = 50
DENSE_SHARED_CAP = 5000
# worst-case inner tolerance eps / (11 kappa) falls below double precision
# on large meshes; the floor keeps sub-solves feasible and the recomputed
# final residual stays the arbiter of the contract
DELTA_FLOOR = 3e-12


@dataclass
class OneLapState:
    complex: object
    hollowing: Hollowing
    up_state: UpSolverState
    proj_state: UpProjectionState
    kappa_hat: float


def build_one_lap_solver(c, h: Hollowing) -> OneLapState:
    up_state = build_up_solver(c, h)
    proj_state = build_up_projection(c, h)
    kappa_hat = _condition_estimate(c)
    return OneLapState(complex=c, hollowing=h, up_state=up_state,
                       proj_state=proj_state, kappa_hat=kappa_hat)


def _condition_estimate(c) -> float:
    if "kappa_hat" not in c._cache:
        kup = estimate_rel_condition(
            LinearOperator.from_matrix(c.lap_up(1)),
            LinearOperator.identity(c.num_edges), iters=KAPPA_ITERS)
        kdown = estimate_rel_condition(
            LinearOperator.from_matrix(c.lap_down(1)),
            LinearOperator.identity(c.num_edges), iters=KAPPA_ITERS)
        c._cache["kappa_hat"] = KAPPA_SAFETY * max(kup, kdown, 1.0)
    return c._cache["kappa_hat"]


def one_lap_solve(c, h: Hollowing, b, eps: float,
                  state: Optional[OneLapState] = None):
    """x with |L1 x - P1 b| <= eps |P1 b|, P1 the projection onto Im(L1)."""
    if state is None:
        state = build_one_lap_solver(c, h)
    up_proj = lambda v, d: up_project(c, h, v, d, state=state.proj_state)[0]
    down_proj = lambda v, d: down_projection(c, v, d)
    up_solve = lambda v, d: _up_solve_with_state(state.up_state, v, d)
    return _one_lap_core(c.lap1(), up_proj, down_proj, up_solve,
                         lambda v: down_lap_solve(c, v),
                         b, eps, state.kappa_hat)


def _one_lap_core(lap1, up_proj, down_proj, up_solve, down_solve, b,
                  eps: float, kappa_hat: float):
    b = np.asarray(b, dtype=float)
    report = SolveReport(stage="one_lap_solve", size=len(b),
                         params={"eps": eps, "kappa_hat": kappa_hat})
    if np.linalg.norm(b) == 0.0:
        return np.zeros_like(b), report
    delta = max(eps / (11.0 * kappa_hat), min(DELTA_FLOOR, eps))
    report.params["delta"] = delta

    b_up = up_proj(b, delta)
    b_down = down_proj(b, delta)
    x_down = down_solve(b_down)
    if np.linalg.norm(b_up) > 0:
        x_up, up_rep = up_solve(b_up, delta)
        report.add_stage("up_solve", up_rep)
    else:
        x_up = np.zeros_like(b)
    x = up_proj(x_up, delta) + down_proj(x_down, delta)

    # residual against the approximately projected right-hand side; the
    # exact-projection contract is certified against the dense oracle in
    # the acceptance tests
    b_tilde = b_up + b_down
    report.initial_residual = float(np.linalg.norm(b_tilde))
    report.final_residual = float(np.linalg.norm(lap1 @ x - b_tilde))
    report.converged = report.final_residual <= \
        eps * max(report.initial_residual, 1e-300)
    return x, report


def hodge_decompose(c, h: Hollowing, f, eps: float,
                    state: Optional[OneLapState] = None):
    """Split a 1-chain into (gradient, curl, harmonic) parts."""
    f = np.asarray(f, dtype=float)
    if state is None:
        state = build_one_lap_solver(c, h)
    gradient = down_projection(c, f, eps)
    curl, _ = up_project(c, h, f, eps, state=state.proj_state)
    harmonic = f - gradient - curl
    return gradient, curl, harmonic


def betti_numbers(c, cap: int = oracle.SIZE_CAP):
    """(b0, b1, b2) via dense oracle ranks; desk scale only."""
    if max(c.simplex_counts()) > cap:
        raise ValueError(
            f"complex too large for dense Betti computation (> {cap}); "
            "no oracle-free estimate is provided")
    r1 = oracle.rank(c.boundary(1).toarray())
    r2 = oracle.rank(c.boundary(2).toarray())
    r3 = oracle.rank(c.boundary(3).toarray())
    b0 = c.num_vertices - r1
    b1 = (c.num_edges - r1) - r2
    b2 = (c.num_triangles - r2) - r3
    return b0, b1, b2


# -- unions of chunks ----------------------------------------------------------

@dataclass
class UnionComplex:
    chunks: list
    hollowings: list
    vertex_maps: list                 # chunk vertex id -> global vertex id
    complex: Complex3                 # glued complex (coordinates are per-chunk
                                      # charts, not a global embedding)
    edge_maps: list                   # chunk edge id -> global edge id
    tri_maps: list
    tet_maps: list
    shared_edges: np.ndarray          # global edges present in > 1 chunk
    shared_triangles: np.ndarray
    hollowing: Hollowing              # induced labels on the glued complex
    _cache: dict = field(default_factory=dict, repr=False)


def glue(chunks, identifications, hollowings) -> UnionComplex:
    """Glue chunks by identifying classes of exterior vertices.

    `identifications` is a list of vertex classes, each a list of
    (chunk_index, vertex_index) pairs merged into one global vertex.
    Induced shared edges/triangles must be exterior in every chunk and on
    the boundary class of that chunk's hollowing.
    """
    if len(chunks) != len(hollowings):
        raise ValueError("need one hollowing per chunk")
    offsets = np.cumsum([0] + [ch.num_vertices for ch in chunks])
    total = offsets[-1]
    parent = np.arange(total)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for group in identifications:
        if len(group) < 2:
            continue
        seen_chunks = [g[0] for g in group]
        if len(set(seen_chunks)) != len(seen_chunks):
            raise ValueError("identification class names one chunk twice "
                             "(maps must be injective)")
        base = None
        for chunk_idx, vid in group:
            if not (0 <= chunk_idx < len(chunks)):
                raise ValueError(f"identification names unknown chunk {chunk_idx}")
            ch = chunks[chunk_idx]
            if not (0 <= vid < ch.num_vertices):
                raise ValueError("identification names an invalid vertex")
            if not ch.exterior_vertices[vid]:
                raise ValueError(
                    f"vertex {vid} of chunk {chunk_idx} is not exterior")
            g = find(offsets[chunk_idx] + vid)
            if base is None:
                base = g
            else:
                parent[g] = base

    roots = np.array([find(i) for i in range(total)])
    uniq, global_id = np.unique(roots, return_inverse=True)
    vertex_maps = [global_id[offsets[k]:offsets[k + 1]] for k in range(len(chunks))]

    coords = np.zeros((len(uniq), 3))
    for k, ch in enumerate(chunks):
        coords[vertex_maps[k]] = ch.vertices  # later chunks win; charts only

    tets = np.vstack([vertex_maps[k][ch.tets] for k, ch in enumerate(chunks)])
    if len(np.unique(np.sort(tets, axis=1), axis=0)) != len(tets):
        raise ValueError("gluing identifies two tetrahedra")
    glued = build_complex(tets, coords)

    edge_maps = [glued.edge_ids(np.sort(vertex_maps[k][ch.edges], axis=1))
                 for k, ch in enumerate(chunks)]
    tri_maps = [glued.triangle_ids(np.sort(vertex_maps[k][ch.triangles], axis=1))
                for k, ch in enumerate(chunks)]
    tet_start = np.cumsum([0] + [ch.num_tets for ch in chunks])
    tet_maps = [np.arange(tet_start[k], tet_start[k + 1]) for k in range(len(chunks))]
    # build_complex lex-sorts tets; recover the permutation
    order = np.lexsort(np.sort(tets, axis=1).T[::-1])
    rank = np.empty(len(tets), dtype=np.int64)
    rank[order] = np.arange(len(tets))
    tet_maps = [rank[m] for m in tet_maps]

    _merge_weights(glued, chunks, edge_maps, tri_maps, tet_maps, vertex_maps)

    edge_count = np.zeros(glued.num_edges, dtype=np.int64)
    for m in edge_maps:
        np.add.at(edge_count, m, 1)
    tri_count = np.zeros(glued.num_triangles, dtype=np.int64)
    for m in tri_maps:
        np.add.at(tri_count, m, 1)
    shared_edges = np.flatnonzero(edge_count > 1)
    shared_triangles = np.flatnonzero(tri_count > 1)

    for k, ch in enumerate(chunks):
        back = np.zeros(glued.num_edges, dtype=bool)
        back[shared_edges] = True
        local_shared = np.flatnonzero(back[edge_maps[k]])
        if np.any(~ch.exterior_edges[local_shared]):
            raise ValueError(f"chunk {k} shares a non-exterior edge")
        if np.any(hollowings[k].edge_class[local_shared] >= 0):
            raise ValueError(
                f"chunk {k} shares an edge that its hollowing classifies "
                "as interior; glue on hollowing-boundary simplexes only")

    union_h = _induced_union_hollowing(glued, chunks, hollowings, edge_maps,
                                       tri_maps, tet_maps, shared_edges,
                                       shared_triangles)
    return UnionComplex(chunks=list(chunks), hollowings=list(hollowings),
                        vertex_maps=vertex_maps, complex=glued,
                        edge_maps=edge_maps, tri_maps=tri_maps,
                        tet_maps=tet_maps, shared_edges=shared_edges,
                        shared_triangles=shared_triangles,
                        hollowing=union_h)


def _merge_weights(glued, chunks, edge_maps, tri_maps, tet_maps, vertex_maps):
    specs = [(0, vertex_maps, lambda ch: ch.weights[0]),
             (1, edge_maps, lambda ch: ch.weights[1]),
             (2, tri_maps, lambda ch: ch.weights[2]),
             (3, tet_maps, lambda ch: ch.weights[3])]
    for dim, maps, getter in specs:
        out = np.full(len(glued.weights[dim]), np.nan)
        for k, ch in enumerate(chunks):
            w = getter(ch)
            prev = out[maps[k]]
            clash = ~np.isnan(prev) & (np.abs(prev - w) > 1e-12)
            if np.any(clash):
                raise ValueError(
                    f"chunks disagree on the weight of a shared {dim}-simplex")
            out[maps[k]] = w
        glued.weights[dim] = np.where(np.isnan(out), 1.0, out)


def _induced_union_hollowing(glued, chunks, hollowings, edge_maps, tri_maps,
                             tet_maps, shared_edges, shared_triangles) -> Hollowing:
    offsets = np.cumsum([0] + [h.num_regions for h in hollowings])
    tet_region = np.full(glued.num_tets, -1, dtype=np.int64)
    edge_class = np.full(glued.num_edges, -1, dtype=np.int64)
    tri_class = np.full(glued.num_triangles, -1, dtype=np.int64)
    for k, h in enumerate(hollowings):
        reg = h.tet_region.copy()
        reg[reg >= 0] += offsets[k]
        tet_region[tet_maps[k]] = reg
        ecls = h.edge_class.copy()
        ecls[ecls >= 0] += offsets[k]
        edge_class[edge_maps[k]] = ecls
        tcls = h.tri_class.copy()
        tcls[tcls >= 0] += offsets[k]
        tri_class[tri_maps[k]] = tcls
    edge_class[shared_edges] = -1
    tri_class[shared_triangles] = -1
    shells = []
    for k, h in enumerate(hollowings):
        shells.extend(tri_maps[k][s] for s in h.shells)
    return Hollowing(
        r=max(h.r for h in hollowings), kind="union",
        num_regions=offsets[-1], tet_region=tet_region,
        edge_class=edge_class, tri_class=tri_class, shells=shells,
        metrics={"chunks": len(chunks),
                 "shared_edges": int(len(shared_edges)),
                 "shared_triangles": int(len(shared_triangles))})


class SplitPreconditioner:
    """Exact solver for a PSD matrix whose index set splits into per-chunk
    blocks (factored by nested dissection) plus a small shared block whose
    Schur complement is pseudo-inverted densely."""

    def __init__(self, mat: sp.spmatrix, blocks, coords_list, shared,
                 base_case: int = 64, dense_cap: int = DENSE_SHARED_CAP):
        mat = sp.csr_matrix(mat)
        self.n = mat.shape[0]
        self.blocks = [np.asarray(b, dtype=np.int64) for b in blocks]
        self.shared = np.asarray(shared, dtype=np.int64)
        if len(self.shared) > dense_cap:
            raise NumericalError(
                f"shared block has {len(self.shared)} rows, beyond the dense "
                f"inversion cap {dense_cap}")
        for i, b in enumerate(self.blocks):
            for j, b2 in enumerate(self.blocks):
                if i < j and mat[b][:, b2].nnz:
                    raise NumericalError(
                        "per-chunk preconditioner blocks are coupled; "
                        "shared simplexes were misclassified")
        self.factors = [
            nd_cholesky(mat[b][:, b], coords, base_case=base_case)
            if len(b) else None
            for b, coords in zip(self.blocks, coords_list)]
        self.m_sb = [mat[self.shared][:, b].tocsr() for b in self.blocks]
        m_ss = mat[self.shared][:, self.shared].toarray()
        if len(self.shared):
            schur = m_ss.copy()
            for f, msb in zip(self.factors, self.m_sb):
                if f is None or msb.shape[1] == 0:
                    continue
                rhs = msb.toarray().T
                x = f.solve(rhs, check_image=False)
                schur -= msb @ x
            from .uplap import pinv_via_pivoted_qr
            self.schur_pinv = pinv_via_pivoted_qr(schur)
        else:
            self.schur_pinv = np.zeros((0, 0))

    def _block_solve(self, v):
        out = np.zeros_like(v)
        for f, b in zip(self.factors, self.blocks):
            if f is None:
                continue
            out[b] = f.solve(v[b], check_image=False)
        return out

    def solve(self, v):
        v = np.asarray(v, dtype=float)
        y = self._block_solve(v)
        if len(self.shared):
            h_vec = v[self.shared] - sum(
                msb @ y[b] for msb, b in zip(self.m_sb, self.blocks)
                if msb.shape[1])
            x_s = self.schur_pinv @ h_vec
            rhs = v.copy()
            for msb, b in zip(self.m_sb, self.blocks):
                if msb.shape[1]:
                    rhs[b] -= msb.T @ x_s
            out = self._block_solve(rhs)
            out[self.shared] = x_s
            return out
        return y


def build_union_up_solver(u: UnionComplex, base_case: int = 64) -> UpSolverState:
    """Up-solver on the glued complex; the wall preconditioner solves through
    per-chunk factors plus the dense shared Schur block."""
    glued = u.complex
    h = u.hollowing
    from .uplap import _build_without_precond, _coupling_norm
    state = _build_without_precond(glued, h, base_case)
    c_idx = state.c_idx
    if len(c_idx) == 0:
        return state

    bt = h.boundary_triangles
    d2c = glued.boundary(2).astype(float)[c_idx][:, bt]
    lt = (d2c @ sp.diags(glued.weights[2][bt]) @ d2c.T).tocsr()

    pos = np.full(glued.num_edges, -1, dtype=np.int64)
    pos[c_idx] = np.arange(len(c_idx))
    shared_local = pos[u.shared_edges]
    shared_local = shared_local[shared_local >= 0]
    # an edge is also "shared-adjacent" if it shares a wall triangle with a
    # shared edge; for vertex-level gluings the shared triangles' edges are
    # all shared, so the shared edges themselves suffice as the dense block
    blocks, coords_list = [], []
    taken = np.zeros(len(c_idx), dtype=bool)
    taken[shared_local] = True
    for k, ch in enumerate(u.chunks):
        local_boundary = u.edge_maps[k][u.hollowings[k].boundary_edges]
        locs = pos[local_boundary]
        locs = locs[(locs >= 0) & ~taken[locs]]
        taken[locs] = True
        block = np.unique(locs)
        blocks.append(block)
        midpoints = ch.vertices[ch.edges].mean(axis=1)
        back = np.full(glued.num_edges, -1, dtype=np.int64)
        back[u.edge_maps[k]] = np.arange(ch.num_edges)
        coords_list.append(midpoints[back[c_idx[block]]])
    leftovers = np.flatnonzero(~taken)
    if len(leftovers):
        shared_local = np.union1d(shared_local, leftovers)

    precond = SplitPreconditioner(lt, blocks, coords_list, shared_local,
                                  base_case=base_case)
    state.precond_solve = precond.solve
    state.coupling_norm = _coupling_norm(state)
    return state


def build_union_up_projection(u: UnionComplex,
                              base_case: int = 64) -> UpProjectionState:
    """Triangle-split projection on the glued complex with the same shared
    dense-block treatment for the boundary Gram preconditioner."""
    return _build_union_proj_state(u, base_case)


def _build_union_proj_state(u: UnionComplex, base_case: int) -> UpProjectionState:
    glued = u.complex
    h = u.hollowing
    d2 = glued.boundary(2).astype(float).tocsc()
    f_regions = h.interior_triangles_by_region()
    f_all = np.concatenate(f_regions) if f_regions else np.empty(0, dtype=np.int64)
    c_t = h.boundary_triangles

    slices, factors = [], []
    start = 0
    chunk_of_region = np.concatenate(
        [np.full(hh.num_regions, k) for k, hh in enumerate(u.hollowings)])
    chunk_centroids = [ch.vertices[ch.triangles].mean(axis=1) for ch in u.chunks]
    glob_to_local = []
    for k, ch in enumerate(u.chunks):
        back = np.full(glued.num_triangles, -1, dtype=np.int64)
        back[u.tri_maps[k]] = np.arange(ch.num_triangles)
        glob_to_local.append(back)
    for ridx, f in enumerate(f_regions):
        slices.append(slice(start, start + len(f)))
        start += len(f)
        if len(f) == 0:
            factors.append(None)
            continue
        cols = d2[:, f]
        gram = (cols.T @ cols).tocsr()
        k = int(chunk_of_region[ridx])
        coords = chunk_centroids[k][glob_to_local[k][f]]
        factors.append(nd_cholesky(gram, coords, base_case=base_case))

    d2_c = d2[:, c_t]
    gram_c = (d2_c.T @ d2_c).tocsr()
    pos = np.full(glued.num_triangles, -1, dtype=np.int64)
    pos[c_t] = np.arange(len(c_t))

    # dense block: shared triangles plus boundary triangles touching a
    # shared edge (they couple chunks through the Gram matrix)
    inc_shared = np.zeros(glued.num_edges, dtype=bool)
    inc_shared[u.shared_edges] = True
    tri_edges = np.stack([glued.edge_ids(np.delete(glued.triangles, j, axis=1))
                          for j in range(3)], axis=1)
    touches = inc_shared[tri_edges].any(axis=1)
    dense_global = np.unique(np.concatenate(
        [u.shared_triangles, np.flatnonzero(touches & (h.tri_class < 0))]))
    dense_local = pos[dense_global]
    dense_local = dense_local[dense_local >= 0]

    taken = np.zeros(len(c_t), dtype=bool)
    taken[dense_local] = True
    blocks, coords_list = [], []
    for k, ch in enumerate(u.chunks):
        local_boundary = u.tri_maps[k][u.hollowings[k].boundary_triangles]
        locs = pos[local_boundary]
        locs = locs[(locs >= 0) & ~taken[locs]]
        taken[locs] = True
        blocks.append(np.unique(locs))
        coords_list.append(chunk_centroids[k][glob_to_local[k][c_t[blocks[-1]]]])
    leftovers = np.flatnonzero(~taken)
    dense_local = np.union1d(dense_local, leftovers)

    precond = SplitPreconditioner(gram_c, blocks, coords_list, dense_local,
                                  base_case=base_case)

    class _SplitFactor:
        def solve(self, v, check_image=False):
            return precond.solve(v)

    return UpProjectionState(
        complex=glued, hollowing=h, d2=d2,
        f_regions=f_regions, f_all=f_all, f_slices=slices, c_t=c_t,
        d2_f=d2[:, f_all], d2_c=d2_c,
        region_factors=factors, precond_factor=_SplitFactor(),
        lup_norm=_union_lup_norm(glued),
    )


def _union_lup_norm(glued) -> float:
    from .upproj import _up_lap_norm
    return _up_lap_norm(glued)


@dataclass
class UnionSolverState:
    union: UnionComplex
    up_state: UpSolverState
    proj_state: UpProjectionState
    kappa_hat: float


def build_union_solver(u: UnionComplex) -> UnionSolverState:
    return UnionSolverState(
        union=u,
        up_state=build_union_up_solver(u),
        proj_state=_build_union_proj_state(u, 64),
        kappa_hat=_condition_estimate(u.complex),
    )


def union_one_lap_solve(u: UnionComplex, b, eps: float,
                        state: Optional[UnionSolverState] = None):
    """1-Laplacian solve on the glued complex, same contract as
    one_lap_solve; b is indexed by the glued complex's edge order."""
    if state is None:
        state = build_union_solver(u)
    glued = u.complex
    up_proj = lambda v, d: up_project(glued, u.hollowing, v, d,
                                      state=state.proj_state)[0]
    down_proj = lambda v, d: down_projection(glued, v, d)
    up_solve = lambda v, d: _up_solve_with_state(state.up_state, v, d)
    return _one_lap_core(glued.lap1(), up_proj, down_proj, up_solve,
                         lambda v: down_lap_solve(glued, v),
                         b, eps, state.kappa_hat)
