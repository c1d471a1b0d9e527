"""Approximate orthogonal projection onto the image of the up-Laplacian.

Uses the triangle partition of a hollowing: the projection splits into an
exact part supported on interior-triangle columns (solved by nested
dissection per region) plus a correction through the Schur complement of
the triangle Gram matrix onto the boundary triangles, solved by PCG with
the boundary triangles' own Gram matrix as preconditioner.  All matrices
here are unweighted: images, and hence orthogonal projections, do not see
positive simplex weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .dissection import nd_cholesky
from .downlap import down_projection
from .errors import NumericalError
from .hollowing import Hollowing
from .pcg import LinearOperator, pcg
from .reports import SolveReport

POWER_ITERS = 30
SAFETY = 2.0


@dataclass
class UpProjectionState:
    complex: object
    hollowing: Hollowing
    d2: sp.csc_matrix                # float copy of the triangle boundary map
    f_regions: list                  # interior triangle ids per region
    f_all: np.ndarray
    f_slices: list
    c_t: np.ndarray                  # boundary triangle ids
    d2_f: sp.csc_matrix              # edges x interior triangles
    d2_c: sp.csc_matrix              # edges x boundary triangles
    region_factors: list
    precond_factor: object
    lup_norm: float

    @property
    def num_edges(self) -> int:
        return self.d2.shape[0]


def build_up_projection(c, h: Hollowing, base_case: int = 64) -> UpProjectionState:
    if (len(h.tri_class) != c.num_triangles
            or len(h.edge_class) != c.num_edges):
        raise ValueError("index mismatch: hollowing does not describe this complex")
    d2 = c.boundary(2).astype(float).tocsc()
    f_regions = h.interior_triangles_by_region()
    f_all = np.concatenate(f_regions) if f_regions else np.empty(0, dtype=np.int64)
    c_t = h.boundary_triangles
    centroids = c.vertices[c.triangles].mean(axis=1)

    slices, factors = [], []
    start = 0
    for f in f_regions:
        slices.append(slice(start, start + len(f)))
        start += len(f)
        if len(f) == 0:
            factors.append(None)
            continue
        cols = d2[:, f]
        gram = (cols.T @ cols).tocsr()
        factors.append(nd_cholesky(gram, centroids[f], base_case=base_case))

    d2_c = d2[:, c_t]
    precond_factor = None
    if len(c_t):
        gram_c = (d2_c.T @ d2_c).tocsr()
        precond_factor = nd_cholesky(gram_c, centroids[c_t],
                                     base_case=base_case)

    state = UpProjectionState(
        complex=c, hollowing=h, d2=d2,
        f_regions=f_regions, f_all=f_all, f_slices=slices, c_t=c_t,
        d2_f=d2[:, f_all], d2_c=d2_c,
        region_factors=factors, precond_factor=precond_factor,
        lup_norm=_up_lap_norm(c),
    )
    return state


def _up_lap_norm(c) -> float:
    if "lup_norm" not in c._cache:
        lup = c.lap_up(1)
        rng = np.random.default_rng(23)
        v = rng.standard_normal(lup.shape[0])
        lam = 1.0
        for _ in range(POWER_ITERS):
            w = lup @ v
            lam = np.linalg.norm(w)
            if lam == 0:
                break
            v = w / lam
        c._cache["lup_norm"] = SAFETY * max(lam, 1e-300)
    return c._cache["lup_norm"]


def _gram_f_solve(state: UpProjectionState, rhs):
    out = np.zeros_like(rhs)
    for sl, factor in zip(state.f_slices, state.region_factors):
        if factor is None:
            continue
        out[sl] = factor.solve(rhs[sl], check_image=False)
    return out


def proj_im_F(state: UpProjectionState, b) -> np.ndarray:
    """Orthogonal projection of an edge vector onto Im(d2[:, F])."""
    b = np.asarray(b, dtype=float)
    if len(state.f_all) == 0:
        return np.zeros_like(b)
    rhs = state.d2_f.T @ b
    y = _gram_f_solve(state, rhs)
    return state.d2_f @ y


def proj_ker_F(state: UpProjectionState, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    return b - proj_im_F(state, b)


def down2_schur_apply(state: UpProjectionState, x) -> np.ndarray:
    """Sc of the triangle Gram matrix onto boundary triangles, implicitly:
    d2[:,C]^T (I - P_Im(d2[:,F])) d2[:,C] x."""
    return state.d2_c.T @ proj_ker_F(state, state.d2_c @ np.asarray(x, float))


def down2_schur_solve(state: UpProjectionState, h_vec, delta: float,
                      max_iters: Optional[int] = None):
    h_vec = np.asarray(h_vec, dtype=float)
    if len(h_vec) == 0:
        return h_vec.copy(), SolveReport(stage="tri_schur")
    a_op = LinearOperator(dim=len(state.c_t),
                          apply=lambda v: down2_schur_apply(state, v))
    m_op = LinearOperator(
        dim=len(state.c_t),
        apply=lambda v: state.precond_factor.solve(v, check_image=False))
    x, report = pcg(a_op, m_op, h_vec, tol=delta, max_iters=max_iters,
                    stage="tri_schur")
    if not report.converged:
        raise NumericalError(
            f"triangle Schur PCG did not reach {delta:.2e} "
            f"(final residual {report.final_residual:.2e})")
    return x, report


def up_project(c, h: Hollowing, b, eps: float,
               state: Optional[UpProjectionState] = None):
    """p in Im(Lup) with |p - P b| <= eps |P b|, P the orthogonal projection
    onto Im(Lup)."""
    if state is None:
        state = build_up_projection(c, h)
    b = np.asarray(b, dtype=float)
    report = SolveReport(stage="up_project", size=len(b), params={"eps": eps})
    if len(state.c_t) == 0:
        return proj_im_F(state, b), report

    b1 = proj_im_F(state, b)
    b2 = state.d2_c.T @ (b - b1)
    if np.linalg.norm(b2) <= 1e-14 * np.linalg.norm(b):
        return b1, report
    delta = max(eps, 1e-15) / (2.0 * state.lup_norm)
    b3, screp = down2_schur_solve(state, b2, delta)
    b4 = proj_ker_F(state, state.d2_c @ b3)
    report.add_stage("tri_schur", screp)
    report.params["delta"] = delta
    return b1 + b4, report


def up_project_betti0(c, b, eps: float):
    """Projection onto Im(Lup) assuming the first Betti number vanishes:
    complement of the gradient projection, with one refinement round so the
    relative contract survives a large gradient part."""
    b = np.asarray(b, dtype=float)
    g = down_projection(c, b, eps)
    p = b - g
    ng, np_ = np.linalg.norm(g), np.linalg.norm(p)
    if ng > 0.5 * np_:
        target = max(np_ - eps * ng, eps * np.linalg.norm(b), 1e-300)
        eps2 = eps * target / (2.0 * ng)
        g = down_projection(c, b, eps2)
        p = b - g
    return p
