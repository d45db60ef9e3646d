"""Residual a posteriori error estimators and marking strategies.

The standard estimator (coefficient identically one) is element-based:
eta_T^2 = h_T^2 ||lam*u||_{0,T}^2 + sum_E h_E ||[[grad u]].n||_{0,E}^2
over the interior edges of T.  The coefficient-robust estimator is
edge-based with the weighting of the jump-problem literature; its flux
jumps are rho-weighted and its Lambda factors activate near singular
nodes, detected as failures of quasi-monotonicity of rho around a vertex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import CoefficientField, element_geometry
from .errors import ConfigurationError
from .mesh import Mesh


@dataclass
class Indicators:
    """Nonnegative local error indicators, element- or edge-indexed.

    ``items`` holds element ids (element kind) or the two adjacent element
    ids per interior edge (edge kind).
    """

    kind: str
    values: np.ndarray
    items: np.ndarray
    total: float

    @classmethod
    def from_squares(cls, kind, squares, items):
        squares = np.asarray(squares, dtype=np.float64)
        return cls(kind, np.sqrt(squares), items, float(np.sqrt(squares.sum())))


def _element_data(mesh: Mesh, u_full):
    """Gradients (constant per element), element L2 norms of u, h_T."""
    b, c, area = element_geometry(mesh)
    uv = u_full[mesh.tris]
    gx = (uv * b).sum(axis=1) / (2.0 * area)
    gy = (uv * c).sum(axis=1) / (2.0 * area)
    # exact P1 identity: ||u||_{0,T}^2 = area/12 * ((u1+u2+u3)^2 + u1^2+u2^2+u3^2)
    u_l2sq = area / 12.0 * (uv.sum(axis=1) ** 2 + (uv ** 2).sum(axis=1))
    p = mesh.coords[mesh.tris]
    e0 = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    e1 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    e2 = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    h_t = np.maximum(e0, np.maximum(e1, e2))
    return gx, gy, u_l2sq, h_t


def _interior_edges(mesh: Mesh):
    """(edge vertex pairs, adjacent triangle pairs, edge lengths, normals)."""
    edge_verts, edge_tris, _, counts = mesh.edge_table()
    sel = counts == 2
    ev = edge_verts[sel]
    et = edge_tris[sel]
    vec = mesh.coords[ev[:, 1]] - mesh.coords[ev[:, 0]]
    h_e = np.linalg.norm(vec, axis=1)
    normals = np.column_stack([vec[:, 1], -vec[:, 0]]) / h_e[:, None]
    return ev, et, h_e, normals


def estimate_standard(mesh: Mesh, lam: float, u, rho: CoefficientField = None) -> Indicators:
    """Element-based residual estimator for the unit-coefficient problem."""
    if rho is not None and not rho.is_unit:
        raise ConfigurationError("estimate_standard requires rho == 1; "
                                 "use estimate_robust for jumping coefficients")
    u_full = mesh.expand_interior(np.asarray(u, dtype=np.float64))
    gx, gy, u_l2sq, h_t = _element_data(mesh, u_full)
    eta2 = h_t ** 2 * lam ** 2 * u_l2sq

    _, et, h_e, normals = _interior_edges(mesh)
    jump = ((gx[et[:, 0]] - gx[et[:, 1]]) * normals[:, 0]
            + (gy[et[:, 0]] - gy[et[:, 1]]) * normals[:, 1])
    edge_term = h_e ** 2 * jump ** 2  # h_E * ||J_E||^2 with constant J_E
    np.add.at(eta2, et[:, 0], edge_term)
    np.add.at(eta2, et[:, 1], edge_term)
    return Indicators.from_squares("element", eta2, np.arange(mesh.n_triangles))


def singular_vertices(mesh: Mesh, rho: CoefficientField):
    """Vertices where rho fails quasi-monotonicity on the element star.

    Quasi-monotone means some maximal-coefficient star triangle reaches
    every star triangle through star edges with non-increasing rho; the
    four-quadrant checkerboard center is the canonical failure.
    """
    rho_t = rho.per_triangle(mesh)
    if np.unique(rho_t).size == 1:
        return np.empty(0, dtype=np.int64)
    v2t = [[] for _ in range(mesh.n_vertices)]
    for t, tri in enumerate(mesh.tris):
        for v in tri:
            v2t[v].append(t)
    flagged = []
    for z in range(mesh.n_vertices):
        star = v2t[z]
        vals = {rho_t[t] for t in star}
        if len(vals) < 2:
            continue
        # adjacency among star triangles via shared edges incident to z
        adj = {t: [] for t in star}
        for i, t1 in enumerate(star):
            s1 = set(mesh.tris[t1])
            for t2 in star[i + 1:]:
                if len(s1 & set(mesh.tris[t2])) == 2:
                    adj[t1].append(t2)
                    adj[t2].append(t1)
        rmax = max(vals)
        quasi_monotone = False
        for seed in (t for t in star if rho_t[t] == rmax):
            reached = {seed}
            queue = [seed]
            while queue:
                cur = queue.pop()
                for nb in adj[cur]:
                    if nb not in reached and rho_t[nb] <= rho_t[cur] + 0.0:
                        reached.add(nb)
                        queue.append(nb)
            if len(reached) == len(star):
                quasi_monotone = True
                break
        if not quasi_monotone:
            flagged.append(z)
    return np.array(flagged, dtype=np.int64)


def estimate_robust(mesh: Mesh, rho: CoefficientField, lam: float, u,
                    singular_override=None) -> Indicators:
    """Edge-based coefficient-robust estimator.

    ``singular_override``: optional list of (x, y) coordinates forced to be
    treated as singular nodes (the problem catalog pins the four-quadrant
    center this way); autodetection is used when absent.
    """
    u_full = mesh.expand_interior(np.asarray(u, dtype=np.float64))
    gx, gy, u_l2sq, h_t = _element_data(mesh, u_full)
    rho_t = rho.per_triangle(mesh)

    if singular_override is None:
        flagged = singular_vertices(mesh, rho)
    else:
        pts = np.asarray(singular_override, dtype=np.float64).reshape(-1, 2)
        flagged = np.flatnonzero(
            (np.abs(mesh.coords[:, None, :] - pts[None, :, :]).max(axis=2) < 1e-12).any(axis=1))
    is_singular = np.zeros(mesh.n_vertices, dtype=bool)
    is_singular[flagged] = True
    touches_singular = is_singular[mesh.tris].any(axis=1)

    # Lambda_T = max over the vertex-star patch of rho_T / rho_T' when T
    # touches a singular node, else 1
    min_rho_at_vertex = np.full(mesh.n_vertices, np.inf)
    np.minimum.at(min_rho_at_vertex, mesh.tris.reshape(-1), np.repeat(rho_t, 3))
    min_rho_patch = min_rho_at_vertex[mesh.tris].min(axis=1)
    lam_t = np.where(touches_singular, rho_t / min_rho_patch, 1.0)

    ev, et, h_e, normals = _interior_edges(mesh)
    t0, t1 = et[:, 0], et[:, 1]
    jump = ((rho_t[t0] * gx[t0] - rho_t[t1] * gx[t1]) * normals[:, 0]
            + (rho_t[t0] * gy[t0] - rho_t[t1] * gy[t1]) * normals[:, 1])
    rho_e = np.maximum(rho_t[t0], rho_t[t1])
    lam_e = np.maximum(lam_t[t0], lam_t[t1])

    vol = lam ** 2 * h_t ** 2 * u_l2sq / rho_t
    eta2 = lam_t[t0] * vol[t0] + lam_t[t1] * vol[t1] \
        + lam_e * h_e ** 2 * jump ** 2 / rho_e
    return Indicators.from_squares("edge", eta2, et)


def mark(ind: Indicators, strategy: str = "dorfler", theta: float = 0.5) -> np.ndarray:
    """Select elements for refinement.

    dorfler: minimal prefix (indicators descending, ties by ascending item
    id) whose squared sum reaches theta * total^2.  maximum: every item
    with value >= theta * max value.  Edge indicators expand to both
    adjacent elements.
    """
    if not 0.0 < theta <= 1.0:
        raise ConfigurationError(f"theta must lie in (0, 1]; got {theta}")
    if ind.values.size == 0:
        return np.empty(0, dtype=np.int64)
    vals2 = ind.values.astype(np.float64) ** 2
    if strategy == "dorfler":
        tie = ind.items if ind.kind == "element" else ind.items[:, 0]
        order = np.lexsort((tie, -vals2))
        csum = np.cumsum(vals2[order])
        cut = int(np.searchsorted(csum, theta * csum[-1] * (1.0 - 1e-15))) + 1
        chosen = order[:cut]
    elif strategy == "maximum":
        vmax = float(ind.values.max())
        if vmax == 0.0:
            return np.empty(0, dtype=np.int64)
        chosen = np.flatnonzero(ind.values >= theta * vmax)
    else:
        raise ConfigurationError(f"unknown marking strategy {strategy!r}")
    if ind.kind == "element":
        ids = ind.items[chosen]
    else:
        ids = ind.items[chosen].reshape(-1)
    return np.unique(ids)
