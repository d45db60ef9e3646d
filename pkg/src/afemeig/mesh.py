"""Conforming 2D triangulations with newest-vertex-bisection refinement.

A Mesh is immutable; refinement returns a new mesh whose vertex ids extend
the parent's (old vertices keep their ids and coordinates).  Each triangle
carries a designated peak vertex; its refinement edge is the edge opposite
the peak.  Bisection is done in compatible pairs, so meshes never contain
hanging nodes.

The crack domain realizes the slit by duplicated vertex records: the two
slit faces carry distinct ids at identical coordinates, and new-vertex
identity is keyed on parent-edge ids, never on coordinates, so the faces
stay separate under refinement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import AfemError, ConfigurationError

_TOL = 1e-12


class Vertex(NamedTuple):
    x: float
    y: float
    boundary_flag: bool
    birth_level: int
    parent_edge: Optional[tuple]


class Triangle(NamedTuple):
    vertices: tuple
    peak_slot: int
    level: int
    parent: Optional[int]
    region_id: int


@dataclass(frozen=True)
class ConformityReport:
    hanging_nodes: int
    min_angle: float
    orientation_violations: int
    edge_use_violations: int

    @property
    def ok(self):
        return (self.hanging_nodes == 0 and self.orientation_violations == 0
                and self.edge_use_violations == 0)


class Mesh:
    """Triangulation with NVB lineage, boundary flags and interior numbering."""

    def __init__(self, coords, vertex_boundary, birth_level, parent_edge,
                 tris, peak_slot, tri_parent, tri_survivor, generation,
                 region, level):
        self.coords = np.ascontiguousarray(coords, dtype=np.float64)
        self.vertex_boundary = np.ascontiguousarray(vertex_boundary, dtype=bool)
        self.birth_level = np.ascontiguousarray(birth_level, dtype=np.int32)
        self.parent_edge = np.ascontiguousarray(parent_edge, dtype=np.int64)
        self.tris = np.ascontiguousarray(tris, dtype=np.int64)
        self.peak_slot = np.ascontiguousarray(peak_slot, dtype=np.int8)
        self.tri_parent = np.ascontiguousarray(tri_parent, dtype=np.int64)
        self.tri_survivor = np.ascontiguousarray(tri_survivor, dtype=bool)
        self.generation = np.ascontiguousarray(generation, dtype=np.int32)
        self.region = np.ascontiguousarray(region, dtype=np.int32)
        self.level = int(level)
        interior = np.flatnonzero(~self.vertex_boundary)
        idx = np.full(self.n_vertices, -1, dtype=np.int64)
        idx[interior] = np.arange(interior.size)
        self.interior_index = idx
        self.interior_vertices = interior
        self.n_interior = int(interior.size)
        self._edge_table = None

    @property
    def n_vertices(self):
        return self.coords.shape[0]

    @property
    def n_triangles(self):
        return self.tris.shape[0]

    def vertex(self, i):
        pe = self.parent_edge[i]
        return Vertex(self.coords[i, 0], self.coords[i, 1],
                      bool(self.vertex_boundary[i]), int(self.birth_level[i]),
                      None if pe[0] < 0 else (int(pe[0]), int(pe[1])))

    def triangle(self, t):
        parent = int(self.tri_parent[t])
        return Triangle(tuple(int(v) for v in self.tris[t]), int(self.peak_slot[t]),
                        int(self.generation[t]), None if parent < 0 else parent,
                        int(self.region[t]))

    def signed_areas(self):
        p = self.coords[self.tris]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def refinement_edges(self):
        """(nt, 2) vertex-id pairs of each triangle's refinement edge."""
        slot = self.peak_slot.astype(np.int64)
        a = self.tris[np.arange(self.n_triangles), (slot + 1) % 3]
        b = self.tris[np.arange(self.n_triangles), (slot + 2) % 3]
        return np.column_stack([a, b])

    def edge_table(self):
        """Unique undirected edges with use counts and adjacent triangles.

        Returns (edge_verts (ne,2) sorted pairs, edge_tris (ne,2) with -1
        padding, tri_edges (nt,3) edge id opposite each local slot).
        """
        if self._edge_table is None:
            nt = self.n_triangles
            opp = np.stack([self.tris[:, [1, 2]], self.tris[:, [2, 0]],
                            self.tris[:, [0, 1]]], axis=1).reshape(-1, 2)
            opp.sort(axis=1)
            edge_verts, inverse, counts = np.unique(opp, axis=0,
                                                    return_inverse=True,
                                                    return_counts=True)
            tri_edges = inverse.reshape(nt, 3)
            edge_tris = np.full((edge_verts.shape[0], 2), -1, dtype=np.int64)
            order = np.argsort(inverse, kind="stable")
            owner = order // 3
            starts = np.zeros(edge_verts.shape[0] + 1, dtype=np.int64)
            np.cumsum(counts, out=starts[1:])
            for e in range(edge_verts.shape[0]):
                for j, t in enumerate(owner[starts[e]:starts[e + 1]][:2]):
                    edge_tris[e, j] = t
            self._edge_table = (edge_verts, edge_tris, tri_edges, counts)
        return self._edge_table

    def expand_interior(self, u):
        """Interior-dof vector -> full vertex vector (zeros on boundary)."""
        full = np.zeros(self.n_vertices)
        full[self.interior_vertices] = u
        return full


def _peak_first(tris, peak_slot):
    """Rows (p, a, b) with the peak first; rotation preserves orientation."""
    out = np.empty_like(tris)
    for s in range(3):
        rows = peak_slot == s
        out[rows] = tris[rows][:, [s, (s + 1) % 3, (s + 2) % 3]]
    return out


def _angles(coords, tris):
    p = coords[tris]
    angs = np.empty((tris.shape[0], 3))
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        cosang = (u * v).sum(axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angs[:, i] = np.arccos(np.clip(cosang, -1.0, 1.0))
    return angs


def conformity_check(mesh: Mesh) -> ConformityReport:
    """Quality report: hanging nodes, minimum angle, orientation violations."""
    areas = mesh.signed_areas()
    orientation_violations = int(np.sum(areas <= 0.0))
    min_angle = float(_angles(mesh.coords, mesh.tris).min()) if mesh.n_triangles else 0.0

    edge_verts, _, _, counts = mesh.edge_table()
    edge_use_violations = int(np.sum(counts > 2))

    # A vertex hangs when the edge it was born on is still unsplit somewhere.
    edge_set = {(int(a), int(b)) for a, b in edge_verts}
    hanging = 0
    for v in range(mesh.n_vertices):
        a, b = mesh.parent_edge[v]
        if a >= 0 and (min(int(a), int(b)), max(int(a), int(b))) in edge_set:
            hanging += 1
    return ConformityReport(hanging, min_angle, orientation_violations,
                            edge_use_violations)


def nvb_refine(mesh: Mesh, marked) -> Mesh:
    """Bisect every marked triangle at least once and restore conformity.

    Compatibility chains are resolved by pre-bisecting neighbors whose
    refinement edge differs, so the result never has hanging nodes.  New
    vertices record the edge (vertex-id pair) they were born on.
    """
    marked = sorted(int(t) for t in set(marked))
    if marked and (marked[0] < 0 or marked[-1] >= mesh.n_triangles):
        raise ValueError("marked set contains invalid triangle ids")

    new_level = mesh.level + 1
    coords = [tuple(c) for c in mesh.coords]
    vbound = list(mesh.vertex_boundary)
    birth = list(mesh.birth_level)
    pedge = [tuple(e) for e in mesh.parent_edge]

    pk = _peak_first(mesh.tris, mesh.peak_slot)
    alive = {}
    edge2tris = {}

    def ekey(a, b):
        return (a, b) if a < b else (b, a)

    def link(tid, rec):
        alive[tid] = rec
        p, a, b = rec[0], rec[1], rec[2]
        for e in (ekey(p, a), ekey(p, b), ekey(a, b)):
            edge2tris.setdefault(e, []).append(tid)

    def unlink(tid):
        rec = alive.pop(tid)
        p, a, b = rec[0], rec[1], rec[2]
        for e in (ekey(p, a), ekey(p, b), ekey(a, b)):
            users = edge2tris[e]
            users.remove(tid)
            if not users:
                del edge2tris[e]
        return rec

    for t in range(mesh.n_triangles):
        link(t, (int(pk[t, 0]), int(pk[t, 1]), int(pk[t, 2]),
                 int(mesh.generation[t]), t, int(mesh.region[t])))

    next_tid = mesh.n_triangles
    midpoint = {}

    def get_midpoint(e, n_users):
        if e in midpoint:
            return midpoint[e]
        a, b = e
        vid = len(coords)
        coords.append(((coords[a][0] + coords[b][0]) / 2.0,
                       (coords[a][1] + coords[b][1]) / 2.0))
        vbound.append(n_users == 1)
        birth.append(new_level)
        pedge.append((a, b))
        midpoint[e] = vid
        return vid

    def bisect(tids, e):
        nonlocal next_tid
        m = get_midpoint(e, len(tids))
        for tid in tids:
            p, a, b, gen, root, reg = unlink(tid)
            # children keep orientation; both peaks sit at the new midpoint
            link(next_tid, (m, p, a, gen + 1, root, reg))
            link(next_tid + 1, (m, b, p, gen + 1, root, reg))
            next_tid += 2

    for t0 in marked:
        if t0 not in alive:
            continue  # already bisected while pairing with a neighbor
        stack = [t0]
        on_stack = {t0}
        while stack:
            t = stack[-1]
            if t not in alive:
                stack.pop()
                on_stack.discard(t)
                continue
            rec = alive[t]
            e = ekey(rec[1], rec[2])
            partner = next((u for u in edge2tris[e] if u != t), None)
            if partner is None:
                bisect([t], e)
            elif ekey(alive[partner][1], alive[partner][2]) == e:
                bisect([t, partner], e)
            else:
                if partner in on_stack:
                    raise AfemError("refinement-edge compatibility cycle")
                stack.append(partner)
                on_stack.add(partner)
                continue
            stack.pop()
            on_stack.discard(t)

    order = list(alive)
    tris = np.array([[alive[t][0], alive[t][1], alive[t][2]] for t in order],
                    dtype=np.int64).reshape(-1, 3)
    gen = np.array([alive[t][3] for t in order], dtype=np.int32)
    root = np.array([alive[t][4] for t in order], dtype=np.int64)
    reg = np.array([alive[t][5] for t in order], dtype=np.int32)
    survivor = np.array([t < mesh.n_triangles for t in order], dtype=bool)

    return Mesh(np.array(coords), np.array(vbound), np.array(birth, dtype=np.int32),
                np.array(pedge, dtype=np.int64).reshape(-1, 2),
                tris, np.zeros(len(order), dtype=np.int8), root, survivor,
                gen, reg, new_level)


def uniform_refine(mesh: Mesh, rounds=1) -> Mesh:
    """Bisect every triangle once per round."""
    for _ in range(rounds):
        mesh = nvb_refine(mesh, range(mesh.n_triangles))
    return mesh


# -- initial meshes ---------------------------------------------------------

def _grid_cells(x0, y0, nx, ny, h, keep):
    """Criss-cross grid triangulation; only vertices of kept cells exist.

    Every cell is split along the (i,j)->(i+1,j+1) diagonal, so the initial
    refinement edge (longest edge) is the shared hypotenuse of each pair.
    """
    vid = {}
    coords = []

    def vertex(i, j):
        if (i, j) not in vid:
            vid[(i, j)] = len(coords)
            coords.append((x0 + i * h, y0 + j * h))
        return vid[(i, j)]

    tris = []
    regions = []
    for j in range(ny):
        for i in range(nx):
            cx, cy = x0 + (i + 0.5) * h, y0 + (j + 0.5) * h
            r = keep(cx, cy)
            if r is None:
                continue
            v00, v10 = vertex(i, j), vertex(i + 1, j)
            v11, v01 = vertex(i + 1, j + 1), vertex(i, j + 1)
            tris.append((v10, v11, v00))  # peak v10, refinement edge = diagonal
            tris.append((v01, v00, v11))  # peak v01
            regions.extend([r, r])
    return np.array(coords), np.array(tris, dtype=np.int64), np.array(regions, dtype=np.int32)


def _finish_initial(coords, tris, regions, on_boundary):
    nv, nt = coords.shape[0], tris.shape[0]
    vb = np.array([on_boundary(x, y) for x, y in coords], dtype=bool)
    return Mesh(coords, vb, np.zeros(nv, dtype=np.int32),
                np.full((nv, 2), -1, dtype=np.int64), tris,
                np.zeros(nt, dtype=np.int8), np.full(nt, -1, dtype=np.int64),
                np.ones(nt, dtype=bool), np.zeros(nt, dtype=np.int32),
                regions, 0)


def _near(a, b):
    return abs(a - b) <= _TOL


def make_initial_mesh(name: str, divisions: Optional[int] = None) -> Mesh:
    """Coarse triangulation of a catalog domain.

    ``divisions`` is the cell count per unit length (mesh size 1/divisions).
    Domains: 'square' (0,1)^2; 'lshape' (-1,1)^2 minus [0,1)x(-1,0];
    'crack' (-1,1)^2 minus the slit [0,1]x{0} (slit vertices duplicated);
    'fourquadrant' (0,1)^2 with quadrant region labels 1..4.
    """
    defaults = {"square": 4, "lshape": 4, "crack": 4, "fourquadrant": 8}
    if name not in defaults:
        raise ConfigurationError(f"unknown domain {name!r}; expected one of {sorted(defaults)}")
    n = defaults[name] if divisions is None else int(divisions)
    if n < 1:
        raise ConfigurationError("divisions must be >= 1")
    h = 1.0 / n

    if name == "square":
        coords, tris, reg = _grid_cells(0.0, 0.0, n, n, h, lambda cx, cy: 0)
        return _finish_initial(coords, tris, reg, lambda x, y: (
            _near(x, 0) or _near(x, 1) or _near(y, 0) or _near(y, 1)))

    if name == "fourquadrant":
        if n % 2:
            raise ConfigurationError("fourquadrant needs an even division count "
                                     "so the interfaces at 0.5 are mesh lines")

        def quadrant(cx, cy):
            if cx < 0.5:
                return 1 if cy > 0.5 else 3
            return 2 if cy > 0.5 else 4

        coords, tris, reg = _grid_cells(0.0, 0.0, n, n, h, quadrant)
        return _finish_initial(coords, tris, reg, lambda x, y: (
            _near(x, 0) or _near(x, 1) or _near(y, 0) or _near(y, 1)))

    if name == "lshape":
        def keep(cx, cy):
            return None if (cx > 0 and cy < 0) else 0

        coords, tris, reg = _grid_cells(-1.0, -1.0, 2 * n, 2 * n, h, keep)
        return _finish_initial(coords, tris, reg, lambda x, y: (
            _near(abs(x), 1) or _near(abs(y), 1)
            or (_near(x, 0) and y <= _TOL)
            or (_near(y, 0) and x >= -_TOL)))

    # crack: full square, then split the slit (0,1] x {0} into two faces
    coords, tris, reg = _grid_cells(-1.0, -1.0, 2 * n, 2 * n, h, lambda cx, cy: 0)
    coords = [tuple(c) for c in coords]
    tris = tris.copy()
    slit = [v for v, (x, y) in enumerate(coords) if _near(y, 0) and _TOL < x <= 1 + _TOL]
    below = np.array(coords)[tris][:, :, 1].mean(axis=1) < 0
    for v in sorted(slit):
        dup = len(coords)
        coords.append(coords[v])
        for t in np.flatnonzero(below & (tris == v).any(axis=1)):
            tris[t][tris[t] == v] = dup

    def on_boundary(x, y):
        return (_near(abs(x), 1) or _near(abs(y), 1)
                or (_near(y, 0) and -_TOL <= x <= 1 + _TOL))

    return _finish_initial(np.array(coords), tris, reg, on_boundary)


# -- plain-text dump/load ---------------------------------------------------

def dump_mesh(mesh: Mesh, path):
    """Write the plain-text mesh format used by the CLI --dump-mesh flag.

    Lineage metadata (parent edges, survivor flags, bisection generation) is
    not part of the format and is not round-tripped.
    """
    with open(path, "w") as f:
        f.write(f"vertices {mesh.n_vertices} triangles {mesh.n_triangles} level {mesh.level}\n")
        for v in range(mesh.n_vertices):
            f.write(f"{mesh.coords[v, 0]:.17g} {mesh.coords[v, 1]:.17g} "
                    f"{int(mesh.vertex_boundary[v])} {mesh.birth_level[v]}\n")
        for t in range(mesh.n_triangles):
            v0, v1, v2 = mesh.tris[t]
            f.write(f"{v0} {v1} {v2} {mesh.peak_slot[t]} {mesh.tri_parent[t]} "
                    f"{mesh.region[t]}\n")


def load_mesh(path) -> Mesh:
    """Read the plain-text mesh format written by dump_mesh."""
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 6 or header[0] != "vertices" or header[2] != "triangles":
            raise ConfigurationError(f"bad mesh file header in {path}")
        nv, nt, level = int(header[1]), int(header[3]), int(header[5])
        coords = np.empty((nv, 2))
        vb = np.empty(nv, dtype=bool)
        birth = np.empty(nv, dtype=np.int32)
        for v in range(nv):
            x, y, b, bl = f.readline().split()
            coords[v] = (float(x), float(y))
            vb[v] = bool(int(b))
            birth[v] = int(bl)
        tris = np.empty((nt, 3), dtype=np.int64)
        peak = np.empty(nt, dtype=np.int8)
        parent = np.empty(nt, dtype=np.int64)
        region = np.empty(nt, dtype=np.int32)
        for t in range(nt):
            v0, v1, v2, ps, pa, rg = f.readline().split()
            tris[t] = (int(v0), int(v1), int(v2))
            peak[t] = int(ps)
            parent[t] = int(pa)
            region[t] = int(rg)
    return Mesh(coords, vb, birth, np.full((nv, 2), -1, dtype=np.int64), tris,
                peak, parent, np.ones(nt, dtype=bool),
                np.zeros(nt, dtype=np.int32), region, level)
