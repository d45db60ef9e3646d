"""P1 assembly of stiffness and mass matrices, and inter-level prolongation.

All element integrals are exact closed forms (P1 with piecewise-constant
coefficient needs no quadrature).  Dirichlet dofs are eliminated at
assembly: operators act on the interior numbering of the mesh.  Stiffness
and mass share one sparsity pattern so the shifted operator A - lam*M can
be applied in a single fused pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import AssemblyError, ConfigurationError, LineageError
from .linalg import SparseMatrix
from .mesh import Mesh

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


@dataclass(frozen=True)
class CoefficientField:
    """Piecewise-constant diffusion coefficient, one value per region label."""

    values: dict

    def __post_init__(self):
        for rid, v in self.values.items():
            if not v >= 1.0:
                raise ConfigurationError(f"coefficient for region {rid} is {v}; must be >= 1")

    @property
    def is_unit(self):
        return all(v == 1.0 for v in self.values.values())

    def per_triangle(self, mesh: Mesh):
        try:
            lut_max = max(self.values)
            lut = np.full(lut_max + 1, np.nan)
            for rid, v in self.values.items():
                lut[rid] = v
            out = lut[mesh.region]
        except (IndexError, ValueError):
            out = np.array([np.nan])
        if np.any(np.isnan(out)):
            missing = sorted(set(mesh.region.tolist()) - set(self.values))
            raise AssemblyError(f"mesh regions {missing} missing from coefficient field")
        return out


UNIT_COEFFICIENT = CoefficientField({0: 1.0})


def element_geometry(mesh: Mesh):
    """Per-element P1 gradient coefficients and areas.

    Returns (b, c, area): grad(phi_i) = (b[:, i], c[:, i]) / (2*area).
    """
    p = mesh.coords[mesh.tris]
    x, y = p[:, :, 0], p[:, :, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (x[:, 0] * b[:, 0] + x[:, 1] * b[:, 1] + x[:, 2] * b[:, 2])
    if np.any(area <= 0.0):
        bad = int(np.argmin(area))
        raise AssemblyError(f"degenerate triangle {bad} (signed area {area[bad]:.3e})")
    return b, c, area


def element_matrices(mesh: Mesh, rho: CoefficientField):
    """Exact per-element stiffness and mass matrices, shape (nt, 3, 3)."""
    b, c, area = element_geometry(mesh)
    rho_t = rho.per_triangle(mesh)
    scale = rho_t / (4.0 * area)
    ke = scale[:, None, None] * (b[:, :, None] * b[:, None, :]
                                 + c[:, :, None] * c[:, None, :])
    me = area[:, None, None] * _MASS_REF[None, :, :]
    return ke, me


def _csr_pair(n, rows, cols, vals_a, vals_m):
    """Two CSR matrices over one shared sparsity, duplicates summed in
    insertion order (keeps symmetric twins bit-identical)."""
    order = np.argsort(rows * np.int64(n) + cols, kind="stable")
    r, c = rows[order], cols[order]
    va, vm = vals_a[order], vals_m[order]
    if r.size:
        key = r * np.int64(n) + c
        starts = np.flatnonzero(np.concatenate(([True], key[1:] != key[:-1])))
        r, c = r[starts], c[starts]
        va = np.add.reduceat(va, starts)
        vm = np.add.reduceat(vm, starts)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, r + 1, 1)
    np.cumsum(indptr, out=indptr)
    a = SparseMatrix(n, indptr, c, va, validate=False)
    m = SparseMatrix(n, indptr, c, vm, validate=False)
    return a, m


@dataclass
class OperatorPair:
    """Stiffness/mass pair over the interior dofs of one mesh."""

    a: SparseMatrix
    m: SparseMatrix
    n: int
    diag_a: np.ndarray = field(repr=False, default=None)
    diag_m: np.ndarray = field(repr=False, default=None)

    def shifted_matvec(self, lam, x):
        """(A - lam*M) @ x in one fused pass over the shared sparsity."""
        out = np.empty(self.n)
        kernels.csr_shifted_matvec(self.a.indptr, self.a.indices, self.a.data,
                                   self.m.data, lam,
                                   np.ascontiguousarray(x, dtype=np.float64), out)
        return out


def _diagonal(mat: SparseMatrix):
    rows = np.repeat(np.arange(mat.n, dtype=np.int64), np.diff(mat.indptr))
    sel = mat.indices == rows
    d = np.zeros(mat.n)
    d[mat.indices[sel]] = mat.data[sel]
    return d


def assemble(mesh: Mesh, rho: CoefficientField, dirichlet: bool = True) -> OperatorPair:
    """Assemble the P1 operators; ``dirichlet=False`` keeps all vertices
    (used by tests that need the full mass identity)."""
    ke, me = element_matrices(mesh, rho)
    if dirichlet:
        gdof = mesh.interior_index[mesh.tris]
        n = mesh.n_interior
    else:
        gdof = mesh.tris
        n = mesh.n_vertices
    rows = np.repeat(gdof, 3, axis=1).reshape(-1)
    cols = np.tile(gdof, (1, 3)).reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    a, m = _csr_pair(n, rows[keep], cols[keep],
                     ke.reshape(-1)[keep], me.reshape(-1)[keep])
    return OperatorPair(a, m, n, _diagonal(a), _diagonal(m))


class Prolongation:
    """Sparse interpolation from coarse interior dofs to fine interior dofs.

    Exact for nested P1 spaces: applying it to a coarse coefficient vector
    reproduces the same function on the fine mesh, and its transpose maps
    fine dual vectors to coarse dual vectors exactly.
    """

    def __init__(self, n_fine, n_coarse, indptr, indices, data):
        self.n_fine = int(n_fine)
        self.n_coarse = int(n_coarse)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)

    def apply(self, v):
        v = np.ascontiguousarray(v, dtype=np.float64)
        if v.shape != (self.n_coarse,):
            raise ValueError(f"expected coarse vector of length {self.n_coarse}")
        out = np.empty(self.n_fine)
        kernels.csr_matvec(self.indptr, self.indices, self.data, v, out)
        return out

    def apply_t(self, d):
        d = np.ascontiguousarray(d, dtype=np.float64)
        if d.shape != (self.n_fine,):
            raise ValueError(f"expected fine vector of length {self.n_fine}")
        out = np.empty(self.n_coarse)
        kernels.csr_matvec_t(self.indptr, self.indices, self.data, d, out)
        return out

    def to_dense(self):
        p = np.zeros((self.n_fine, self.n_coarse))
        for i in range(self.n_fine):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            p[i, self.indices[lo:hi]] = self.data[lo:hi]
        return p


def _check_lineage(coarse: Mesh, fine: Mesh):
    if fine.level != coarse.level + 1:
        raise LineageError(f"fine level {fine.level} is not coarse level {coarse.level} + 1")
    nvc = coarse.n_vertices
    if fine.n_vertices < nvc:
        raise LineageError("fine mesh has fewer vertices than coarse mesh")
    if not np.array_equal(fine.coords[:nvc], coarse.coords):
        raise LineageError("fine mesh does not preserve coarse vertex ids/coordinates")
    if fine.tri_parent.size and (fine.tri_parent.max() >= coarse.n_triangles
                                 or fine.tri_parent.min() < 0):
        raise LineageError("fine triangle parents do not reference the coarse mesh")


def build_prolongation(coarse: Mesh, fine: Mesh) -> Prolongation:
    """Interpolation matrix for one NVB refinement step.

    Fine-vertex weights over coarse interior vertices are resolved by
    walking parent edges; rows are 1 on surviving vertices and averages of
    the parent endpoints for edge midpoints (endpoints created within the
    same refinement round resolve recursively, boundary endpoints drop out).
    """
    _check_lineage(coarse, fine)
    nvc = coarse.n_vertices
    weights = []
    for v in range(fine.n_vertices):
        if fine.vertex_boundary[v]:
            weights.append({})
        elif v < nvc:
            weights.append({int(coarse.interior_index[v]): 1.0})
        else:
            a, b = fine.parent_edge[v]
            row = {}
            for parent in (int(a), int(b)):
                for dof, w in weights[parent].items():
                    row[dof] = row.get(dof, 0.0) + 0.5 * w
            weights.append(row)

    indptr = [0]
    indices = []
    data = []
    for v in fine.interior_vertices:
        row = weights[v]
        for dof in sorted(row):
            indices.append(dof)
            data.append(row[dof])
        indptr.append(len(indices))
    return Prolongation(fine.n_interior, coarse.n_interior,
                        np.array(indptr), np.array(indices, dtype=np.int64),
                        np.array(data))


def rayleigh_quotient(ops: OperatorPair, u) -> float:
    """(u.A u) / (u.M u); raises on the zero vector."""
    u = np.asarray(u, dtype=np.float64)
    um = float(u @ ops.m.matvec(u))
    if um == 0.0:
        raise ValueError("Rayleigh quotient of the zero vector")
    return float(u @ ops.a.matvec(u)) / um
