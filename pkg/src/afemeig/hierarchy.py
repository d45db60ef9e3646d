"""The nested level stack: meshes, operators, prolongations, smoothing sets.

A level's smoothing set holds the interior dofs whose basis functions are
new or changed relative to the previous level; detection is combinatorial
(a vertex qualifies exactly when one of its fine-star triangles is not a
survivor of the refinement step).  Levels are append-only; pushing returns
a new Hierarchy that shares the existing Level objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import (CoefficientField, OperatorPair, Prolongation, assemble,
                       build_prolongation)
from .mesh import Mesh


@dataclass
class Level:
    mesh: Mesh
    ops: OperatorPair
    p_from_prev: Optional[Prolongation]
    smoothing_set: np.ndarray

    @property
    def diag_a(self):
        return self.ops.diag_a

    @property
    def diag_m(self):
        return self.ops.diag_m

    @property
    def n(self):
        return self.ops.n


def _smoothing_set(fine: Mesh) -> np.ndarray:
    """Interior dofs incident to a non-survivor triangle: exactly the new
    nodes plus old nodes whose star was rebisected."""
    touched_tris = fine.tris[~fine.tri_survivor]
    if touched_tris.size == 0:
        return np.empty(0, dtype=np.int64)
    touched = np.unique(touched_tris)
    dofs = fine.interior_index[touched]
    return np.sort(dofs[dofs >= 0])


class Hierarchy:
    """Ordered stack of levels, coarsest first."""

    def __init__(self, levels, rho: CoefficientField):
        self.levels = tuple(levels)
        self.rho = rho

    @classmethod
    def build(cls, mesh0: Mesh, rho: CoefficientField) -> "Hierarchy":
        ops = assemble(mesh0, rho)
        level0 = Level(mesh0, ops, None, np.empty(0, dtype=np.int64))
        return cls([level0], rho)

    @property
    def n_levels(self):
        return len(self.levels)

    @property
    def finest(self) -> Level:
        return self.levels[-1]

    def smoothing_work(self):
        """Total smoothing-set cardinality across levels (cost accounting)."""
        return int(sum(lv.smoothing_set.size for lv in self.levels))


def push_level(h: Hierarchy, fine_mesh: Mesh, rho: CoefficientField) -> Hierarchy:
    """Append a refined mesh: assemble its operators, build the prolongation
    from the current finest level, and compute the smoothing set."""
    prev = h.finest.mesh
    p = build_prolongation(prev, fine_mesh)
    ops = assemble(fine_mesh, rho)
    level = Level(fine_mesh, ops, p, _smoothing_set(fine_mesh))
    return Hierarchy(list(h.levels) + [level], rho)


def restrict_dual(h: Hierarchy, level: int, d_fine: np.ndarray) -> np.ndarray:
    """Fine-level dual vector -> level-``level`` dual vector via chained
    transposed prolongations (exact, since coarse basis functions are fine
    functions)."""
    if not 0 <= level < h.n_levels:
        raise IndexError(f"level {level} out of range [0, {h.n_levels})")
    d = np.asarray(d_fine, dtype=np.float64)
    if d.shape != (h.finest.n,):
        raise ValueError(f"expected finest-level dual of length {h.finest.n}")
    for l in range(h.n_levels - 1, level, -1):
        d = h.levels[l].p_from_prev.apply_t(d)
    return d.copy() if level == h.n_levels - 1 else d


def restrict_dual_all(h: Hierarchy, d_fine: np.ndarray):
    """Duals at every level in one pass down the chain."""
    duals = [None] * h.n_levels
    d = np.asarray(d_fine, dtype=np.float64)
    duals[-1] = d
    for l in range(h.n_levels - 1, 0, -1):
        d = h.levels[l].p_from_prev.apply_t(d)
        duals[l - 1] = d
    return duals
