"""Jacobi-Davidson outer iteration with the local multilevel preconditioner.

One preconditioner application is a multiplicative sweep from the coarsest
level to the finest: a deflated shifted coarse solve first, then one pass
of the shifted local Jacobi smoother per level, restricted to that level's
smoothing set.  The sweep maintains an accumulated correction and updates
the effective dual residual level by level, which is exact because every
coarser correction is itself a function of the current level's space.

The resulting operator B satisfies I - B*(A - lam*M) = E with
E = (I - K_L)...(I - K_1)(I - K_0) in coefficient space (B applied to dual
vectors); the test suite verifies this identity against a dense oracle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .assembly import OperatorPair, assemble
from .errors import AfemError, ConvergenceError, CoarseSetupError, NumericalError, ShiftValidityError
from .hierarchy import Hierarchy, Level, restrict_dual_all
from .linalg import dense_geneig
from .mesh import Mesh, uniform_refine

_RITZ_SLACK = 1e-12


def _sign_fix(u, *companions):
    """Largest-magnitude entry positive; companions flip along."""
    i = int(np.argmax(np.abs(u)))
    if u[i] < 0:
        return (-u,) + tuple(-c for c in companions)
    return (u,) + tuple(companions)


class _ShiftedCoarseSolver:
    """Dense shifted coarse solves (A0 - lam*M0) with deflation against the
    coarse eigenvector; the Cholesky factor is cached per shift."""

    def __init__(self, a0, m0, u_coarse):
        self.a0 = a0
        self.m0 = m0
        self.u = u_coarse
        self.mu = m0 @ u_coarse
        self._lam = None
        self._factor = None
        self._t2 = None

    def _refresh(self, lam):
        if self._lam == lam:
            return
        try:
            self._factor = scipy.linalg.cho_factor(self.a0 - lam * self.m0, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(f"shifted coarse matrix not SPD at shift {lam:.6g}: {exc}") from exc
        self._t2 = scipy.linalg.cho_solve(self._factor, self.mu)
        self._lam = lam

    def correction(self, lam, d0):
        self._refresh(lam)
        d0p = d0 - (self.u @ d0) * self.mu
        t1 = scipy.linalg.cho_solve(self._factor, d0p)
        denom = float(self.mu @ self._t2)
        t = t1 - (float(self.mu @ t1) / denom) * self._t2
        return t


@dataclass
class CoarseData:
    """Coarse eigenpair, the shift bound lam0 from the once-refined scratch
    mesh, and the dense factorization handle for shifted coarse solves."""

    lam_coarse: float
    u_coarse: np.ndarray
    lam0: float
    scratch_levels: list          # [(mesh, lam, u_interior)] per refinement round
    solver: _ShiftedCoarseSolver
    coarse_solve_ms: float
    scratch_solve_ms: float

    @property
    def scratch_mesh(self) -> Mesh:
        return self.scratch_levels[-1][0]


@dataclass
class SolverConfig:
    gamma: float = 0.8
    tol: float = 1e-10
    max_iter: int = 50
    max_basis: int = 30

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1); got {self.gamma}")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")


@dataclass
class JDStats:
    iterations: int
    stop_value: float
    history: list
    restarts: int = 0
    max_deflation_defect: float = 0.0
    max_orth_defect: float = 0.0
    solve_ms: float = 0.0


def coarse_setup(h: Hierarchy) -> CoarseData:
    """Coarse eigenpair plus the strictly smaller shift bound computed on a
    uniformly refined scratch copy of the coarsest mesh.

    The scratch mesh is refined again (up to three rounds) if the refined
    eigenvalue fails to drop below the coarse one; failure after that means
    the coarse mesh is too coarse for the method's shift ordering.
    """
    level0 = h.levels[0]
    t0 = time.perf_counter()
    lams, vecs = dense_geneig(level0.ops.a.to_dense(), level0.ops.m.to_dense(), 1)
    coarse_ms = 1e3 * (time.perf_counter() - t0)
    lam_coarse = float(lams[0])
    (u_coarse,) = _sign_fix(vecs[:, 0])

    scratch_levels = []
    mesh = level0.mesh
    scratch_ms = 0.0
    for _ in range(3):
        mesh = uniform_refine(mesh, 1)
        ops = assemble(mesh, h.rho)
        t0 = time.perf_counter()
        lams_s, vecs_s = dense_geneig(ops.a.to_dense(), ops.m.to_dense(), 1)
        scratch_ms = 1e3 * (time.perf_counter() - t0)
        (u_s,) = _sign_fix(vecs_s[:, 0])
        scratch_levels.append((mesh, float(lams_s[0]), u_s))
        if lams_s[0] < lam_coarse:
            break
    else:
        raise CoarseSetupError(
            f"refined coarse eigenvalue {scratch_levels[-1][1]:.9g} did not drop below "
            f"the coarse eigenvalue {lam_coarse:.9g}; use a finer coarse mesh")

    solver = _ShiftedCoarseSolver(level0.ops.a.to_dense(), level0.ops.m.to_dense(), u_coarse)
    return CoarseData(lam_coarse, u_coarse, scratch_levels[-1][1], scratch_levels,
                      solver, coarse_ms, scratch_ms)


def smoother_apply(level: Level, lam: float, d_l: np.ndarray, gamma: float = 0.8) -> np.ndarray:
    """One pass of the shifted local Jacobi smoother on the level's
    smoothing set: gamma * d_i / (a(phi_i,phi_i) - lam*b(phi_i,phi_i))."""
    out = np.zeros(level.n)
    idx = level.smoothing_set
    if idx.size == 0:
        return out
    denom = level.diag_a[idx] - lam * level.diag_m[idx]
    dmin = float(denom.min())
    if dmin <= 0.0:
        node = int(idx[int(np.argmin(denom))])
        raise ShiftValidityError(
            f"shifted diagonal non-positive ({dmin:.3e}) at smoothing dof {node} "
            f"for shift {lam:.6g}; the coarse mesh is too coarse for this shift")
    out[idx] = gamma * d_l[idx] / denom
    return out


def coarse_correction(cd: CoarseData, level0: Level, lam: float, d0: np.ndarray) -> np.ndarray:
    """Deflated shifted coarse solve: the dual is projected off the coarse
    eigenvector, and the returned correction is b-orthogonal to it."""
    if not lam < cd.lam_coarse:
        raise ShiftValidityError(
            f"shift {lam:.9g} not below the coarse eigenvalue {cd.lam_coarse:.9g}")
    d0 = np.asarray(d0, dtype=np.float64)
    if d0.shape != (level0.n,):
        raise ValueError(f"expected level-0 dual of length {level0.n}")
    return cd.solver.correction(lam, d0)


def precondition(h: Hierarchy, cd: CoarseData, lam: float, d: np.ndarray,
                 gamma: float = 0.8) -> np.ndarray:
    """Apply the local multilevel preconditioner to a fine dual vector.

    Multiplicative sweep, coarse correction first, then local smoothing per
    level ascending.  The accumulated correction lives in the current
    level's space, so the effective dual residual at level l is the
    restricted input dual minus (A_l - lam*M_l) applied to it.
    """
    duals = restrict_dual_all(h, d)
    c = coarse_correction(cd, h.levels[0], lam, duals[0])
    for l in range(1, h.n_levels):
        lv = h.levels[l]
        c = lv.p_from_prev.apply(c)
        d_eff = duals[l] - lv.ops.shifted_matvec(lam, c)
        c += smoother_apply(lv, lam, d_eff, gamma)
    return c


class JDState:
    """Iterate, Ritz basis and cached operator products.

    Basis columns are kept b-orthonormal; W.T A W is maintained
    incrementally so the projected pencil never needs fresh fine products.
    """

    def __init__(self, ops: OperatorPair, lam: float, u: np.ndarray):
        u = np.asarray(u, dtype=np.float64).copy()
        mu = ops.m.matvec(u)
        nrm = float(np.sqrt(u @ mu))
        if nrm == 0.0:
            raise ValueError("initial vector is zero")
        u /= nrm
        mu /= nrm
        au = ops.a.matvec(u)
        u, mu, au = _sign_fix(u, mu, au)
        self.u, self.mu, self.au = u, mu, au
        self.lam = float(lam)
        self.w = u[:, None].copy()
        self.mw = mu[:, None].copy()
        self.aw = au[:, None].copy()
        self.h = np.array([[float(u @ au)]])
        # Ritz values can only be enforced against the previous Ritz value;
        # at j=0 that is Rq(u0), which may exceed an externally chosen shift
        # (the very first solve starts from the scratch-mesh eigenvalue).
        self.ritz_bound = float(u @ au)
        self.j = 0
        self.history = [self.lam]
        self.restarts = 0
        self.max_orth_defect = 0.0

    @property
    def basis_size(self):
        return self.w.shape[1]

    def dual_residual(self):
        """Dual vector of r = lam*u - A u, from cached products."""
        return self.lam * self.mu - self.au

    def _restart(self):
        self.w = self.u[:, None].copy()
        self.mw = self.mu[:, None].copy()
        self.aw = self.au[:, None].copy()
        self.h = np.array([[self.lam]])
        self.restarts += 1


def ritz_step(state: JDState, ops: OperatorPair, t: np.ndarray, mt=None,
              max_basis: int = 30) -> bool:
    """Expand the basis with t (b-orthonormalized, discarded if it collapses)
    and move the iterate to the smallest Ritz pair of the projected pencil.

    Returns whether the basis actually grew.  Raises if the Ritz value
    increases: subspaces only grow, so that would be a bug.
    """
    t = np.asarray(t, dtype=np.float64).copy()
    if mt is None:
        mt = ops.m.matvec(t)
    else:
        mt = np.asarray(mt, dtype=np.float64).copy()
    norm0 = float(np.sqrt(max(t @ mt, 0.0)))
    expanded = False
    if norm0 > 0.0:
        for _ in range(2):  # modified Gram-Schmidt, one reorthogonalization pass
            for i in range(state.basis_size):
                coef = float(state.mw[:, i] @ t)
                t -= coef * state.w[:, i]
                mt -= coef * state.mw[:, i]
        nrm = float(np.sqrt(max(t @ mt, 0.0)))
        if nrm >= 1e-12 * norm0:
            t /= nrm
            mt /= nrm
            defect = float(np.max(np.abs(state.mw.T @ t))) if state.basis_size else 0.0
            state.max_orth_defect = max(state.max_orth_defect, defect,
                                        abs(float(t @ mt) - 1.0))
            at = ops.a.matvec(t)
            hcol = state.w.T @ at
            k = state.basis_size
            h_new = np.empty((k + 1, k + 1))
            h_new[:k, :k] = state.h
            h_new[:k, k] = hcol
            h_new[k, :k] = hcol
            h_new[k, k] = float(t @ at)
            state.h = h_new
            state.w = np.column_stack([state.w, t])
            state.mw = np.column_stack([state.mw, mt])
            state.aw = np.column_stack([state.aw, at])
            expanded = True

    k = state.basis_size
    lams, xs = dense_geneig(state.h, np.eye(k), 1)
    lam_new = float(lams[0])
    x = xs[:, 0]
    u = state.w @ x
    mu = state.mw @ x
    au = state.aw @ x
    nrm = float(np.sqrt(u @ mu))
    u /= nrm
    mu /= nrm
    au /= nrm
    u, mu, au = _sign_fix(u, mu, au)
    if lam_new > state.ritz_bound + _RITZ_SLACK:
        raise AfemError(f"Ritz value increased: {state.ritz_bound!r} -> {lam_new!r}")
    state.u, state.mu, state.au = u, mu, au
    state.lam = lam_new
    state.ritz_bound = lam_new
    state.j += 1
    state.history.append(lam_new)
    if state.basis_size > max_basis:
        state._restart()
    return expanded


def jd_solve(h: Hierarchy, cd: CoarseData, init, cfg: SolverConfig = None):
    """Run the outer iteration at the finest level of the hierarchy.

    ``init`` is (lam, u) from the previous level, with u already prolongated
    to the finest level.  Returns (lam, u, JDStats); raises ConvergenceError
    with the lambda history when the iteration cap is hit.
    """
    cfg = cfg or SolverConfig()
    ops = h.finest.ops
    lam_init, u_init = init
    u_init = np.asarray(u_init, dtype=np.float64)
    if u_init.shape != (ops.n,):
        raise ValueError(f"initial vector has length {u_init.shape}, expected {ops.n}")
    t_start = time.perf_counter()
    state = JDState(ops, lam_init, u_init)
    max_defl = 0.0
    for j in range(1, cfg.max_iter + 1):
        d = state.dual_residual()
        t = precondition(h, cd, state.lam, d, cfg.gamma)
        mt = ops.m.matvec(t)
        coef = float(state.mu @ t)  # b(t, u): project onto the u-complement
        t -= coef * state.u
        mt -= coef * state.mu
        tnorm = float(np.sqrt(max(t @ mt, 0.0)))
        if tnorm > 0.0:
            max_defl = max(max_defl, abs(float(state.mu @ t)) / tnorm)
        prev = state.lam
        ritz_step(state, ops, t, mt=mt, max_basis=cfg.max_basis)
        stop = abs(state.lam - prev)
        if stop < cfg.tol:
            stats = JDStats(iterations=j, stop_value=stop, history=state.history,
                            restarts=state.restarts, max_deflation_defect=max_defl,
                            max_orth_defect=state.max_orth_defect,
                            solve_ms=1e3 * (time.perf_counter() - t_start))
            return state.lam, state.u, stats
    raise ConvergenceError(
        f"no convergence in {cfg.max_iter} iterations (last stop value "
        f"{abs(state.history[-1] - state.history[-2]):.3e})", history=state.history)
