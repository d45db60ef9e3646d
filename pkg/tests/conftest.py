"""Shared fixtures and dense oracle helpers."""

import numpy as np
import pytest

from afemeig import CoefficientField, dense_geneig, make_initial_mesh, nvb_refine
from afemeig.hierarchy import Hierarchy, push_level
from afemeig.solver import coarse_setup, precondition

UNIT_RHO = CoefficientField({0: 1.0})


@pytest.fixture
def unit_rho():
    return UNIT_RHO


def build_hierarchy(domain="square", divisions=3, rounds=2, seed=0, frac=3,
                    rho=UNIT_RHO):
    """Small hierarchy refined by random marking; returns (hierarchy, coarse data)."""
    rng = np.random.RandomState(seed)
    mesh = make_initial_mesh(domain, divisions)
    h = Hierarchy.build(mesh, rho)
    cd = coarse_setup(h)
    for _ in range(rounds):
        mesh = nvb_refine(mesh, rng.choice(mesh.n_triangles,
                                           size=max(1, mesh.n_triangles // frac),
                                           replace=False))
        h = push_level(h, mesh, rho)
    return h, cd


def dense_prolongation_chains(h):
    """P_{l->L} as dense matrices for every level l."""
    n_fine = h.finest.n
    chains = [None] * h.n_levels
    chains[-1] = np.eye(n_fine)
    for l in range(h.n_levels - 2, -1, -1):
        chains[l] = chains[l + 1] @ h.levels[l + 1].p_from_prev.to_dense()
    return chains


def dense_error_propagator(h, cd, lam, gamma):
    """E = (I - K_L)...(I - K_0) built densely from first principles."""
    n = h.finest.n
    a = h.finest.ops.a.to_dense()
    m = h.finest.ops.m.to_dense()
    shifted = a - lam * m
    chains = dense_prolongation_chains(h)

    a0 = h.levels[0].ops.a.to_dense()
    m0 = h.levels[0].ops.m.to_dense()
    u0 = cd.u_coarse
    t0 = np.linalg.solve(a0 - lam * m0,
                         np.eye(h.levels[0].n) - np.outer(m0 @ u0, u0))
    ks = [chains[0] @ t0 @ chains[0].T @ shifted]
    for l in range(1, h.n_levels):
        lv = h.levels[l]
        s = np.zeros((lv.n, lv.n))
        idx = lv.smoothing_set
        s[idx, idx] = gamma / (lv.diag_a[idx] - lam * lv.diag_m[idx])
        ks.append(chains[l] @ s @ chains[l].T @ shifted)

    e = np.eye(n)
    for k in ks:
        e = (np.eye(n) - k) @ e
    return e


def applied_preconditioner_matrix(h, cd, lam, gamma):
    """The implemented preconditioner as a dense map from dual vectors."""
    n = h.finest.n
    b = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        b[:, i] = precondition(h, cd, lam, e, gamma)
    return b


def safe_shift(h, cd):
    """A shift strictly between the fine principal eigenvalue and the next
    spectral barrier, well separated from both."""
    lams, _ = dense_geneig(h.finest.ops.a.to_dense(), h.finest.ops.m.to_dense(), 2)
    hi = min(lams[1], cd.lam_coarse)
    return float(lams[0] + 0.5 * (hi - lams[0]))
