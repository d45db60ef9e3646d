"""The AFEM loop (solve, estimate, mark, refine), problem catalog and output.

Level 0 is the coarse mesh with its densely solved eigenpair.  The next
level(s) are the uniformly refined scratch mesh from the coarse setup (its
eigenpair provides the shift bound and the first iteration input, matching
the shift ordering the preconditioner needs); all further levels are
adaptive and solved by the multilevel Jacobi-Davidson iteration.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .assembly import CoefficientField
from .errors import AfemError, ConfigurationError
from .estimators import estimate_robust, estimate_standard, mark
from .hierarchy import Hierarchy, push_level
from .mesh import make_initial_mesh, nvb_refine
from .solver import SolverConfig, coarse_setup, jd_solve

CSV_HEADER = "level,dof,iterations,stop,lambda,eta,solve_ms,cumulative_ms"


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    rho: CoefficientField
    divisions: int
    marking: str
    theta: float
    estimator: str
    solver: SolverConfig
    max_levels: int
    max_dof: int
    mu: float = 1.0
    singular_override: tuple = None


@dataclass(frozen=True)
class AfemRecord:
    level: int
    dof: int
    iterations: int
    stop_value: float
    lam: float
    eta: float
    solve_ms: float
    cumulative_ms: float


def problem_catalog(name: str, mu: float = None, **overrides) -> ProblemSpec:
    """Fully populated spec for one of the benchmark problems.

    Overrides: divisions, marking, theta, gamma, tol, max_iter, max_levels,
    max_dof.  ``mu`` is the coefficient jump of the four-quadrant problem.
    """
    base = {
        "square": dict(divisions=4, marking="dorfler", estimator="standard"),
        "lshape": dict(divisions=4, marking="maximum", estimator="standard"),
        "crack": dict(divisions=4, marking="maximum", estimator="standard"),
        "fourquadrant": dict(divisions=8, marking="maximum", estimator="robust"),
    }
    if name not in base:
        raise ConfigurationError(f"unknown problem {name!r}; expected one of {sorted(base)}")
    if mu is not None and name != "fourquadrant":
        raise ConfigurationError("--mu applies to the fourquadrant problem only")

    cfg = base[name]
    if name == "fourquadrant":
        mu = 100.0 if mu is None else float(mu)
        if mu < 1.0:
            raise ConfigurationError(f"mu must be >= 1; got {mu}")
        rho = CoefficientField({1: 1.0, 2: mu, 3: mu, 4: 1.0})
        singular = ((0.5, 0.5),)
    else:
        mu = 1.0
        rho = CoefficientField({0: 1.0})
        singular = None

    try:
        solver = SolverConfig(gamma=float(overrides.pop("gamma", 0.8)),
                              tol=float(overrides.pop("tol", 1e-10)),
                              max_iter=int(overrides.pop("max_iter", 50)))
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    spec = ProblemSpec(
        name=name,
        rho=rho,
        divisions=int(overrides.pop("divisions", cfg["divisions"])),
        marking=str(overrides.pop("marking", cfg["marking"])),
        theta=float(overrides.pop("theta", 0.5)),
        estimator=cfg["estimator"],
        solver=solver,
        max_levels=int(overrides.pop("max_levels", 60)),
        max_dof=int(overrides.pop("max_dof", 500_000)),
        mu=mu,
        singular_override=singular,
    )
    if overrides:
        raise ConfigurationError(f"unknown problem options: {sorted(overrides)}")
    if spec.marking not in ("dorfler", "maximum"):
        raise ConfigurationError(f"unknown marking strategy {spec.marking!r}")
    if spec.max_dof <= 0 or spec.max_levels < 1:
        raise ConfigurationError("max_dof and max_levels must be positive")
    return spec


def _estimate(spec: ProblemSpec, mesh, lam, u):
    if spec.estimator == "standard":
        return estimate_standard(mesh, lam, u, spec.rho)
    return estimate_robust(mesh, spec.rho, lam, u,
                           singular_override=spec.singular_override)


def run_afem(spec: ProblemSpec, observer=None):
    """Run the adaptive loop until max dof or max levels; one record per level.

    ``observer(level, hierarchy, lam, u, indicators, stats)`` is called after
    each recorded level (stats is None for the densely solved setup levels).
    """
    mesh0 = make_initial_mesh(spec.name, spec.divisions)
    h = Hierarchy.build(mesh0, spec.rho)
    cd = coarse_setup(h)

    records = []
    cum = 0.0

    def add_record(hier, lam, u, iterations, stop, solve_ms, stats):
        nonlocal cum
        mesh = hier.finest.mesh
        ind = _estimate(spec, mesh, lam, u)
        cum += solve_ms
        records.append(AfemRecord(len(records), mesh.n_interior, iterations,
                                  stop, lam, ind.total, solve_ms, cum))
        if observer is not None:
            observer(len(records) - 1, hier, lam, u, ind, stats)
        return ind

    ind = add_record(h, cd.lam_coarse, cd.u_coarse, 0, 0.0, cd.coarse_solve_ms, None)
    for i, (mesh_s, lam_s, u_s) in enumerate(cd.scratch_levels):
        h = push_level(h, mesh_s, spec.rho)
        last = i == len(cd.scratch_levels) - 1
        ind = add_record(h, lam_s, u_s, 0, 0.0, cd.scratch_solve_ms if last else 0.0, None)

    lam, u = cd.scratch_levels[-1][1], cd.scratch_levels[-1][2]
    try:
        while records[-1].dof < spec.max_dof and len(records) - 1 < spec.max_levels:
            marked = mark(ind, spec.marking, spec.theta)
            if marked.size == 0:
                break
            fine = nvb_refine(h.finest.mesh, marked)
            h = push_level(h, fine, spec.rho)
            u0 = h.finest.p_from_prev.apply(u)
            lam, u, stats = jd_solve(h, cd, (lam, u0), spec.solver)
            ind = add_record(h, lam, u, stats.iterations, stats.stop_value,
                             stats.solve_ms, stats)
    except AfemError as exc:
        exc.records = records  # partial records for the caller to flush
        raise
    return records


# -- outputs ----------------------------------------------------------------

def _format_record(r: AfemRecord) -> str:
    return (f"{r.level},{r.dof},{r.iterations},{r.stop_value:.16e},"
            f"{r.lam:.12f},{r.eta:.12e},{r.solve_ms:.12e},{r.cumulative_ms:.12e}")


def load_records(path):
    """Read back an afem.csv written by emit_outputs."""
    records = []
    with open(path) as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ConfigurationError(f"unexpected CSV header in {path}")
        for line in f:
            lv, dof, it, stop, lam, eta, sms, cms = line.strip().split(",")
            records.append(AfemRecord(int(lv), int(dof), int(it), float(stop),
                                      float(lam), float(eta), float(sms), float(cms)))
    return records


def _svg_loglog(path, xs, ys, xlabel, ylabel):
    """Minimal log-log polyline plot with decade ticks."""
    pts = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if not pts:
        raise ValueError("no positive data to plot")
    lx = [np.log10(p[0]) for p in pts]
    ly = [np.log10(p[1]) for p in pts]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ly), max(ly)
    x0, x1 = (x0 - 0.5, x1 + 0.5) if x0 == x1 else (x0, x1)
    y0, y1 = (y0 - 0.5, y1 + 0.5) if y0 == y1 else (y0, y1)
    w, hgt, ml, mb, mt, mr = 640, 480, 70, 50, 20, 20

    def px(v):
        return ml + (v - x0) / (x1 - x0) * (w - ml - mr)

    def py(v):
        return hgt - mb - (v - y0) / (y1 - y0) * (hgt - mb - mt)

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{hgt}">',
             f'<rect width="{w}" height="{hgt}" fill="white"/>',
             f'<line x1="{ml}" y1="{hgt - mb}" x2="{w - mr}" y2="{hgt - mb}" stroke="black"/>',
             f'<line x1="{ml}" y1="{hgt - mb}" x2="{ml}" y2="{mt}" stroke="black"/>']
    for d in range(int(np.floor(x0)), int(np.ceil(x1)) + 1):
        if x0 <= d <= x1:
            lines.append(f'<line x1="{px(d):.1f}" y1="{hgt - mb}" x2="{px(d):.1f}" '
                         f'y2="{hgt - mb + 5}" stroke="black"/>')
            lines.append(f'<text x="{px(d):.1f}" y="{hgt - mb + 18}" font-size="11" '
                         f'text-anchor="middle">1e{d}</text>')
    for d in range(int(np.floor(y0)), int(np.ceil(y1)) + 1):
        if y0 <= d <= y1:
            lines.append(f'<line x1="{ml - 5}" y1="{py(d):.1f}" x2="{ml}" '
                         f'y2="{py(d):.1f}" stroke="black"/>')
            lines.append(f'<text x="{ml - 8}" y="{py(d) + 4:.1f}" font-size="11" '
                         f'text-anchor="end">1e{d}</text>')
    path_d = " ".join(f"{'M' if i == 0 else 'L'} {px(a):.2f} {py(b):.2f}"
                      for i, (a, b) in enumerate(zip(lx, ly)))
    lines.append(f'<path d="{path_d}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
    for a, b in zip(lx, ly):
        lines.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="steelblue"/>')
    lines.append(f'<text x="{(ml + w - mr) / 2}" y="{hgt - 8}" font-size="13" '
                 f'text-anchor="middle">{xlabel}</text>')
    lines.append(f'<text x="14" y="{(mt + hgt - mb) / 2}" font-size="13" '
                 f'text-anchor="middle" transform="rotate(-90 14 {(mt + hgt - mb) / 2})">'
                 f'{ylabel}</text>')
    lines.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def emit_outputs(records, out_dir, formats=("csv",)):
    """Write afem.csv (canonical) and optionally the two SVG convenience
    plots; returns the list of written paths."""
    if not records:
        raise ValueError("no records to emit")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    formats = set(formats)
    unknown = formats - {"csv", "svg"}
    if unknown:
        raise ConfigurationError(f"unknown output formats: {sorted(unknown)}")
    if "csv" in formats:
        path = os.path.join(out_dir, "afem.csv")
        with open(path, "w") as f:
            f.write(CSV_HEADER + "\n")
            for r in records:
                f.write(_format_record(r) + "\n")
        written.append(path)
    if "svg" in formats:
        dofs = [r.dof for r in records]
        path = os.path.join(out_dir, "estimator.svg")
        _svg_loglog(path, dofs, [r.eta for r in records], "dof", "estimator eta")
        written.append(path)
        path = os.path.join(out_dir, "cputime.svg")
        _svg_loglog(path, dofs, [r.cumulative_ms for r in records],
                    "dof", "cumulative solve time (ms)")
        written.append(path)
    return written


def dump_matrixmarket(matrix, path, comment=""):
    """Write a SparseMatrix in MatrixMarket coordinate symmetric format
    (lower triangle, 1-based)."""
    entries = []
    for i in range(matrix.n):
        lo, hi = matrix.indptr[i], matrix.indptr[i + 1]
        for k in range(lo, hi):
            j = matrix.indices[k]
            if j <= i:
                entries.append((i + 1, j + 1, matrix.data[k]))
    with open(path, "w") as f:
        f.write("%%MatrixMarket matrix coordinate real symmetric\n")
        if comment:
            f.write(f"% {comment}\n")
        f.write(f"{matrix.n} {matrix.n} {len(entries)}\n")
        for i, j, v in entries:
            f.write(f"{i} {j} {v:.17g}\n")


def dump_indicators(ind, path):
    """CSV dump of local indicators: element_or_edge_id, value."""
    with open(path, "w") as f:
        f.write("element_or_edge_id,value\n")
        for i, v in enumerate(ind.values):
            f.write(f"{i},{v:.12e}\n")
