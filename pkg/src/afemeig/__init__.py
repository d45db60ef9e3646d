"""Adaptive FEM eigensolver for -div(rho grad u) = lambda u on 2D domains,
with a local multilevel preconditioned Jacobi-Davidson solve step."""

from .assembly import (CoefficientField, OperatorPair, Prolongation, assemble,
                       build_prolongation, rayleigh_quotient)
from .driver import (AfemRecord, ProblemSpec, emit_outputs, load_records,
                     problem_catalog, run_afem)
from .errors import (AfemError, AssemblyError, CoarseSetupError,
                     ConfigurationError, ConvergenceError, LineageError,
                     NumericalError, ShiftValidityError)
from .estimators import (Indicators, estimate_robust, estimate_standard, mark,
                         singular_vertices)
from .hierarchy import Hierarchy, Level, push_level, restrict_dual
from .kernels import backend_name
from .linalg import SparseMatrix, dense_geneig, solve_spd, spmv
from .mesh import (ConformityReport, Mesh, conformity_check, dump_mesh,
                   load_mesh, make_initial_mesh, nvb_refine, uniform_refine)
from .solver import (CoarseData, JDState, JDStats, SolverConfig,
                     coarse_correction, coarse_setup, jd_solve, precondition,
                     ritz_step, smoother_apply)

__version__ = "0.1.0"
