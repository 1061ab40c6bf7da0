"""Blocked sparse ILU0-BiCGStab solver library with a benchmark CLI."""

from .analysis import (ParallelPlan, Strategy, apply_permutation,
                       apply_permutation_vec, graph_color, level_schedule,
                       sequential_plan)
from .blockcore import (BlockMatrix, BlockVector, BlockView, LaneUsage, Layout,
                        SparsityPattern, convert_layout, extract_pattern,
                        lane_usage, residual, spmv)
from .bridge import Backend, SolverConfig, solve_with_fallback
from .errors import (BlockingError, BlockSolveError, DuplicateEntry,
                     IndexOutOfRange, MissingDiagonal, ParseError,
                     PlanInvalidated, ShapeError, SingularPivot,
                     SingularWellMatrix, SolveFailed, TooManyPartitions)
from .ilu0 import Ilu0Factorization, decompose
from .io import (BundleMeta, GeneratorSpec, SystemBundle, generate,
                 read_system, write_system)
from .jacobi import (CopyPlan, Partitioning, drop_cross_blocks, partition,
                     refresh_values, transmissibility_weights)
from .krylov import (MatrixOperator, SolveReport, StoppingCriteria,
                     WellAugmentedOperator, bicgstab, dot, norm)
from .wells import (MultisegmentWell, StandardWell, WellMode, WellSet,
                    apply_multisegment, apply_standard, fold_into_matrix)

__version__ = "0.1.0"
