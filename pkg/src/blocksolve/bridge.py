"""Backend registry, solve orchestration, and the reference fallback.

The bridge assembles the operator (folding wells when coupled), builds the
preconditioner matrix (optionally Jacobi-relaxed), extracts parallelism
per the configured backend, and solves.  When the configured backend does
not converge, the reference solver (sequential ILU0 on the full matrix,
fresh decomposition, clean start) is run on the same system.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

from .analysis import ParallelPlan, graph_color, level_schedule, sequential_plan
from .blockcore import BlockMatrix, BlockVector
from .errors import SingularPivot, SolveFailed
from .ilu0 import decompose
from .jacobi import drop_cross_blocks, partition, transmissibility_weights
from .krylov import (DEFAULT_MAX_ITERATIONS, MatrixOperator, SolveReport,
                     StoppingCriteria, WellAugmentedOperator, bicgstab)
from .wells import WellMode, WellSet, fold_into_matrix


class Backend(enum.Enum):
    REFERENCE_SEQUENTIAL = "reference"
    LEVEL_SCHEDULED = "level"
    GRAPH_COLORED = "color"

    @classmethod
    def from_name(cls, name: str) -> "Backend":
        for member in cls:
            if member.value == name:
                return member
        raise ValueError(f"unknown backend {name!r}; "
                         f"choose from {[m.value for m in cls]}")


@dataclass(frozen=True)
class SolverConfig:
    """Validated solve configuration.

    ``jacobi_partitions`` of 0 disables the relaxed preconditioner.  All
    built-in backends support separate well application.
    """

    backend: Backend = Backend.LEVEL_SCHEDULED
    jacobi_partitions: int = 0
    well_mode: WellMode = WellMode.SEPARATE
    stop: StoppingCriteria = field(default_factory=StoppingCriteria)

    def __post_init__(self):
        if self.jacobi_partitions < 0:
            raise ValueError("jacobi_partitions must be >= 0")


def _plan_for(backend: Backend, pattern) -> ParallelPlan:
    if backend is Backend.LEVEL_SCHEDULED:
        return level_schedule(pattern)
    if backend is Backend.GRAPH_COLORED:
        return graph_color(pattern)
    return sequential_plan(pattern.num_block_rows)


def _failed_report(reason: str) -> SolveReport:
    return SolveReport(False, 0.0, float("nan"), float("nan"), 0.0, 0,
                       failure_reason=reason)


def solve_with_fallback(cfg: SolverConfig, a: BlockMatrix, b: BlockVector,
                        wells: WellSet | None = None,
                        x0: BlockVector | None = None
                        ) -> tuple[BlockVector, SolveReport]:
    """Run the configured backend; rerun the reference solver on failure.

    The fallback recomputes its own sequential ILU0 of the full (folded)
    matrix, starts clean from x0, and restores at least the default
    iteration budget.  ``SolveReport.fallback_used`` records the event;
    elapsed/setup times accumulate over both attempts.  Raises
    :class:`SolveFailed` when the reference solver fails too.
    """
    if wells is None:
        wells = WellSet()

    t0 = time.perf_counter()
    if cfg.well_mode is WellMode.COUPLED and not wells.is_empty:
        a_sys = fold_into_matrix(a, wells)
        op = MatrixOperator(a_sys)
    else:
        a_sys = a.as_block_row_major()
        if wells.is_empty:
            op = MatrixOperator(a_sys)
        else:
            # the config governs the treatment, whatever the set was marked as
            separate = WellSet(wells.standard, wells.multisegment,
                               WellMode.SEPARATE)
            op = WellAugmentedOperator(a_sys, separate)

    primary_report = None
    x = None
    try:
        precond_src = a_sys
        if cfg.jacobi_partitions > 0:
            weights = transmissibility_weights(a_sys)
            parts = partition(a_sys.pattern, weights, cfg.jacobi_partitions)
            precond_src, _ = drop_cross_blocks(a_sys, parts)
        plan = _plan_for(cfg.backend, precond_src.pattern)
        fact = decompose(precond_src, plan)
        setup = time.perf_counter() - t0
        x, primary_report = bicgstab(op, fact, b, x0=x0, stop=cfg.stop)
        primary_report.setup_elapsed = setup
    except SingularPivot as exc:
        primary_report = _failed_report(f"singular pivot in row {exc.row}")
        primary_report.setup_elapsed = time.perf_counter() - t0

    if primary_report.converged:
        return x, primary_report

    fb_t0 = time.perf_counter()
    fb_stop = StoppingCriteria(cfg.stop.relative_reduction,
                               max(cfg.stop.max_iterations, DEFAULT_MAX_ITERATIONS))
    try:
        fb_fact = decompose(a_sys, sequential_plan(a_sys.num_block_rows))
    except SingularPivot as exc:
        fb_report = _failed_report(f"singular pivot in row {exc.row}")
        fb_report.fallback_used = True
        raise SolveFailed(primary_report, fb_report)
    fb_setup = time.perf_counter() - fb_t0
    x, report = bicgstab(op, fb_fact, b, x0=x0, stop=fb_stop)
    report.fallback_used = True
    report.setup_elapsed = primary_report.setup_elapsed + fb_setup
    report.elapsed += primary_report.elapsed
    if not report.converged:
        raise SolveFailed(primary_report, report)
    return x, report
