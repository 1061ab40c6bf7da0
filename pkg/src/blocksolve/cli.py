"""Benchmark harness: load or generate systems, solve, emit result lines.

Per solve one line is printed::

    time_s, iterations, reduction | groups, fallback

and the run ends with a summary in the shape ``A (B+C+D), -, -, H | I, J``
where A is total wall time, B summed setup time (analysis + decomposition
+ well folding), C summed Krylov time, D the remainder, H summed linear
iterations, I the largest group (color/level) count seen, and J the number
of solves the configured backend failed so the reference solver ran
instead.  The dashed fields belong to a full simulator (linearizations,
nonlinear iterations) and are not produced by this tool.  The exit code is
0 iff J is 0.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .blockcore import lane_usage
from .bridge import Backend, SolverConfig, solve_with_fallback
from .errors import BlockSolveError, SolveFailed
from .io import GeneratorSpec, SystemBundle, generate, read_system
from .krylov import StoppingCriteria
from .wells import WellMode


@dataclass
class RunSummary:
    """Aggregated counters for one benchmark run."""

    total_time: float = 0.0
    solve_time: float = 0.0
    setup_time: float = 0.0
    linear_iterations: float = 0.0
    group_count: int = 0
    failed_solves: int = 0


@dataclass
class _SolveRow:
    system: str
    repeat: int
    time_s: float
    setup_s: float
    krylov_s: float
    iterations: float
    reduction: float
    groups: int
    fallback: bool
    converged: bool

    def line(self) -> str:
        return (f"{self.time_s:.4f}, {self.iterations:g}, "
                f"{self.reduction:.3e} | {self.groups}, {int(self.fallback)}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="blocksolve",
        description="Benchmark the blocked ILU0-BiCGStab solver stack on "
                    "Matrix Market systems or generated reservoir-like grids.")
    src = p.add_argument_group("input")
    src.add_argument("--input", action="append", default=[], metavar="PATH",
                     help="system matrix file (repeatable); companions "
                          "<stem>_b.mtx and <stem>_wells.txt are picked up")
    src.add_argument("--generate", metavar="NX,NY,NZ",
                     help="synthesize a 7-point-stencil system instead")
    src.add_argument("--block-size", type=int, default=3, metavar="B",
                     help="block size for --generate (default 3)")
    src.add_argument("--wells-count", type=int, default=0, metavar="W",
                     help="number of generated wells (default 0)")
    src.add_argument("--well-kind", choices=["standard", "multisegment"],
                     default="standard", help="generated well type")
    src.add_argument("--seed", type=int, default=0, help="generator seed")

    solve = p.add_argument_group("solver")
    solve.add_argument("--backend", choices=[m.value for m in Backend],
                       default=Backend.LEVEL_SCHEDULED.value)
    solve.add_argument("--jacobi-blocks", type=int, default=0, metavar="K",
                       help="preconditioner partitions, 0 disables (e.g. 150)")
    solve.add_argument("--wells", choices=[m.value for m in WellMode],
                       default=WellMode.SEPARATE.value,
                       help="fold well terms into the matrix or apply them "
                            "after each spmv")
    solve.add_argument("--tol", type=float, default=0.01, metavar="R",
                       help="relative residual reduction (default 0.01)")
    solve.add_argument("--max-iter", type=int, default=200, metavar="N",
                       help="linear iteration budget (default 200)")

    out = p.add_argument_group("run")
    out.add_argument("--repeat", type=int, default=1, metavar="N",
                     help="solve each system N times")
    out.add_argument("--parallel", action="store_true",
                     help="solve independent systems concurrently")
    out.add_argument("--csv", metavar="PATH", help="also write rows as CSV")
    return p


def _load_systems(args) -> list[SystemBundle]:
    bundles = [read_system(path) for path in args.input]
    if args.generate:
        try:
            nx, ny, nz = (int(t) for t in args.generate.split(","))
        except ValueError:
            raise BlockSolveError(f"--generate wants NX,NY,NZ, got {args.generate!r}")
        spec = GeneratorSpec(nx, ny, nz, block_size=args.block_size,
                             well_count=args.wells_count,
                             well_kind=args.well_kind, seed=args.seed)
        bundles.append(generate(spec))
    return bundles


def _solve_bundle(bundle: SystemBundle, cfg: SolverConfig,
                  repeat: int) -> list[_SolveRow]:
    rows = []
    for rep in range(repeat):
        t0 = time.perf_counter()
        try:
            _, report = solve_with_fallback(cfg, bundle.a, bundle.rhs, bundle.wells)
        except SolveFailed as exc:
            report = exc.fallback_report
        wall = time.perf_counter() - t0
        reduction = (report.final_norm / report.initial_norm
                     if report.initial_norm > 0 else 0.0)
        rows.append(_SolveRow(bundle.meta.name, rep, wall, report.setup_elapsed,
                              report.elapsed, report.iterations, reduction,
                              report.group_count, report.fallback_used,
                              report.converged))
    return rows


def run_benchmark(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.input and not args.generate:
        parser.error("need --input or --generate")
    if args.repeat < 1:
        parser.error("--repeat must be >= 1")

    t_run = time.perf_counter()
    try:
        bundles = _load_systems(args)
        stop = StoppingCriteria(args.tol, args.max_iter)
    except (OSError, BlockSolveError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    cfg = SolverConfig(backend=Backend.from_name(args.backend),
                       jacobi_partitions=args.jacobi_blocks,
                       well_mode=WellMode(args.wells), stop=stop)

    print(f"# config backend={args.backend} wells={args.wells} "
          f"jacobi-blocks={args.jacobi_blocks} tol={args.tol} "
          f"max-iter={args.max_iter} seed={args.seed} repeat={args.repeat}")
    for bundle in bundles:
        usage = lane_usage(bundle.a.block_size)
        nwells = len(bundle.wells.standard) + len(bundle.wells.multisegment)
        print(f"# system {bundle.meta.name}: block-rows={bundle.a.num_block_rows} "
              f"block-size={bundle.a.block_size} "
              f"nnz-blocks={bundle.a.pattern.num_blocks} wells={nwells} "
              f"idle-lanes={usage.idle_lanes}")

    try:
        if args.parallel and len(bundles) > 1:
            with ThreadPoolExecutor(max_workers=min(4, len(bundles))) as pool:
                per_bundle = list(pool.map(
                    lambda bd: _solve_bundle(bd, cfg, args.repeat), bundles))
        else:
            per_bundle = [_solve_bundle(bd, cfg, args.repeat) for bd in bundles]
    except BlockSolveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    summary = RunSummary()
    rows = [row for bundle_rows in per_bundle for row in bundle_rows]
    for row in rows:
        print(row.line())
        summary.setup_time += row.setup_s
        summary.solve_time += row.krylov_s
        summary.linear_iterations += row.iterations
        summary.group_count = max(summary.group_count, row.groups)
        if row.fallback or not row.converged:
            summary.failed_solves += 1
    # concurrent solves can compress wall time below the summed components;
    # keep the total >= setup + solve contract by reporting busy time then
    summary.total_time = max(time.perf_counter() - t_run,
                             summary.setup_time + summary.solve_time)
    rest = summary.total_time - summary.setup_time - summary.solve_time
    print(f"summary: {summary.total_time:.3f} ({summary.setup_time:.3f}"
          f"+{summary.solve_time:.3f}+{rest:.3f}), -, -, "
          f"{summary.linear_iterations:g} | {summary.group_count}, "
          f"{summary.failed_solves}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["system", "repeat", "time_s", "iterations",
                             "reduction", "groups", "fallback", "converged"])
            for row in rows:
                writer.writerow([row.system, row.repeat, f"{row.time_s:.6f}",
                                 row.iterations, row.reduction, row.groups,
                                 int(row.fallback), int(row.converged)])
    return 0 if summary.failed_solves == 0 else 1


def main() -> None:
    sys.exit(run_benchmark())


if __name__ == "__main__":
    main()
