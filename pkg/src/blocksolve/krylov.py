"""Right-preconditioned BiCGStab with deterministic reductions.

Inner products are computed as partial sums over fixed 64-element chunks
(one per SIMD wavefront) followed by a strictly sequential accumulation of
the partials, so the result does not depend on how many workers execute
the elementwise part.  The monitored residual is the true residual of
A x = b (right preconditioning), and the iteration counter advances in
half steps so a solve can exit after the first substep.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .blockcore import BlockMatrix, BlockVector, spmv_array
from .errors import ShapeError
from .ilu0 import Ilu0Factorization
from .wells import WellSet

REDUCTION_CHUNK = 64          # wavefront width
DEFAULT_REDUCTION = 0.01
DEFAULT_MAX_ITERATIONS = 200
_BREAKDOWN_FLOOR = 1e-60


def dot_partials(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-chunk partial sums of a*b over consecutive 64-element chunks."""
    prod = a * b
    if prod.size == 0:
        return np.zeros(0)
    starts = np.arange(0, prod.size, REDUCTION_CHUNK)
    return np.add.reduceat(prod, starts)


def dot_arrays(a: np.ndarray, b: np.ndarray) -> float:
    partials = dot_partials(a, b)
    if partials.size == 0:
        return 0.0
    # cumsum accumulates strictly left to right: the sequential final pass
    return float(np.cumsum(partials)[-1])


def norm_array(a: np.ndarray) -> float:
    return float(np.sqrt(dot_arrays(a, a)))


def dot(a: BlockVector, b: BlockVector) -> float:
    """Deterministic chunked inner product of two block vectors."""
    if a.data.size != b.data.size:
        raise ShapeError("vectors have different lengths")
    return dot_arrays(a.data, b.data)


def norm(a: BlockVector) -> float:
    """2-norm built on the chunked dot."""
    return float(np.sqrt(dot(a, a)))


class MatrixOperator:
    """Plain blocked spmv operator."""

    def __init__(self, a: BlockMatrix):
        self.matrix = a.as_block_row_major()

    @property
    def block_size(self) -> int:
        return self.matrix.block_size

    @property
    def num_blocks(self) -> int:
        return self.matrix.num_block_rows

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        return spmv_array(self.matrix, x)

    def apply(self, x: BlockVector) -> BlockVector:
        return BlockVector(self.apply_array(x.data), self.block_size)


class WellAugmentedOperator(MatrixOperator):
    """spmv followed by subtraction of every well's C^T (D^-1 (B x)) term."""

    def __init__(self, a: BlockMatrix, wells: WellSet):
        super().__init__(a)
        self.wells = wells

    def apply_array(self, x: np.ndarray) -> np.ndarray:
        y = spmv_array(self.matrix, x)
        self.wells.apply_contributions_array(x, y, self.block_size)
        return y


@dataclass(frozen=True)
class StoppingCriteria:
    """Relative residual-reduction target and iteration budget."""

    relative_reduction: float = DEFAULT_REDUCTION
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if not 0.0 < self.relative_reduction < 1.0:
            raise ValueError("relative_reduction must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class SolveReport:
    """Outcome of one linear solve.

    ``iterations`` counts half steps as 0.5.  ``failure_reason`` is None on
    success, else one of "budget", "breakdown", "numerical".
    ``setup_elapsed`` is filled in by the bridge (analysis + decomposition
    + well folding); ``elapsed`` covers the Krylov loop.
    """

    converged: bool
    iterations: float
    initial_norm: float
    final_norm: float
    elapsed: float
    group_count: int
    fallback_used: bool = False
    failure_reason: str | None = None
    setup_elapsed: float = 0.0


def _as_precond(precond) -> Callable[[np.ndarray], np.ndarray]:
    if precond is None:
        return lambda r: r
    if isinstance(precond, Ilu0Factorization):
        return precond.apply_array
    return precond


def bicgstab(op, precond, b: BlockVector, x0: BlockVector | None = None,
             stop: StoppingCriteria | None = None) -> tuple[BlockVector, SolveReport]:
    """Solve op(x) = b with right-preconditioned BiCGStab.

    Parameters
    ----------
    op : MatrixOperator or WellAugmentedOperator
        The linear operator (full matrix, possibly well-augmented).
    precond : Ilu0Factorization, callable, or None
        Applied as M^-1 on the right; may be built from a relaxed matrix.
    b, x0 : BlockVector
        Right-hand side and starting guess (zero when omitted).
    stop : StoppingCriteria
        Convergence is ||r||_2 <= relative_reduction * ||r0||_2.

    Returns the solution and a :class:`SolveReport`; breakdown and
    non-finite arithmetic are reported as not-converged, never raised.
    """
    if stop is None:
        stop = StoppingCriteria()
    if b.block_size != op.block_size or b.num_blocks != op.num_blocks:
        raise ShapeError("right-hand side does not match the operator")
    if x0 is None:
        x0 = BlockVector.zeros(op.num_blocks, op.block_size)
    elif x0.block_size != b.block_size or x0.num_blocks != b.num_blocks:
        raise ShapeError("initial guess does not match the right-hand side")

    apply_m = _as_precond(precond)
    groups = precond.plan.group_count if isinstance(precond, Ilu0Factorization) else 0
    t_start = time.perf_counter()

    x = x0.data.copy()
    r = b.data - op.apply_array(x)
    norm0 = norm_array(r)
    target = stop.relative_reduction * norm0

    def report(converged, its, final, reason=None):
        return SolveReport(converged, its, norm0, final,
                           time.perf_counter() - t_start, groups,
                           failure_reason=reason)

    if not np.isfinite(norm0):
        return BlockVector(x0.data.copy(), b.block_size), report(False, 0.0, norm0, "numerical")
    if norm0 <= target or norm0 == 0.0:
        return BlockVector(x, b.block_size), report(True, 0.0, norm0)

    rhat = r.copy()
    rho_prev = 1.0
    alpha = 1.0
    omega = 1.0
    v = np.zeros_like(r)
    p = np.zeros_like(r)
    its = 0.0
    reason = "budget"

    for k in range(stop.max_iterations):
        rho = dot_arrays(rhat, r)
        if abs(rho) < _BREAKDOWN_FLOOR:
            reason = "breakdown"
            break
        if k == 0:
            p[:] = r
        else:
            beta = (rho / rho_prev) * (alpha / omega)
            p = r + beta * (p - omega * v)
        phat = apply_m(p)
        v = op.apply_array(phat)
        gamma = dot_arrays(rhat, v)
        if abs(gamma) < _BREAKDOWN_FLOOR:
            reason = "breakdown"
            break
        alpha = rho / gamma
        s = r - alpha * v
        x += alpha * phat
        its += 0.5
        norm_s = norm_array(s)
        if not np.isfinite(norm_s):
            reason = "numerical"
            break
        if norm_s <= target:
            return BlockVector(x, b.block_size), report(True, its, norm_s)
        shat = apply_m(s)
        t = op.apply_array(shat)
        tt = dot_arrays(t, t)
        if tt < _BREAKDOWN_FLOOR:
            reason = "breakdown"
            break
        omega = dot_arrays(t, s) / tt
        if abs(omega) < _BREAKDOWN_FLOOR:
            reason = "breakdown"
            break
        x += omega * shat
        r = s - omega * t
        its += 0.5
        norm_r = norm_array(r)
        if not np.isfinite(norm_r):
            reason = "numerical"
            break
        if norm_r <= target:
            return BlockVector(x, b.block_size), report(True, its, norm_r)
        rho_prev = rho

    final = norm_array(b.data - op.apply_array(x))
    out = x if np.all(np.isfinite(x)) else x0.data.copy()
    return BlockVector(out, b.block_size), report(False, its, final, reason)
