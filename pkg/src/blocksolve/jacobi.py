"""Block-Jacobi relaxation of the preconditioner matrix.

The cell graph is split into user-count partitions by greedy region
growing along the heaviest edges (transmissibility proxy), cross-partition
blocks are dropped from a copy used only for the ILU0 decomposition, and a
copy plan maps the surviving blocks back to the full matrix so values can
be refreshed in one pass.  The solver itself keeps the full matrix.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .blockcore import BlockMatrix, Layout, SparsityPattern
from .errors import PlanInvalidated, TooManyPartitions


@dataclass(frozen=True)
class Partitioning:
    num_partitions: int
    cell_partition: np.ndarray
    edge_cut_weight: float


@dataclass(frozen=True)
class CopyPlan:
    """For each retained block, its position in the full nonzero array."""

    indices: np.ndarray


def _sym_edges(p: SparsityPattern):
    """Undirected off-diagonal edges (i < j) of the pattern."""
    rows = np.repeat(np.arange(p.num_block_rows, dtype=np.int64),
                     np.diff(p.row_pointers))
    cols = p.column_indices
    off = rows != cols
    lo = np.minimum(rows[off], cols[off])
    hi = np.maximum(rows[off], cols[off])
    return set(zip(lo.tolist(), hi.tolist()))


def transmissibility_weights(a: BlockMatrix) -> dict[tuple[int, int], float]:
    """Frobenius-norm proxy for coupling strength of each undirected edge."""
    a = a.as_block_row_major()
    vals3 = a.values3d
    norms = np.sqrt(np.sum(vals3 * vals3, axis=(1, 2)))
    weights: dict[tuple[int, int], float] = {}
    k = 0
    for i, j in a.pattern:
        if i != j:
            key = (min(i, j), max(i, j))
            weights[key] = weights.get(key, 0.0) + float(norms[k])
        k += 1
    return weights


def partition(p: SparsityPattern, weights: dict[tuple[int, int], float],
              k: int) -> Partitioning:
    """Grow k balanced partitions, always taking the heaviest frontier edge.

    Sizes differ by at most one; seeds are the lowest-index unassigned
    cells, and weight ties fall back to the lower cell index, so the result
    is deterministic.  Raises :class:`TooManyPartitions` when k > Nb.
    """
    n = p.num_block_rows
    if k < 1:
        raise ValueError("need at least one partition")
    if k > n:
        raise TooManyPartitions(f"{k} partitions for {n} rows")
    edges = _sym_edges(p)
    missing = [e for e in edges if e not in weights]
    if missing:
        raise ValueError(f"no weight for edge {missing[0]}")
    adjacency: dict[int, list[tuple[int, float]]] = {i: [] for i in range(n)}
    for (i, j) in edges:
        w = float(weights[(i, j)])
        adjacency[i].append((j, w))
        adjacency[j].append((i, w))

    assignment = np.full(n, -1, dtype=np.int64)
    base, rem = divmod(n, k)
    next_seed = 0
    for part in range(k):
        target = base + (1 if part < rem else 0)
        size = 0
        frontier: list[tuple[float, int]] = []
        while size < target:
            if not frontier:
                while assignment[next_seed] >= 0:
                    next_seed += 1
                cell = next_seed
            else:
                _, cell = heapq.heappop(frontier)
                if assignment[cell] >= 0:
                    continue
            assignment[cell] = part
            size += 1
            for nbr, w in adjacency[cell]:
                if assignment[nbr] < 0:
                    heapq.heappush(frontier, (-w, nbr))

    cut = sum(float(weights[(i, j)]) for (i, j) in edges
              if assignment[i] != assignment[j])
    return Partitioning(k, assignment, cut)


def drop_cross_blocks(a: BlockMatrix, part: Partitioning) -> tuple[BlockMatrix, CopyPlan]:
    """Copy of A without blocks that couple two different partitions.

    The diagonal always survives.  The returned plan lists, per retained
    block, its slot in the full nonzero array; the value buffer keeps
    full-nnz capacity (the retained prefix is the live view).
    """
    a = a.as_block_row_major()
    n = a.num_block_rows
    if len(part.cell_partition) != n:
        raise PlanInvalidated("partitioning does not cover the matrix")
    b = a.block_size
    rp = a.pattern.row_pointers
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(rp))
    cols = a.pattern.column_indices
    keep = part.cell_partition[rows] == part.cell_partition[cols]
    indices = np.flatnonzero(keep).astype(np.int64)

    new_rp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows[keep], minlength=n), out=new_rp[1:])
    pattern = SparsityPattern(n, new_rp, cols[keep])
    capacity = np.empty(a.pattern.num_blocks * b * b)
    values = capacity[:len(indices) * b * b]
    values.reshape(len(indices), b, b)[:] = a.values3d[indices]
    jac = BlockMatrix(pattern, b, values, Layout.BLOCK_ROW_MAJOR)
    return jac, CopyPlan(indices)


def refresh_values(full: BlockMatrix, jac: BlockMatrix, plan: CopyPlan) -> None:
    """Re-copy retained blocks from the full matrix in one indexed pass."""
    if full.block_size != jac.block_size:
        raise PlanInvalidated("block sizes differ")
    if len(plan.indices) != jac.pattern.num_blocks:
        raise PlanInvalidated("plan length does not match the relaxed matrix")
    if len(plan.indices) and plan.indices.max() >= full.pattern.num_blocks:
        raise PlanInvalidated("plan points outside the full matrix")
    jac.values3d[:] = full.as_block_row_major().values3d[plan.indices]
