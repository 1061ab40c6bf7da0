"""Parallelism extraction: level scheduling, graph coloring, row reordering.

Both analyses produce a :class:`ParallelPlan` assigning every block row to a
group.  Rows inside one group carry no (direct) dependency on each other and
may execute concurrently; groups run in ascending order.  Level scheduling
also respects indirect dependencies, so grouped execution reproduces the
sequential factorization bit for bit; coloring is more aggressive and does
not.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .blockcore import BlockMatrix, BlockVector, Layout, SparsityPattern
from .errors import MissingDiagonal, ShapeError


class Strategy(enum.Enum):
    SEQUENTIAL = "sequential"
    LEVEL_SCHEDULING = "level-scheduling"
    GRAPH_COLORING = "graph-coloring"


@dataclass(frozen=True)
class ParallelPlan:
    """Group assignment plus the row permutation that makes groups contiguous.

    ``permutation[old_row] -> new_row``; ``inverse_permutation[new_row] ->
    old_row``.  Rows sharing a group occupy one contiguous range
    ``[group_offsets[g], group_offsets[g+1])`` of the permuted order, and
    keep their original relative order inside the group (stable sort).
    """

    strategy: Strategy
    row_group: np.ndarray
    group_offsets: np.ndarray
    permutation: np.ndarray
    inverse_permutation: np.ndarray

    @property
    def num_rows(self) -> int:
        return len(self.row_group)

    @property
    def group_count(self) -> int:
        return len(self.group_offsets) - 1

    @property
    def largest_group(self) -> int:
        return int(np.diff(self.group_offsets).max()) if self.group_count else 0

    def rows_in_group(self, g: int) -> np.ndarray:
        """Original row indices of group ``g`` in execution order."""
        return self.inverse_permutation[self.group_offsets[g]:self.group_offsets[g + 1]]


def _plan_from_groups(strategy: Strategy, row_group: np.ndarray) -> ParallelPlan:
    n = len(row_group)
    order = np.argsort(row_group, kind="stable")
    permutation = np.empty(n, dtype=np.int64)
    permutation[order] = np.arange(n, dtype=np.int64)
    ngroups = int(row_group.max()) + 1 if n else 0
    counts = np.bincount(row_group, minlength=ngroups)
    offsets = np.zeros(ngroups + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return ParallelPlan(strategy, row_group.astype(np.int64), offsets,
                        permutation, order.astype(np.int64))


def sequential_plan(num_rows: int) -> ParallelPlan:
    """One row per group, natural order: the debugging/oracle schedule."""
    return _plan_from_groups(Strategy.SEQUENTIAL, np.arange(num_rows, dtype=np.int64))


def _require_full_diagonal(p: SparsityPattern):
    for r in range(p.num_block_rows):
        if p.position(r, r) is None:
            raise MissingDiagonal(r)


def level_schedule(p: SparsityPattern) -> ParallelPlan:
    """Group rows into dependency levels of the strict lower pattern.

    group(i) = 1 + max over lower-pattern neighbors j<i of group(j), or 0
    for rows without lower neighbors.  Every dependency, direct or
    indirect, lands in a strictly earlier group.
    """
    _require_full_diagonal(p)
    n = p.num_block_rows
    group = np.zeros(n, dtype=np.int64)
    for i in range(n):
        cols = p.row_columns(i)
        lower = cols[cols < i]
        if len(lower):
            group[i] = group[lower].max() + 1
    return _plan_from_groups(Strategy.LEVEL_SCHEDULING, group)


def _symmetrized_adjacency(p: SparsityPattern):
    """CSR adjacency of the undirected row graph (no self loops)."""
    n = p.num_block_rows
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(p.row_pointers))
    cols = p.column_indices
    off = rows != cols
    src = np.concatenate([rows[off], cols[off]])
    dst = np.concatenate([cols[off], rows[off]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    if len(src):  # drop duplicate edges once both directions are merged
        keep = np.ones(len(src), dtype=bool)
        keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        src, dst = src[keep], dst[keep]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=ptr[1:])
    return ptr, dst


def graph_color(p: SparsityPattern) -> ParallelPlan:
    """Greedy first-fit coloring of the symmetrized row adjacency.

    Rows are visited in ascending index; each takes the smallest color not
    used by an already-colored neighbor.  Directly dependent rows never
    share a color; indirectly dependent rows may.
    """
    _require_full_diagonal(p)
    n = p.num_block_rows
    ptr, adj = _symmetrized_adjacency(p)
    color = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        neigh = adj[ptr[i]:ptr[i + 1]]
        used = color[neigh[neigh < i]]
        c = 0
        if len(used):
            taken = np.unique(used)
            for t in taken:
                if t == c:
                    c += 1
                elif t > c:
                    break
        color[i] = c
    return _plan_from_groups(Strategy.GRAPH_COLORING, color)


def _check_plan(plan: ParallelPlan, num_rows: int):
    if plan.num_rows != num_rows:
        raise ShapeError("plan was built for a different number of rows")


def apply_permutation_vec(v: BlockVector, plan: ParallelPlan,
                          inverse: bool = False) -> BlockVector:
    """Reorder a block vector so v'[permutation[i]] = v[i]."""
    _check_plan(plan, v.num_blocks)
    src = plan.permutation if inverse else plan.inverse_permutation
    blocks = v.data.reshape(v.num_blocks, v.block_size)
    return BlockVector(blocks[src].reshape(-1), v.block_size)


def apply_permutation(m: BlockMatrix, plan: ParallelPlan,
                      inverse: bool = False) -> BlockMatrix:
    """Symmetrically reorder rows and columns of a block matrix.

    Row i of the result is row inverse_permutation[i] of the input with
    its column indices remapped through the permutation and re-sorted, so
    spmv commutes: permute(A @ x) == permute(A) @ permute(x).  The input
    layout is preserved.
    """
    _check_plan(plan, m.num_block_rows)
    src = m.as_block_row_major()
    perm = plan.inverse_permutation if inverse else plan.permutation
    take_row = plan.permutation if inverse else plan.inverse_permutation
    b = m.block_size
    n = m.num_block_rows
    rp = src.pattern.row_pointers
    vals3 = src.values3d
    counts = np.diff(rp)[take_row]
    new_rp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=new_rp[1:])
    new_ci = np.empty(src.pattern.num_blocks, dtype=np.int64)
    new_vals = np.empty((src.pattern.num_blocks, b, b))
    for new_row in range(n):
        old_row = take_row[new_row]
        s, e = int(rp[old_row]), int(rp[old_row + 1])
        cols = perm[src.pattern.column_indices[s:e]]
        order = np.argsort(cols, kind="stable")
        lo = int(new_rp[new_row])
        new_ci[lo:lo + (e - s)] = cols[order]
        new_vals[lo:lo + (e - s)] = vals3[s:e][order]
    out = BlockMatrix(SparsityPattern(n, new_rp, new_ci), b,
                      new_vals.reshape(-1), Layout.BLOCK_ROW_MAJOR)
    if m.layout is not Layout.BLOCK_ROW_MAJOR:
        from .blockcore import convert_layout
        out = convert_layout(out, m.layout)
    return out
