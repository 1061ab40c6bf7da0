"""Zero-fill incomplete LU decomposition and its two-phase application.

The factorization keeps L (strict lower, unit diagonal implied) and U
(upper including diagonal) together in one matrix with exactly the pattern
of its input.  Following the plan, a reordered copy of the matrix is made
first so that each group occupies contiguous rows; the elimination then
runs in ascending permuted order, which realizes group-by-group execution
(rows inside one group never reference each other).  A level-scheduling
plan preserves every dependency, so its factors and solves equal the
sequential ones bit for bit (modulo the row relabeling); a coloring plan
eliminates in color order, which drops different fill and yields a weaker
but more parallel preconditioner.

Application solves L y = r then U x = y.  The public entry points take
vectors in the original row order and handle the permutation internally;
``apply_permuted_array`` skips that for callers that already live in
permuted space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import ParallelPlan, apply_permutation
from .blockcore import BlockMatrix, BlockVector, Layout
from .errors import MissingDiagonal, ShapeError, SingularPivot

# a pivot block is rejected on |det| below this or a non-finite inverse
_DET_FLOOR = 1e-300


def _invert_pivot(block: np.ndarray, row: int) -> np.ndarray:
    det = np.linalg.det(block)
    if not np.isfinite(det) or abs(det) < _DET_FLOOR:
        raise SingularPivot(row)
    try:
        inv = np.linalg.inv(block)
    except np.linalg.LinAlgError:
        raise SingularPivot(row) from None
    if not np.all(np.isfinite(inv)):
        raise SingularPivot(row)
    return inv


@dataclass
class _Phase:
    """One triangular sweep: rows in execution order plus their off-diagonal
    entries, gathered so each group is a contiguous slice."""

    rows: np.ndarray          # permuted row index per execution position
    bounds: np.ndarray        # group boundaries in execution positions
    entry_ptr: np.ndarray     # per execution position, offsets into cols/blocks
    cols: np.ndarray          # permuted column index per entry (ascending per row)
    blocks: np.ndarray        # (n_entries, b, b) factor blocks


@dataclass
class Ilu0Factorization:
    """Combined L/U factors (in plan order), diagonal inverses, and the plan."""

    combined: BlockMatrix
    inverted_diagonals: np.ndarray
    plan: ParallelPlan
    _identity_perm: bool = field(repr=False, default=True)
    _forward: _Phase = field(repr=False, default=None)
    _backward: _Phase = field(repr=False, default=None)
    _diag_bwd: np.ndarray = field(repr=False, default=None)

    @property
    def block_size(self) -> int:
        return self.combined.block_size

    @property
    def num_block_rows(self) -> int:
        return self.combined.num_block_rows

    def factors_in_input_order(self) -> BlockMatrix:
        """The combined factors carried back to the input row numbering."""
        if self._identity_perm:
            return self.combined.copy()
        return apply_permutation(self.combined, self.plan, inverse=True)

    def apply(self, r: BlockVector) -> BlockVector:
        """Solve L y = r then U x = y; r and x are in the input ordering."""
        if r.block_size != self.block_size:
            raise ShapeError("vector block size does not match factorization")
        if r.num_blocks != self.num_block_rows:
            raise ShapeError("vector length does not match factorization")
        return BlockVector(self.apply_array(r.data), self.block_size)

    def apply_array(self, r: np.ndarray) -> np.ndarray:
        """Array variant of :meth:`apply` (input-order in, input-order out)."""
        b = self.block_size
        r2 = r.reshape(self.num_block_rows, b)
        if self._identity_perm:
            z = r2.copy()
            self._sweeps(z)
            return z.reshape(-1)
        z = r2[self.plan.inverse_permutation]   # permute once per application
        self._sweeps(z)
        return z[self.plan.permutation].reshape(-1)

    def apply_permuted_array(self, r: np.ndarray) -> np.ndarray:
        """As :meth:`apply_array` but r already lives in plan order."""
        z = r.reshape(self.num_block_rows, self.block_size).copy()
        self._sweeps(z)
        return z.reshape(-1)

    def _sweeps(self, z: np.ndarray):
        _sweep(self._forward, z, unit_diagonal=True, diag_inv=None)
        _sweep(self._backward, z, unit_diagonal=False, diag_inv=self._diag_bwd)


def _sweep(phase: _Phase, z: np.ndarray, unit_diagonal: bool,
           diag_inv: np.ndarray | None):
    """Substitution over one triangle, group by group, in place on z.

    Per row i: t = z_i - sum over entries (ascending column) of block @ z_col;
    z_i = t for the unit-diagonal forward phase, z_i = inv(U_ii) @ t for the
    backward phase.  Rows of one group only read rows outside the group.
    """
    ptr = phase.entry_ptr
    for g in range(len(phase.bounds) - 1):
        g0, g1 = int(phase.bounds[g]), int(phase.bounds[g + 1])
        rows = phase.rows[g0:g1]
        s, e = int(ptr[g0]), int(ptr[g1])
        if e > s:
            prods = phase.blocks[s:e] @ z[phase.cols[s:e]][:, :, None]
            counts = ptr[g0 + 1:g1 + 1] - ptr[g0:g1]
            mask = counts > 0
            starts = ptr[g0:g1][mask] - s
            sums = np.add.reduceat(prods[:, :, 0], starts, axis=0)
            if unit_diagonal:
                z[rows[mask]] -= sums
            else:
                t = z[rows]
                t[mask] -= sums  # t is a fancy-index copy, z still intact
                z[rows] = (diag_inv[g0:g1] @ t[:, :, None])[:, :, 0]
        elif not unit_diagonal:
            z[rows] = (diag_inv[g0:g1] @ z[rows][:, :, None])[:, :, 0]


def decompose(a: BlockMatrix, plan: ParallelPlan) -> Ilu0Factorization:
    """Blocked zero-fill LU on the plan-reordered copy of ``a``.

    For each pivot row r in ascending (permuted) order: L_ir = A_ir @
    inv(A_rr), then A_ij -= L_ir @ A_rj for every column j > r present in
    both rows.  Raises :class:`MissingDiagonal` or :class:`SingularPivot`
    (both report input row numbers).
    """
    a = a.as_block_row_major()
    n = a.num_block_rows
    if plan.num_rows != n:
        raise ShapeError("plan does not match the matrix")
    b = a.block_size

    diag_missing = [r for r in range(n) if a.pattern.position(r, r) is None]
    if diag_missing:
        raise MissingDiagonal(diag_missing[0])

    identity = bool(np.array_equal(plan.permutation, np.arange(n)))
    src = a if identity else apply_permutation(a, plan)
    pat = src.pattern
    diag_pos = pat.diagonal_positions()
    rp = pat.row_pointers
    ci = pat.column_indices
    work = src.values3d.copy()
    inverted = np.empty((n, b, b))

    def input_row(i: int) -> int:
        return i if identity else int(plan.inverse_permutation[i])

    for i in range(n):
        s, e = int(rp[i]), int(rp[i + 1])
        cols_i = ci[s:e]
        nlower = int(np.searchsorted(cols_i, i))
        for k in range(nlower):
            r = int(cols_i[k])
            piv = work[s + k] @ inverted[r]
            work[s + k] = piv
            rs, re = int(rp[r]), int(rp[r + 1])
            cols_r = ci[rs:re]
            jstart = int(np.searchsorted(cols_r, r, side="right"))
            cols_rj = cols_r[jstart:]
            if not len(cols_rj):
                continue
            pos = np.searchsorted(cols_i, cols_rj)
            ok = pos < len(cols_i)
            hit = np.zeros(len(cols_rj), dtype=bool)
            hit[ok] = cols_i[pos[ok]] == cols_rj[ok]
            if hit.any():
                tgt = s + pos[hit]
                ref = rs + jstart + np.flatnonzero(hit)
                work[tgt] -= piv @ work[ref]
        inverted[i] = _invert_pivot(work[diag_pos[i]], input_row(i))

    combined = BlockMatrix(pat, b, work.reshape(-1), Layout.BLOCK_ROW_MAJOR)
    fwd, bwd, diag_bwd = _build_phases(pat, plan, work, inverted)
    return Ilu0Factorization(combined, inverted, plan, identity, fwd, bwd, diag_bwd)


def _build_phases(pat, plan: ParallelPlan, work: np.ndarray, inverted: np.ndarray):
    rp = pat.row_pointers
    ci = pat.column_indices
    n = pat.num_block_rows

    def collect(rows, take_lower: bool):
        ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        col_parts = []
        idx_parts = []
        for k, i in enumerate(rows):
            s, e = int(rp[i]), int(rp[i + 1])
            cols = ci[s:e]
            d = int(np.searchsorted(cols, i))
            lo, hi = (s, s + d) if take_lower else (s + d + 1, e)
            ptr[k + 1] = ptr[k] + (hi - lo)
            if hi > lo:
                col_parts.append(ci[lo:hi])
                idx_parts.append(np.arange(lo, hi, dtype=np.int64))
        cols = np.concatenate(col_parts) if col_parts else np.empty(0, dtype=np.int64)
        idx = np.concatenate(idx_parts) if idx_parts else np.empty(0, dtype=np.int64)
        return ptr, cols, work[idx]

    order = np.arange(n, dtype=np.int64)
    f_ptr, f_cols, f_blocks = collect(order, take_lower=True)
    forward = _Phase(order, plan.group_offsets, f_ptr, f_cols, f_blocks)

    rows_bwd = order[::-1].copy()
    sizes = np.diff(plan.group_offsets)[::-1]
    bwd_bounds = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=bwd_bounds[1:])
    u_ptr, u_cols, u_blocks = collect(rows_bwd, take_lower=False)
    backward = _Phase(rows_bwd, bwd_bounds, u_ptr, u_cols, u_blocks)
    return forward, backward, inverted[rows_bwd]
