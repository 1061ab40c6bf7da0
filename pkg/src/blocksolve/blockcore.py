"""Blocked sparse matrix/vector types, pattern extraction, and layout conversion.

A matrix is stored in block compressed row storage: a sparsity pattern over
block coordinates plus one contiguous float64 array holding every nonzero
b*b block.  Three physical layouts of that value array are supported; all
numerical kernels operate on the block-row-major layout and views through
:meth:`BlockMatrix.block` are layout independent.

Matrices and vectors are plain data: treat them as immutable while shared
(concurrent reads are safe, mutation is the owner's business).  spmv and
residual are deterministic regardless of how a caller partitions rows
across workers, because each row reduces its products in column order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import DuplicateEntry, IndexOutOfRange, ShapeError


class Layout(enum.Enum):
    """Physical arrangement of block values inside the nonzero array.

    BLOCK_ROW_MAJOR
        Each block occupies b*b consecutive slots, entries row-major.
        This is the copy-friendly default and the layout every kernel
        expects.
    STRIP_ROW_MAJOR
        Per block row, the scalar rows of the whole strip of blocks are
        stored one after another: all first rows of the row's blocks,
        then all second rows, and so on.
    BLOCK_COL_MAJOR
        Blocks are ordered as in BLOCK_ROW_MAJOR but entries inside each
        block are column-major (i.e. every block is stored transposed).
    """

    BLOCK_ROW_MAJOR = "block-row-major"
    STRIP_ROW_MAJOR = "strip-row-major"
    BLOCK_COL_MAJOR = "block-col-major"


@dataclass(frozen=True)
class LaneUsage:
    """SIMD work assignment for one pass over a block row.

    A wavefront of ``width`` lanes covers ``blocks_per_pass`` whole blocks;
    the remaining lanes idle.  Reported by the CLI as a statistic only.
    """

    width: int
    blocks_per_pass: int
    active_lanes: int
    idle_lanes: int


def lane_usage(block_size: int, width: int = 32) -> LaneUsage:
    """Lane occupancy when ``width`` SIMD lanes process b*b-entry blocks."""
    if block_size < 1 or width < 1:
        raise ValueError("block_size and width must be positive")
    per_block = block_size * block_size
    blocks = width // per_block
    active = blocks * per_block
    return LaneUsage(width=width, blocks_per_pass=blocks,
                     active_lanes=active, idle_lanes=width - active)


@dataclass(frozen=True)
class SparsityPattern:
    """Block CSR structure: row pointers and sorted column indices.

    Invariants (checked at construction): row_pointers is non-decreasing
    with row_pointers[0] == 0 and row_pointers[-1] == len(column_indices);
    within each row the column indices are strictly increasing and lie in
    [0, num_block_rows).
    """

    num_block_rows: int
    row_pointers: np.ndarray
    column_indices: np.ndarray

    def __post_init__(self):
        rp = np.asarray(self.row_pointers, dtype=np.int64)
        ci = np.asarray(self.column_indices, dtype=np.int64)
        object.__setattr__(self, "row_pointers", rp)
        object.__setattr__(self, "column_indices", ci)
        nb = self.num_block_rows
        if rp.shape != (nb + 1,):
            raise ShapeError(f"row_pointers must have length {nb + 1}")
        if nb > 0 and (rp[0] != 0 or rp[-1] != len(ci) or np.any(np.diff(rp) < 0)):
            raise ShapeError("row_pointers must grow from 0 to the block count")
        if nb == 0 and (len(ci) != 0 or rp[0] != 0):
            raise ShapeError("empty pattern must have no columns")
        if len(ci) and (ci.min() < 0 or ci.max() >= nb):
            raise IndexOutOfRange("column index outside [0, num_block_rows)")
        for r in range(nb):
            cols = ci[rp[r]:rp[r + 1]]
            if len(cols) > 1 and np.any(np.diff(cols) <= 0):
                raise ShapeError(f"columns of row {r} are not strictly increasing")

    @property
    def num_blocks(self) -> int:
        return int(self.row_pointers[-1]) if self.num_block_rows else 0

    def row_columns(self, row: int) -> np.ndarray:
        """Column indices of one block row (a read-only view)."""
        return self.column_indices[self.row_pointers[row]:self.row_pointers[row + 1]]

    def __iter__(self) -> Iterator[tuple[int, int]]:
        """Yield (row, col) block coordinates in storage order."""
        for r in range(self.num_block_rows):
            for c in self.row_columns(r):
                yield r, int(c)

    def position(self, row: int, col: int) -> int | None:
        """Flat block index of (row, col), or None if absent."""
        cols = self.row_columns(row)
        k = np.searchsorted(cols, col)
        if k < len(cols) and cols[k] == col:
            return int(self.row_pointers[row]) + int(k)
        return None

    def diagonal_positions(self) -> np.ndarray:
        """Flat block index of each diagonal block; -1 where missing."""
        out = np.full(self.num_block_rows, -1, dtype=np.int64)
        for r in range(self.num_block_rows):
            p = self.position(r, r)
            if p is not None:
                out[r] = p
        return out


def extract_pattern(entries: Iterable[tuple[int, int, object]],
                    num_block_rows: int | None = None) -> SparsityPattern:
    """Build a SparsityPattern from (row, col, block) triples.

    The block payloads are ignored here; only the coordinates matter.
    ``num_block_rows`` may be given explicitly (required for empty input
    or trailing empty rows); otherwise it is inferred from the largest
    coordinate seen.
    """
    coords = [(int(r), int(c)) for r, c, _ in entries]
    if num_block_rows is None:
        num_block_rows = 1 + max((max(r, c) for r, c in coords), default=-1)
    for r, c in coords:
        if r < 0 or c < 0 or r >= num_block_rows or c >= num_block_rows:
            raise IndexOutOfRange(f"block ({r}, {c}) outside {num_block_rows} rows")
    coords.sort()
    for a, b in zip(coords, coords[1:]):
        if a == b:
            raise DuplicateEntry(f"duplicate block at {a}")
    counts = np.zeros(num_block_rows, dtype=np.int64)
    for r, _ in coords:
        counts[r] += 1
    rp = np.zeros(num_block_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=rp[1:])
    ci = np.array([c for _, c in coords], dtype=np.int64)
    return SparsityPattern(num_block_rows, rp, ci)


@dataclass(frozen=True)
class BlockView:
    """Layout-independent read of one block: entries are b*b row-major."""

    row: int
    col: int
    entries: np.ndarray


@dataclass
class BlockVector:
    """Dense vector of ``num_blocks`` blocks of ``block_size`` reals."""

    data: np.ndarray
    block_size: int

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.block_size < 1:
            raise ShapeError("block size must be >= 1")
        if self.data.ndim != 1 or self.data.size % self.block_size:
            raise ShapeError("data length must be a multiple of the block size")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("block vector entries must be finite")

    @classmethod
    def zeros(cls, num_blocks: int, block_size: int) -> "BlockVector":
        return cls(np.zeros(num_blocks * block_size), block_size)

    @property
    def num_blocks(self) -> int:
        return self.data.size // self.block_size

    def block(self, i: int) -> np.ndarray:
        b = self.block_size
        return self.data[i * b:(i + 1) * b]

    def copy(self) -> "BlockVector":
        return BlockVector(self.data.copy(), self.block_size)


@dataclass
class BlockMatrix:
    """Square block-sparse matrix: pattern + contiguous value array + layout."""

    pattern: SparsityPattern
    block_size: int
    values: np.ndarray
    layout: Layout = Layout.BLOCK_ROW_MAJOR

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.block_size < 1:
            raise ShapeError("block size must be >= 1")
        want = self.pattern.num_blocks * self.block_size ** 2
        if self.values.ndim != 1 or self.values.size != want:
            raise ShapeError(f"value array must have length {want}")

    @classmethod
    def from_blocks(cls, entries: Iterable[tuple[int, int, np.ndarray]],
                    block_size: int | None = None,
                    num_block_rows: int | None = None) -> "BlockMatrix":
        """Assemble a block-row-major matrix from (row, col, block) triples."""
        items = [(int(r), int(c), np.asarray(blk, dtype=np.float64))
                 for r, c, blk in entries]
        if block_size is None:
            if not items:
                raise ShapeError("block size required for empty input")
            block_size = items[0][2].shape[0]
        b = block_size
        for r, c, blk in items:
            if blk.shape != (b, b):
                raise ShapeError(f"block ({r}, {c}) is not {b}x{b}")
        pattern = extract_pattern([(r, c, None) for r, c, _ in items],
                                  num_block_rows=num_block_rows)
        vals = np.zeros(pattern.num_blocks * b * b)
        for r, c, blk in items:
            p = pattern.position(r, c)
            vals[p * b * b:(p + 1) * b * b] = blk.reshape(-1)
        return cls(pattern, b, vals)

    @property
    def num_block_rows(self) -> int:
        return self.pattern.num_block_rows

    @property
    def values3d(self) -> np.ndarray:
        """(nnz, b, b) view of the values; block-row-major layout only."""
        if self.layout is not Layout.BLOCK_ROW_MAJOR:
            raise ShapeError("values3d requires the block-row-major layout")
        b = self.block_size
        return self.values.reshape(self.pattern.num_blocks, b, b)

    def block(self, row: int, col: int) -> np.ndarray:
        """Row-major copy of one block, independent of the physical layout."""
        view = self.block_view(row, col)
        if view is None:
            raise IndexOutOfRange(f"no block stored at ({row}, {col})")
        return view.entries

    def block_view(self, row: int, col: int) -> BlockView | None:
        p = self.pattern.position(row, col)
        if p is None:
            return None
        b = self.block_size
        if self.layout is Layout.BLOCK_ROW_MAJOR:
            blk = self.values[p * b * b:(p + 1) * b * b].reshape(b, b).copy()
        elif self.layout is Layout.BLOCK_COL_MAJOR:
            blk = self.values[p * b * b:(p + 1) * b * b].reshape(b, b).T.copy()
        else:  # STRIP_ROW_MAJOR: index inside this row's strip
            r0 = int(self.pattern.row_pointers[row])
            m = int(self.pattern.row_pointers[row + 1]) - r0
            k = p - r0
            strip = self.values[r0 * b * b:(r0 + m) * b * b].reshape(b, m, b)
            blk = strip[:, k, :].copy()
        return BlockView(row, col, blk)

    def iter_blocks(self) -> Iterator[BlockView]:
        for r, c in self.pattern:
            yield self.block_view(r, c)

    def copy(self) -> "BlockMatrix":
        return BlockMatrix(self.pattern, self.block_size, self.values.copy(),
                           self.layout)

    def as_block_row_major(self) -> "BlockMatrix":
        """Self if already canonical, else a converted copy."""
        if self.layout is Layout.BLOCK_ROW_MAJOR:
            return self
        return convert_layout(self, Layout.BLOCK_ROW_MAJOR)

    def to_dense(self) -> np.ndarray:
        """Expand to a dense (Nb*b, Nb*b) scalar array."""
        b = self.block_size
        n = self.num_block_rows * b
        out = np.zeros((n, n))
        for view in self.iter_blocks():
            out[view.row * b:(view.row + 1) * b,
                view.col * b:(view.col + 1) * b] = view.entries
        return out


def _row_strips(m: BlockMatrix):
    """Yield (start_block, block_count) per row of m's pattern."""
    rp = m.pattern.row_pointers
    for r in range(m.num_block_rows):
        yield int(rp[r]), int(rp[r + 1] - rp[r])


def convert_layout(m: BlockMatrix, target: Layout) -> BlockMatrix:
    """Return a copy of ``m`` with its values rearranged into ``target``.

    Pure permutation of the value array: round trips are bit-exact.
    """
    if target is m.layout:
        return m.copy()
    b = m.block_size
    out = np.empty_like(m.values)
    for start, count in _row_strips(m):
        seg = m.values[start * b * b:(start + count) * b * b]
        # normalize this row's strip to [block, row-in-block, col-in-block]
        if m.layout is Layout.BLOCK_ROW_MAJOR:
            cube = seg.reshape(count, b, b)
        elif m.layout is Layout.BLOCK_COL_MAJOR:
            cube = seg.reshape(count, b, b).transpose(0, 2, 1)
        else:
            cube = seg.reshape(b, count, b).transpose(1, 0, 2)
        if target is Layout.BLOCK_ROW_MAJOR:
            res = cube
        elif target is Layout.BLOCK_COL_MAJOR:
            res = cube.transpose(0, 2, 1)
        else:
            res = cube.transpose(1, 0, 2)
        out[start * b * b:(start + count) * b * b] = res.reshape(-1)
    return BlockMatrix(m.pattern, b, out, target)


def _check_pair(a: BlockMatrix, x: BlockVector):
    if a.block_size != x.block_size:
        raise ShapeError("matrix and vector block sizes differ")
    if x.num_blocks != a.num_block_rows:
        raise ShapeError("vector length does not match the matrix")


def spmv_array(a: BlockMatrix, x: np.ndarray) -> np.ndarray:
    """y = A*x on a raw scalar array (block-row-major A)."""
    a = a.as_block_row_major()
    b = a.block_size
    nb = a.num_block_rows
    xb = x.reshape(nb, b)
    y = np.zeros((nb, b))
    if a.pattern.num_blocks:
        prods = a.values3d @ xb[a.pattern.column_indices][:, :, None]
        rp = a.pattern.row_pointers
        nonempty = np.diff(rp) > 0
        if np.any(nonempty):
            starts = rp[:-1][nonempty]
            y[nonempty] = np.add.reduceat(prods[:, :, 0], starts, axis=0)
    return y.reshape(-1)


def spmv(a: BlockMatrix, x: BlockVector) -> BlockVector:
    """Blocked sparse matrix-vector product y_i = sum_j A_ij * x_j."""
    _check_pair(a, x)
    return BlockVector(spmv_array(a, x.data), a.block_size)


def residual(a: BlockMatrix, x: BlockVector, rhs: BlockVector) -> BlockVector:
    """rhs - A*x."""
    _check_pair(a, x)
    _check_pair(a, rhs)
    return BlockVector(rhs.data - spmv_array(a, x.data), a.block_size)
