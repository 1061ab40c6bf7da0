"""Well operators: applied separately after each spmv, or folded into A.

A standard well contributes -C^T (D^-1 (B x)) where B and C hold one MxN
block per perforated cell and D is a single MxM block whose inverse is
stored.  A multi-segment well generalizes D to a dense (nseg*M)^2 system
that is solved with a pivoted dense LU factorization; in an accelerator
port this application is the designated host-side step.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .blockcore import BlockMatrix, BlockVector, Layout, SparsityPattern
from .errors import ShapeError, SingularWellMatrix


class WellMode(enum.Enum):
    COUPLED = "coupled"
    SEPARATE = "separate"


@dataclass
class StandardWell:
    """One MxN block of B and C per perforation plus the stored D inverse."""

    perforated_cells: np.ndarray
    b_blocks: np.ndarray
    c_blocks: np.ndarray
    d_inverse: np.ndarray

    def __post_init__(self):
        self.perforated_cells = np.asarray(self.perforated_cells, dtype=np.int64)
        self.b_blocks = np.asarray(self.b_blocks, dtype=np.float64)
        self.c_blocks = np.asarray(self.c_blocks, dtype=np.float64)
        self.d_inverse = np.asarray(self.d_inverse, dtype=np.float64)
        p = len(self.perforated_cells)
        if p == 0:
            raise ShapeError("a well needs at least one perforation")
        if np.any(np.diff(self.perforated_cells) <= 0):
            raise ShapeError("perforated cells must be strictly increasing")
        m, n = self.block_dims
        if self.b_blocks.shape != (p, m, n) or self.c_blocks.shape != (p, m, n):
            raise ShapeError("B/C blocks must be (perforations, M, N)")
        if self.d_inverse.shape != (m, m) or not np.all(np.isfinite(self.d_inverse)):
            raise ShapeError("D inverse must be a finite MxM block")

    @property
    def block_dims(self) -> tuple[int, int]:
        """(M, N): well-equation block height and cell block size."""
        return self.d_inverse.shape[0], self.b_blocks.shape[2]


@dataclass
class MultisegmentWell:
    """Segmented well with sparse per-segment B/C and a dense D matrix.

    B and C have a block at (segment, cell) for each perforation; no cell
    appears twice on either side.  D is stored together with its pivoted LU
    factorization, computed once per value update.
    """

    nseg: int
    b_segments: np.ndarray
    b_cells: np.ndarray
    b_blocks: np.ndarray
    c_segments: np.ndarray
    c_cells: np.ndarray
    c_blocks: np.ndarray
    d_dense: np.ndarray
    _d_factors: tuple = field(repr=False, default=None)

    def __post_init__(self):
        self.b_segments = np.asarray(self.b_segments, dtype=np.int64)
        self.b_cells = np.asarray(self.b_cells, dtype=np.int64)
        self.b_blocks = np.asarray(self.b_blocks, dtype=np.float64)
        self.c_segments = np.asarray(self.c_segments, dtype=np.int64)
        self.c_cells = np.asarray(self.c_cells, dtype=np.int64)
        self.c_blocks = np.asarray(self.c_blocks, dtype=np.float64)
        self.d_dense = np.asarray(self.d_dense, dtype=np.float64)
        m, n = self.block_dims
        for seg, cells, blocks, name in ((self.b_segments, self.b_cells, self.b_blocks, "B"),
                                         (self.c_segments, self.c_cells, self.c_blocks, "C")):
            if blocks.shape != (len(seg), m, n) or len(cells) != len(seg):
                raise ShapeError(f"{name} entries must be (segment, cell, MxN block)")
            if len(np.unique(cells)) != len(cells):
                raise ShapeError(f"columns of {name} may hold at most one block")
            if len(seg) and (seg.min() < 0 or seg.max() >= self.nseg):
                raise ShapeError(f"{name} segment index outside [0, nseg)")
        size = self.nseg * m
        if self.d_dense.shape != (size, size):
            raise ShapeError("D must be dense (nseg*M, nseg*M)")
        self._refactor()

    def _refactor(self):
        if not np.all(np.isfinite(self.d_dense)):
            raise SingularWellMatrix("well matrix D contains non-finite entries")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # zero pivots are raised below
            lu, piv = lu_factor(self.d_dense, check_finite=False)
        if np.any(np.diag(lu) == 0.0) or not np.all(np.isfinite(lu)):
            raise SingularWellMatrix("well matrix D admits no LU factorization")
        self._d_factors = (lu, piv)

    @property
    def block_dims(self) -> tuple[int, int]:
        m = self.d_dense.shape[0] // self.nseg
        return m, self.b_blocks.shape[2] if self.b_blocks.ndim == 3 else 0

    def solve_d(self, rhs: np.ndarray) -> np.ndarray:
        """Apply D^-1 through the stored LU factors."""
        return lu_solve(self._d_factors, rhs, check_finite=False)


def _check_cells(cells: np.ndarray, num_blocks: int):
    if len(cells) and (cells.min() < 0 or cells.max() >= num_blocks):
        raise ShapeError("well perforates a cell outside the matrix")


def apply_standard(w: StandardWell, x: BlockVector, y: BlockVector) -> BlockVector:
    """In place: y -= C^T (D^-1 (B x)); returns y."""
    m, n = w.block_dims
    if x.block_size != n or y.block_size != n or x.num_blocks != y.num_blocks:
        raise ShapeError("vector block size does not match the well")
    _check_cells(w.perforated_cells, x.num_blocks)
    _apply_standard_array(w, x.data, y.data, n)
    return y


def _apply_standard_array(w: StandardWell, x: np.ndarray, y: np.ndarray, n: int):
    x2 = x.reshape(-1, n)
    y2 = y.reshape(-1, n)
    t1 = np.einsum("kmn,kn->m", w.b_blocks, x2[w.perforated_cells])
    t2 = w.d_inverse @ t1
    y2[w.perforated_cells] -= np.einsum("kmn,m->kn", w.c_blocks, t2)


def apply_multisegment(w: MultisegmentWell, x: BlockVector, y: BlockVector) -> BlockVector:
    """In place: y -= C^T (D^-1 (B x)) with D applied via the dense LU solve."""
    m, n = w.block_dims
    if x.block_size != n or y.block_size != n or x.num_blocks != y.num_blocks:
        raise ShapeError("vector block size does not match the well")
    _check_cells(w.b_cells, x.num_blocks)
    _check_cells(w.c_cells, x.num_blocks)
    _apply_multisegment_array(w, x.data, y.data, n)
    return y


def _apply_multisegment_array(w: MultisegmentWell, x: np.ndarray, y: np.ndarray, n: int):
    m, _ = w.block_dims
    x2 = x.reshape(-1, n)
    y2 = y.reshape(-1, n)
    t1 = np.zeros((w.nseg, m))
    np.add.at(t1, w.b_segments,
              np.einsum("kmn,kn->km", w.b_blocks, x2[w.b_cells]))
    t2 = w.solve_d(t1.reshape(-1)).reshape(w.nseg, m)
    y2[w.c_cells] -= np.einsum("kmn,km->kn", w.c_blocks, t2[w.c_segments])


@dataclass
class WellSet:
    """All wells of one system plus the coupled/separate handling mode.

    In coupled mode the contributions already live inside the matrix, so
    applying the set is the identity contribution.
    """

    standard: list[StandardWell] = field(default_factory=list)
    multisegment: list[MultisegmentWell] = field(default_factory=list)
    mode: WellMode = WellMode.SEPARATE

    @property
    def is_empty(self) -> bool:
        return not self.standard and not self.multisegment

    def apply_contributions(self, x: BlockVector, y: BlockVector) -> BlockVector:
        """Apply every well to y in well-index order (standard, then MS)."""
        if self.mode is WellMode.COUPLED:
            return y
        for w in self.standard:
            apply_standard(w, x, y)
        for w in self.multisegment:
            apply_multisegment(w, x, y)
        return y

    def apply_contributions_array(self, x: np.ndarray, y: np.ndarray, n: int):
        if self.mode is WellMode.COUPLED:
            return
        for w in self.standard:
            _apply_standard_array(w, x, y, n)
        for w in self.multisegment:
            _apply_multisegment_array(w, x, y, n)


def _union_pattern(a: BlockMatrix, extra: set[tuple[int, int]]) -> SparsityPattern:
    n = a.num_block_rows
    per_row: list[np.ndarray] = []
    extra_by_row: dict[int, list[int]] = {}
    for i, j in extra:
        extra_by_row.setdefault(i, []).append(j)
    for r in range(n):
        cols = a.pattern.row_columns(r)
        add = extra_by_row.get(r)
        if add:
            cols = np.union1d(cols, np.array(add, dtype=np.int64))
        per_row.append(cols)
    rp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum([len(c) for c in per_row], out=rp[1:])
    ci = (np.concatenate(per_row) if per_row else np.empty(0, dtype=np.int64))
    return SparsityPattern(n, rp, ci.astype(np.int64))


def fold_into_matrix(a: BlockMatrix, wells: WellSet) -> BlockMatrix:
    """A' = A - sum over wells of C^T D^-1 B, with the pattern widened by
    every (row, col) pair of cells the same well touches.

    The returned matrix satisfies A' x == A x - well terms; the input is
    left untouched.
    """
    a = a.as_block_row_major()
    b = a.block_size
    nb = a.num_block_rows
    extra: set[tuple[int, int]] = set()
    for w in wells.standard:
        _check_cells(w.perforated_cells, nb)
        if w.block_dims[1] != b:
            raise ShapeError("well block width does not match the matrix")
        for i in w.perforated_cells:
            for j in w.perforated_cells:
                extra.add((int(i), int(j)))
    for w in wells.multisegment:
        _check_cells(w.b_cells, nb)
        _check_cells(w.c_cells, nb)
        if w.block_dims[1] != b:
            raise ShapeError("well block width does not match the matrix")
        for i in w.c_cells:
            for j in w.b_cells:
                extra.add((int(i), int(j)))

    pat = _union_pattern(a, extra)
    vals = np.zeros((pat.num_blocks, b, b))
    src3 = a.values3d
    for r in range(nb):
        s, e = int(a.pattern.row_pointers[r]), int(a.pattern.row_pointers[r + 1])
        if e == s:
            continue
        ns = int(pat.row_pointers[r])
        pos = np.searchsorted(pat.row_columns(r), a.pattern.column_indices[s:e])
        vals[ns + pos] = src3[s:e]

    def pos_of(i, j):
        p = pat.position(i, j)
        assert p is not None
        return p

    for w in wells.standard:
        t = w.d_inverse @ w.b_blocks           # (p, M, N)
        cells = w.perforated_cells
        for ip in range(len(cells)):
            deltas = w.c_blocks[ip].T @ t      # (p, N, N)
            for jp in range(len(cells)):
                vals[pos_of(int(cells[ip]), int(cells[jp]))] -= deltas[jp]
    for w in wells.multisegment:
        m, n = w.block_dims
        nb_entries = len(w.b_cells)
        bdense = np.zeros((w.nseg * m, nb_entries * n))
        for t_idx in range(nb_entries):
            s = int(w.b_segments[t_idx])
            bdense[s * m:(s + 1) * m, t_idx * n:(t_idx + 1) * n] = w.b_blocks[t_idx]
        z = w.solve_d(bdense)
        for c_idx in range(len(w.c_cells)):
            s = int(w.c_segments[c_idx])
            ct = w.c_blocks[c_idx].T
            for t_idx in range(nb_entries):
                delta = ct @ z[s * m:(s + 1) * m, t_idx * n:(t_idx + 1) * n]
                vals[pos_of(int(w.c_cells[c_idx]), int(w.b_cells[t_idx]))] -= delta

    return BlockMatrix(pat, b, vals.reshape(-1), Layout.BLOCK_ROW_MAJOR)
