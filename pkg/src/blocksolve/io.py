"""System serialization and the synthetic reservoir-like generator.

Matrices travel as scalar coordinate Matrix Market files carrying a
mandatory ``% blocksize: <b>`` comment; scalars are grouped into b*b
blocks (a block exists iff at least one of its scalars appears, absent
scalars are zero).  The right-hand side lives in a companion array-format
file and wells in a companion line-oriented text file.  Round trips are
value-exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blockcore import BlockMatrix, BlockVector, Layout, SparsityPattern
from .errors import BlockingError, DuplicateEntry, IndexOutOfRange, ParseError, ShapeError
from .wells import MultisegmentWell, StandardWell, WellMode, WellSet

_MATRIX_HEADER = ("matrixmarket", "matrix", "coordinate", "real", "general")
_ARRAY_HEADER = ("matrixmarket", "matrix", "array", "real", "general")


@dataclass
class BundleMeta:
    name: str
    block_size: int
    grid_dims: tuple[int, int, int] | None = None


@dataclass
class SystemBundle:
    a: BlockMatrix
    rhs: BlockVector
    wells: WellSet
    meta: BundleMeta

    def __post_init__(self):
        if self.rhs.block_size != self.a.block_size:
            raise ShapeError("rhs block size differs from the matrix")
        if self.rhs.num_blocks != self.a.num_block_rows:
            raise ShapeError("rhs length differs from the matrix")


def rhs_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + "_b.mtx")


def wells_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + "_wells.txt")


# ---------------------------------------------------------------------------
# writing

def _fmt(x: float) -> str:
    return repr(float(x))


def write_system(bundle: SystemBundle, path) -> None:
    """Write matrix to ``path`` plus ``<stem>_b.mtx`` / ``<stem>_wells.txt``."""
    a = bundle.a.as_block_row_major()
    b = a.block_size
    n = a.num_block_rows * b
    lines = ["%%MatrixMarket matrix coordinate real general",
             f"% blocksize: {b}",
             f"{n} {n} {a.pattern.num_blocks * b * b}"]
    vals3 = a.values3d
    k = 0
    for bi, bj in a.pattern:
        blk = vals3[k]
        for li in range(b):
            for lj in range(b):
                lines.append(f"{bi * b + li + 1} {bj * b + lj + 1} {_fmt(blk[li, lj])}")
        k += 1
    Path(path).write_text("\n".join(lines) + "\n")

    rl = ["%%MatrixMarket matrix array real general",
          f"% blocksize: {b}",
          f"{n} 1"]
    rl.extend(_fmt(v) for v in bundle.rhs.data)
    rhs_path(path).write_text("\n".join(rl) + "\n")

    if not bundle.wells.is_empty:
        wells_path(path).write_text(_format_wells(bundle.wells))
    elif wells_path(path).exists():
        wells_path(path).unlink()


def _format_wells(wells: WellSet) -> str:
    out = [f"mode {wells.mode.value}"]
    for w in wells.standard:
        m, n = w.block_dims
        out.append(f"well standard {m} {n} {len(w.perforated_cells)}")
        out.append("cells " + " ".join(str(int(c)) for c in w.perforated_cells))
        for tag, blocks in (("B", w.b_blocks), ("C", w.c_blocks)):
            for blk in blocks:
                out.append(f"{tag} " + " ".join(_fmt(v) for v in blk.reshape(-1)))
        out.append("Dinv " + " ".join(_fmt(v) for v in w.d_inverse.reshape(-1)))
    for w in wells.multisegment:
        m, n = w.block_dims
        out.append(f"well multisegment {m} {n} {w.nseg} "
                   f"{len(w.b_cells)} {len(w.c_cells)}")
        for tag, segs, cells, blocks in (("B", w.b_segments, w.b_cells, w.b_blocks),
                                         ("C", w.c_segments, w.c_cells, w.c_blocks)):
            for s, c, blk in zip(segs, cells, blocks):
                out.append(f"{tag} {int(s)} {int(c)} "
                           + " ".join(_fmt(v) for v in blk.reshape(-1)))
        out.append("D " + " ".join(_fmt(v) for v in w.d_dense.reshape(-1)))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# reading

def _data_lines(text: str):
    """Yield (is_comment, line) skipping blank lines; the %% header included."""
    for raw in text.splitlines():
        line = raw.strip()
        if line:
            yield line


def _parse_header(line: str, want) -> None:
    tokens = line.lstrip("%").lower().split()
    if tuple(tokens) != want:
        raise ParseError(f"unsupported header {line!r}")


def _scan_blocksize(lines: list[str]) -> int:
    for line in lines:
        if not line.startswith("%"):
            break
        body = line.lstrip("%").strip().lower()
        if body.startswith("blocksize:"):
            try:
                return int(body.split(":", 1)[1])
            except ValueError:
                raise ParseError(f"bad blocksize comment {line!r}")
    raise ParseError("missing '% blocksize: <b>' comment")


def read_system(path) -> SystemBundle:
    """Read a system written by :func:`write_system` (companions optional:
    a missing rhs file yields zeros, missing wells an empty set)."""
    p = Path(path)
    a = _read_matrix(p)
    rp = rhs_path(p)
    if rp.exists():
        rhs = _read_rhs(rp, a)
    else:
        rhs = BlockVector.zeros(a.num_block_rows, a.block_size)
    wp = wells_path(p)
    wells = _read_wells(wp) if wp.exists() else WellSet()
    meta = BundleMeta(name=p.stem, block_size=a.block_size)
    return SystemBundle(a, rhs, wells, meta)


def _read_matrix(p: Path) -> BlockMatrix:
    lines = list(_data_lines(p.read_text()))
    if not lines or not lines[0].startswith("%%"):
        raise ParseError("missing MatrixMarket header")
    _parse_header(lines[0], _MATRIX_HEADER)
    b = _scan_blocksize(lines[1:])
    body = [ln for ln in lines[1:] if not ln.startswith("%")]
    if not body:
        raise ParseError("missing dimensions line")
    dims = body[0].split()
    if len(dims) != 3:
        raise ParseError(f"bad dimensions line {body[0]!r}")
    nrows, ncols, nnz = (int(t) for t in dims)
    if nrows != ncols:
        raise ParseError("matrix must be square")
    if nrows % b:
        raise BlockingError(f"{nrows} rows not divisible by block size {b}")
    nb = nrows // b
    if len(body) - 1 != nnz:
        raise ParseError(f"expected {nnz} entries, found {len(body) - 1}")

    if nnz == 0:
        pattern = SparsityPattern(nb, np.zeros(nb + 1, dtype=np.int64),
                                  np.empty(0, dtype=np.int64))
        return BlockMatrix(pattern, b, np.empty(0), Layout.BLOCK_ROW_MAJOR)

    try:
        raw = np.array([ln.split() for ln in body[1:]], dtype=object)
        if raw.ndim != 2 or raw.shape[1] != 3:
            raise ValueError
        si = raw[:, 0].astype(np.int64) - 1
        sj = raw[:, 1].astype(np.int64) - 1
        sv = raw[:, 2].astype(np.float64)
    except (ValueError, IndexError):
        raise ParseError("malformed entry line")
    if si.min() < 0 or sj.min() < 0 or si.max() >= nrows or sj.max() >= ncols:
        raise IndexOutOfRange("scalar coordinate outside the declared size")
    order = np.lexsort((sj, si))
    si, sj, sv = si[order], sj[order], sv[order]
    if len(si) > 1:
        dup = (np.diff(si) == 0) & (np.diff(sj) == 0)
        if dup.any():
            k = int(np.flatnonzero(dup)[0])
            raise DuplicateEntry(f"scalar ({si[k] + 1}, {sj[k] + 1}) appears twice")

    bi, li = np.divmod(si, b)
    bj, lj = np.divmod(sj, b)
    key = bi * nb + bj
    blk_order = np.argsort(key, kind="stable")
    key_sorted = key[blk_order]
    uniq, first = np.unique(key_sorted, return_index=True)
    rows = (uniq // nb).astype(np.int64)
    cols = (uniq % nb).astype(np.int64)
    rp_arr = np.zeros(nb + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=nb), out=rp_arr[1:])
    pattern = SparsityPattern(nb, rp_arr, cols)
    vals = np.zeros((len(uniq), b, b))
    slot = np.searchsorted(uniq, key)
    vals[slot, li, lj] = sv
    return BlockMatrix(pattern, b, vals.reshape(-1), Layout.BLOCK_ROW_MAJOR)


def _read_rhs(p: Path, a: BlockMatrix) -> BlockVector:
    lines = list(_data_lines(p.read_text()))
    if not lines or not lines[0].startswith("%%"):
        raise ParseError("missing MatrixMarket header in rhs file")
    _parse_header(lines[0], _ARRAY_HEADER)
    body = [ln for ln in lines[1:] if not ln.startswith("%")]
    if not body:
        raise ParseError("missing dimensions line in rhs file")
    dims = body[0].split()
    if len(dims) != 2 or int(dims[1]) != 1:
        raise ParseError("rhs must be a single column")
    n = int(dims[0])
    if n % a.block_size:
        raise BlockingError("rhs length not divisible by the block size")
    if n != a.num_block_rows * a.block_size:
        raise ShapeError("rhs length differs from the matrix")
    if len(body) - 1 != n:
        raise ParseError(f"expected {n} rhs values, found {len(body) - 1}")
    try:
        data = np.array([float(t) for t in body[1:]])
    except ValueError:
        raise ParseError("malformed rhs value")
    return BlockVector(data, a.block_size)


def _read_wells(p: Path) -> WellSet:
    try:
        return _parse_wells(list(_data_lines(p.read_text())))
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed well file: {exc}") from None


def _parse_wells(lines: list[str]) -> WellSet:
    mode = WellMode.SEPARATE
    idx = 0
    if lines and lines[0].startswith("mode"):
        try:
            mode = WellMode(lines[0].split()[1])
        except (IndexError, ValueError):
            raise ParseError(f"bad mode line {lines[0]!r}")
        idx = 1
    standard: list[StandardWell] = []
    multisegment: list[MultisegmentWell] = []

    def floats(tag: str, line: str, skip: int = 1) -> np.ndarray:
        parts = line.split()
        if parts[0] != tag:
            raise ParseError(f"expected {tag} record, found {line!r}")
        return np.array([float(t) for t in parts[skip:]])

    while idx < len(lines):
        head = lines[idx].split()
        if head[0] != "well" or len(head) < 2:
            raise ParseError(f"expected well record, found {lines[idx]!r}")
        if head[1] == "standard":
            m, n, nperf = (int(t) for t in head[2:5])
            idx += 1
            cell_parts = lines[idx].split()
            if cell_parts[0] != "cells" or len(cell_parts) != nperf + 1:
                raise ParseError("bad cells record")
            cells = np.array([int(t) for t in cell_parts[1:]], dtype=np.int64)
            idx += 1
            bb = np.array([floats("B", lines[idx + k]) for k in range(nperf)])
            idx += nperf
            cc = np.array([floats("C", lines[idx + k]) for k in range(nperf)])
            idx += nperf
            dinv = floats("Dinv", lines[idx]).reshape(m, m)
            idx += 1
            standard.append(StandardWell(cells, bb.reshape(nperf, m, n),
                                         cc.reshape(nperf, m, n), dinv))
        elif head[1] == "multisegment":
            m, n, nseg, nb_e, nc_e = (int(t) for t in head[2:7])
            idx += 1

            def entries(tag, count, at):
                segs, cells, blocks = [], [], []
                for k in range(count):
                    parts = lines[at + k].split()
                    if parts[0] != tag:
                        raise ParseError(f"expected {tag} record")
                    segs.append(int(parts[1]))
                    cells.append(int(parts[2]))
                    blocks.append([float(t) for t in parts[3:]])
                return (np.array(segs, dtype=np.int64), np.array(cells, dtype=np.int64),
                        np.array(blocks).reshape(count, m, n))

            bs, bc, bblk = entries("B", nb_e, idx)
            idx += nb_e
            cs, cc_, cblk = entries("C", nc_e, idx)
            idx += nc_e
            d = floats("D", lines[idx]).reshape(nseg * m, nseg * m)
            idx += 1
            multisegment.append(MultisegmentWell(nseg, bs, bc, bblk, cs, cc_, cblk, d))
        else:
            raise ParseError(f"unknown well kind {head[1]!r}")
    return WellSet(standard, multisegment, mode)


# ---------------------------------------------------------------------------
# synthetic generation

@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a 7-point-stencil blocked system with optional wells.

    Off-diagonal blocks are scaled by the per-direction transmissibilities;
    each diagonal block is the diagonal matrix of its row's absolute
    off-diagonal sums plus ``diagonal_boost`` times identity, which keeps
    every generated system strictly row dominant (hence ILU0-safe) for any
    positive boost.
    """

    nx: int
    ny: int
    nz: int
    block_size: int = 3
    tx: float = 1.0
    ty: float = 1.0
    tz: float = 0.5
    diagonal_boost: float = 1.0
    well_count: int = 0
    well_kind: str = "standard"
    well_depth: int = 3
    seed: int = 0

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.diagonal_boost <= 0:
            raise ValueError("diagonal_boost must be positive")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.well_kind not in ("standard", "multisegment"):
            raise ValueError("well_kind must be standard or multisegment")
        if self.well_count < 0 or (self.well_count and self.well_depth < 1):
            raise ValueError("wells need a non-negative count and depth >= 1")


def generate(spec: GeneratorSpec) -> SystemBundle:
    """Deterministically build the system described by ``spec``."""
    nx, ny, nz, b = spec.nx, spec.ny, spec.nz, spec.block_size
    n = nx * ny * nz
    rng = np.random.default_rng(spec.seed)

    ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                             indexing="ij")
    cell = (ix + nx * (iy + ny * iz)).reshape(-1)

    pair_src, pair_dst, pair_t = [], [], []
    for (mask, step, t) in (((ix < nx - 1).reshape(-1), 1, spec.tx),
                            ((iy < ny - 1).reshape(-1), nx, spec.ty),
                            ((iz < nz - 1).reshape(-1), nx * ny, spec.tz)):
        src = cell[mask]
        pair_src.append(src)
        pair_dst.append(src + step)
        pair_t.append(np.full(len(src), t))
    pair_src = np.concatenate(pair_src)
    pair_dst = np.concatenate(pair_dst)
    pair_t = np.concatenate(pair_t)

    rows = np.concatenate([pair_src, pair_dst, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([pair_dst, pair_src, np.arange(n, dtype=np.int64)])
    npairs = len(pair_src)
    scale = np.concatenate([pair_t, pair_t, np.zeros(n)])
    blocks = np.empty((len(rows), b, b))
    blocks[:2 * npairs] = (-scale[:2 * npairs, None, None]
                           * rng.uniform(0.5, 1.5, size=(2 * npairs, b, b)))
    blocks[2 * npairs:] = 0.0

    order = np.lexsort((cols, rows))
    rows, cols, blocks = rows[order], cols[order], blocks[order]
    rp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=rp[1:])
    pattern = SparsityPattern(n, rp, cols)

    # diagonal dominance: diag block = diag(row abs sums) + boost * I
    row_of = rows
    scalar_rowsums = np.zeros((n, b))
    np.add.at(scalar_rowsums, row_of, np.abs(blocks).sum(axis=2))
    diag_pos = pattern.diagonal_positions()
    dd = np.zeros((n, b, b))
    di = np.arange(b)
    dd[:, di, di] = scalar_rowsums + spec.diagonal_boost
    blocks[diag_pos] = dd

    a = BlockMatrix(pattern, b, blocks.reshape(-1), Layout.BLOCK_ROW_MAJOR)
    rhs = BlockVector(rng.uniform(-1.0, 1.0, size=n * b), b)
    wells = _generate_wells(spec, rng, n)
    meta = BundleMeta(f"synthetic-{nx}x{ny}x{nz}", b, (nx, ny, nz))
    return SystemBundle(a, rhs, wells, meta)


def _generate_wells(spec: GeneratorSpec, rng, n: int) -> WellSet:
    if spec.well_count == 0:
        return WellSet()
    nx, ny, nz, b = spec.nx, spec.ny, spec.nz, spec.block_size
    depth = min(spec.well_depth, nz)
    m = b + 1
    columns = rng.choice(nx * ny, size=min(spec.well_count, nx * ny),
                         replace=False)
    standard, multisegment = [], []
    for col in columns:
        cx, cy = int(col) % nx, int(col) // nx
        cells = np.array([cx + nx * (cy + ny * z) for z in range(depth)],
                         dtype=np.int64)
        bb = rng.uniform(-0.1, 0.1, size=(depth, m, b))
        cc = rng.uniform(-0.1, 0.1, size=(depth, m, b))
        if spec.well_kind == "standard":
            d = np.eye(m) + rng.uniform(0.0, 0.1, size=(m, m)) / m
            standard.append(StandardWell(cells, bb, cc, np.linalg.inv(d)))
        else:
            size = depth * m
            d = np.eye(size) + rng.uniform(0.0, 0.5, size=(size, size)) / size
            seg = np.arange(depth, dtype=np.int64)
            multisegment.append(MultisegmentWell(depth, seg, cells, bb,
                                                 seg.copy(), cells.copy(),
                                                 cc, d))
    return WellSet(standard, multisegment)
