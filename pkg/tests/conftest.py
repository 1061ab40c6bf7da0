import numpy as np
import pytest

from blocksolve import BlockMatrix, BlockVector, SparsityPattern

from oracles import pattern_fill_positions


def pattern_from_rows(rows_cols: dict[int, list[int]], n: int) -> SparsityPattern:
    """Build a pattern from {row: [cols]} (cols need not be sorted)."""
    rp = np.zeros(n + 1, dtype=np.int64)
    cols = []
    for r in range(n):
        cs = sorted(rows_cols.get(r, []))
        rp[r + 1] = rp[r] + len(cs)
        cols.extend(cs)
    return SparsityPattern(n, rp, np.array(cols, dtype=np.int64))


def dominant_values(pattern: SparsityPattern, b: int, rng) -> np.ndarray:
    """Random block values with row-dominant diagonal blocks."""
    nnz = pattern.num_blocks
    vals = rng.uniform(-1.0, 1.0, size=(nnz, b, b))
    rowsums = np.zeros((pattern.num_block_rows, b))
    k = 0
    order = []
    for (i, j) in pattern:
        order.append((i, j, k))
        if i != j:
            rowsums[i] += np.abs(vals[k]).sum(axis=1)
        k += 1
    for (i, j, k) in order:
        if i == j:
            d = np.zeros((b, b))
            d[np.arange(b), np.arange(b)] = rowsums[i] + 1.0
            vals[k] = d
    return vals.reshape(-1)


def matrix_from_pattern(pattern: SparsityPattern, b: int, rng,
                        dominant: bool = True) -> BlockMatrix:
    if dominant:
        vals = dominant_values(pattern, b, rng)
    else:
        vals = rng.uniform(-1.0, 1.0, size=pattern.num_blocks * b * b)
    return BlockMatrix(pattern, b, vals)


def random_vector(n: int, b: int, rng) -> BlockVector:
    return BlockVector(rng.uniform(-1.0, 1.0, size=n * b), b)


def stencil_pattern(nx: int, ny: int, nz: int) -> SparsityPattern:
    """7-point stencil over an nx*ny*nz grid."""
    n = nx * ny * nz
    rows = {i: [i] for i in range(n)}
    for iz in range(nz):
        for iy in range(ny):
            for ix in range(nx):
                i = ix + nx * (iy + ny * iz)
                for j in ((i + 1) if ix < nx - 1 else None,
                          (i + nx) if iy < ny - 1 else None,
                          (i + nx * ny) if iz < nz - 1 else None):
                    if j is not None:
                        rows[i].append(j)
                        rows[j].append(i)
    return pattern_from_rows(rows, n)


_NO_FILL_SHAPES = ("diagonal", "tridiagonal", "dense", "bordered",
                   "lower", "upper", "random")


def random_no_fill_pattern(rng, n: int) -> SparsityPattern:
    """A pattern on which exact block LU creates no fill."""
    shape = _NO_FILL_SHAPES[int(rng.integers(len(_NO_FILL_SHAPES)))]
    rows = {i: {i} for i in range(n)}
    if shape == "tridiagonal":
        for i in range(n - 1):
            rows[i].add(i + 1)
            rows[i + 1].add(i)
    elif shape == "dense":
        for i in range(n):
            rows[i] = set(range(n))
    elif shape == "bordered":
        for i in range(n):
            rows[i].add(n - 1)
            rows[n - 1].add(i)
    elif shape == "lower":
        for i in range(n):
            picks = rng.integers(0, i + 1, size=min(2, i + 1))
            rows[i].update(int(p) for p in picks)
    elif shape == "upper":
        for i in range(n):
            picks = rng.integers(i, n, size=2)
            rows[i].update(int(p) for p in picks)
    elif shape == "random":
        for _ in range(20):
            cand = {i: {i} for i in range(n)}
            for _ in range(n):
                i, j = rng.integers(0, n, size=2)
                cand[int(i)].add(int(j))
                cand[int(j)].add(int(i))
            coords = {(i, j) for i, cs in cand.items() for j in cs}
            if not pattern_fill_positions(coords, n):
                rows = cand
                break
        else:
            for i in range(n - 1):  # rejection failed: fall back to a chain
                rows[i].add(i + 1)
                rows[i + 1].add(i)
    return pattern_from_rows({r: list(cs) for r, cs in rows.items()}, n)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
