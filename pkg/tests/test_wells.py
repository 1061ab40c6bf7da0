import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from blocksolve import (BlockVector, MultisegmentWell, ShapeError,
                        SingularWellMatrix, StandardWell, WellMode, WellSet,
                        apply_multisegment, apply_standard, fold_into_matrix,
                        spmv)
from blocksolve.io import GeneratorSpec, generate

from conftest import matrix_from_pattern, random_vector, stencil_pattern
from oracles import dense_well_terms


def make_standard(rng, cells, b=3, m=4, scale=1.0):
    p = len(cells)
    d = np.eye(m) + rng.uniform(0.0, 0.1, (m, m)) / m
    return StandardWell(np.array(cells), scale * rng.uniform(-1, 1, (p, m, b)),
                        scale * rng.uniform(-1, 1, (p, m, b)), np.linalg.inv(d))


def make_msw(rng, cells, b=3, m=4, nseg=None):
    nseg = nseg or len(cells)
    seg = np.arange(len(cells)) % nseg
    size = nseg * m
    d = np.eye(size) + rng.uniform(0.0, 0.5, (size, size)) / size
    return MultisegmentWell(nseg, seg, np.array(cells),
                            rng.uniform(-1, 1, (len(cells), m, b)),
                            seg.copy(), np.array(cells),
                            rng.uniform(-1, 1, (len(cells), m, b)), d)


class TestStandardWell:
    def test_zero_b_leaves_y_unchanged(self, rng):
        w = make_standard(rng, [0, 2])
        w.b_blocks[:] = 0.0
        x, y = random_vector(4, 3, rng), random_vector(4, 3, rng)
        before = y.data.copy()
        apply_standard(w, x, y)
        assert_array_equal(y.data, before)

    def test_single_perforation_matches_dense_oracle(self, rng):
        w = make_standard(rng, [0])
        x = random_vector(3, 3, rng)
        y = BlockVector.zeros(3, 3)
        apply_standard(w, x, y)
        want = -dense_well_terms(WellSet([w]), x.data, 3)
        assert_allclose(y.data, want, rtol=1e-13, atol=1e-14)
        # only the perforated cell's rows move
        assert_array_equal(y.data[3:], np.zeros(6))

    def test_disjoint_wells_commute_exactly(self, rng):
        w1 = make_standard(rng, [0, 1])
        w2 = make_standard(rng, [3, 4])
        x = random_vector(5, 3, rng)
        y_a = random_vector(5, 3, rng)
        y_b = BlockVector(y_a.data.copy(), 3)
        apply_standard(w2, x, apply_standard(w1, x, y_a))
        apply_standard(w1, x, apply_standard(w2, x, y_b))
        assert_array_equal(y_a.data, y_b.data)

    def test_linear_in_x(self, rng):
        w = make_standard(rng, [1, 2])
        x = random_vector(4, 3, rng)
        y1 = BlockVector.zeros(4, 3)
        y2 = BlockVector.zeros(4, 3)
        apply_standard(w, x, y1)
        apply_standard(w, BlockVector(3.0 * x.data, 3), y2)
        assert_allclose(y2.data, 3.0 * y1.data, rtol=1e-12, atol=1e-13)

    def test_validation(self, rng):
        with pytest.raises(ShapeError):
            StandardWell(np.array([2, 1]), np.zeros((2, 4, 3)),
                         np.zeros((2, 4, 3)), np.eye(4))
        w = make_standard(rng, [0])
        with pytest.raises(ShapeError):
            apply_standard(w, random_vector(3, 2, rng), random_vector(3, 2, rng))


class TestMultisegmentWell:
    def test_single_segment_matches_standard_bit_for_bit(self):
        # integer data keeps every accumulation order exact, so the LU-solve
        # route and the stored-inverse route agree to the last bit
        cells = np.array([1, 3])
        bb = np.arange(1.0, 25.0).reshape(2, 4, 3)
        cc = np.arange(2.0, 26.0).reshape(2, 4, 3)
        std = StandardWell(cells, bb, cc, np.eye(4))
        msw = MultisegmentWell(1, np.zeros(2, dtype=int), cells, bb,
                               np.zeros(2, dtype=int), cells, cc, np.eye(4))
        x = BlockVector(np.arange(12.0), 3)
        y1 = BlockVector(np.zeros(12), 3)
        y2 = BlockVector(np.zeros(12), 3)
        apply_standard(std, x, y1)
        apply_multisegment(msw, x, y2)
        assert_array_equal(y1.data, y2.data)

    def test_zero_b_leaves_y_unchanged(self, rng):
        w = make_msw(rng, [0, 1, 2])
        w.b_blocks[:] = 0.0
        x, y = random_vector(4, 3, rng), random_vector(4, 3, rng)
        before = y.data.copy()
        apply_multisegment(w, x, y)
        assert_array_equal(y.data, before)

    def test_three_segments_match_dense_inverse_oracle(self, rng):
        w = make_msw(rng, [0, 2, 4], nseg=3)
        x = random_vector(5, 3, rng)
        y = BlockVector.zeros(5, 3)
        apply_multisegment(w, x, y)
        want = -dense_well_terms(WellSet([], [w]), x.data, 3)
        assert_allclose(y.data, want, rtol=1e-11, atol=1e-13)

    def test_column_uniqueness_enforced(self, rng):
        with pytest.raises(ShapeError):
            MultisegmentWell(2, np.array([0, 1]), np.array([3, 3]),
                             np.zeros((2, 4, 3)), np.array([0, 1]),
                             np.array([1, 2]), np.zeros((2, 4, 3)), np.eye(8))

    def test_singular_d_rejected(self):
        with pytest.raises(SingularWellMatrix):
            MultisegmentWell(1, np.array([0]), np.array([0]),
                             np.zeros((1, 4, 3)), np.array([0]),
                             np.array([0]), np.zeros((1, 4, 3)),
                             np.zeros((4, 4)))


class TestFoldIntoMatrix:
    def test_empty_set_is_identity(self, rng):
        m = matrix_from_pattern(stencil_pattern(2, 2, 2), 3, rng)
        out = fold_into_matrix(m, WellSet())
        assert_array_equal(out.values, m.values)
        assert_array_equal(out.pattern.column_indices, m.pattern.column_indices)

    def test_single_perforation_changes_one_diagonal_block(self, rng):
        m = matrix_from_pattern(stencil_pattern(2, 2, 2), 3, rng)
        w = make_standard(rng, [5], scale=0.1)
        out = fold_into_matrix(m, WellSet([w]))
        assert out.pattern.num_blocks == m.pattern.num_blocks
        delta = w.c_blocks[0].T @ w.d_inverse @ w.b_blocks[0]
        assert_allclose(out.block(5, 5), m.block(5, 5) - delta, rtol=1e-13)
        for (i, j) in m.pattern:
            if (i, j) != (5, 5):
                assert_array_equal(out.block(i, j), m.block(i, j))

    def test_operator_equivalence(self, rng):
        bundle = generate(GeneratorSpec(3, 3, 4, well_count=2, well_depth=4,
                                        seed=5))
        m, wells = bundle.a, bundle.wells
        folded = fold_into_matrix(m, wells)
        for _ in range(5):
            x = random_vector(m.num_block_rows, 3, rng)
            lhs = spmv(folded, x).data
            rhs = spmv(m, x).data - dense_well_terms(wells, x.data, 3)
            scale = np.abs(rhs).max()
            assert_allclose(lhs, rhs, rtol=1e-11, atol=1e-11 * scale)

    def test_coupled_pattern_strictly_larger_with_distant_perforations(self, rng):
        # perforations two layers apart have no pair entry in a 7-point grid
        bundle = generate(GeneratorSpec(3, 3, 4, well_count=1, well_depth=4,
                                        seed=5))
        folded = fold_into_matrix(bundle.a, bundle.wells)
        assert folded.pattern.num_blocks > bundle.a.pattern.num_blocks

    def test_multisegment_fold_matches_dense_oracle(self, rng):
        m = matrix_from_pattern(stencil_pattern(2, 2, 3), 3, rng)
        w = make_msw(rng, [0, 4, 8], nseg=3)
        folded = fold_into_matrix(m, WellSet([], [w]))
        x = random_vector(12, 3, rng)
        lhs = spmv(folded, x).data
        rhs = spmv(m, x).data - dense_well_terms(WellSet([], [w]), x.data, 3)
        assert_allclose(lhs, rhs, rtol=1e-11, atol=1e-12)


class TestWellSet:
    def test_coupled_mode_application_is_identity(self, rng):
        w = make_standard(rng, [0, 1])
        ws = WellSet([w], mode=WellMode.COUPLED)
        x, y = random_vector(3, 3, rng), random_vector(3, 3, rng)
        before = y.data.copy()
        ws.apply_contributions(x, y)
        assert_array_equal(y.data, before)

    def test_separate_mode_applies_all_wells(self, rng):
        ws = WellSet([make_standard(rng, [0])], [make_msw(rng, [1, 2])])
        x = random_vector(4, 3, rng)
        y = BlockVector.zeros(4, 3)
        ws.apply_contributions(x, y)
        want = -dense_well_terms(ws, x.data, 3)
        assert_allclose(y.data, want, rtol=1e-11, atol=1e-13)

    def test_overlapping_wells_apply_deterministically(self, rng):
        # both wells perforate cell 1; the set applies them in index order
        ws = WellSet([make_standard(rng, [0, 1]), make_standard(rng, [1, 2])])
        x = random_vector(3, 3, rng)
        y1 = BlockVector.zeros(3, 3)
        y2 = BlockVector.zeros(3, 3)
        ws.apply_contributions(x, y1)
        ws.apply_contributions(x, y2)
        assert_array_equal(y1.data, y2.data)
        want = -dense_well_terms(ws, x.data, 3)
        assert_allclose(y1.data, want, rtol=1e-12, atol=1e-13)

    def test_fold_with_overlapping_wells_matches_separate(self, rng):
        m = matrix_from_pattern(stencil_pattern(2, 2, 1), 3, rng)
        ws = WellSet([make_standard(rng, [0, 1], scale=0.2),
                      make_standard(rng, [1, 3], scale=0.2)])
        folded = fold_into_matrix(m, ws)
        x = random_vector(4, 3, rng)
        lhs = spmv(folded, x).data
        rhs = spmv(m, x).data - dense_well_terms(ws, x.data, 3)
        assert_allclose(lhs, rhs, rtol=1e-11, atol=1e-12)
