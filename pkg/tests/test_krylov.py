import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from blocksolve import (BlockMatrix, BlockVector, MatrixOperator, ShapeError,
                        StoppingCriteria, WellAugmentedOperator, bicgstab,
                        decompose, dot, fold_into_matrix, level_schedule,
                        norm, sequential_plan, spmv)
from blocksolve.io import GeneratorSpec, generate
from blocksolve.krylov import dot_partials, norm_array

from conftest import matrix_from_pattern, random_no_fill_pattern, random_vector
from oracles import fsum_dot


class TestDot:
    def test_unit_vectors(self):
        e0 = BlockVector(np.array([1.0, 0.0, 0.0]), 1)
        e2 = BlockVector(np.array([0.0, 0.0, 1.0]), 1)
        assert dot(e0, e0) == 1.0
        assert dot(e0, e2) == 0.0

    def test_partials_follow_the_wavefront_width(self):
        ones = np.ones(130)
        partials = dot_partials(ones, ones)
        assert_array_equal(partials, [64.0, 64.0, 2.0])
        v = BlockVector(ones, 1)
        assert dot(v, v) == 130.0

    def test_matches_compensated_summation_oracle(self, rng):
        for n in (63, 64, 65, 1000, 4096):
            a = rng.standard_normal(n)
            b = rng.standard_normal(n)
            got = dot(BlockVector(a, 1), BlockVector(b, 1))
            assert_allclose(got, fsum_dot(a, b), rtol=1e-13, atol=1e-15)

    def test_norm_is_sqrt_of_dot(self, rng):
        a = random_vector(50, 3, rng)
        assert norm(a) == np.sqrt(dot(a, a))

    def test_empty(self):
        z = BlockVector(np.zeros(0), 1)
        assert dot(z, z) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            dot(BlockVector(np.ones(2), 1), BlockVector(np.ones(3), 1))


def _ilu(m, plan=None):
    return decompose(m, plan or sequential_plan(m.num_block_rows))


class TestBicgstab:
    def test_identity_converges_in_first_half_step(self):
        m = BlockMatrix.from_blocks([(i, i, np.eye(3)) for i in range(4)])
        b = BlockVector(np.arange(1.0, 13.0), 3)
        x, rep = bicgstab(MatrixOperator(m), _ilu(m), b)
        assert rep.converged
        assert rep.iterations == 0.5
        assert_array_equal(x.data, b.data)

    def test_exact_preconditioner_converges_in_one_iteration(self, rng):
        # on a no-fill pattern ILU0 equals LU, so M^-1 A = I
        p = random_no_fill_pattern(rng, 9)
        m = matrix_from_pattern(p, 3, rng)
        b = random_vector(9, 3, rng)
        x, rep = bicgstab(MatrixOperator(m), _ilu(m), b)
        assert rep.converged
        assert rep.iterations <= 1.0

    def test_generated_grid_matches_dense_oracle(self):
        # a strong diagonal keeps the condition number small enough that the
        # 0.01 residual reduction bounds the solution error at the same level
        bundle = generate(GeneratorSpec(10, 10, 10, diagonal_boost=20.0, seed=3))
        m, b = bundle.a, bundle.rhs
        x, rep = bicgstab(MatrixOperator(m), _ilu(m, level_schedule(m.pattern)),
                          b, stop=StoppingCriteria(0.01, 200))
        assert rep.converged
        x_true = np.linalg.solve(m.to_dense(), b.data)
        assert np.linalg.norm(x.data - x_true) <= 1e-2 * np.linalg.norm(x_true)

    def test_true_residual_meets_reduction_bound(self):
        bundle = generate(GeneratorSpec(6, 6, 6, seed=9))
        m, b = bundle.a, bundle.rhs
        stop = StoppingCriteria(0.01, 200)
        x, rep = bicgstab(MatrixOperator(m), _ilu(m), b, stop=stop)
        assert rep.converged
        true_res = norm_array(b.data - spmv(m, x).data)
        r0 = norm_array(b.data)
        assert true_res <= stop.relative_reduction * r0 * (1.0 + 1e-8)
        assert rep.final_norm <= stop.relative_reduction * rep.initial_norm

    def test_zero_rhs_converges_immediately(self):
        m = BlockMatrix.from_blocks([(0, 0, 2 * np.eye(2))])
        x, rep = bicgstab(MatrixOperator(m), _ilu(m), BlockVector.zeros(1, 2))
        assert rep.converged
        assert rep.iterations == 0.0
        assert_array_equal(x.data, np.zeros(2))

    def test_determinism_across_runs(self):
        bundle = generate(GeneratorSpec(5, 5, 5, seed=21))
        results = []
        for _ in range(2):
            m = BlockMatrix(bundle.a.pattern, 3, bundle.a.values.copy())
            fact = _ilu(m, level_schedule(m.pattern))
            x, rep = bicgstab(MatrixOperator(m), fact,
                              BlockVector(bundle.rhs.data.copy(), 3))
            results.append((x, rep))
        (x1, r1), (x2, r2) = results
        assert_array_equal(x1.data, x2.data)
        assert (r1.iterations, r1.initial_norm, r1.final_norm) == \
               (r2.iterations, r2.initial_norm, r2.final_norm)

    def test_budget_exhaustion_reports_not_converged(self):
        bundle = generate(GeneratorSpec(6, 6, 6, seed=9))
        m, b = bundle.a, bundle.rhs
        x, rep = bicgstab(MatrixOperator(m), None, b,
                          stop=StoppingCriteria(1e-6, 1))
        assert not rep.converged
        assert rep.failure_reason == "budget"
        assert rep.iterations == 1.0

    def test_monotone_budget(self):
        bundle = generate(GeneratorSpec(6, 6, 6, seed=9))
        m, b = bundle.a, bundle.rhs
        fact = _ilu(m)
        stop_small = StoppingCriteria(0.01, 200)
        _, rep = bicgstab(MatrixOperator(m), fact, b, stop=stop_small)
        assert rep.converged
        _, rep_big = bicgstab(MatrixOperator(m), fact, b,
                              stop=StoppingCriteria(0.01, 400))
        assert rep_big.converged
        assert rep_big.iterations == rep.iterations

    def test_breakdown_reported_not_raised(self):
        # singular operator with no preconditioner: gamma vanishes at once
        m = BlockMatrix.from_blocks([(0, 0, np.diag([1.0, 0.0]))])
        b = BlockVector(np.array([0.0, 1.0]), 2)
        x, rep = bicgstab(MatrixOperator(m), None, b)
        assert not rep.converged
        assert rep.failure_reason == "breakdown"

    def test_x0_sets_the_initial_residual(self):
        # the reduction target is relative to the residual at x0
        bundle = generate(GeneratorSpec(4, 4, 4, seed=13))
        m, b = bundle.a, bundle.rhs
        fact = _ilu(m)
        x0 = random_vector(64, 3, np.random.default_rng(0))
        _, rep = bicgstab(MatrixOperator(m), fact, b, x0=x0)
        assert rep.initial_norm == norm_array(b.data - spmv(m, x0).data)
        # a consistent system solved from its own solution: residual is zero
        x_exact = BlockVector(np.zeros(192), 3)
        _, rep0 = bicgstab(MatrixOperator(m), fact,
                           BlockVector.zeros(64, 3), x0=x_exact)
        assert rep0.converged and rep0.iterations == 0.0

    def test_shape_validation(self):
        m = BlockMatrix.from_blocks([(0, 0, np.eye(2))])
        with pytest.raises(ShapeError):
            bicgstab(MatrixOperator(m), None, BlockVector.zeros(2, 2))
        with pytest.raises(ShapeError):
            bicgstab(MatrixOperator(m), None, BlockVector.zeros(1, 2),
                     x0=BlockVector.zeros(2, 2))


class TestOperatorModes:
    def test_well_operator_matches_folded_solution(self):
        bundle = generate(GeneratorSpec(4, 4, 6, well_count=2, well_depth=4,
                                        seed=2))
        m, wells, b = bundle.a, bundle.wells, bundle.rhs
        stop = StoppingCriteria(0.01, 200)

        sep_op = WellAugmentedOperator(m, wells)
        x_sep, rep_sep = bicgstab(sep_op, _ilu(m), b, stop=stop)
        folded = fold_into_matrix(m, wells)
        x_cpl, rep_cpl = bicgstab(MatrixOperator(folded), _ilu(folded), b,
                                  stop=stop)
        assert rep_sep.converged and rep_cpl.converged
        gap = np.linalg.norm(x_sep.data - x_cpl.data)
        scale = max(np.linalg.norm(x_sep.data), np.linalg.norm(x_cpl.data))
        assert gap <= 10 * stop.relative_reduction * scale

    def test_well_operator_residual_uses_well_terms(self):
        bundle = generate(GeneratorSpec(4, 4, 4, well_count=1, well_depth=3,
                                        seed=4))
        op = WellAugmentedOperator(bundle.a, bundle.wells)
        x, rep = bicgstab(op, _ilu(bundle.a), bundle.rhs)
        assert rep.converged
        true_res = norm_array(bundle.rhs.data - op.apply_array(x.data))
        assert true_res <= 0.01 * rep.initial_norm * (1 + 1e-8)


class TestStoppingCriteria:
    def test_defaults(self):
        stop = StoppingCriteria()
        assert stop.relative_reduction == 0.01
        assert stop.max_iterations == 200

    @pytest.mark.parametrize("kwargs", [dict(relative_reduction=0.0),
                                        dict(relative_reduction=1.0),
                                        dict(max_iterations=0)])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            StoppingCriteria(**{**dict(relative_reduction=0.5,
                                       max_iterations=10), **kwargs})

    def test_frozen(self):
        with pytest.raises(dataclasses.FrozenInstanceError):
            StoppingCriteria().max_iterations = 7
