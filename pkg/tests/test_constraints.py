"""Constraint evaluation, membership, regularity, and projection tests.

The projection oracle is a brute-force grid search over the sphere case,
where the minimal perturbation is analytic.
"""

import numpy as np
import pytest
from helpers import alignment_constraint, cone_constraint, speed_constraint

from vnhsim.constraints import (
    ConstraintSet,
    constraint_scales,
    evaluate,
    on_manifold,
    project_to_manifold,
    regularity,
)
from vnhsim.errors import ConstraintDegeneracyError, ProjectionError
from vnhsim.expressions import parse
from vnhsim.riemannian import TangentState


def state(q, v):
    return TangentState(np.asarray(q, dtype=float), np.asarray(v, dtype=float))


def central_difference_jacobians(c, s, h=1e-6):
    m, n = c.count, s.dimension
    dq = np.zeros((m, n))
    dv = np.zeros((m, n))
    for i in range(n):
        for arr, out in ((s.q, dq), (s.v, dv)):
            plus = arr.copy()
            minus = arr.copy()
            plus[i] += h
            minus[i] -= h
            if arr is s.q:
                jp = evaluate(c, state(plus, s.v)).value
                jm = evaluate(c, state(minus, s.v)).value
            else:
                jp = evaluate(c, state(s.q, plus)).value
                jm = evaluate(c, state(s.q, minus)).value
            out[:, i] = (jp - jm) / (2 * h)
    return dq, dv


class TestConstruction:
    def test_rejects_too_many_constraints(self):
        exprs = (parse("v[0]", 2), parse("v[1]", 2))
        with pytest.raises(ValueError, match="m < n"):
            ConstraintSet(exprs, 2)

    def test_rejects_configuration_only_constraint(self):
        with pytest.raises(ValueError, match="velocity"):
            ConstraintSet((parse("q[0]^2 - 1", 3),), 3)


class TestEvaluate:
    def test_cone_at_reference_point(self):
        jac = evaluate(cone_constraint(a=1.0), state([0, 0, 0], [1, 0, 1]))
        assert jac.value[0] == 0.0
        assert np.array_equal(jac.dv[0], [2.0, 0.0, -2.0])
        assert np.array_equal(jac.dq[0], np.zeros(3))

    def test_speed_at_reference_point(self):
        jac = evaluate(speed_constraint(c=1.0), state([0, 0, 0], [0, 0, 1]))
        assert jac.value[0] == 0.0
        assert np.array_equal(jac.dv[0], [0.0, 0.0, 2.0])
        assert np.array_equal(jac.dq[0], np.zeros(3))

    def test_alignment_at_reference_start(self):
        jac = evaluate(alignment_constraint(), state([1, 0, 40, 0], [80, 40, 20, 10]))
        assert jac.value[0] == 0.0
        assert np.array_equal(jac.dv[0], [10.0, -20.0, -40.0, 80.0])
        assert np.array_equal(jac.dq[0], np.zeros(4))

    def test_partials_match_finite_differences(self):
        rng = np.random.default_rng(23)
        cases = [
            (cone_constraint(a=1.3), 3),
            (speed_constraint(c=5.0), 3),
            (alignment_constraint(), 4),
        ]
        for c, n in cases:
            for _ in range(500):
                s = state(rng.uniform(-3, 3, n), rng.uniform(-3, 3, n))
                jac = evaluate(c, s)
                fdq, fdv = central_difference_jacobians(c, s)
                for exact, approx in ((jac.dq, fdq), (jac.dv, fdv)):
                    scale = np.maximum(1.0, np.abs(exact))
                    assert np.all(np.abs(exact - approx) / scale <= 1e-6)


class TestMembership:
    def test_alignment_initial_state(self):
        c = alignment_constraint()
        assert on_manifold(c, state([1, 0, 40, 0], [80, 40, 20, 10]), tol=1e-9)

    def test_violated_sphere(self):
        c = speed_constraint(c=4.0)
        v = np.array([np.sqrt(5.0), 0.0, 0.0])  # |v|^2 = c + 1
        assert not on_manifold(c, state([0, 0, 0], v))

    def test_rest_state_off_sphere(self):
        c = speed_constraint(c=1.0)
        assert not on_manifold(c, state([0, 0, 0], [0, 0, 0]))

    def test_scale_uses_largest_term(self):
        c = alignment_constraint()
        scales = constraint_scales(c, state([1, 0, 40, 0], [80, 40, 20, 10]))
        assert scales[0] == 800.0

    def test_large_velocities_judged_relatively(self):
        # |phi| = 5e-7 would fail an absolute 1e-9 test but is tiny next to
        # the products of velocities around 80
        c = alignment_constraint()
        v = np.array([80.0, 40.0, 20.0, 10.0 + 5e-7 / 80.0])
        assert on_manifold(c, state([1, 0, 40, 0], v), tol=1e-9)


class TestRegularity:
    def test_cone_vertex_rank_zero(self):
        rep = regularity(cone_constraint(a=1.0), state([1, 1, 1], [0, 0, 0]))
        assert rep.rank == 0
        assert rep.smallest_singular_value == 0.0

    def test_sphere_rank_one(self):
        rep = regularity(speed_constraint(c=1.0), state([0, 0, 0], [0, 0, 1]))
        assert rep.rank == 1
        assert rep.smallest_singular_value > 0

    def test_alignment_rank_one(self):
        rep = regularity(alignment_constraint(), state([1, 0, 40, 0], [80, 40, 20, 10]))
        assert rep.rank == 1

    def test_rank_invariant_under_row_scaling(self):
        base = speed_constraint(c=2.0)
        doubled = ConstraintSet(
            (parse("2*(v[0]^2 + v[1]^2 + v[2]^2 - c)", 3, ["c"]),), 3, {"c": 2.0}
        )
        rng = np.random.default_rng(3)
        for _ in range(50):
            s = state(rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3))
            assert regularity(base, s).rank == regularity(doubled, s).rank


class TestProjection:
    def test_fixed_point_on_manifold(self):
        c = speed_constraint(c=1.0)
        s = state([0, 0, 0], [0, 0, 1])
        assert project_to_manifold(c, s) is s

    def test_sphere_radial_projection(self):
        c = speed_constraint(c=1.0)
        out = project_to_manifold(c, state([0, 0, 0], [0, 0, 2]))
        assert np.allclose(out.v, [0.0, 0.0, 1.0], atol=1e-12)
        assert np.array_equal(out.q, np.zeros(3))

    def test_minimal_perturbation_against_grid_search(self):
        c = speed_constraint(c=1.0)
        v_in = np.array([0.3, -0.2, 1.7])
        out = project_to_manifold(c, state([0, 0, 0], v_in))
        achieved = np.linalg.norm(out.v - v_in)
        # dense search over unit vectors near the projection direction
        best = np.inf
        grid = np.linspace(-1.0, 1.0, 201)
        for x in grid:
            for y in grid:
                rest = 1.0 - x * x - y * y
                if rest < 0:
                    continue
                for z in (np.sqrt(rest), -np.sqrt(rest)):
                    best = min(best, np.linalg.norm(np.array([x, y, z]) - v_in))
        assert achieved <= best + 1e-9

    def test_degenerate_start_rejected(self):
        c = speed_constraint(c=1.0)
        with pytest.raises(ConstraintDegeneracyError):
            project_to_manifold(c, state([0, 0, 0], [0, 0, 0]))

    def test_no_convergence_reported(self):
        c = speed_constraint(c=1.0)
        with pytest.raises(ProjectionError):
            project_to_manifold(c, state([0, 0, 0], [0, 0, 9.0]), max_iter=1)
