"""Metric, Christoffel, and drift tests.

The Christoffel oracle is an independent finite-difference implementation of
the Levi-Civita formula (explicit loops, not the production einsum path), run
before freezing the hand-computed values below.
"""

from types import SimpleNamespace

import numpy as np
import pytest

from vnhsim.errors import MetricDegeneracyError
from vnhsim.expressions import parse
from vnhsim.riemannian import (
    ForceCovector,
    MetricField,
    PotentialField,
    TangentState,
    christoffel_at,
    drift_acceleration,
    flat,
    metric_at,
    sharp,
)


def expression_metric(rows, params=None, n=None):
    n = n or len(rows)
    names = list(params or {})
    entries = [[parse(src, n, names) for src in row] for row in rows]
    return MetricField.from_expressions(entries, params)


def polar_like_metric():
    return expression_metric([["1", "0"], ["0", "q[0]^2"]])


def christoffel_oracle(M, q, h=1e-6):
    """Levi-Civita symbols from central differences of the metric."""
    n = len(q)
    dG = np.zeros((n, n, n))
    for l in range(n):
        qp, qm = q.copy(), q.copy()
        qp[l] += h
        qm[l] -= h
        dG[l] = (metric_at(M, qp) - metric_at(M, qm)) / (2 * h)
    Ginv = np.linalg.inv(metric_at(M, q))
    Gamma = np.zeros((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for l in range(n):
                    acc += Ginv[k, l] * (dG[i][j, l] + dG[j][i, l] - dG[l][i, j])
                Gamma[k, i, j] = 0.5 * acc
    return Gamma


class TestTangentState:
    def test_basic_construction(self):
        s = TangentState(q=[1.0, 0.0], v=[0.5, -0.5], t=2.0)
        assert s.dimension == 2
        assert not s.q.flags.writeable

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError):
            TangentState(q=[1.0, 2.0], v=[1.0])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            TangentState(q=[np.nan], v=[0.0])


class TestMetric:
    def test_unit_masses_identity(self):
        M = MetricField.diagonal([1.0, 1.0, 1.0])
        assert np.array_equal(metric_at(M, np.zeros(3)), np.eye(3))

    def test_scaled_masses(self):
        M = MetricField.diagonal([2.0, 2.0, 2.0])
        assert np.array_equal(metric_at(M, np.zeros(3)), 2.0 * np.eye(3))

    def test_two_particle_unit_masses(self):
        M = MetricField.diagonal([1.0, 1.0, 1.0, 1.0])
        assert np.array_equal(metric_at(M, np.zeros(4)), np.eye(4))

    def test_negative_mass_rejected(self):
        with pytest.raises(MetricDegeneracyError):
            MetricField.diagonal([1.0, -1.0])

    def test_asymmetric_dense_rejected(self):
        with pytest.raises(MetricDegeneracyError, match="symmetric"):
            MetricField.dense([[1.0, 0.5], [0.2, 1.0]])

    def test_indefinite_dense_rejected(self):
        with pytest.raises(MetricDegeneracyError):
            MetricField.dense([[1.0, 2.0], [2.0, 1.0]])

    def test_expression_metric_degenerate_point(self):
        M = polar_like_metric()
        with pytest.raises(MetricDegeneracyError, match="q="):
            metric_at(M, np.array([0.0, 1.0]))

    def test_expression_metric_rejects_velocity_terms(self):
        with pytest.raises(ValueError, match="velocity"):
            expression_metric([["1", "0"], ["0", "v[0]^2"]])


class TestChristoffel:
    def test_constant_metric_vanishes(self):
        for M in (MetricField.diagonal([2.0, 3.0]), MetricField.dense([[2.0, 1.0], [1.0, 2.0]])):
            assert np.array_equal(christoffel_at(M, np.zeros(2)), np.zeros((2, 2, 2)))

    def test_polar_like_hand_values(self):
        M = polar_like_metric()
        q = np.array([2.0, 0.3])
        Gamma = christoffel_at(M, q)
        expected = np.zeros((2, 2, 2))
        expected[0, 1, 1] = -2.0
        expected[1, 0, 1] = expected[1, 1, 0] = 0.5
        assert np.allclose(Gamma, expected, atol=1e-14), Gamma
        oracle = christoffel_oracle(M, q)
        assert np.allclose(Gamma, oracle, atol=1e-8)

    def test_dense_expression_metric_against_oracle(self):
        M = expression_metric(
            [["1 + q[1]^2", "q[0]*q[1]"], ["q[1]*q[0]", "2 + q[0]^2"]]
        )
        rng = np.random.default_rng(5)
        for _ in range(20):
            q = rng.uniform(-2, 2, 2)
            Gamma = christoffel_at(M, q)
            assert np.allclose(Gamma, christoffel_oracle(M, q), atol=1e-7)
            assert np.array_equal(Gamma, Gamma.transpose(0, 2, 1))


class TestMusicalIsomorphisms:
    def test_identity_metric(self):
        M = MetricField.diagonal([1.0, 1.0, 1.0])
        assert np.array_equal(sharp(M, np.zeros(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_diagonal_scaling(self):
        M = MetricField.diagonal([2.0, 2.0, 2.0])
        assert np.array_equal(sharp(M, np.zeros(3), [2.0, 4.0, 6.0]), [1.0, 2.0, 3.0])

    def test_two_particle_input_field(self):
        M = MetricField.diagonal([1.0, 1.0, 1.0, 1.0])
        Y = sharp(M, np.zeros(4), [1.0, 1.0, 0.0, 0.0])
        assert np.array_equal(Y, [1.0, 1.0, 0.0, 0.0])

    def test_sharp_flat_round_trip(self):
        rng = np.random.default_rng(11)
        metrics = []
        for _ in range(4):
            metrics.append(MetricField.diagonal(rng.uniform(0.5, 3.0, 3)))
            B = rng.normal(size=(3, 3))
            metrics.append(MetricField.dense(B @ B.T + 3.0 * np.eye(3)))
        poly = expression_metric(
            [["1 + q[1]^2", "q[0]*q[1]"], ["q[1]*q[0]", "2 + q[0]^2"]]
        )
        count = 0
        while count < 100:
            M = metrics[count % len(metrics)] if count % 3 else poly
            n = M.dimension
            q = rng.uniform(-2, 2, n)
            alpha = rng.normal(size=n)
            back = flat(M, q, sharp(M, q, alpha))
            scale = max(1.0, np.max(np.abs(alpha)))
            assert np.max(np.abs(back - alpha)) <= 1e-12 * scale
            count += 1


class TestDrift:
    def test_gravity_only(self):
        sys = SimpleNamespace(
            metric=MetricField.diagonal([1.0, 1.0, 1.0]),
            potential=PotentialField(parse("m*g*q[2]", 3, ["m", "g"]), {"m": 1.0, "g": 9.81}),
            external_force=None,
        )
        s = TangentState(q=[0.4, -1.0, 2.0], v=[3.0, 0.0, 1.0])
        assert np.allclose(drift_acceleration(sys, s), [0.0, 0.0, -9.81], atol=1e-15)

    def test_free_particle(self):
        sys = SimpleNamespace(
            metric=MetricField.dense([[2.0, 0.5], [0.5, 1.0]]),
            potential=None,
            external_force=None,
        )
        s = TangentState(q=[1.0, 1.0], v=[-2.0, 0.3])
        assert np.array_equal(drift_acceleration(sys, s), np.zeros(2))

    def test_two_particle_gravity(self):
        sys = SimpleNamespace(
            metric=MetricField.diagonal([1.0, 1.0, 1.0, 1.0]),
            potential=PotentialField(
                parse("m1*g*q[1] + m2*g*q[3]", 4, ["m1", "m2", "g"]),
                {"m1": 1.0, "m2": 1.0, "g": 9.81},
            ),
            external_force=None,
        )
        s = TangentState(q=[1.0, 0.0, 40.0, 0.0], v=[80.0, 40.0, 20.0, 10.0])
        assert np.allclose(drift_acceleration(sys, s), [0.0, -9.81, 0.0, -9.81], atol=1e-15)

    def test_external_force_covector(self):
        sys = SimpleNamespace(
            metric=MetricField.diagonal([2.0, 2.0]),
            potential=None,
            external_force=ForceCovector((parse("1", 2), parse("v[0]", 2))),
        )
        s = TangentState(q=[0.0, 0.0], v=[3.0, 0.0])
        assert np.allclose(drift_acceleration(sys, s), [0.5, 1.5])

    def test_geodesic_kinetic_energy_conserved(self):
        M = polar_like_metric()
        sys = SimpleNamespace(metric=M, potential=None, external_force=None)

        def kinetic(q, v):
            return 0.5 * v @ metric_at(M, q) @ v

        # plain local RK4, independent of the production integrator
        q = np.array([2.0, 0.0])
        v = np.array([0.3, 0.4])
        h = 1e-3
        k0 = kinetic(q, v)
        for _ in range(1000):
            def acc(qq, vv):
                return drift_acceleration(sys, TangentState(qq, vv))

            a1 = acc(q, v)
            a2 = acc(q + 0.5 * h * v, v + 0.5 * h * a1)
            v2 = v + 0.5 * h * a1
            a3 = acc(q + 0.5 * h * v2, v + 0.5 * h * a2)
            v3 = v + 0.5 * h * a2
            a4 = acc(q + h * v3, v + h * a3)
            q = q + (h / 6.0) * (v + 2 * v2 + 2 * v3 + (v + h * a3))
            v = v + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        assert abs(kinetic(q, v) - k0) < 1e-8, f"kinetic drifted by {kinetic(q, v) - k0}"
