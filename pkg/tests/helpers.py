"""Shared builders for the three reference constraint sets and systems."""

import numpy as np

from vnhsim.constraints import ConstraintSet
from vnhsim.control import MechanicalSystem
from vnhsim.expressions import parse
from vnhsim.riemannian import ForceCovector, MetricField, PotentialField, TangentState

G_STANDARD = 9.81


def cone_constraint(a=1.0):
    """Velocity cone: a^2 (vx^2 + vy^2) = vz^2."""
    params = {"a": a}
    return ConstraintSet(
        (parse("a^2*(v[0]^2+v[1]^2) - v[2]^2", 3, ["a"]),), 3, params
    )


def speed_constraint(c):
    """Constant kinetic speed: |v|^2 = c."""
    params = {"c": c}
    return ConstraintSet(
        (parse("v[0]^2 + v[1]^2 + v[2]^2 - c", 3, ["c"]),), 3, params
    )


def alignment_constraint():
    """Two-particle velocity alignment in layout (x1, z1, x2, z2)."""
    return ConstraintSet((parse("v[0]*v[3] - v[2]*v[1]", 4),), 4)


def gravity_potential_3d(m=1.0, g=G_STANDARD):
    return PotentialField(parse("m*g*q[2]", 3, ["m", "g"]), {"m": m, "g": g})


def gravity_potential_two_particle(m1=1.0, m2=1.0, g=G_STANDARD):
    return PotentialField(
        parse("m1*g*q[1] + m2*g*q[3]", 4, ["m1", "m2", "g"]),
        {"m1": m1, "m2": m2, "g": g},
    )


def cone_force():
    """Covector x dx + y dy + dz."""
    return ForceCovector(tuple(parse(src, 3) for src in ("q[0]", "q[1]", "1")))


def speed_force():
    """Covector vx dx + vy dy + vz dz."""
    return ForceCovector(tuple(parse(src, 3) for src in ("v[0]", "v[1]", "v[2]")))


def alignment_force():
    """Covector dx1 + dz1."""
    return ForceCovector(tuple(parse(src, 4) for src in ("1", "1", "0", "0")))


def alignment_initial_state():
    return TangentState(
        q=np.array([1.0, 0.0, 40.0, 0.0]), v=np.array([80.0, 40.0, 20.0, 10.0])
    )


def cone_system(a=1.0, m=1.0, g=G_STANDARD):
    return MechanicalSystem(
        dimension=3,
        metric=MetricField.diagonal([m, m, m]),
        constraint=cone_constraint(a),
        control_forces=(cone_force(),),
        potential=gravity_potential_3d(m, g),
    )


def speed_system(c, m=1.0, g=G_STANDARD):
    return MechanicalSystem(
        dimension=3,
        metric=MetricField.diagonal([m, m, m]),
        constraint=speed_constraint(c),
        control_forces=(speed_force(),),
        potential=gravity_potential_3d(m, g),
    )


def alignment_system(m1=1.0, m2=1.0, g=G_STANDARD):
    return MechanicalSystem(
        dimension=4,
        metric=MetricField.diagonal([m1, m1, m2, m2]),
        constraint=alignment_constraint(),
        control_forces=(alignment_force(),),
        potential=gravity_potential_two_particle(m1, m2, g),
    )


def random_cone_states(rng, count, a=1.0, min_denominator=0.2):
    """On-manifold, non-singular samples of the velocity-cone system."""
    states = []
    while len(states) < count:
        q = rng.uniform(-3, 3, 3)
        vx, vy = rng.uniform(-2, 2, 2)
        planar = np.hypot(vx, vy)
        if planar < 0.3:
            continue
        vz = a * planar * (1 if rng.random() < 0.5 else -1)
        if abs(a * a * (q[0] * vx + q[1] * vy) - vz) < min_denominator:
            continue
        states.append(TangentState(q, np.array([vx, vy, vz])))
    return states


def random_speed_states(rng, count, c):
    """Samples on the sphere |v|^2 = c."""
    states = []
    for _ in range(count):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        states.append(TangentState(rng.uniform(-3, 3, 3), np.sqrt(c) * direction))
    return states


def random_alignment_states(rng, count, min_denominator=0.2):
    """On-manifold, non-singular samples of the two-particle system."""
    states = []
    while len(states) < count:
        vx1 = rng.uniform(-4, 4)
        if abs(vx1) < 0.3:
            continue
        vz1 = rng.uniform(-4, 4)
        vx2 = rng.uniform(-4, 4)
        vz2 = vx2 * vz1 / vx1
        if abs(vz2 - vx2) < min_denominator or abs(vz2) > 50:
            continue
        q = rng.uniform(-5, 5, 4)
        states.append(TangentState(q, np.array([vx1, vz1, vx2, vz2])))
    return states
