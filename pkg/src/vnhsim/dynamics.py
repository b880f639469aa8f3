"""Closed-loop and nonholonomic vector fields, fixed-step RK4 integration,
energy bookkeeping, and the span test that decides when the two dynamics
coincide.

The integrator re-synthesizes the feedback at every RK4 stage.  It refuses
to step across a control singularity: besides the condition-estimate limit,
a sign change of det(A) between consecutive stage evaluations means the
trajectory crossed a state where the control system is singular, and the run
halts with a truncated record instead of integrating garbage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .constraints import evaluate
from .control import (
    MechanicalSystem,
    _condition_estimate,
    _solve,
    control_covectors,
)
from .errors import (
    ConstraintDegeneracyError,
    EvaluationError,
    MetricDegeneracyError,
    TransversalityViolation,
)
from .riemannian import TangentState, drift_acceleration, flat, sharp

RANK_CUTOFF = 1e-8  # relative, for the span-equality test


@dataclass(frozen=True, eq=False)
class MultiplierSolution:
    """Chetaev multipliers with the Gram matrix that produced them."""

    multipliers: np.ndarray  # (m,)
    gram: np.ndarray  # (m, m)


@dataclass(frozen=True)
class HaltInfo:
    """Why and when an integration stopped before its final time."""

    time: float
    reason: str
    kind: str  # exception class name


@dataclass(frozen=True, eq=False)
class FieldEval:
    """One vector-field evaluation plus the diagnostics worth recording."""

    velocity: np.ndarray
    acceleration: np.ndarray
    controls: np.ndarray  # tau for the closed loop, lambda for Chetaev
    constraint_values: np.ndarray
    condition_estimate: float
    residual: float
    determinant: float | None  # of A; None when pole tracking is meaningless


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Fixed-step trajectory samples with controls, constraint values,
    energies, and solver diagnostics; truncated with halt info on failure."""

    times: np.ndarray  # (K,)
    positions: np.ndarray  # (K, n)
    velocities: np.ndarray  # (K, n)
    controls: np.ndarray  # (K, m)
    constraint_values: np.ndarray  # (K, m)
    total_energy: np.ndarray  # (K,)
    kinetic_energy: np.ndarray  # (K,)
    condition_estimates: np.ndarray  # (K,)
    residuals: np.ndarray  # (K,)
    halt: HaltInfo | None = None

    def __len__(self) -> int:
        return self.times.shape[0]

    def state(self, k: int) -> TangentState:
        return TangentState(self.positions[k], self.velocities[k], float(self.times[k]))


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    sup_norm_state_gap: float
    per_time_gaps: np.ndarray


def energies(sys: MechanicalSystem, s: TangentState) -> tuple[float, float]:
    """(total, kinetic) energy at a state."""
    kinetic = 0.5 * float(s.v @ flat(sys.metric, s.q, s.v))
    total = kinetic
    if sys.potential is not None:
        total += float(sys.potential.value(s.q))
    return total, kinetic


def _closed_loop_eval(sys: MechanicalSystem, s: TangentState) -> FieldEval:
    jac = evaluate(sys.constraint, s)
    Y, A, _, drift, tau, cond, residual = _solve(sys, s, jac)
    det = float(A[0, 0]) if A.shape[0] == 1 else float(np.linalg.det(A))
    return FieldEval(
        velocity=s.v,
        acceleration=drift + tau @ Y,
        controls=tau,
        constraint_values=jac.value,
        condition_estimate=cond,
        residual=residual,
        determinant=det,
    )


def closed_loop_field(sys: MechanicalSystem, s: TangentState) -> tuple[np.ndarray, np.ndarray]:
    """(velocity, acceleration) of the feedback-controlled system."""
    out = _closed_loop_eval(sys, s)
    return out.velocity, out.acceleration


def make_closed_loop_field(sys: MechanicalSystem) -> Callable[[TangentState], FieldEval]:
    return lambda s: _closed_loop_eval(sys, s)


def _chetaev_solve(sys: MechanicalSystem, s: TangentState):
    jac = evaluate(sys.constraint, s)
    raised = np.stack([sharp(sys.metric, s.q, row) for row in jac.dv])
    W = jac.dv @ raised.T
    drift = drift_acceleration(sys, s)
    rhs = -(jac.dq @ s.v + jac.dv @ drift)
    if W.shape[0] == 1:
        w = float(W[0, 0])
        if not np.isfinite(w) or w <= 0.0:
            raise ConstraintDegeneracyError(
                f"constraint velocity gradient degenerate at t={s.t} (gram {w})"
            )
        lam = np.array([rhs[0] / w])
    else:
        try:
            L = np.linalg.cholesky(W)
        except np.linalg.LinAlgError:
            raise ConstraintDegeneracyError(
                f"constraint velocity gradient degenerate at t={s.t}"
            )
        lam = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    return jac, raised, W, drift, rhs, lam


def chetaev_multipliers(sys: MechanicalSystem, s: TangentState) -> MultiplierSolution:
    """Reaction multipliers lambda from the Gram system W lambda = rhs."""
    _, _, W, _, _, lam = _chetaev_solve(sys, s)
    return MultiplierSolution(multipliers=lam, gram=W)


def _nonholonomic_eval(sys: MechanicalSystem, s: TangentState) -> FieldEval:
    jac, raised, W, drift, rhs, lam = _chetaev_solve(sys, s)
    S = np.abs(jac.dv) @ np.abs(raised.T)
    return FieldEval(
        velocity=s.v,
        acceleration=drift + lam @ raised,
        controls=lam,
        constraint_values=jac.value,
        condition_estimate=_condition_estimate(W, S),
        residual=float(np.max(np.abs(W @ lam - rhs))),
        determinant=None,
    )


def nonholonomic_field(sys: MechanicalSystem, s: TangentState) -> tuple[np.ndarray, np.ndarray]:
    """(velocity, acceleration) of the Chetaev constrained system."""
    out = _nonholonomic_eval(sys, s)
    return out.velocity, out.acceleration


def make_nonholonomic_field(sys: MechanicalSystem) -> Callable[[TangentState], FieldEval]:
    return lambda s: _nonholonomic_eval(sys, s)


def plain_field(fn: Callable[[TangentState], tuple[np.ndarray, np.ndarray]]):
    """Wrap a bare (velocity, acceleration) function for rk4_integrate."""

    def field(s: TangentState) -> FieldEval:
        vel, acc = fn(s)
        return FieldEval(
            velocity=np.asarray(vel, dtype=float),
            acceleration=np.asarray(acc, dtype=float),
            controls=np.empty(0),
            constraint_values=np.empty(0),
            condition_estimate=1.0,
            residual=0.0,
            determinant=None,
        )

    return field


_HALTING = (
    TransversalityViolation,
    ConstraintDegeneracyError,
    EvaluationError,
    MetricDegeneracyError,
)


def rk4_integrate(
    field: Callable[[TangentState], FieldEval],
    s0: TangentState,
    h: float,
    steps: int,
    monitor: Callable[[TangentState], tuple[float, float]] | None = None,
    post_step: Callable[[TangentState], TangentState] | None = None,
) -> TrajectoryRecord:
    """Classical fixed-step RK4 on (q, v).

    The feedback inside `field` is re-evaluated at every stage.  A field
    error truncates the record at the last completed step; the halt carries
    the offending time.  A sign change of the control-matrix determinant
    between consecutive stage evaluations is treated as a crossed
    singularity and halts the same way.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    if steps < 0:
        raise ValueError(f"step count must be nonnegative, got {steps}")

    rows = []
    halt = None
    state = s0
    prev_det = None

    def guarded(s: TangentState, at_time: float) -> FieldEval:
        nonlocal prev_det
        out = field(s)
        det = out.determinant
        if det is not None:
            if prev_det is not None and det * prev_det < 0.0:
                raise TransversalityViolation(
                    f"control matrix determinant changed sign near t={at_time}: "
                    "the trajectory crossed a singular state"
                )
            prev_det = det
        return out

    k = 0
    try:
        while True:
            t = s0.t + k * h
            first = guarded(state, t)
            total, kinetic = monitor(state) if monitor is not None else (0.0, 0.0)
            rows.append((t, state.q, state.v, first, total, kinetic))
            if k == steps:
                break

            q, v = state.q, state.v
            k1v, k1a = first.velocity, first.acceleration
            s2 = TangentState(q + 0.5 * h * k1v, v + 0.5 * h * k1a, t + 0.5 * h)
            e2 = guarded(s2, t + 0.5 * h)
            s3 = TangentState(q + 0.5 * h * e2.velocity, v + 0.5 * h * e2.acceleration, t + 0.5 * h)
            e3 = guarded(s3, t + 0.5 * h)
            s4 = TangentState(q + h * e3.velocity, v + h * e3.acceleration, t + h)
            e4 = guarded(s4, t + h)

            q_new = q + (h / 6.0) * (k1v + 2.0 * e2.velocity + 2.0 * e3.velocity + e4.velocity)
            v_new = v + (h / 6.0) * (k1a + 2.0 * e2.acceleration + 2.0 * e3.acceleration + e4.acceleration)
            if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(v_new))):
                raise EvaluationError(f"state became non-finite during the step at t={t}")
            state = TangentState(q_new, v_new, t + h)
            if post_step is not None:
                state = post_step(state)
            k += 1
    except _HALTING as exc:
        halt = HaltInfo(time=s0.t + k * h, reason=str(exc), kind=type(exc).__name__)
    except ValueError as exc:
        # TangentState rejects non-finite intermediate stage states
        halt = HaltInfo(time=s0.t + k * h, reason=str(exc), kind=type(exc).__name__)

    count = len(rows)
    m = rows[0][3].controls.shape[0] if count else 0
    n = s0.dimension
    record = TrajectoryRecord(
        times=np.array([r[0] for r in rows]),
        positions=np.array([r[1] for r in rows]).reshape(count, n),
        velocities=np.array([r[2] for r in rows]).reshape(count, n),
        controls=np.array([r[3].controls for r in rows]).reshape(count, m),
        constraint_values=np.array([r[3].constraint_values for r in rows]).reshape(count, m),
        total_energy=np.array([r[4] for r in rows]),
        kinetic_energy=np.array([r[5] for r in rows]),
        condition_estimates=np.array([r[3].condition_estimate for r in rows]),
        residuals=np.array([r[3].residual for r in rows]),
        halt=halt,
    )
    return record


def simulate_closed_loop(
    sys: MechanicalSystem,
    s0: TangentState,
    h: float,
    steps: int,
    project_each_step: bool = False,
) -> TrajectoryRecord:
    """Integrate the feedback-controlled system, recording energies."""
    from .constraints import project_to_manifold

    post = None
    if project_each_step:
        post = lambda s: project_to_manifold(sys.constraint, s)
    return rk4_integrate(
        make_closed_loop_field(sys),
        s0,
        h,
        steps,
        monitor=lambda s: energies(sys, s),
        post_step=post,
    )


def simulate_nonholonomic(
    sys: MechanicalSystem, s0: TangentState, h: float, steps: int
) -> TrajectoryRecord:
    """Integrate the Chetaev constrained system, recording energies."""
    return rk4_integrate(
        make_nonholonomic_field(sys), s0, h, steps, monitor=lambda s: energies(sys, s)
    )


def _rank(matrix: np.ndarray) -> int:
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv.shape[0] == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > RANK_CUTOFF * sv[0]))


def proposition4_check(sys: MechanicalSystem, s: TangentState) -> bool:
    """True when the control covectors span exactly the constraint covectors.

    Both families must individually have rank m and their stack must still
    have rank m; then the closed-loop and nonholonomic dynamics coincide on
    the manifold.
    """
    F = control_covectors(sys, s)
    dv = evaluate(sys.constraint, s).dv
    m = sys.constraint.count
    return _rank(F) == m and _rank(dv) == m and _rank(np.vstack([F, dv])) == m


def compare_trajectories(r1: TrajectoryRecord, r2: TrajectoryRecord) -> ComparisonReport:
    """Per-time and sup-norm gaps between two records on the same grid."""
    if r1.times.shape != r2.times.shape or not np.array_equal(r1.times, r2.times):
        raise ValueError("trajectory records do not share a time grid")
    diff_q = np.abs(r1.positions - r2.positions)
    diff_v = np.abs(r1.velocities - r2.velocities)
    per_time = np.max(np.hstack([diff_q, diff_v]), axis=1) if len(r1) else np.empty(0)
    sup = float(np.max(per_time)) if per_time.size else 0.0
    return ComparisonReport(sup_norm_state_gap=sup, per_time_gaps=per_time)
