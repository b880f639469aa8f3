"""Constraint-preserving feedback synthesis.

At a tangent state the controller solves the m-by-m linear system
A tau = b, where A[b][a] pairs the velocity gradient of constraint b with
the raised control force a, and b collects the constraint rates produced by
the drift field.  The solution is the unique feedback that keeps the
constraint manifold invariant wherever A is nonsingular.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .constraints import ConstraintJacobians, ConstraintSet, evaluate, on_manifold
from .errors import TransversalityViolation
from .riemannian import (
    ForceCovector,
    MetricField,
    PotentialField,
    TangentState,
    drift_acceleration,
    sharp,
)

CONDITION_LIMIT = 1e12
RESIDUAL_LIMIT = 1e-10


@dataclass(frozen=True, eq=False)
class MechanicalSystem:
    """Metric, potential, forces, and constraints of one control problem."""

    dimension: int
    metric: MetricField
    constraint: ConstraintSet
    control_forces: tuple[ForceCovector, ...]
    potential: PotentialField | None = None
    external_force: ForceCovector | None = None

    def __post_init__(self):
        object.__setattr__(self, "control_forces", tuple(self.control_forces))
        n = self.dimension
        if self.metric.dimension != n:
            raise ValueError(f"metric dimension {self.metric.dimension} != {n}")
        if self.constraint.dimension != n:
            raise ValueError(f"constraint dimension {self.constraint.dimension} != {n}")
        m = self.constraint.count
        if len(self.control_forces) != m:
            raise ValueError(
                f"need one control force per constraint: {len(self.control_forces)} != {m}"
            )
        for f in self.control_forces:
            if f.dimension != n:
                raise ValueError(f"control force has {f.dimension} components, expected {n}")
        if self.external_force is not None and self.external_force.dimension != n:
            raise ValueError("external force dimension mismatch")

    @property
    def control_count(self) -> int:
        return self.constraint.count


@dataclass(frozen=True, eq=False)
class ControlSolution:
    """Synthesized feedback with the solved system and its diagnostics."""

    tau: np.ndarray  # (m,)
    A: np.ndarray  # (m, m)
    b: np.ndarray  # (m,)
    residual: float  # |A tau - b| in the max norm
    condition_estimate: float
    on_constraint: bool  # advisory: synthesis point was on the manifold


def control_covectors(sys: MechanicalSystem, s: TangentState) -> np.ndarray:
    """Values of the m control force covectors, one per row."""
    return np.stack([f.values(s.q, s.v) for f in sys.control_forces])


def input_vector_fields(sys: MechanicalSystem, s: TangentState) -> np.ndarray:
    """Raised control forces Y^a = sharp(f^a), one per row."""
    return np.stack([sharp(sys.metric, s.q, f.values(s.q, s.v)) for f in sys.control_forces])


def _assemble(sys: MechanicalSystem, s: TangentState, jac: ConstraintJacobians):
    Y = input_vector_fields(sys, s)
    A = jac.dv @ Y.T
    # cancellation-free magnitude of each entry; the scale against which a
    # small pairing genuinely signals lost transversality
    S = np.abs(jac.dv) @ np.abs(Y.T)
    drift = drift_acceleration(sys, s)
    b = -(jac.dq @ s.v + jac.dv @ drift)
    return Y, A, S, b, drift


def _condition_estimate(A: np.ndarray, S: np.ndarray) -> float:
    if A.shape[0] == 1:
        mag = abs(float(A[0, 0]))
        return float(S[0, 0]) / mag if mag > 0.0 else np.inf
    try:
        inv_norm = np.max(np.abs(np.linalg.inv(A)).sum(axis=0))
    except np.linalg.LinAlgError:
        return np.inf
    scale_norm = np.max(S.sum(axis=0))
    return float(inv_norm * scale_norm)


def control_matrix(sys: MechanicalSystem, s: TangentState) -> np.ndarray:
    """The m-by-m pairing A[b][a] = dphi^b/dv . Y^a."""
    jac = evaluate(sys.constraint, s)
    _, A, _, _, _ = _assemble(sys, s, jac)
    return A


def control_rhs(sys: MechanicalSystem, s: TangentState) -> np.ndarray:
    """Right-hand side b^b = -(dphi^b/dq . v + dphi^b/dv . a_drift)."""
    jac = evaluate(sys.constraint, s)
    _, _, _, b, _ = _assemble(sys, s, jac)
    return b


def _solve(sys: MechanicalSystem, s: TangentState, jac: ConstraintJacobians):
    Y, A, S, b, drift = _assemble(sys, s, jac)
    cond = _condition_estimate(A, S)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise TransversalityViolation(
            f"control matrix singular at t={s.t} (condition estimate {cond:.3e})"
        )
    if A.shape[0] == 1:
        tau = np.array([b[0] / A[0, 0]])
    else:
        try:
            tau = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            raise TransversalityViolation(f"control matrix singular at t={s.t}")
    residual = float(np.max(np.abs(A @ tau - b)))
    if residual > RESIDUAL_LIMIT * max(1.0, float(np.max(np.abs(b)))):
        raise TransversalityViolation(
            f"control solve residual {residual:.3e} untrustworthy at t={s.t}"
        )
    return Y, A, b, drift, tau, cond, residual


def synthesize(sys: MechanicalSystem, s: TangentState) -> ControlSolution:
    """Solve A tau = b at state s, with transversality diagnostics.

    Raises TransversalityViolation when the (1-norm, cancellation-scaled)
    condition estimate exceeds 1e12, the solve is singular, or the solved
    residual fails its quality gate.
    """
    jac = evaluate(sys.constraint, s)
    _, A, b, _, tau, cond, residual = _solve(sys, s, jac)
    return ControlSolution(
        tau=tau,
        A=A,
        b=b,
        residual=residual,
        condition_estimate=cond,
        on_constraint=on_manifold(sys.constraint, s),
    )
