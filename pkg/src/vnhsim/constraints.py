"""Velocity-level constraint sets, their Jacobians, regularity diagnostics,
and projection of states onto the zero set.

A constraint set defines M = phi^{-1}(0) inside the tangent bundle.  All
partials come from the dual-number engine.  Membership tolerances are judged
against an evaluation-derived scale (the largest absolute top-level term of
each phi), so constraints built from velocities of order 100 are not held to
an absolute 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConstraintDegeneracyError, ProjectionError
from .expressions import (
    Expr,
    additive_terms,
    eval_value,
    eval_with_gradient,
    expression_variables,
)
from .riemannian import TangentState

SINGULAR_VALUE_CUTOFF = 1e-10  # relative to the largest singular value


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """m < n scalar constraints, each depending on at least one velocity."""

    phi: tuple[Expr, ...]
    dimension: int
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(self.phi))
        m, n = len(self.phi), self.dimension
        if not 1 <= m < n:
            raise ValueError(f"need 1 <= m < n, got m={m}, n={n}")
        for e in self.phi:
            used = expression_variables(e)
            if not any(kind == "v" for kind, _ in used):
                raise ValueError(f"constraint {e} does not depend on any velocity")
            for _, index in used:
                if index >= n:
                    raise ValueError(f"constraint {e} indexes past dimension {n}")

    @property
    def count(self) -> int:
        return len(self.phi)


@dataclass(frozen=True, eq=False)
class ConstraintJacobians:
    """Values and exact first partials of the constraint map at one state."""

    value: np.ndarray  # (m,)
    dq: np.ndarray  # (m, n)
    dv: np.ndarray  # (m, n)


@dataclass(frozen=True)
class RegularityReport:
    rank: int
    smallest_singular_value: float


def evaluate(c: ConstraintSet, s: TangentState) -> ConstraintJacobians:
    """Constraint values with their q- and v-Jacobians."""
    m, n = c.count, s.dimension
    value = np.empty(m)
    dq = np.empty((m, n))
    dv = np.empty((m, n))
    for b, e in enumerate(c.phi):
        d = eval_with_gradient(e, s.q, s.v, c.params)
        value[b] = d.value
        dq[b] = d.dq
        dv[b] = d.dv
    return ConstraintJacobians(value, dq, dv)


def constraint_scales(c: ConstraintSet, s: TangentState) -> np.ndarray:
    """Per-constraint magnitude scale: the largest absolute top-level term."""
    scales = np.empty(c.count)
    for b, e in enumerate(c.phi):
        largest = 1.0
        for term in additive_terms(e):
            largest = max(largest, abs(eval_value(term, s.q, s.v, c.params)))
        scales[b] = largest
    return scales


def on_manifold(c: ConstraintSet, s: TangentState, tol: float = 1e-9) -> bool:
    """True when every |phi^b| is below tol relative to its own scale."""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    jac = evaluate(c, s)
    return bool(np.all(np.abs(jac.value) <= tol * constraint_scales(c, s)))


def regularity(c: ConstraintSet, s: TangentState) -> RegularityReport:
    """Rank of the stacked [dq | dv] Jacobian by singular values."""
    jac = evaluate(c, s)
    sv = np.linalg.svd(np.hstack([jac.dq, jac.dv]), compute_uv=False)
    rank = int(np.sum(sv > SINGULAR_VALUE_CUTOFF * sv[0])) if sv[0] > 0 else 0
    return RegularityReport(rank=rank, smallest_singular_value=float(sv[-1]))


def _full_rank_dv(dv: np.ndarray, m: int) -> None:
    sv = np.linalg.svd(dv, compute_uv=False)
    if sv[0] == 0.0 or np.sum(sv > SINGULAR_VALUE_CUTOFF * sv[0]) < m:
        raise ConstraintDegeneracyError(
            f"velocity Jacobian is rank-deficient (singular values {sv})"
        )


def project_to_manifold(
    c: ConstraintSet, s: TangentState, max_iter: int = 50, tol: float = 1e-9
) -> TangentState:
    """Move the velocity onto M by Gauss-Newton; the configuration is kept.

    Iterates v <- v - dv^T (dv dv^T)^{-1} phi with unit damping until
    on_manifold(tol) holds.  Raises on rank-deficient dv or no convergence.
    """
    state = s
    for _ in range(max_iter):
        if on_manifold(c, state, tol):
            return state
        jac = evaluate(c, state)
        _full_rank_dv(jac.dv, c.count)
        correction = jac.dv.T @ np.linalg.solve(jac.dv @ jac.dv.T, jac.value)
        state = TangentState(state.q, state.v - correction, state.t)
    if on_manifold(c, state, tol):
        return state
    raise ProjectionError(
        f"no convergence onto the constraint manifold in {max_iter} iterations"
    )
