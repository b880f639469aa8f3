"""Riemannian data on R^n: metric fields, Christoffel symbols, musical
isomorphisms, potentials, force covectors, and the drift acceleration of the
unactuated forced system.

Everything lives in a single global chart.  Metric derivatives for the
expression-backed kind come from the dual-number engine, so Christoffel
symbols are exact to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .errors import MetricDegeneracyError
from .expressions import (
    Expr,
    eval_value,
    eval_with_gradient,
    expression_variables,
)

if TYPE_CHECKING:  # pragma: no cover - only for annotations
    from .control import MechanicalSystem

CONSTANT_DIAGONAL = "constant-diagonal"
CONSTANT_DENSE = "constant-dense"
EXPRESSION = "expression"


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class TangentState:
    """A point of the tangent bundle: configuration, velocity, and time."""

    q: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen_array(self.q, "q"))
        object.__setattr__(self, "v", _frozen_array(self.v, "v"))
        if self.q.ndim != 1 or self.q.shape != self.v.shape or self.q.shape[0] < 1:
            raise ValueError(
                f"q and v must be equal-length vectors, got {self.q.shape} and {self.v.shape}"
            )

    @property
    def dimension(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True, eq=False)
class MetricField:
    """Metric tensor field G_ij(q), constant or expression-backed."""

    kind: str
    dimension: int
    masses: np.ndarray | None = None
    matrix: np.ndarray | None = None
    entries: tuple[tuple[Expr, ...], ...] | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def diagonal(cls, masses) -> "MetricField":
        arr = _frozen_array(masses, "masses")
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise ValueError("masses must be a nonempty vector")
        if np.any(arr <= 0):
            raise MetricDegeneracyError(f"diagonal metric needs positive masses, got {arr}")
        return cls(kind=CONSTANT_DIAGONAL, dimension=arr.shape[0], masses=arr)

    @classmethod
    def dense(cls, matrix) -> "MetricField":
        arr = _frozen_array(matrix, "metric matrix")
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"metric matrix must be square, got {arr.shape}")
        if not np.array_equal(arr, arr.T):
            raise MetricDegeneracyError("constant metric matrix is not symmetric")
        try:
            np.linalg.cholesky(arr)
        except np.linalg.LinAlgError:
            raise MetricDegeneracyError("constant metric matrix is not positive-definite")
        return cls(kind=CONSTANT_DENSE, dimension=arr.shape[0], matrix=arr)

    @classmethod
    def from_expressions(
        cls, entries: Sequence[Sequence[Expr]], params: Mapping[str, float] | None = None
    ) -> "MetricField":
        n = len(entries)
        rows = tuple(tuple(row) for row in entries)
        if any(len(row) != n for row in rows) or n < 1:
            raise ValueError("expression metric must be a square matrix of expressions")
        for row in rows:
            for e in row:
                if any(kind == "v" for kind, _ in expression_variables(e)):
                    raise ValueError(f"metric entry {e} references a velocity variable")
        return cls(kind=EXPRESSION, dimension=n, entries=rows, params=dict(params or {}))


def _expression_matrix_at(M: MetricField, q: np.ndarray) -> np.ndarray:
    n = M.dimension
    v0 = np.zeros(n)
    G = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            G[i, j] = eval_value(M.entries[i][j], q, v0, M.params)
    scale = max(1.0, float(np.max(np.abs(G))))
    if np.max(np.abs(G - G.T)) > 1e-12 * scale:
        raise MetricDegeneracyError(f"metric not symmetric at q={q}")
    return G


def metric_at(M: MetricField, q) -> np.ndarray:
    """Metric matrix G(q), checked symmetric positive-definite."""
    q = np.asarray(q, dtype=float)
    if M.kind == CONSTANT_DIAGONAL:
        return np.diag(M.masses)
    if M.kind == CONSTANT_DENSE:
        return M.matrix.copy()
    G = _expression_matrix_at(M, q)
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise MetricDegeneracyError(f"metric not positive-definite at q={q}")
    return G


def christoffel_at(M: MetricField, q) -> np.ndarray:
    """Levi-Civita symbols Gamma[k, i, j] at q; zero for constant metrics."""
    q = np.asarray(q, dtype=float)
    n = M.dimension
    if M.kind != EXPRESSION:
        return np.zeros((n, n, n))
    v0 = np.zeros(n)
    G = np.empty((n, n))
    dG = np.empty((n, n, n))  # dG[l, i, j] = d G_ij / d q_l
    for i in range(n):
        for j in range(n):
            d = eval_with_gradient(M.entries[i][j], q, v0, M.params)
            G[i, j] = d.value
            dG[:, i, j] = d.dq
    scale = max(1.0, float(np.max(np.abs(G))))
    if np.max(np.abs(G - G.T)) > 1e-12 * scale:
        raise MetricDegeneracyError(f"metric not symmetric at q={q}")
    # mirror so the lower-index symmetry of the formula is exact in floats
    dG = 0.5 * (dG + dG.transpose(0, 2, 1))
    try:
        Ginv = np.linalg.inv(G)
    except np.linalg.LinAlgError:
        raise MetricDegeneracyError(f"metric not positive-definite at q={q}")
    # T[i, j, l] = d_i G_jl + d_j G_il - d_l G_ij
    T = dG + dG.transpose(1, 0, 2) - dG.transpose(1, 2, 0)
    return 0.5 * np.einsum("kl,ijl->kij", Ginv, T)


def sharp(M: MetricField, q, alpha) -> np.ndarray:
    """Raise a covector: G(q)^{-1} alpha."""
    alpha = np.asarray(alpha, dtype=float)
    if M.kind == CONSTANT_DIAGONAL:
        return alpha / M.masses
    G = M.matrix if M.kind == CONSTANT_DENSE else metric_at(M, q)
    try:
        return np.linalg.solve(G, alpha)
    except np.linalg.LinAlgError:
        raise MetricDegeneracyError(f"metric not invertible at q={q}")


def flat(M: MetricField, q, vec) -> np.ndarray:
    """Lower a vector: G(q) vec."""
    vec = np.asarray(vec, dtype=float)
    if M.kind == CONSTANT_DIAGONAL:
        return vec * M.masses
    G = M.matrix if M.kind == CONSTANT_DENSE else metric_at(M, q)
    return G @ vec


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Potential energy V(q) supplied as an expression over q-variables."""

    expr: Expr
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if any(kind == "v" for kind, _ in expression_variables(self.expr)):
            raise ValueError(f"potential {self.expr} references a velocity variable")

    def value(self, q: np.ndarray) -> float:
        return eval_value(self.expr, q, np.zeros_like(q), self.params)

    def gradient_covector(self, q: np.ndarray) -> np.ndarray:
        """dV as a covector (row of partials with respect to q)."""
        return eval_with_gradient(self.expr, q, np.zeros_like(q), self.params).dq.copy()


@dataclass(frozen=True, eq=False)
class ForceCovector:
    """Covector field on TQ with one expression per component."""

    components: tuple[Expr, ...]
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) < 1:
            raise ValueError("force covector needs at least one component")

    @property
    def dimension(self) -> int:
        return len(self.components)

    def values(self, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.array([eval_value(c, q, v, self.params) for c in self.components])


def drift_acceleration(sys: "MechanicalSystem", s: TangentState) -> np.ndarray:
    """Acceleration of the unactuated forced system at state s.

    Coordinate form: a^k = -Gamma^k_ij v^i v^j - (grad V)^k + Y0^k, where
    grad V is the sharp of dV and Y0 is the sharp of the external force.
    """
    n = s.dimension
    a = np.zeros(n)
    if sys.metric.kind == EXPRESSION:
        Gamma = christoffel_at(sys.metric, s.q)
        a -= Gamma @ s.v @ s.v
    covector = np.zeros(n)
    if sys.potential is not None:
        covector -= sys.potential.gradient_covector(s.q)
    if sys.external_force is not None:
        covector += sys.external_force.values(s.q, s.v)
    if np.any(covector):
        a += sharp(sys.metric, s.q, covector)
    return a
