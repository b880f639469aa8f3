"""Exception types shared across the library."""


class VnhsimError(Exception):
    """Base class for every error this library raises on purpose."""


class ParseError(VnhsimError):
    """Malformed expression source.  Carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class EvaluationError(VnhsimError):
    """Expression evaluation hit a domain fault or produced a non-finite value."""


class MetricDegeneracyError(VnhsimError):
    """Metric matrix failed symmetry or positive-definiteness at some point."""


class ConstraintDegeneracyError(VnhsimError):
    """Constraint velocity Jacobian lost rank where full rank was required."""


class ProjectionError(VnhsimError):
    """Projection onto the constraint manifold failed to converge."""


class TransversalityViolation(VnhsimError):
    """Control synthesis is singular or numerically untrustworthy at a state."""


class ScenarioError(VnhsimError):
    """Scenario definition is malformed or fails its initial-state checks."""
