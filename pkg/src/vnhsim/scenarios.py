"""Built-in simulation setups and the scenario file format.

A scenario file is a single YAML document describing the system (metric,
potential, forces, constraints), the initial tangent state, and the
integration window.  `load` validates the document field by field and
reports violations with the offending key path; `builtin` returns the three
bundled setups ready to run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from numbers import Real

import numpy as np
import yaml

from .constraints import ConstraintSet, on_manifold, project_to_manifold, regularity
from .control import MechanicalSystem
from .errors import ParseError, ScenarioError, VnhsimError
from .expressions import parse
from .riemannian import ForceCovector, MetricField, PotentialField, TangentState

_TOP_KEYS = {
    "name",
    "description",
    "dimension",
    "metric",
    "potential",
    "external_force",
    "control_forces",
    "constraints",
    "parameters",
    "initial",
    "integration",
}

BUILTIN_NAMES = ("cone-velocity", "constant-speed", "two-particle-alignment")


@dataclass(frozen=True, eq=False)
class Scenario:
    """A runnable setup: system, initial state, and integration window."""

    name: str
    system: MechanicalSystem
    initial: TangentState
    h: float
    t_final: float
    parameters: dict[str, float]
    description: str
    project_initial: bool = False
    compare_nonholonomic: bool = False
    document: dict = field(default_factory=dict, repr=False)

    @property
    def steps(self) -> int:
        return round(self.t_final / self.h)


def _fail(path: str, message: str) -> ScenarioError:
    return ScenarioError(f"{path}: {message}")


def _get(doc: dict, key: str, kind, path: str, required: bool = True, default=None):
    if key not in doc:
        if required:
            raise _fail(f"{path}{key}", "missing")
        return default
    value = doc[key]
    if kind is float:
        if not isinstance(value, Real) or isinstance(value, bool):
            raise _fail(f"{path}{key}", f"expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, kind):
        raise _fail(f"{path}{key}", f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _number_list(value, count: int, path: str) -> list[float]:
    if not isinstance(value, list) or len(value) != count:
        raise _fail(path, f"expected a list of {count} numbers")
    out = []
    for i, x in enumerate(value):
        if not isinstance(x, Real) or isinstance(x, bool):
            raise _fail(f"{path}[{i}]", f"expected a number, got {x!r}")
        out.append(float(x))
    return out


def _expression(source, n: int, names, path: str):
    if not isinstance(source, str):
        raise _fail(path, f"expected an expression string, got {type(source).__name__}")
    try:
        return parse(source, n, names)
    except ParseError as exc:
        raise _fail(path, str(exc))


def _metric(doc, n: int, names, params) -> MetricField:
    block = _get(doc, "metric", dict, "")
    kinds = [k for k in ("masses", "dense", "exprs") if k in block]
    if len(kinds) != 1 or set(block) - {"masses", "dense", "exprs"}:
        raise _fail("metric", "expected exactly one of masses, dense, exprs")
    kind = kinds[0]
    try:
        if kind == "masses":
            return MetricField.diagonal(_number_list(block["masses"], n, "metric.masses"))
        if kind == "dense":
            rows = block["dense"]
            if not isinstance(rows, list) or len(rows) != n:
                raise _fail("metric.dense", f"expected {n} rows")
            matrix = [_number_list(r, n, f"metric.dense[{i}]") for i, r in enumerate(rows)]
            return MetricField.dense(np.array(matrix))
        rows = block["exprs"]
        if not isinstance(rows, list) or len(rows) != n:
            raise _fail("metric.exprs", f"expected {n} rows")
        entries = []
        for i, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != n:
                raise _fail(f"metric.exprs[{i}]", f"expected {n} entries")
            entries.append(
                tuple(
                    _expression(e, n, names, f"metric.exprs[{i}][{j}]")
                    for j, e in enumerate(row)
                )
            )
        return MetricField.from_expressions(tuple(entries), params)
    except (ValueError, VnhsimError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise _fail(f"metric.{kind}", str(exc))


def _force(value, n: int, names, params, path: str) -> ForceCovector:
    if not isinstance(value, list) or len(value) != n:
        raise _fail(path, f"expected a list of {n} expression strings")
    comps = tuple(_expression(e, n, names, f"{path}[{i}]") for i, e in enumerate(value))
    return ForceCovector(comps, params)


def build(document: dict, check_initial: bool = True) -> Scenario:
    """Construct a validated Scenario from a schema document."""
    if not isinstance(document, dict):
        raise ScenarioError("scenario document must be a mapping")
    unknown = set(document) - _TOP_KEYS
    if unknown:
        raise _fail(sorted(unknown)[0], "unknown key")

    name = _get(document, "name", str, "")
    description = _get(document, "description", str, "", required=False, default="")
    n = _get(document, "dimension", int, "")
    if isinstance(n, bool) or n < 2:
        raise _fail("dimension", f"expected an integer >= 2, got {n!r}")

    params_doc = _get(document, "parameters", dict, "", required=False, default={})
    params: dict[str, float] = {}
    for key, value in params_doc.items():
        if not isinstance(key, str):
            raise _fail("parameters", f"parameter names must be strings, got {key!r}")
        if not isinstance(value, Real) or isinstance(value, bool):
            raise _fail(f"parameters.{key}", f"expected a number, got {value!r}")
        params[key] = float(value)
    names = tuple(params)

    constraints_doc = _get(document, "constraints", list, "")
    m = len(constraints_doc)
    if not 1 <= m < n:
        raise _fail("constraints", f"need m < n and m >= 1, got m={m} with n={n}")
    phi = tuple(
        _expression(e, n, names, f"constraints[{i}]") for i, e in enumerate(constraints_doc)
    )
    try:
        constraint = ConstraintSet(phi, n, params)
    except ValueError as exc:
        raise _fail("constraints", str(exc))

    forces_doc = _get(document, "control_forces", list, "")
    if len(forces_doc) != m:
        raise _fail("control_forces", f"need one force per constraint ({m}), got {len(forces_doc)}")
    control_forces = tuple(
        _force(f, n, names, params, f"control_forces[{i}]") for i, f in enumerate(forces_doc)
    )

    metric = _metric(document, n, names, params)

    potential = None
    if "potential" in document:
        expr = _expression(document["potential"], n, names, "potential")
        try:
            potential = PotentialField(expr, params)
        except ValueError as exc:
            raise _fail("potential", str(exc))

    external = None
    if "external_force" in document:
        external = _force(document["external_force"], n, names, params, "external_force")

    try:
        system = MechanicalSystem(
            dimension=n,
            metric=metric,
            constraint=constraint,
            control_forces=control_forces,
            potential=potential,
            external_force=external,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc))

    init_doc = _get(document, "initial", dict, "")
    q = _number_list(_get(init_doc, "q", list, "initial."), n, "initial.q")
    v = _number_list(_get(init_doc, "v", list, "initial."), n, "initial.v")
    try:
        initial = TangentState(np.array(q), np.array(v))
    except ValueError as exc:
        raise _fail("initial", str(exc))

    integ = _get(document, "integration", dict, "")
    h = _get(integ, "h", float, "integration.")
    if h <= 0:
        raise _fail("integration.h", f"must be positive, got {h}")
    t_final = _get(integ, "t_final", float, "integration.")
    if t_final <= 0:
        raise _fail("integration.t_final", f"must be positive, got {t_final}")
    project_initial = _get(integ, "project_initial", bool, "integration.",
                           required=False, default=False)
    compare = _get(integ, "compare_nonholonomic", bool, "integration.",
                   required=False, default=False)
    extra = set(integ) - {"h", "t_final", "project_initial", "compare_nonholonomic"}
    if extra:
        raise _fail(f"integration.{sorted(extra)[0]}", "unknown key")

    if check_initial:
        if project_initial:
            initial = project_to_manifold(constraint, initial)
        elif not on_manifold(constraint, initial):
            raise _fail(
                "initial",
                "state is off the constraint manifold; fix it or set "
                "integration.project_initial: true",
            )
        report = regularity(constraint, initial)
        if report.rank < m:
            raise _fail(
                "initial",
                f"constraint jacobian rank {report.rank} < {m} at the initial state",
            )

    return Scenario(
        name=name,
        system=system,
        initial=initial,
        h=h,
        t_final=t_final,
        parameters=params,
        description=description,
        project_initial=project_initial,
        compare_nonholonomic=compare,
        document=document,
    )


def load(path) -> Scenario:
    """Read and validate a scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            document = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"{path}: not a valid scenario document ({exc})")
    return build(document)


def save(scenario: Scenario, path) -> None:
    """Write the scenario's document form to a file."""
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario.document, fh, sort_keys=False)


def rebuild(
    scenario: Scenario,
    h: float | None = None,
    t_final: float | None = None,
    parameters: dict[str, float] | None = None,
    project_initial: bool | None = None,
) -> Scenario:
    """Scenario with integration settings or parameter bindings replaced."""
    document = {k: v for k, v in scenario.document.items()}
    document["integration"] = dict(document["integration"])
    if parameters:
        merged = dict(document.get("parameters", {}))
        unknown = set(parameters) - set(merged)
        if unknown:
            raise ScenarioError(
                f"parameters.{sorted(unknown)[0]}: not declared by scenario {scenario.name}"
            )
        merged.update(parameters)
        document["parameters"] = merged
    if h is not None:
        document["integration"]["h"] = h
    if t_final is not None:
        document["integration"]["t_final"] = t_final
    if project_initial is not None:
        document["integration"]["project_initial"] = project_initial
    return build(document)


def _builtin_document(name: str) -> dict:
    if name == "cone-velocity":
        return {
            "name": "cone-velocity",
            "description": "particle forced to keep its velocity on a vertical cone",
            "dimension": 3,
            "metric": {"masses": [1.0, 1.0, 1.0]},
            "potential": "m*g*q[2]",
            "control_forces": [["q[0]", "q[1]", "1"]],
            "constraints": ["a^2*(v[0]^2 + v[1]^2) - v[2]^2"],
            "parameters": {"a": 1.0, "m": 1.0, "g": 9.81},
            "initial": {"q": [5.0, 0.0, 0.0], "v": [3.0, 4.0, -5.0]},
            "integration": {"h": 0.001, "t_final": 5.0},
        }
    if name == "constant-speed":
        return {
            "name": "constant-speed",
            "description": "falling particle forced to keep constant speed",
            "dimension": 3,
            "metric": {"masses": [1.0, 1.0, 1.0]},
            "potential": "m*g*q[2]",
            "control_forces": [["v[0]", "v[1]", "v[2]"]],
            "constraints": ["v[0]^2 + v[1]^2 + v[2]^2 - c"],
            "parameters": {"c": 25.0, "m": 1.0, "g": 9.81},
            "initial": {"q": [0.0, 0.0, 0.0], "v": [3.0, 4.0, 0.0]},
            "integration": {"h": 0.001, "t_final": 5.0},
        }
    if name == "two-particle-alignment":
        return {
            "name": "two-particle-alignment",
            "description": "two falling particles forced to align their velocities",
            "dimension": 4,
            "metric": {"masses": [1.0, 1.0, 1.0, 1.0]},
            "potential": "m1*g*q[1] + m2*g*q[3]",
            "control_forces": [["1", "1", "0", "0"]],
            "constraints": ["v[0]*v[3] - v[2]*v[1]"],
            "parameters": {"m1": 1.0, "m2": 1.0, "g": 9.81},
            "initial": {"q": [1.0, 0.0, 40.0, 0.0], "v": [80.0, 40.0, 20.0, 10.0]},
            "integration": {"h": 0.001, "t_final": 5.0},
        }
    raise ScenarioError(
        f"unknown scenario {name!r}; built-ins are {', '.join(BUILTIN_NAMES)}"
    )


def builtin(name: str) -> Scenario:
    """One of the three bundled scenarios."""
    return build(_builtin_document(name))


def resolve(ref: str) -> Scenario:
    """A scenario from a builtin name or a file path."""
    if ref in BUILTIN_NAMES:
        return builtin(ref)
    from os.path import exists

    if exists(ref):
        return load(ref)
    raise ScenarioError(
        f"{ref!r} is neither a built-in scenario nor an existing file; "
        f"built-ins are {', '.join(BUILTIN_NAMES)}"
    )
