"""Scenario files: JSON documents describing one rigid-body planning task.

A scenario names the horizon, the body, start and goal states, the cost
weights, a list of constraints, optional solver overrides and an optional
noise model for Monte-Carlo runs. Unknown fields are rejected. Rotations are
written either as XYZ Euler angles in degrees or as an axis and an angle::

    {"euler_xyz_deg": [0, 0, 90]}
    {"axis": [0, 0, 1], "angle_deg": 90}

Weights are a scalar (times identity) or a full matrix. See ``SCHEMA`` for
the complete layout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .constraints import ConfigAvoidance, InputBound, VelocityBound
from .dynamics import RigidBodyParams, RigidBodySE3, State
from .exceptions import ScenarioError
from .harness import NoiseModel
from .liegroup import from_euler_xyz, make_pose, so3_exp
from .solver import CostWeights, Problem, SolverConfig

FIXTURES = ("se3_unconstrained", "se3_constrained", "se3_simple30", "se3_disturbance")

_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_vec6 = {"type": "array", "items": {"type": "number"}, "minItems": 6, "maxItems": 6}
_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1}
_weight = {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, _matrix]}
_rotation = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "euler_xyz_deg": _vec3,
        "axis": _vec3,
        "angle_deg": {"type": "number"},
    },
}
_state = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"position": _vec3, "rotation": _rotation, "twist": _vec6},
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["group", "N", "dt", "start", "goal"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "group": {"enum": ["SE3"]},
        "N": {"type": "integer", "minimum": 1},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "body": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "inertia": _vec3,
                "mass": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "start": _state,
        "goal": _state,
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"final": _weight, "running": {"oneOf": [{"type": "number", "minimum": 0}, _matrix]}, "input": _weight},
        },
        "constraints": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["type"],
                "properties": {"type": {"enum": ["obstacle", "unsafe_configuration", "velocity_bound", "input_bound"]}},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "rho0": {"type": "number", "minimum": 0},
                "rho_factor": {"type": "number", "exclusiveMinimum": 1},
                "rho_max": {"type": "number", "exclusiveMinimum": 0},
                "alpha_factor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "alpha_min": {"type": "number", "exclusiveMinimum": 0},
                "max_inner_iters": {"type": "integer", "minimum": 1},
                "max_outer_iters": {"type": "integer", "minimum": 1},
                "constraint_tol": {"type": "number", "exclusiveMinimum": 0},
                "lam0": {"type": "number", "minimum": 0},
                "mu0": {"type": "number", "exclusiveMinimum": 0},
                "gamma": {"type": "number", "exclusiveMinimum": 1},
                "mu_max": {"type": "number", "exclusiveMinimum": 0},
                "multipliers": {"enum": ["per_step", "shared"]},
                "jacobian_mode": {"enum": ["numeric", "paper"]},
                "discretization": {"enum": ["euler", "zoh", "semi_implicit", "rollout"]},
                "exact_cost_gradient": {"type": "boolean"},
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sigma_w": {"type": "number", "minimum": 0},
                "seed": {"type": "integer"},
                "samples": {"type": "integer", "minimum": 2},
                "full_state_feedback": {"type": "boolean"},
                "current_twist": {"type": "boolean"},
            },
        },
    },
}

CONSTRAINT_SCHEMAS = {
    "obstacle": {
        "type": "object",
        "additionalProperties": False,
        "required": ["type", "center", "radius"],
        "properties": {
            "type": {"const": "obstacle"},
            "name": {"type": "string"},
            "center": _vec3,
            "radius": {"type": "number", "exclusiveMinimum": 0},
        },
    },
    "unsafe_configuration": {
        "type": "object",
        "additionalProperties": False,
        "required": ["type", "rotation", "radius"],
        "properties": {
            "type": {"const": "unsafe_configuration"},
            "name": {"type": "string"},
            "rotation": _rotation,
            "position": _vec3,
            "radius": {"type": "number", "exclusiveMinimum": 0},
            "components": {"enum": ["full", "position", "rotation"]},
            "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        },
    },
    "velocity_bound": {
        "type": "object",
        "additionalProperties": False,
        "required": ["type", "axis", "value"],
        "properties": {
            "type": {"const": "velocity_bound"},
            "axis": {"type": "integer", "minimum": 0, "maximum": 5},
            "beta": {"enum": [-1, 1]},
            "value": {"type": "number"},
        },
    },
    "input_bound": {
        "type": "object",
        "additionalProperties": False,
        "required": ["type", "lower", "upper"],
        "properties": {
            "type": {"const": "input_bound"},
            "lower": _vec6,
            "upper": _vec6,
        },
    },
}


@dataclass
class MonteCarloSettings:
    samples: int = 1000
    full_state_feedback: bool = True
    current_twist: bool = False


@dataclass
class Scenario:
    name: str
    N: int
    dt: float
    params: RigidBodyParams
    start: State
    goal: State
    weights: CostWeights
    constraints: list = field(default_factory=list)
    solver: SolverConfig = field(default_factory=SolverConfig)
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(0.0))
    monte_carlo: MonteCarloSettings = field(default_factory=MonteCarloSettings)
    group: str = "SE3"

    @property
    def model(self):
        return RigidBodySE3(self.params)

    def problem(self):
        return Problem(self.model, self.start, self.goal, self.N, self.dt, self.weights, list(self.constraints))


def _field_name(path):
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _check(instance, schema, prefix=()):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        path = list(prefix) + list(err.absolute_path)
        if err.validator == "required":
            missing = err.message.split("'")[1]
            path.append(missing)
        elif err.validator == "additionalProperties":
            extra = err.message.split("'")[1]
            path.append(extra)
        name = _field_name(path)
        raise ScenarioError(f"{name}: {err.message}", field=name)


def _rotation(spec, where):
    if spec is None:
        return np.eye(3)
    if "euler_xyz_deg" in spec:
        if "axis" in spec or "angle_deg" in spec:
            raise ScenarioError(f"{where}: give either euler_xyz_deg or axis/angle_deg", field=where)
        return from_euler_xyz(*spec["euler_xyz_deg"])
    if "axis" in spec and "angle_deg" in spec:
        axis = np.asarray(spec["axis"], dtype=float)
        norm = np.linalg.norm(axis)
        if norm == 0.0:
            raise ScenarioError(f"{where}.axis: rotation axis must be nonzero", field=f"{where}.axis")
        return so3_exp(axis / norm * np.deg2rad(spec["angle_deg"]))
    raise ScenarioError(f"{where}: rotation needs euler_xyz_deg or both axis and angle_deg", field=where)


def _state(doc, where):
    R = _rotation(doc.get("rotation"), f"{where}.rotation")
    X = make_pose(R, doc.get("position", [0.0, 0.0, 0.0]))
    return State(X, np.asarray(doc.get("twist", [0.0] * 6), dtype=float))


def _weight(value, dim, where):
    if isinstance(value, (int, float)):
        return float(value) * np.eye(dim)
    M = np.asarray(value, dtype=float)
    if M.shape != (dim, dim):
        raise ScenarioError(f"{where}: expected a {dim}x{dim} matrix, got shape {M.shape}", field=where)
    return M


def _constraint(doc, i):
    where = f"constraints[{i}]"
    _check(doc, CONSTRAINT_SCHEMAS[doc["type"]], ("constraints", i))
    kind = doc["type"]
    if kind == "obstacle":
        return ConfigAvoidance.sphere(doc["center"], doc["radius"], name=doc.get("name", ""))
    if kind == "unsafe_configuration":
        center = make_pose(_rotation(doc["rotation"], f"{where}.rotation"), doc.get("position"))
        radii = tuple(doc["radii"]) if "radii" in doc else None
        components = doc.get("components", "full")
        expected = {"full": 6, "position": 3, "rotation": 3}[components]
        if radii is not None and len(radii) != expected:
            raise ScenarioError(f"{where}.radii: expected {expected} entries", field=f"{where}.radii")
        return ConfigAvoidance(center, doc["radius"], components, radii, doc.get("name", ""))
    if kind == "velocity_bound":
        return VelocityBound(int(doc["axis"]), float(doc["value"]), int(doc.get("beta", -1)))
    lower, upper = np.asarray(doc["lower"]), np.asarray(doc["upper"])
    if np.any(lower > upper):
        raise ScenarioError(f"{where}.lower: lower bound exceeds upper bound", field=f"{where}.lower")
    return InputBound(lower, upper)


def parse_scenario(doc, name="scenario"):
    """Validate a decoded JSON document and build a :class:`Scenario`."""
    _check(doc, SCHEMA)
    body = doc.get("body", {})
    params = RigidBodyParams(np.asarray(body.get("inertia", [1.0, 1.0, 1.0])), body.get("mass", 1.0))
    w = doc.get("weights", {})
    try:
        weights = CostWeights(
            _weight(w.get("final", 100.0), 12, "weights.final"),
            _weight(w.get("running", 5e-5), 12, "weights.running"),
            _weight(w.get("input", 1e-3), 6, "weights.input"),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"weights: {exc}", field="weights") from None
    constraints = [_constraint(c, i) for i, c in enumerate(doc.get("constraints", []))]
    known = {f.name for f in fields(SolverConfig)}
    solver = SolverConfig(**{k: v for k, v in doc.get("solver", {}).items() if k in known})
    noise_doc = doc.get("noise", {})
    noise = NoiseModel(noise_doc.get("sigma_w", 0.0), noise_doc.get("seed", 0))
    mc = MonteCarloSettings(
        int(noise_doc.get("samples", 1000)),
        noise_doc.get("full_state_feedback", True),
        noise_doc.get("current_twist", False),
    )
    return Scenario(
        name=doc.get("name", name),
        N=int(doc["N"]),
        dt=float(doc["dt"]),
        params=params,
        start=_state(doc["start"], "start"),
        goal=_state(doc["goal"], "goal"),
        weights=weights,
        constraints=constraints,
        solver=solver,
        noise=noise,
        monte_carlo=mc,
        group=doc["group"],
    )


def load_scenario(path):
    """Read and validate a scenario file.

    Raises :class:`ScenarioError` with the line and column of a JSON syntax
    error, or with the dotted name of the first invalid field.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_scenario(doc, name=path.stem)


def fixture_path(name):
    """Path of a shipped scenario, e.g. ``fixture_path("se3_constrained")``."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; shipped: {', '.join(FIXTURES)}")
    return Path(str(resources.files("lieddp") / "scenarios" / f"{name}.json"))


def resolve_scenario(arg):
    """Accept either a file path or the name of a shipped fixture."""
    if Path(arg).exists() or arg not in FIXTURES:
        return Path(arg)
    return fixture_path(arg)
