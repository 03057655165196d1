"""Experiment configuration: a flat ``key = value`` text format.

Grammar
-------
* one ``key = value`` per line; blank lines and text after ``#`` are ignored
* values are numbers or arithmetic over numbers and ``pi``
  (``beta = pi/3``), except ``experiment`` and ``output`` which are words
* sweep axes are written ``sweep.<axis> = min, max, count``

Keys::

    experiment        steady_state | g2_map | spectrum_polar |
                      filtered_g2_scan | trajectories | analytic_compare
    output            path of the CSV to write (optional)
    R beta gamma p1 p2 omega_sigma            dimer parameters
    theta phi d1 d2                           detection geometry
    sensor.gamma_filter sensor.epsilon        sensor settings
    sensor.omega1 sensor.omega2               filter centers (default w+, w-)
    sweep.phi sweep.p2_over_p1 sweep.beta sweep.theta
    traj.n_traj traj.t_max traj.dt traj.seed traj.record_dt

A results CSV written by this package carries its configuration in
``# config:`` header lines and can be loaded back with :func:`load_config`.
"""
from __future__ import annotations

import ast
import json
import math
import operator
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .correlations import EPSILON_DEFAULT
from .dimer_model import DetectionGeometry, DimerParams

EXPERIMENTS = ("steady_state", "g2_map", "spectrum_polar", "filtered_g2_scan",
               "trajectories", "analytic_compare")
SWEEP_AXES = ("phi", "p2_over_p1", "beta", "theta")
CONFIG_PREFIX = "# config:"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class SweepAxis:
    name: str
    start: float
    stop: float
    count: int

    def values(self):
        if self.count == 1:
            return [self.start]
        step = (self.stop - self.start) / (self.count - 1)
        return [self.start + k * step for k in range(self.count - 1)] + [self.stop]


@dataclass(frozen=True)
class SensorSettings:
    gamma_filter: float = 1.0
    epsilon: float = EPSILON_DEFAULT
    omega1: float | None = None
    omega2: float | None = None


@dataclass(frozen=True)
class TrajectorySettings:
    n_traj: int = 1000
    t_max: float = 20.0
    dt: float = 1e-3
    seed: int = 0
    record_dt: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: DimerParams
    geometry: DetectionGeometry = field(default_factory=DetectionGeometry)
    sensor: SensorSettings | None = None
    sweeps: tuple = ()
    trajectories: TrajectorySettings | None = None
    output: str | None = None

    def with_grid(self, count: int) -> "ExperimentConfig":
        return replace(self, sweeps=tuple(replace(ax, count=count) for ax in self.sweeps))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        if self.trajectories is None:
            return self
        return replace(self, trajectories=replace(self.trajectories, seed=seed))

    def to_pairs(self) -> list[tuple[str, str]]:
        """Resolved configuration as ``(key, value)`` text pairs."""
        pairs = [("experiment", self.experiment)]
        pairs += [(k, repr(float(v))) for k, v in asdict(self.params).items()]
        pairs += [(k, repr(float(v))) for k, v in asdict(self.geometry).items()]
        if self.sensor is not None:
            for k, v in asdict(self.sensor).items():
                if v is not None:
                    pairs.append((f"sensor.{k}", repr(float(v))))
        for ax in self.sweeps:
            pairs.append((f"sweep.{ax.name}", f"{ax.start!r}, {ax.stop!r}, {ax.count}"))
        if self.trajectories is not None:
            for k, v in asdict(self.trajectories).items():
                pairs.append((f"traj.{k}", repr(v)))
        if self.output is not None:
            pairs.append(("output", self.output))
        return pairs

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_pairs())

    def to_dict(self) -> dict:
        return dict(self.to_pairs())


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_NAMES = {"pi": math.pi, "inf": math.inf}


def eval_number(text: str, key: str = "value") -> float:
    """Evaluate a numeric literal or arithmetic expression over ``pi``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError:
        raise ConfigError(key, f"cannot parse {text!r} as a number") from None

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](walk(node.operand))
        raise ConfigError(key, f"unsupported expression {text!r}")

    try:
        return walk(tree)
    except ZeroDivisionError:
        raise ConfigError(key, f"division by zero in {text!r}") from None


def parse_pairs(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in pairs:
            raise ConfigError(key, f"duplicate key (line {lineno})")
        pairs[key] = value
    return pairs


_PARAM_KEYS = ("R", "beta", "gamma", "p1", "p2", "omega_sigma")
_GEOM_KEYS = ("theta", "phi", "d1", "d2")
_SENSOR_KEYS = ("gamma_filter", "epsilon", "omega1", "omega2")
_TRAJ_KEYS = {"n_traj": int, "t_max": float, "dt": float, "seed": int, "record_dt": float}
_NEEDS_SENSOR = ("spectrum_polar", "filtered_g2_scan", "analytic_compare")


def _as_int(value: float, key: str) -> int:
    if value != int(value):
        raise ConfigError(key, f"expected an integer, got {value}")
    return int(value)


def config_from_pairs(pairs: dict[str, str]) -> ExperimentConfig:
    pairs = dict(pairs)
    experiment = pairs.pop("experiment", None)
    if experiment is None:
        raise ConfigError("experiment", "missing")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    output = pairs.pop("output", None)

    params_kw = {k: eval_number(pairs.pop(k), k) for k in _PARAM_KEYS if k in pairs}
    for required in ("R", "beta"):
        if required not in params_kw:
            raise ConfigError(required, "missing")
    try:
        params = DimerParams(**params_kw)
    except ValueError as exc:
        raise ConfigError("params", str(exc)) from None

    geom_kw = {k: eval_number(pairs.pop(k), k) for k in _GEOM_KEYS if k in pairs}
    geometry = DetectionGeometry(**geom_kw)
    if geometry.d1 <= 0 or geometry.d2 <= 0:
        raise ConfigError("d1/d2", "dipole amplitudes must be positive")

    sensor_kw = {k: eval_number(pairs.pop(f"sensor.{k}"), f"sensor.{k}")
                 for k in _SENSOR_KEYS if f"sensor.{k}" in pairs}
    sensor = SensorSettings(**sensor_kw) if sensor_kw or experiment in _NEEDS_SENSOR else None
    if sensor is not None:
        if sensor.gamma_filter <= 0:
            raise ConfigError("sensor.gamma_filter", "must be positive")
        limit = 1e-2 * min(sensor.gamma_filter, params.gamma)
        if not 0 < sensor.epsilon <= limit * (1 + 1e-12):
            raise ConfigError("sensor.epsilon", f"must lie in (0, {limit:g}] for the weak-coupling limit")

    sweeps = []
    # file order is grid order: the first sweep line is the slow axis
    for key in [k for k in pairs if k.startswith("sweep.")]:
        name = key[len("sweep."):]
        if name not in SWEEP_AXES:
            raise ConfigError(key, f"unknown sweep axis; choose from {', '.join(SWEEP_AXES)}")
        parts = [p for p in pairs.pop(key).split(",")]
        if len(parts) != 3:
            raise ConfigError(key, "expected 'min, max, count'")
        start, stop = eval_number(parts[0], key), eval_number(parts[1], key)
        count = _as_int(eval_number(parts[2], key), key)
        if count < 2:
            raise ConfigError(key, "count must be at least 2")
        sweeps.append(SweepAxis(name, start, stop, count))
    if len(sweeps) > 2:
        raise ConfigError("sweep", "at most two sweep axes are supported")
    for ax in sweeps:
        if ax.name == "beta" and not (0 <= min(ax.start, ax.stop) and max(ax.start, ax.stop) <= math.pi / 2 + 1e-12):
            raise ConfigError("sweep.beta", "beta must stay within [0, pi/2]")
        if ax.name == "p2_over_p1":
            if params.p1 <= 0:
                raise ConfigError("sweep.p2_over_p1", "requires p1 > 0")
            if min(ax.start, ax.stop) < 0:
                raise ConfigError("sweep.p2_over_p1", "ratio must be non-negative")

    traj_kw = {}
    for k, typ in _TRAJ_KEYS.items():
        key = f"traj.{k}"
        if key in pairs:
            v = eval_number(pairs.pop(key), key)
            traj_kw[k] = _as_int(v, key) if typ is int else v
    trajectories = None
    if traj_kw or experiment == "trajectories":
        trajectories = TrajectorySettings(**traj_kw)
        if trajectories.n_traj < 1:
            raise ConfigError("traj.n_traj", "must be at least 1")
        if trajectories.dt <= 0 or trajectories.t_max <= 0:
            raise ConfigError("traj.dt", "dt and t_max must be positive")
        if trajectories.record_dt < trajectories.dt:
            raise ConfigError("traj.record_dt", "must be at least dt")
    if experiment == "analytic_compare":
        betas = [params.beta] + [v for ax in sweeps if ax.name == "beta" for v in (ax.start, ax.stop)]
        if any(min(abs(b), abs(b - math.pi / 2)) > 1e-12 for b in betas):
            raise ConfigError("beta", "analytic_compare needs beta = 0 or pi/2")
        if any(ax.name == "beta" and ax.count != 2 for ax in sweeps):
            raise ConfigError("sweep.beta", "analytic_compare sweeps beta over exactly {0, pi/2}")

    if pairs:
        raise ConfigError(sorted(pairs)[0], "unknown key")
    return ExperimentConfig(experiment=experiment, params=params, geometry=geometry,
                            sensor=sensor, sweeps=tuple(sweeps),
                            trajectories=trajectories, output=output)


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; ``# config:`` header lines of a results CSV take
    precedence over plain lines if present."""
    header = [line[len(CONFIG_PREFIX):] for line in text.splitlines()
              if line.startswith(CONFIG_PREFIX)]
    if header:
        text = "\n".join(header)
    return config_from_pairs(parse_pairs(text))


def load_config(path) -> ExperimentConfig:
    """Load a config file, a results CSV, or a JSON sidecar."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config file", str(exc)) from None
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config file", f"invalid JSON: {exc}") from None
        return config_from_pairs(data["metadata"]["config"] if "metadata" in data else data)
    return parse_config(text)
