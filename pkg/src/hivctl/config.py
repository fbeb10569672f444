"""JSON scenario configuration.

Top-level keys are params, initial, grid, sweep, method and outputs. Every key
is optional; missing values fall back to the reference scenario. A missing or
null grid means the per-command default (100 days for optimize, 500 days for
simulate, both at h = 0.01).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

from .control import MODES, SweepConfig
from .errors import DomainError, SchemaError
from .model import ModelParams, State
from .simulate import METHODS, TimeGrid

# JSON key -> ModelParams attribute
PARAM_KEYS = {
    "lambda": "lam", "d": "d", "beta": "beta", "a": "a", "p": "p", "mu": "mu", "N": "N",
    "q": "q", "c": "c", "h": "h", "g": "g", "alpha": "alpha", "A1": "A1", "A2": "A2",
}
# extra spellings accepted on the command line
PARAM_ALIASES = {"lam": "lam", "bigN": "N", "costA1": "A1", "costA2": "A2"}

DEFAULT_INITIAL = State(5.0, 1.0, 1.0, 2.0, 1.0)
# used when the config leaves the grid out; optimize runs are costlier, and
# the uncontrolled run needs the longer horizon to settle on the endemic state
DEFAULT_GRIDS = {"optimize": TimeGrid(tf=100.0, n=10000), "simulate": TimeGrid(tf=500.0, n=50000)}
DEFAULT_GRID = DEFAULT_GRIDS["optimize"]


@dataclass(frozen=True)
class Outputs:
    dir: str = "out"
    adjoints: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    params: ModelParams = field(default_factory=ModelParams)
    initial: State = DEFAULT_INITIAL
    grid: TimeGrid | None = None
    sweep: SweepConfig = field(default_factory=SweepConfig)
    method: str = "rk4"
    outputs: Outputs = field(default_factory=Outputs)

    def grid_for(self, command: str) -> TimeGrid:
        if self.grid is not None:
            return self.grid
        return DEFAULT_GRIDS.get(command, DEFAULT_GRID)


def resolve_param(name: str) -> str:
    """Map a JSON key or alias to the ModelParams attribute it names."""
    if name in PARAM_KEYS:
        return PARAM_KEYS[name]
    if name in PARAM_ALIASES:
        return PARAM_ALIASES[name]
    raise SchemaError("axis", f"unknown parameter {name!r}")


def _number(path: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise SchemaError(path, f"expected a finite number, got {value!r}")
    return float(value)


def _integer(path: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected an integer, got {value!r}")
    return value


def _section(doc: dict, key: str, allowed) -> dict:
    sec = doc.get(key, {})
    if not isinstance(sec, dict):
        raise SchemaError(key, "expected an object")
    for k in sec:
        if k not in allowed:
            raise SchemaError(f"{key}.{k}", "unknown field")
    return sec


def from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise SchemaError("<root>", "expected an object")
    top = ("params", "initial", "grid", "sweep", "method", "outputs")
    for k in doc:
        if k not in top:
            raise SchemaError(k, "unknown field")

    sec = _section(doc, "params", PARAM_KEYS)
    kwargs = {PARAM_KEYS[k]: _number(f"params.{k}", v) for k, v in sec.items()}
    try:
        params = ModelParams(**kwargs)
    except DomainError as exc:
        raise SchemaError("params", str(exc)) from exc

    sec = _section(doc, "initial", State._fields)
    initial = State(*(_number(f"initial.{k}", sec.get(k, getattr(DEFAULT_INITIAL, k)))
                      for k in State._fields))
    for k, v in zip(State._fields, initial):
        if v < 0:
            raise SchemaError(f"initial.{k}", f"must be nonnegative, got {v!r}")

    grid = None
    if doc.get("grid") is not None:
        sec = _section(doc, "grid", ("t0", "tf", "n"))
        try:
            grid = TimeGrid(tf=_number("grid.tf", sec.get("tf", DEFAULT_GRID.tf)),
                            n=_integer("grid.n", sec.get("n", DEFAULT_GRID.n)),
                            t0=_number("grid.t0", sec.get("t0", DEFAULT_GRID.t0)))
        except DomainError as exc:
            raise SchemaError("grid", str(exc)) from exc

    sec = _section(doc, "sweep", ("max_iters", "tol", "relaxation", "mode"))
    base = SweepConfig()
    mode = sec.get("mode", base.mode)
    if mode not in MODES:
        raise SchemaError("sweep.mode", f"expected one of {MODES}, got {mode!r}")
    try:
        sweep = SweepConfig(
            max_iters=_integer("sweep.max_iters", sec.get("max_iters", base.max_iters)),
            tol=_number("sweep.tol", sec.get("tol", base.tol)),
            relaxation=_number("sweep.relaxation", sec.get("relaxation", base.relaxation)),
            mode=mode,
        )
    except DomainError as exc:
        raise SchemaError("sweep", str(exc)) from exc

    method = doc.get("method", "rk4")
    if method not in METHODS:
        raise SchemaError("method", f"expected one of {METHODS}, got {method!r}")

    sec = _section(doc, "outputs", ("dir", "adjoints"))
    out_dir = sec.get("dir", Outputs.dir)
    if not isinstance(out_dir, str) or not out_dir:
        raise SchemaError("outputs.dir", f"expected a non-empty string, got {out_dir!r}")
    adjoints = sec.get("adjoints", Outputs.adjoints)
    if not isinstance(adjoints, bool):
        raise SchemaError("outputs.adjoints", f"expected a boolean, got {adjoints!r}")

    return ScenarioConfig(params, initial, grid, sweep, method, Outputs(out_dir, adjoints))


def to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "params": {k: getattr(cfg.params, attr) for k, attr in PARAM_KEYS.items()},
        "initial": dict(zip(State._fields, cfg.initial)),
        "grid": None if cfg.grid is None else {"t0": cfg.grid.t0, "tf": cfg.grid.tf, "n": cfg.grid.n},
        "sweep": {f.name: getattr(cfg.sweep, f.name) for f in fields(cfg.sweep)},
        "method": cfg.method,
        "outputs": {"dir": cfg.outputs.dir, "adjoints": cfg.outputs.adjoints},
    }


def load(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("<root>", f"invalid JSON: {exc}") from exc
    return from_dict(doc)


def dumps(cfg: ScenarioConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"
