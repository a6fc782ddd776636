"""JSON run configuration with strict validation."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace

from .errors import ConfigError, UnsupportedDomain
from .geometry import DomainSpec, ExhaustionPlan
from .operators import StepperConfig
from .problem import InitialData, LateralData, ProblemSpec

PATHS = ("minimal", "maximal", "lateral")
DEFAULT_H = 1.0 / 256

TOP_KEYS = {
    "q", "domain", "dim", "h", "path", "lateral", "initial", "T", "output_times", "stepper",
    "probe", "tolerance", "exhaustion", "truncation", "out", "sweep", "seed", "periodic",
}
STEPPER_KEYS = {
    "schedule", "tau", "tau0", "rho", "tau_max", "newton_atol", "newton_rtol", "newton_maxiter",
    "damping", "linear_solver", "linear_tol", "linear_maxiter",
}
PROBE_KEYS = {"min_dist", "radius"}
SWEEP_KEYS = {"q", "h", "tau", "lambda"}


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    h: float = DEFAULT_H
    stepper: StepperConfig = field(default_factory=StepperConfig)
    paths: tuple = ("maximal",)
    output_times: tuple = (0.01, 0.1, 0.5, 1.0)
    probe: dict = field(default_factory=dict)
    tolerance: float = 1e-4
    exhaustion: ExhaustionPlan | None = None
    truncation: ExhaustionPlan | None = None
    out: str = "out"
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    periodic: bool = False

    def __post_init__(self):
        if not self.paths:
            raise ConfigError("at least one construction path is required", field="path")
        for p in self.paths:
            if p not in PATHS:
                raise ConfigError(f"unknown path {p!r} (expected one of {', '.join(PATHS)})", field="path")
        for axis, vals in self.sweep.items():
            if not vals:
                raise ConfigError("sweep axes must be non-empty lists", field=f"sweep.{axis}")

    def with_values(self, **kw):
        return replace(self, **kw)


class _Locator:
    """Maps key names to the first source line mentioning them."""

    def __init__(self, text):
        self.lines = text.splitlines()

    def occurrences(self, key):
        pat = re.compile(r'"' + re.escape(key.split(".")[-1]) + r'"\s*:')
        return [i for i, line in enumerate(self.lines, start=1) if pat.search(line)]

    def __call__(self, key):
        found = self.occurrences(key)
        return found[0] if found else None


def _no_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigError(f"duplicate key {k!r}", field=k)
        seen[k] = v
    return seen


def _number(value, name, where, *, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {type(value).__name__}", field=name, line=where(name))
    if integer and int(value) != value:
        raise ConfigError("expected an integer", field=name, line=where(name))
    if not math.isfinite(value):
        raise ConfigError("must be finite", field=name, line=where(name))
    if positive and not value > 0:
        raise ConfigError("must be positive", field=name, line=where(name))
    return int(value) if integer else float(value)


def _check_keys(obj, allowed, prefix, where):
    for k in obj:
        if k not in allowed:
            name = f"{prefix}{k}"
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", field=name, line=where(k))


def _domain(raw, dim, where):
    try:
        if isinstance(raw, str):
            return DomainSpec.parse(raw, dim=dim)
        if isinstance(raw, dict):
            _check_keys(raw, {"kind", "params", "dim"}, "domain.", where)
            d = raw.get("dim", dim)
            params = tuple(_number(p, "domain.params", where) for p in raw.get("params", ()))
            return DomainSpec.parse(f"{raw['kind']}({','.join(map(repr, params))})", dim=d)
    except (UnsupportedDomain, ValueError, KeyError) as exc:
        raise ConfigError(str(exc), field="domain", line=where("domain")) from exc
    raise ConfigError("expected a string like 'interval(-1,1)' or an object", field="domain", line=where("domain"))


def _lateral(raw, where):
    if raw is None:
        return LateralData()
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        v = _number(raw, "lateral", where)
        if v < 0:
            raise ConfigError("lateral data must be nonnegative", field="lateral", line=where("lateral"))
        return LateralData() if v == 0 else LateralData.constant(v)
    if isinstance(raw, dict):
        _check_keys(raw, {"value", "times", "values"}, "lateral.", where)
        try:
            if "times" in raw or "values" in raw:
                return LateralData("table", times=tuple(raw["times"]), table=tuple(raw["values"]))
            return _lateral(raw.get("value", 0.0), where)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field="lateral", line=where("lateral")) from exc
    raise ConfigError("expected a number or {times, values}", field="lateral", line=where("lateral"))


def _initial(raw, where):
    if raw is None or raw == "blowup":
        return InitialData()
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return InitialData("constant", k=_number(raw, "initial", where))
    if isinstance(raw, dict):
        _check_keys(raw, {"mode", "k", "k0", "max_doublings"}, "initial.", where)
        kw = {"mode": raw.get("mode", "blowup")}
        if "k" in raw:
            kw["k"] = _number(raw["k"], "initial.k", where)
        if "k0" in raw:
            kw["k0"] = _number(raw["k0"], "initial.k0", where, positive=True)
        if "max_doublings" in raw:
            kw["max_doublings"] = _number(raw["max_doublings"], "initial.max_doublings", where, integer=True)
        try:
            return InitialData(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc), field="initial", line=where("initial")) from exc
    raise ConfigError("expected 'blowup', a number or an object", field="initial", line=where("initial"))


def _stepper(raw, where):
    if raw is None:
        return StepperConfig()
    if not isinstance(raw, dict):
        raise ConfigError("expected an object", field="stepper", line=where("stepper"))
    _check_keys(raw, STEPPER_KEYS, "stepper.", where)
    kw = {}
    for k, v in raw.items():
        if k in ("schedule", "linear_solver"):
            if not isinstance(v, str):
                raise ConfigError("expected a string", field=f"stepper.{k}", line=where(k))
            kw[k] = v
        else:
            kw[k] = _number(v, f"stepper.{k}", where, integer=k in ("newton_maxiter", "linear_maxiter"))
    try:
        return StepperConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc), field="stepper", line=where("stepper")) from exc


def _plan(raw, mode, name, where):
    if raw is None:
        return None
    vals = raw.get("values") if isinstance(raw, dict) else raw
    if isinstance(raw, dict):
        _check_keys(raw, {"values"}, f"{name}.", where)
    if not isinstance(vals, list):
        raise ConfigError("expected a list of values", field=name, line=where(name))
    try:
        return ExhaustionPlan(mode, tuple(_number(v, name, where) for v in vals))
    except ValueError as exc:
        raise ConfigError(str(exc), field=name, line=where(name)) from exc


def parse_config(text, *, source="<config>"):
    """Parse and validate JSON text into a :class:`RunConfig`."""
    where = _Locator(text)
    try:
        raw = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: {exc.msg}", line=exc.lineno) from exc
    except ConfigError as exc:
        lines = where.occurrences(exc.field)
        raise ConfigError(f"{source}: duplicate key", field=exc.field, line=lines[-1] if lines else None) from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be an object")
    _check_keys(raw, TOP_KEYS, "", where)
    for req in ("q", "domain"):
        if req not in raw:
            raise ConfigError("required key missing", field=req)
    q = _number(raw["q"], "q", where)
    if not q > 1:
        raise ConfigError(f"exponent must exceed 1, got {q:g}", field="q", line=where("q"))
    dim = raw.get("dim")
    if dim is not None:
        dim = _number(dim, "dim", where, integer=True)
    domain = _domain(raw["domain"], dim, where)
    T = _number(raw.get("T", 1.0), "T", where, positive=True)
    problem = ProblemSpec(q, domain, _lateral(raw.get("lateral"), where), _initial(raw.get("initial"), where), T)

    kw = {"problem": problem}
    if "h" in raw:
        kw["h"] = _number(raw["h"], "h", where, positive=True)
    kw["stepper"] = _stepper(raw.get("stepper"), where)
    paths = raw.get("path", "maximal")
    paths = [paths] if isinstance(paths, str) else paths
    if not isinstance(paths, list) or not all(isinstance(p, str) for p in paths):
        raise ConfigError("expected a path name or a list of names", field="path", line=where("path"))
    kw["paths"] = tuple(paths)
    if "output_times" in raw:
        ts = raw["output_times"]
        if not isinstance(ts, list) or not ts:
            raise ConfigError("expected a non-empty list", field="output_times", line=where("output_times"))
        ts = tuple(_number(t, "output_times", where, positive=True) for t in ts)
        if any(b <= a for a, b in zip(ts, ts[1:])) or ts[-1] > T * (1 + 1e-12):
            raise ConfigError("must increase and end at or before T", field="output_times", line=where("output_times"))
        kw["output_times"] = ts
    else:
        kw["output_times"] = tuple(t for t in (0.01, 0.1, 0.5) if t < T) + (T,)
    if "probe" in raw:
        pr = raw["probe"]
        if not isinstance(pr, dict):
            raise ConfigError("expected an object", field="probe", line=where("probe"))
        _check_keys(pr, PROBE_KEYS, "probe.", where)
        kw["probe"] = {k: _number(v, f"probe.{k}", where) for k, v in pr.items()}
    if "tolerance" in raw:
        kw["tolerance"] = _number(raw["tolerance"], "tolerance", where, positive=True)
    kw["exhaustion"] = _plan(raw.get("exhaustion"), "interior", "exhaustion", where)
    kw["truncation"] = _plan(raw.get("truncation"), "truncation", "truncation", where)
    if "out" in raw:
        if not isinstance(raw["out"], str):
            raise ConfigError("expected a string", field="out", line=where("out"))
        kw["out"] = raw["out"]
    if "sweep" in raw:
        sw = raw["sweep"]
        if not isinstance(sw, dict):
            raise ConfigError("expected an object", field="sweep", line=where("sweep"))
        _check_keys(sw, SWEEP_KEYS, "sweep.", where)
        axes = {}
        for k, v in sw.items():
            if not isinstance(v, list) or not v:
                raise ConfigError("sweep axes must be non-empty lists", field=f"sweep.{k}", line=where(k))
            axes[k] = tuple(_number(x, f"sweep.{k}", where, positive=True) for x in v)
        kw["sweep"] = axes
    if "seed" in raw:
        kw["seed"] = _number(raw["seed"], "seed", where, integer=True)
    if "periodic" in raw:
        if not isinstance(raw["periodic"], bool):
            raise ConfigError("expected true or false", field="periodic", line=where("periodic"))
        kw["periodic"] = raw["periodic"]
    try:
        return RunConfig(**kw)
    except ConfigError as exc:
        if exc.line is None and exc.field:
            raise ConfigError(str(exc).split(": ", 1)[-1], field=exc.field, line=where(exc.field.split(".")[0])) from exc
        raise


def load_config(path):
    """Read and validate a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    return parse_config(text, source=str(path))
