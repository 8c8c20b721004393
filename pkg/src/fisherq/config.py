"""Scenario files: flat ``key = value`` text with dotted keys.

Lines starting with ``#`` are comments; ``[section]`` lines prefix the keys
that follow with ``section.``. Lists are comma separated. Every key must be
declared in :data:`SCHEMA`; values are converted and checked before any
arrays are allocated.
"""

import hashlib
from dataclasses import dataclass

from .errors import ConfigError
from .expr import Expression


@dataclass(frozen=True)
class Key:
    kind: str
    default: object = None
    choices: tuple = None
    required: bool = False


def _key(kind, default=None, choices=None, required=False):
    return Key(kind, default, choices, required)


SCHEMA = {
    "name": _key("str", required=True),
    "description": _key("str", ""),
    "seed": _key("int", 0),
    "experiment.kind": _key("str", "evolution", ("evolution", "stern_gerlach", "aharonov_bohm", "classical_convergence")),
    "grid.points": _key("ints", required=True),
    "grid.lengths": _key("floats", required=True),
    "grid.boundary": _key("str", "periodic", ("periodic", "padded-absorbing")),
    "grid.directions": _key("strs", ("x",)),
    "particles.count": _key("int", 1),
    "constants.hbar": _key("float", 1.0),
    "constants.m": _key("float", 1.0),
    "constants.e": _key("float", 1.0),
    "constants.c": _key("float", 1.0),
    "potential": _key("expr", "0"),
    "gauge.phi": _key("expr", "0"),
    "gauge.ax": _key("expr", "0"),
    "gauge.ay": _key("expr", "0"),
    "gauge.az": _key("expr", "0"),
    "gauge.bx": _key("expr"),
    "gauge.by": _key("expr"),
    "gauge.bz": _key("expr"),
    "hamiltonian.zeeman": _key("bool"),
    "initial.kind": _key("str", "gaussian", ("gaussian", "snapshot")),
    "initial.center": _key("floats", (0.0,)),
    "initial.width": _key("floats", (1.0,)),
    "initial.momentum": _key("floats", (0.0,)),
    "initial.spin": _key("strs"),
    "initial.path": _key("str"),
    "initial.dress": _key("bool", False),
    "initial.dress_reference": _key("floats", (0.0, 0.0, 0.0)),
    "propagator.dt": _key("float", required=True),
    "propagator.steps": _key("int", required=True),
    "propagator.scheme": _key("str", "crank-nicolson", ("crank-nicolson", "split-step-spectral")),
    "propagator.tol": _key("float", 1e-12),
    "propagator.absorb_width": _key("float", 0.0),
    "output.every": _key("int", 10),
    "output.snapshot_every": _key("int", 0),
    "verify.norm_tol": _key("float", 1e-8),
    "verify.ehrenfest": _key("bool", False),
    "verify.ehrenfest_tol": _key("float", 1e-5),
    "verify.torque_scale": _key("float", 1.0),
    "verify.madelung": _key("bool", False),
    "verify.madelung_tol": _key("float", 1e-5),
    "verify.madelung_every": _key("int", 0),
    "verify.larmor": _key("bool", False),
    "verify.larmor_tol": _key("float", 1e-4),
    "verify.spreading": _key("bool", False),
    "verify.spreading_tol": _key("float", 1e-4),
    "verify.factorization": _key("bool", False),
    "verify.factorization_tol": _key("float", 1e-8),
    "verify.stern_gerlach_tol": _key("float", 1e-6),
    "ab.radius": _key("float", 3.0),
    "ab.frequency": _key("float", 6.0),
    "ab.wavenumber": _key("float", 4.0),
    "ab.arc_width": _key("float", 0.8),
    "ab.core": _key("float", 0.3),
    "ab.fluxes": _key("floats", (0.0, 0.8, 1.6, 2.4, 3.2)),
    "ab.tol": _key("float", 1e-3),
    "classical.hbars": _key("floats", (1.0, 0.5, 0.25, 0.125)),
    "classical.samples": _key("int", 20000),
    "classical.dt": _key("float", 0.01),
    "classical.t_final": _key("float"),
    "classical.trajectory_tol": _key("float", 1e-6),
    "classical.harmonic_frequency": _key("float"),
}


def _convert(key, spec, raw):
    kind = spec.kind
    try:
        if kind == "str":
            value = raw
        elif kind == "int":
            value = int(raw)
        elif kind == "float":
            value = float(raw)
        elif kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            value = low in ("true", "yes", "1")
        elif kind == "ints":
            value = tuple(int(v) for v in raw.split(","))
        elif kind == "floats":
            value = tuple(float(v) for v in raw.split(","))
        elif kind == "strs":
            value = tuple(v.strip() for v in raw.split(",") if v.strip())
        elif kind == "expr":
            Expression(raw)
            value = raw
        else:
            raise AssertionError(kind)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind}") from None
    if spec.choices is not None and value not in spec.choices:
        raise ConfigError(f"{key}: {value!r} is not one of {', '.join(spec.choices)}")
    return value


def parse_config(text, source="<config>"):
    """Parse scenario text into a dict with every schema key present (defaults filled in)."""
    values = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if section:
            key = f"{section}.{key}"
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        values[key] = _convert(key, SCHEMA[key], raw)
    for key, spec in SCHEMA.items():
        if key not in values:
            if spec.required:
                raise ConfigError(f"{source}: missing required key {key!r}")
            values[key] = spec.default
    _validate(values, source)
    return values


def _validate(v, source):
    def fail(msg):
        raise ConfigError(f"{source}: {msg}")

    if v["propagator.dt"] <= 0:
        fail("propagator.dt must be positive")
    if v["propagator.steps"] < 1:
        fail("propagator.steps must be at least 1")
    if v["propagator.tol"] <= 0:
        fail("propagator.tol must be positive")
    if v["output.every"] < 1:
        fail("output.every must be at least 1")
    if v["output.snapshot_every"] < 0 or v["verify.madelung_every"] < 0:
        fail("cadences must be non-negative")
    for name in ("hbar", "m", "c"):
        if v[f"constants.{name}"] <= 0:
            fail(f"constants.{name} must be positive")
    if v["particles.count"] < 1:
        fail("particles.count must be at least 1")
    ndim = v["particles.count"] * len(v["grid.directions"])
    if len(v["grid.points"]) != ndim:
        fail(f"grid.points needs {ndim} entries")
    if len(v["grid.lengths"]) not in (1, ndim):
        fail(f"grid.lengths needs 1 or {ndim} entries")
    if any(p < 4 for p in v["grid.points"]) or any(length <= 0 for length in v["grid.lengths"]):
        fail("grid needs at least 4 points and positive lengths per axis")
    if v["initial.kind"] == "snapshot" and not v["initial.path"]:
        fail("initial.kind = snapshot needs initial.path")
    if v["initial.spin"] is not None and len(v["initial.spin"]) != v["particles.count"]:
        fail("initial.spin needs one entry per particle")
    if v["experiment.kind"] == "classical_convergence" and v["classical.t_final"] is None:
        fail("classical_convergence needs classical.t_final")
    if any(h <= 0 for h in v["classical.hbars"]):
        fail("classical.hbars must be positive")


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path)), config_hash(text)


def config_hash(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
