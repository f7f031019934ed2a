"""Flat ``key = value`` run configuration with dotted sections.

Example::

    model = pme
    model.params = 2
    dim = 1
    n = 256
    t_end = 0.25
    initial.kind = sine
    initial.mean = 0.5
    initial.amplitude = 0.4
    initial.mode = 1
    tol.grad = 0.01

``initial_v.*`` describes the upper field for comparison runs; ``box.*``
overrides the model's admissibility box (``u_lo``, ``u_hi``, ``grad_sq_max``,
``grad_sq_min``).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .grid import PeriodicGrid, ScalarField, read_snapshot
from .models import ModelSpec, builtin_model, canonical_name
from .solver import SolverConfig, initial_bump, initial_sine


class ConfigError(ValueError):
    pass


INITIAL_KEYS = {
    "constant": {"value": float},
    "sine": {"mean": float, "amplitude": float, "mode": int},
    "bump": {"center": float, "width": float, "height": float, "floor": float},
    "file": {"path": str},
}
INITIAL_DEFAULTS = {
    "constant": {"value": 0.5},
    "sine": {"mean": 0.5, "amplitude": 0.4, "mode": 1},
    "bump": {"center": 0.5, "width": 0.5, "height": 0.5, "floor": 0.0},
    "file": {},
}
BOX_KEYS = ("u_lo", "u_hi", "grad_sq_max", "grad_sq_min")
DEFAULT_PARAMS = {
    "pme": [2.0],
    "gdiff:poly": [0.0, 0.0, 1.0],
    "psi:hydrology_full": [],
    "psi:hydrology_simple": [],
    "doubly_nonlinear": [2.0, 2.0],
}


@dataclass
class RunConfig:
    model: str = "pme"
    params: list[float] | None = None  # None -> DEFAULT_PARAMS for the model
    dim: int = 1
    n: int = 256
    t_end: float = 0.25
    cfl_safety: float = 0.9
    output_every: float | None = None
    snapshot_times: list[float] = field(default_factory=list)
    initial: dict = field(default_factory=lambda: {"kind": "sine", **INITIAL_DEFAULTS["sine"]})
    initial_v: dict | None = None
    box: dict = field(default_factory=dict)
    tol_grad: float = 0.01
    tol_cert: float = 1e-9
    seed: int = 0

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            n=self.n,
            dim=self.dim,
            t_end=self.t_end,
            cfl_safety=self.cfl_safety,
            output_every=self.output_every,
            snapshot_times=list(self.snapshot_times),
        )

    def build_model(self) -> ModelSpec:
        return builtin_model(self.model, self.model_params(), self.dim, **self.box)

    def model_params(self) -> list[float]:
        if self.params is not None:
            return list(self.params)
        return list(DEFAULT_PARAMS[canonical_name(self.model)])

    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.dim, self.n)

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:12]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _initial_spec(section: dict[str, str], name: str) -> dict:
    kind = section.pop("kind", "sine")
    if kind not in INITIAL_KEYS:
        raise ConfigError(f"{name}.kind must be one of {sorted(INITIAL_KEYS)}, got {kind!r}")
    spec = {"kind": kind, **INITIAL_DEFAULTS[kind]}
    for key, raw in section.items():
        if key not in INITIAL_KEYS[kind]:
            raise ConfigError(f"unknown key {name}.{key} for kind {kind}")
        spec[key] = INITIAL_KEYS[kind][key](raw)
    if kind == "file" and "path" not in spec:
        raise ConfigError(f"{name}.path is required for kind file")
    return spec


def parse_config(text: str) -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value.strip()

    cfg = RunConfig()
    sections: dict[str, dict[str, str]] = {"initial": {}, "initial_v": {}, "box": {}}
    scalar = {
        "model": ("model", str),
        "model.params": ("params", _floats),
        "dim": ("dim", int),
        "n": ("n", int),
        "t_end": ("t_end", float),
        "cfl_safety": ("cfl_safety", float),
        "output_every": ("output_every", float),
        "snapshot_times": ("snapshot_times", _floats),
        "tol.grad": ("tol_grad", float),
        "tol.cert": ("tol_cert", float),
        "seed": ("seed", int),
    }
    try:
        for key, value in raw.items():
            if key in scalar:
                attr, conv = scalar[key]
                setattr(cfg, attr, conv(value))
                continue
            head, _, tail = key.partition(".")
            if head in sections and tail:
                sections[head][tail] = value
                continue
            raise ConfigError(f"unknown key {key!r}")
        if sections["initial"] or "initial.kind" in raw:
            cfg.initial = _initial_spec(sections["initial"], "initial")
        if sections["initial_v"]:
            cfg.initial_v = _initial_spec(sections["initial_v"], "initial_v")
        for key, value in sections["box"].items():
            if key not in BOX_KEYS:
                raise ConfigError(f"unknown key box.{key}")
            cfg.box[key] = float(value)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    """Effective configuration; ``parse_config(dump_config(c)) == c``."""
    lines = [
        f"model = {cfg.model}",
        f"dim = {cfg.dim}",
        f"n = {cfg.n}",
        f"t_end = {_fmt(float(cfg.t_end))}",
        f"cfl_safety = {_fmt(float(cfg.cfl_safety))}",
    ]
    if cfg.params is not None:
        lines.insert(1, f"model.params = {_fmt([float(p) for p in cfg.params])}")
    if cfg.output_every is not None:
        lines.append(f"output_every = {_fmt(float(cfg.output_every))}")
    if cfg.snapshot_times:
        lines.append(f"snapshot_times = {_fmt([float(t) for t in cfg.snapshot_times])}")
    for name, spec in (("initial", cfg.initial), ("initial_v", cfg.initial_v)):
        if spec is None:
            continue
        lines.append(f"{name}.kind = {spec['kind']}")
        lines.extend(f"{name}.{k} = {_fmt(v)}" for k, v in spec.items() if k != "kind")
    lines.extend(f"box.{k} = {_fmt(float(v))}" for k, v in sorted(cfg.box.items()))
    lines.append(f"tol.grad = {_fmt(float(cfg.tol_grad))}")
    lines.append(f"tol.cert = {_fmt(float(cfg.tol_cert))}")
    lines.append(f"seed = {cfg.seed}")
    return "\n".join(lines) + "\n"


def build_initial(spec: dict, grid: PeriodicGrid) -> ScalarField:
    kind = spec["kind"]
    if kind == "constant":
        return ScalarField.constant(grid, spec["value"])
    if kind == "sine":
        return initial_sine(grid, spec["mean"], spec["amplitude"], spec["mode"])
    if kind == "bump":
        return initial_bump(grid, spec["center"], spec["width"], spec["height"], spec["floor"])
    if kind == "file":
        field_, _ = read_snapshot(spec["path"])
        if field_.grid != grid:
            raise ConfigError(f"snapshot grid {field_.grid} does not match configured {grid}")
        return field_
    raise ConfigError(f"unknown initial kind {kind!r}")
