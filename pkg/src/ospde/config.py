"""Flat ``section.key = value`` run configuration with a dataclass schema.

Blank lines and ``#`` comments are ignored.  Every key must exist in the
schema and its value must parse as the declared type; the error names the
key.  ``dump`` writes every field, so ``load(dump(cfg)) == cfg``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .grid import DiffusionField, Domain
from .model import AffineFamily, DominatingData, ItoBoundaryProcess, Obstacle, Problem
from .solver import SolverConfig


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass
class GridSection:
    dim: int = 1
    n: int = 33
    extent: float = 1.0
    a: float = 1.0  # diffusion matrix a * I


@dataclass
class CoeffsSection:
    f_const: float = 0.0
    f_sin: float = 0.0
    f_y: float = 0.0
    f_z: float = 0.0
    f_nl: float = 0.0
    g_sin: float = 0.0
    g_y: float = 0.0
    g_z: float = 0.0
    h_const: float = 0.0
    h_sin: float = 0.0
    h_y: float = 0.0
    h_z: float = 0.0
    noise_decay: float = 1.0


@dataclass
class InitSection:
    const: float = 0.0
    sin: float = 1.0


@dataclass
class ObstacleSection:
    kind: str = "sine"  # sine | inactive
    amp: float = 0.5
    offset: float = 0.0
    decay: float = 0.0
    dominator: str = "none"  # none | zero | sine
    dom_s0_amp: float = 0.0
    dom_f_amp: float = 0.0
    dom_h_amp: float = 0.0


@dataclass
class BoundarySection:
    enabled: bool = False
    m: float = 0.0
    b: float = 0.0
    sigma: float = 0.0
    sigma_decay: float = 1.0


@dataclass
class SolverSection:
    dt: float = 1e-3
    T: float = 0.2
    scheme: str = "projection"
    eps_pen: float = 1e-3
    J: int = 1


@dataclass
class ExperimentSection:
    kind: str = "generic"  # generic | benchmark
    seeds: int = 8
    seed_list: str = ""
    p: float = 2.0
    theta: float = 0.5
    l: float = 2.0
    budget: int = 8
    tol: float = -1.0  # negative: default by linearity
    factor: float = 0.0  # maximum-principle factor; 0 calibrates
    safety: float = 10.0
    halvings: int = 3
    scale: float = 4.0
    exact_zero: bool = False  # dominated data: require (u - M)^+ = 0


@dataclass
class ComparisonSection:
    xi_shift: float = 0.05
    f_shift: float = 0.1
    obstacle_shift: float = 0.0


@dataclass
class OutputSection:
    dir: str = "out"
    trajectory: str = "both"  # bin | csv | both | none


SECTIONS = {
    "grid": GridSection, "coeffs": CoeffsSection, "init": InitSection, "obstacle": ObstacleSection,
    "boundary": BoundarySection, "solver": SolverSection, "experiment": ExperimentSection,
    "comparison": ComparisonSection, "output": OutputSection,
}

ALIASES = {"dt": "solver.dt", "T": "solver.T", "n": "grid.n", "eps_pen": "solver.eps_pen",
           "J": "solver.J", "beta": "coeffs.h_z", "alpha": "coeffs.g_z"}


@dataclass
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    coeffs: CoeffsSection = field(default_factory=CoeffsSection)
    init: InitSection = field(default_factory=InitSection)
    obstacle: ObstacleSection = field(default_factory=ObstacleSection)
    boundary: BoundarySection = field(default_factory=BoundarySection)
    solver: SolverSection = field(default_factory=SolverSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    comparison: ComparisonSection = field(default_factory=ComparisonSection)
    output: OutputSection = field(default_factory=OutputSection)

    def seeds(self) -> list[int]:
        if self.experiment.seed_list.strip():
            return parse_seed_list(self.experiment.seed_list, "experiment.seed_list")
        return list(range(self.experiment.seeds))

    def solver_config(self) -> SolverConfig:
        s = self.solver
        try:
            return SolverConfig(s.dt, s.T, s.scheme, s.eps_pen, s.J)
        except ValueError as exc:
            raise ConfigError("solver", str(exc)) from None

    def with_value(self, key: str, value) -> "RunConfig":
        key = ALIASES.get(key, key)
        sec, name = _split(key)
        typ = _field_types(SECTIONS[sec])[name]
        v = _parse(typ, str(value), key)
        return replace(self, **{sec: replace(getattr(self, sec), **{name: v})})

    def get(self, key: str):
        sec, name = _split(ALIASES.get(key, key))
        return getattr(getattr(self, sec), name)


def parse_seed_list(text: str, key: str = "seed_list") -> list[int]:
    try:
        seeds = [int(s) for s in text.replace(" ", "").split(",") if s]
    except ValueError:
        raise ConfigError(key, f"not a comma-separated integer list: {text!r}") from None
    if not seeds:
        raise ConfigError(key, "empty seed list")
    return seeds


def _field_types(cls) -> dict:
    return {f.name: f.type for f in fields(cls)}


def _split(key: str) -> tuple[str, str]:
    if key.count(".") != 1:
        raise ConfigError(key, "expected section.key")
    sec, name = key.split(".")
    if sec not in SECTIONS:
        raise ConfigError(key, f"unknown section {sec!r}")
    if name not in _field_types(SECTIONS[sec]):
        raise ConfigError(key, f"unknown key {name!r} in section {sec!r}")
    return sec, name


def _parse(typ: str, text: str, key: str):
    text = text.strip()
    try:
        if typ == "int":
            return int(text)
        if typ == "float":
            v = float(text)
            if math.isnan(v):
                raise ValueError
            return v
        if typ == "bool":
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError
        return text
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {typ}") from None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def loads(text: str) -> RunConfig:
    cfg = RunConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'section.key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(key, "duplicate key")
        seen.add(key)
        sec, name = _split(key)
        typ = _field_types(SECTIONS[sec])[name]
        setattr(getattr(cfg, sec), name, _parse(typ, value, key))
    validate(cfg)
    return cfg


def load(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"no such file: {p}")
    return loads(p.read_text())


def dumps(cfg: RunConfig) -> str:
    lines = []
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        for f in fields(obj):
            lines.append(f"{sec}.{f.name} = {_fmt(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def dump(cfg: RunConfig, path) -> None:
    Path(path).write_text(dumps(cfg))


def validate(cfg: RunConfig) -> None:
    g = cfg.grid
    if g.dim < 1:
        raise ConfigError("grid.dim", "must be >= 1")
    if g.n < 3:
        raise ConfigError("grid.n", "must be >= 3")
    if not g.extent > 0:
        raise ConfigError("grid.extent", "must be positive")
    if not g.a > 0:
        raise ConfigError("grid.a", "must be positive")
    if cfg.obstacle.kind not in ("sine", "inactive"):
        raise ConfigError("obstacle.kind", f"unknown obstacle {cfg.obstacle.kind!r}")
    if cfg.obstacle.dominator not in ("none", "zero", "sine"):
        raise ConfigError("obstacle.dominator", f"unknown dominator {cfg.obstacle.dominator!r}")
    if cfg.solver.scheme not in ("projection", "penalization"):
        raise ConfigError("solver.scheme", f"unknown scheme {cfg.solver.scheme!r}")
    if cfg.solver.J < 1:
        raise ConfigError("solver.J", "must be >= 1")
    if cfg.experiment.kind not in ("generic", "benchmark"):
        raise ConfigError("experiment.kind", f"unknown kind {cfg.experiment.kind!r}")
    if cfg.experiment.seeds < 1:
        raise ConfigError("experiment.seeds", "must be >= 1")
    if cfg.output.trajectory not in ("bin", "csv", "both", "none"):
        raise ConfigError("output.trajectory", f"unknown format {cfg.output.trajectory!r}")
    cfg.solver_config()


def family(cfg: RunConfig) -> AffineFamily:
    return AffineFamily(**{f.name: getattr(cfg.coeffs, f.name) for f in fields(cfg.coeffs)})


def build_problem(cfg: RunConfig, scale: float = 1.0, name: str = "config") -> Problem:
    """Assemble the configured problem; ``scale`` multiplies every data term (not the Lipschitz part)."""
    g = cfg.grid
    d = Domain(g.dim, (g.extent,) * g.dim, g.n)
    diff = DiffusionField.constant(d, g.a)
    J = cfg.solver.J
    coeffs = family(cfg).scaled(scale).build(g.dim, J, d.extents)
    xi = scale * (cfg.init.const + cfg.init.sin * d.profile())
    o = cfg.obstacle
    dom = None
    if o.dominator == "zero":
        dom = DominatingData.zero(d)
    elif o.dominator == "sine":
        dom = DominatingData.sine(d, scale * o.dom_s0_amp, scale * o.dom_f_amp, scale * o.dom_h_amp, J,
                                  cfg.coeffs.noise_decay)
    if o.kind == "inactive":
        obstacle = Obstacle.inactive()
        if dom is not None:
            obstacle = replace(obstacle, dominator=dom)
    else:
        obstacle = Obstacle.sine(d, scale * o.amp, scale * o.offset, o.decay, dom)
    boundary = None
    b = cfg.boundary
    if b.enabled:
        w = np.arange(1, J + 1, dtype=float) ** -b.sigma_decay
        boundary = ItoBoundaryProcess.constant(scale * b.m, scale * b.b, scale * b.sigma * w,
                                               cfg.solver_config().steps)
    return Problem(d, diff, coeffs, obstacle, xi, boundary, name=name, meta={"family": family(cfg)})


def build_comparison_pair(cfg: RunConfig) -> tuple[Problem, Problem]:
    """Base problem and a copy shifted upward by the ``comparison`` offsets (negative shifts reverse it)."""
    c = cfg.comparison
    p1 = build_problem(cfg, name="lower")
    hi = replace(cfg, init=replace(cfg.init, const=cfg.init.const + c.xi_shift),
                 coeffs=replace(cfg.coeffs, f_const=cfg.coeffs.f_const + c.f_shift),
                 obstacle=replace(cfg.obstacle, offset=cfg.obstacle.offset + c.obstacle_shift))
    p2 = build_problem(hi, name="upper")
    return p1, p2
