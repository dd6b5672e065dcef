"""Run configuration: INI-style ``key = value`` sections, validated before any computation."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .classic_vi import OODM, StateGrid
from .costs import CostModel, QuadraticCostParams, indicator_cost, quad_form, signed_power_quadratic, subspace_set
from .costs import quadratic_cost, quadratic_cost_mixed, _zero_stage, _zero_terminal
from .dilation import DilationSpec, DilationWeights
from .errors import ContractError
from .homvi import VIConfig, uniform_input_grid
from .manifold import ManifoldGrid
from .systems import SystemModel, cubic_scalar, linear_system, van_der_pol_extended


class ConfigError(ContractError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _matrix(text: str) -> np.ndarray:
    """Rows separated by ``;``, entries by ``,``."""
    rows = [_floats(r) for r in text.split(";") if r.strip()]
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"ragged matrix {text!r}")
    return np.array(rows)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class SystemSection:
    kind: str = "van_der_pol_extended"  # | linear | cubic_scalar
    a: float = 1.0
    b: float = 1.0
    T: float = 1.0
    A: str = ""
    B: str = ""
    c: float = 1.0


@dataclass(frozen=True)
class DilationSection:
    # empty means: take the weights/degree the system declares
    r: str = ""
    q: str = ""
    nu: str = ""


@dataclass(frozen=True)
class CostSection:
    kind: str = "quadratic"  # | signed_power_quadratic | zero | min_time
    Q: str = "1,0,0;0,1,0;0,0,0"
    R: str = "1"
    mu: float = 2.0
    target_free: str = "2"
    v0: str = "quadratic"  # | zero
    P: str = "6.8,4,0;4,11.5,0;0,0,0"


@dataclass(frozen=True)
class ManifoldSection:
    radius: float = 1.5
    n_az: int = 101
    n_el: int = 101
    mirror_x3: bool = True
    read_back: str = "bilinear"


@dataclass(frozen=True)
class VISection:
    input_min: float = -5.0
    input_max: float = 5.0
    M: int = 101
    iterations: int = 1
    v0_exact: bool = True


@dataclass(frozen=True)
class ClassicSection:
    lower: str = "-1,-1,1"
    upper: str = "1,1,1"
    counts: str = "101,101,1"
    oodm: str = "v0_extend"
    input_min: float = -5.0
    input_max: float = 5.0
    M: int = 101
    iterations: int = 1


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    seed: int = 0


_SECTIONS = {
    "system": SystemSection,
    "dilation": DilationSection,
    "cost": CostSection,
    "manifold": ManifoldSection,
    "vi": VISection,
    "classic": ClassicSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class RunConfig:
    system: SystemSection = field(default_factory=SystemSection)
    dilation: DilationSection = field(default_factory=DilationSection)
    cost: CostSection = field(default_factory=CostSection)
    manifold: ManifoldSection = field(default_factory=ManifoldSection)
    vi: VISection = field(default_factory=VISection)
    classic: ClassicSection = field(default_factory=ClassicSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_ini(self) -> str:
        lines = []
        for name in _SECTIONS:
            lines.append(f"[{name}]")
            for k, v in asdict(getattr(self, name)).items():
                lines.append(f"{k} = {_fmt(v)}")
            lines.append("")
        return "\n".join(lines)

    def flat(self) -> dict:
        return {f"{s}.{k}": _fmt(v) for s in _SECTIONS for k, v in asdict(getattr(self, s)).items()}


def _coerce(cls, section: str, key: str, raw: str, lineno: Optional[int]):
    types = {f.name: f.type for f in fields(cls)}
    where = f"[{section}] {key}" + (f" (line {lineno})" if lineno else "")
    t = types[key]
    try:
        if t in ("bool", bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if t in ("int", int):
            return int(raw)
        if t in ("float", float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {t}") from None


def _line_numbers(text: str) -> dict:
    out, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif "=" in s and section and not s.startswith(("#", ";")):
            out[(section, s.split("=", 1)[0].strip())] = n
    return out


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    lines = _line_numbers(text)
    parts = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}] (line {lines.get((section, ''), '?')})")
        cls = _SECTIONS[section]
        known = {f.name for f in fields(cls)}
        kw = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key [{section}] {key} (line {lines.get((section, key), '?')})")
            kw[key] = _coerce(cls, section, key, raw, lines.get((section, key)))
        parts[section] = cls(**kw)
    cfg = RunConfig(**parts)
    validate(cfg)
    return cfg


def load_config(path: Union[str, Path, None]) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text())


# --- building solver objects ---

@dataclass(frozen=True)
class Problem:
    system: SystemModel
    cost: CostModel
    v0: Callable[[np.ndarray], np.ndarray]


def build_system(cfg: RunConfig) -> SystemModel:
    s = cfg.system
    if s.kind == "van_der_pol_extended":
        sys = van_der_pol_extended(s.a, s.b, s.T)
    elif s.kind == "linear":
        if not s.A or not s.B:
            raise ConfigError("[system] linear needs A and B")
        B = _matrix(s.B)
        sys = linear_system(_matrix(s.A), B if B.shape[0] > 1 or B.shape[1] == 1 else B.T)
    elif s.kind == "cubic_scalar":
        sys = cubic_scalar(s.c)
    else:
        raise ConfigError(f"[system] unknown kind {s.kind!r}")
    d = cfg.dilation
    if d.r or d.q or d.nu:
        spec = DilationSpec(DilationWeights(_floats(d.r)) if d.r else sys.spec.r,
                            DilationWeights(_floats(d.q)) if d.q else sys.spec.q,
                            float(d.nu) if d.nu else sys.spec.nu)
        sys = SystemModel(sys.state_dim, sys.input_dim, sys.step, spec, sys.name)
    return sys


def build_cost(cfg: RunConfig, sys: SystemModel) -> CostModel:
    c = cfg.cost
    spec = sys.spec
    if c.kind == "quadratic":
        params = QuadraticCostParams(_matrix(c.Q), _matrix(c.R))
        w = set(spec.r.weights + spec.q.weights)
        if len(w) == 1:
            return quadratic_cost(params, mu_half=w.pop(), spec=spec)
        return quadratic_cost_mixed(params, spec)
    if c.kind == "signed_power_quadratic":
        return signed_power_quadratic(QuadraticCostParams(_matrix(c.Q), _matrix(c.R)), spec.r, spec.q, c.mu)
    if c.kind == "zero":
        return CostModel(_zero_stage, _zero_terminal, c.mu, spec, name="zero")
    if c.kind == "min_time":
        target = subspace_set(spec.r, [int(v) for v in _floats(c.target_free)])
        return indicator_cost(target, 1.0, spec.q, role="stage")
    raise ConfigError(f"[cost] unknown kind {c.kind!r}")


def build_v0(cfg: RunConfig) -> Callable[[np.ndarray], np.ndarray]:
    if cfg.cost.v0 == "quadratic":
        P = _matrix(cfg.cost.P)
        return lambda x: quad_form(P, x)
    if cfg.cost.v0 == "zero":
        return _zero_terminal
    raise ConfigError(f"[cost] unknown v0 {cfg.cost.v0!r}")


def build_problem(cfg: RunConfig) -> Problem:
    sys = build_system(cfg)
    return Problem(sys, build_cost(cfg, sys), build_v0(cfg))


def build_manifold(cfg: RunConfig) -> ManifoldGrid:
    m = cfg.manifold
    return ManifoldGrid(m.radius, m.n_az, m.n_el)


def build_vi_config(cfg: RunConfig, sys: SystemModel, v0) -> VIConfig:
    v = cfg.vi
    U = uniform_input_grid(v.input_min, v.input_max, v.M, sys.input_dim)
    return VIConfig(U, v.iterations, v0, cfg.manifold.read_back, cfg.manifold.mirror_x3, v.v0_exact)


def build_state_grid(cfg: RunConfig) -> StateGrid:
    c = cfg.classic
    return StateGrid(_floats(c.lower), _floats(c.upper), tuple(int(v) for v in _floats(c.counts)))


def classic_input_grid(cfg: RunConfig, sys: SystemModel) -> np.ndarray:
    c = cfg.classic
    return uniform_input_grid(c.input_min, c.input_max, c.M, sys.input_dim)


def validate(cfg: RunConfig) -> None:
    """Dimension consistency across sections; raises ``ConfigError``."""
    try:
        sys = build_system(cfg)
        build_cost(cfg, sys)
        P = _matrix(cfg.cost.P)
        if cfg.cost.v0 == "quadratic" and P.shape != (sys.state_dim, sys.state_dim):
            raise ConfigError(f"[cost] P is {P.shape}, state dimension is {sys.state_dim}")
        grid = build_state_grid(cfg)
        if grid.dim != sys.state_dim:
            raise ConfigError(f"[classic] box has {grid.dim} dimensions, state has {sys.state_dim}")
        if cfg.classic.oodm not in OODM:
            raise ConfigError(f"[classic] oodm must be one of {OODM}")
        if cfg.manifold.read_back not in ("bilinear", "nearest"):
            raise ConfigError("[manifold] read_back must be bilinear or nearest")
        build_manifold(cfg)
    except ConfigError:
        raise
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError(str(exc)) from None
