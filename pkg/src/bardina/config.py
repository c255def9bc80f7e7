"""Run configuration: INI-style ``key = value`` files with sections."""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, fields as dc_fields
from pathlib import Path

from .filter import C_ELL, WRAP_RATIO
from .picard import DEFAULT_C_PIC


class ConfigError(ValueError):
    pass


@dataclass
class GridConfig:
    N: int = 32
    L: float = 2 * math.pi


@dataclass
class PhysicsConfig:
    nu: float = 0.05
    alpha: float = 0.25


@dataclass
class IntegratorConfig:
    mode: str = "if-rk4"
    dt: float = 1e-3
    t_end: float = 1.0
    n_max: int = 30
    tol: float = 1e-9
    panels: int = 32


@dataclass
class PicardConfig:
    C_pic: float = DEFAULT_C_PIC
    segments: int = 3


@dataclass
class InitialConfig:
    kind: str = "taylor-green"
    seed: int = 0
    spectrum_slope: float = -2.0
    amplitude: float = 1.0


@dataclass
class OutputConfig:
    dir: str = "out"
    sample_every: int = 50


@dataclass
class VerifyConfig:
    n_random: int = 100
    n_pairs: int = 50
    C_ell: float = C_ELL
    bump_box: float = 6 * math.pi
    bump_width: float = 1.5
    alphas: tuple[float, ...] = (0.2, 0.1, 0.05)


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    picard: PicardConfig = field(default_factory=PicardConfig)
    initial_data: InitialConfig = field(default_factory=InitialConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def validate(self) -> "RunConfig":
        g, ph, it = self.grid, self.physics, self.integrator
        if g.N < 8 or g.N % 2:
            raise ConfigError(f"grid.N must be even and >= 8, got {g.N}")
        if not g.L > 0:
            raise ConfigError(f"grid.L must be positive, got {g.L}")
        if not ph.nu > 0:
            raise ConfigError(f"physics.nu must be positive, got {ph.nu}")
        if not 0 < ph.alpha <= 1:
            raise ConfigError(f"physics.alpha must satisfy 0 < alpha <= 1, got {ph.alpha}")
        if ph.alpha > g.L / WRAP_RATIO:
            raise ConfigError(f"physics.alpha={ph.alpha} violates alpha <= L/20 = {g.L / WRAP_RATIO:.6g}")
        if it.mode not in ("if-rk4", "picard"):
            raise ConfigError(f"integrator.mode must be 'if-rk4' or 'picard', got {it.mode!r}")
        if not it.dt > 0:
            raise ConfigError(f"integrator.dt must be positive, got {it.dt}")
        if not it.t_end >= 0:
            raise ConfigError(f"integrator.t_end must be non-negative, got {it.t_end}")
        if it.mode == "picard" and (it.n_max < 1 or not it.tol > 0 or it.panels < 1):
            raise ConfigError("picard mode needs n_max >= 1, tol > 0 and panels >= 1")
        if not self.picard.C_pic > 0:
            raise ConfigError(f"picard.C_pic must be positive, got {self.picard.C_pic}")
        if self.picard.segments < 1:
            raise ConfigError(f"picard.segments must be >= 1, got {self.picard.segments}")
        if self.output.sample_every < 0:
            raise ConfigError("output.sample_every must be >= 0")
        if self.initial_data.kind not in ("taylor-green", "taylor-green-2d", "beltrami", "random", "zero"):
            raise ConfigError(f"unknown initial_data.kind {self.initial_data.kind!r}")
        v = self.verify
        if v.n_random < 1 or v.n_pairs < 1 or not v.C_ell > 0 or not v.alphas:
            raise ConfigError("verify section needs n_random, n_pairs >= 1, C_ell > 0 and alphas")
        if any(a > v.bump_box / WRAP_RATIO or a <= 0 for a in v.alphas):
            raise ConfigError(f"verify.alphas must lie in (0, bump_box/20]")
        return self

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        for section in dc_fields(self):
            values = asdict(getattr(self, section.name))
            parser[section.name] = {k: _format(v) for k, v in values.items()}
        lines = []
        for name in parser.sections():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in parser[name].items())
            lines.append("")
        return "\n".join(lines)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(raw: str, default, key: str):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc
    return raw.strip()


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig()
    known = {f.name for f in dc_fields(cfg)}
    for name in parser.sections():
        if name not in known:
            raise ConfigError(f"unknown section [{name}]")
        section = getattr(cfg, name)
        defaults = asdict(section)
        for key, raw in parser[name].items():
            if key not in defaults:
                raise ConfigError(f"unknown key {name}.{key}")
            setattr(section, key, _coerce(raw, defaults[key], f"{name}.{key}"))
    return cfg.validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
