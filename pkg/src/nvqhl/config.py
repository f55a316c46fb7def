"""Experiment configuration.

Files are flat ``section.key = value`` text; values are Python literals
(numbers, strings, tuples).  Blank lines and ``#`` comments are ignored.
Any key can be overridden with the same dotted syntax on the command line.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field, fields, asdict, replace, is_dataclass
from pathlib import Path

from .inference import ScoreParams
from .metrology import FdSteps
from .nv import GAMMA_NV, DriveForm, InitialState


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    height: int = 60
    width: int = 60
    window: int = 6
    stride_row: int = 2
    stride_col: int = 2
    directions: tuple[str, ...] = ("H", "V")


@dataclass(frozen=True)
class TruthConfig:
    B_base: float = 50e-6
    B_amp: float = 5e-6
    J_true: float = 5.0e3
    sigma_true: float = 50e-9


@dataclass(frozen=True)
class NvConfig:
    gamma_abs: float = GAMMA_NV
    B_ref: float = 50e-6
    angular_factor: float = 2 * math.pi
    dipolar_exponent: float = 3.0
    drive_form: str = DriveForm.EFFECTIVE_X.value
    strain_std: float = 2 * math.pi * 5e3
    B_lo: float = 45e-6
    B_hi: float = 60e-6


@dataclass(frozen=True)
class ParticleConfig:
    n_local: int = 256
    n_global: int = 256
    J_min: float = 0.0
    J_max: float = 10e3
    init_jitter: float = 100e-9
    local_jitter: float = 100e-9
    J_rejuvenation: float = 100.0
    sigma_dyn: float = 20e-9
    J_jitter: float = 1.0e3
    ess_threshold: float = 0.5
    refresh_fraction: float = 0.05


@dataclass(frozen=True)
class ControlConfig:
    K_B: int = 6
    K_J: int = 6
    b_times: tuple[float, ...] = (4e-6, 8e-6, 11e-6)
    b_shots: tuple[int, ...] = (10000, 3000, 300)
    j_times: tuple[float, ...] = (100e-6, 157e-6)
    j_shots: tuple[int, ...] = (300, 300)
    omegas: tuple[float, ...] = (5e3,)
    b_init: str = InitialState.PRODUCT_RAMSEY.value
    j_init: str = InitialState.BELL_PAIRS.value
    binomial_eig: bool = False


@dataclass(frozen=True)
class AggregationConfig:
    profile: str = "Triangular"
    uncovered: str = "neighbors"
    threshold: float | None = None


@dataclass(frozen=True)
class BenchmarkConfig:
    T_ref: float = 157e-6
    N_ref: int = 300


@dataclass(frozen=True)
class RunConfig:
    frames: int = 16
    seed: int = 20240601
    threads: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    truth: TruthConfig = field(default_factory=TruthConfig)
    nv: NvConfig = field(default_factory=NvConfig)
    particles: ParticleConfig = field(default_factory=ParticleConfig)
    controls: ControlConfig = field(default_factory=ControlConfig)
    score: ScoreParams = field(default_factory=ScoreParams)
    fd: FdSteps = field(default_factory=FdSteps)
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        validate(self)

    @property
    def dice_threshold(self) -> float:
        t = self.aggregation.threshold
        return self.truth.B_base + self.truth.B_amp / 2 if t is None else t

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, overrides: dict[str, object]) -> "ExperimentConfig":
        return apply_overrides(self, overrides)


def validate(cfg: ExperimentConfig) -> None:
    g, t, nv, p, c = cfg.grid, cfg.truth, cfg.nv, cfg.particles, cfg.controls
    checks = [
        (g.height > 0 and g.width > 0, "grid size must be positive"),
        (1 <= g.window <= min(g.height, g.width), "window must fit the grid"),
        (g.stride_row > 0 and g.stride_col > 0, "strides must be positive"),
        (len(g.directions) > 0 and set(g.directions) <= {"H", "V"}, "directions must be a subset of H, V"),
        (t.B_amp >= 0 and t.sigma_true >= 0, "B_amp and sigma_true must be non-negative"),
        (nv.gamma_abs > 0 and nv.angular_factor > 0, "gamma_abs and angular_factor must be positive"),
        (nv.B_lo < nv.B_hi, "field box must be non-empty"),
        (nv.strain_std >= 0, "strain_std must be non-negative"),
        (p.n_local >= 1 and p.n_global >= 1, "particle counts must be positive"),
        (p.J_min <= p.J_max, "J range must be non-empty"),
        (p.J_min <= t.J_true <= p.J_max, "J range must contain J_true"),
        (min(p.init_jitter, p.local_jitter, p.J_rejuvenation, p.sigma_dyn, p.J_jitter) >= 0,
         "jitter scales must be non-negative"),
        (0.0 <= p.ess_threshold <= 1.0, "ess_threshold must lie in [0, 1]"),
        (0.0 <= p.refresh_fraction < 1.0, "refresh_fraction must lie in [0, 1)"),
        (c.K_B >= 0 and c.K_J >= 0 and c.K_B + c.K_J >= 1, "need at least one adaptive step"),
        (len(c.b_times) == len(c.b_shots) and len(c.j_times) == len(c.j_shots),
         "each evolution time needs a shot count"),
        (all(x >= 0 for x in c.b_times + c.j_times), "evolution times must be non-negative"),
        (all(n >= 1 for n in c.b_shots + c.j_shots), "shot counts must be positive"),
        (len(c.omegas) > 0, "need at least one drive amplitude"),
        (c.K_B == 0 or len(c.b_times) > 0, "B phase needs candidate times"),
        (c.K_J == 0 or len(c.j_times) > 0, "J phase needs candidate times"),
        (cfg.aggregation.profile in ("Uniform", "Triangular"), "profile must be Uniform or Triangular"),
        (cfg.aggregation.uncovered in ("neighbors", "carry"), "uncovered must be neighbors or carry"),
        (cfg.run.frames >= 1, "need at least one frame"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    DriveForm(nv.drive_form)
    InitialState(c.b_init)
    InitialState(c.j_init)


def parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text  # bare word, e.g. Triangular


def _coerce(current, value, key: str):
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean")
        return value
    if isinstance(current, tuple):
        if isinstance(value, str):
            value = tuple(v for v in value.replace(",", " ").split() if v)
            value = tuple(parse_value(v) for v in value)
        if not isinstance(value, (tuple, list)):
            value = (value,)
        return tuple(value)
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer")
        return value
    if isinstance(current, float) or current is None:
        if value is None:
            return None
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{key}: expected a number")
    return value


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, object]) -> ExperimentConfig:
    sections: dict[str, dict] = {}
    for key, value in overrides.items():
        try:
            sec, name = key.split(".")
        except ValueError:
            raise ConfigError(f"key {key!r} must have the form section.name") from None
        current_sec = getattr(cfg, sec, None)
        if current_sec is None or not is_dataclass(current_sec):
            raise ConfigError(f"unknown config section {sec!r}")
        if name not in {f.name for f in fields(current_sec)}:
            raise ConfigError(f"unknown config key {key!r}")
        sections.setdefault(sec, {})[name] = _coerce(getattr(current_sec, name), value, key)
    try:
        new = {sec: replace(getattr(cfg, sec), **vals) for sec, vals in sections.items()}
        return replace(cfg, **new)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def parse_text(text: str, source: str = "<string>") -> dict[str, object]:
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def load_config(path: str | Path | None = None,
                overrides: dict[str, object] | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = apply_overrides(cfg, parse_text(text, str(path)))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def dump_text(cfg: ExperimentConfig) -> str:
    lines = []
    for sec in fields(cfg):
        part = getattr(cfg, sec.name)
        for f in fields(part):
            lines.append(f"{sec.name}.{f.name} = {getattr(part, f.name)!r}")
    return "\n".join(lines) + "\n"


def desk_config(**overrides) -> ExperimentConfig:
    """Scaled-down setting used by the acceptance suite."""
    base = {"grid.height": 24, "grid.width": 24, "grid.window": 3, "run.frames": 8,
            "particles.n_local": 64, "particles.n_global": 32}
    base.update(overrides)
    return apply_overrides(ExperimentConfig(), base)
