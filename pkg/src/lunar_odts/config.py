"""Scenario configuration: YAML text mapped onto typed dataclasses.

Every section is optional and falls back to the bundled defaults.  Errors
carry the file line of the offending key.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .dynamics import ClockNoise
from .observables import IonoModel, ReceiverParams


class ConfigError(ValueError):
    pass


class Mode(str, enum.Enum):
    L1PR = "l1pr"
    IFPR = "ifpr"
    IFPR_TDCP = "ifpr+tdcp"

    @property
    def dual_frequency(self) -> bool:
        return self is not Mode.L1PR

    @property
    def tdcp(self) -> bool:
        return self is Mode.IFPR_TDCP


@dataclass(frozen=True)
class FilterConfig:
    mode: Mode = Mode.IFPR_TDCP
    pr_mask: float = 1.0e6          # m, tangential altitude
    tdcp_mask: float = 5.0e6
    sigma_ure: float = 5.0          # m
    sigma_dure: float = 8.0e-3      # m
    sigma_pos: float = 1000.0
    sigma_vel: float = 1.0
    sigma_bias: float = 1000.0
    sigma_drift: float = 1.0
    sigma_accel: float = 1.0e-3
    sigma_srp_rel: float = 0.2
    q_a: float = 1.0e-18            # (m/s^2)^2 / s
    tdcp_every: int = 2
    smoother_iterations: int = 5
    screen_sigma: float = 3.0
    gravity_degree: int = 8

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.pr_mask < 0 or self.tdcp_mask < 0:
            raise ConfigError("altitude masks must be non-negative")
        for name in ("sigma_ure", "sigma_dure", "sigma_pos", "sigma_vel", "sigma_bias", "sigma_drift",
                     "sigma_accel", "sigma_srp_rel", "q_a", "screen_sigma"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"filter.{name} must be positive")
        if self.tdcp_every < 1:
            raise ConfigError("filter.tdcp_every must be >= 1")
        if self.smoother_iterations < 0:
            raise ConfigError("filter.smoother_iterations must be >= 0")
        if self.gravity_degree < 0:
            raise ConfigError("filter.gravity_degree must be >= 0")


@dataclass(frozen=True)
class OrbitConfig:
    """Osculating elements in the lunar orbit-plane frame (z along the Moon's
    orbital angular momentum about the Earth, x towards the Earth)."""

    a_km: float = 11_315.93
    e: float = 0.69198
    inc_deg: float = 61.208
    raan_deg: float = 116.90
    argp_deg: float = 85.21
    true_anomaly_deg: float = 0.0
    srp_gamma: float = 1.8 / 850.0   # C_r A / m, m^2/kg

    def __post_init__(self) -> None:
        if not self.a_km > 0 or not 0 <= self.e < 1:
            raise ConfigError("orbit needs a > 0 and 0 <= e < 1")


@dataclass(frozen=True)
class ScenarioConfig:
    start: str = "2025-03-01T12:00:18"   # GPST
    duration_h: float = 180.0
    step_s: float = 10.0
    eval_fraction: float = 30.0 / 180.0
    truth_degree: int = 50
    orbit: OrbitConfig = field(default_factory=OrbitConfig)
    clock: ClockNoise = field(default_factory=ClockNoise)
    receiver: ReceiverParams = field(default_factory=ReceiverParams)
    ionosphere: IonoModel = field(default_factory=IonoModel)
    filter: FilterConfig = field(default_factory=FilterConfig)
    ephemeris_file: Optional[str] = None
    gravity_file: Optional[str] = None
    almanac_file: Optional[str] = None
    isb_galileo: float = 0.0
    runs: int = 1
    seed: int = 1
    workers: Optional[int] = None
    output_dir: str = "out"
    base_dir: str = "."

    def __post_init__(self) -> None:
        if not self.duration_h > 0:
            raise ConfigError("scenario.duration_h must be positive")
        if not self.step_s > 0:
            raise ConfigError("scenario.step_s must be positive")
        if not 0 < self.eval_fraction <= 1:
            raise ConfigError("scenario.eval_fraction must lie in (0, 1]")
        if self.truth_degree < 0:
            raise ConfigError("gravity.truth_degree must be >= 0")
        if self.runs < 1:
            raise ConfigError("monte_carlo.runs must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_h * 3600.0 / self.step_s))

    def resolve(self, name: str) -> Optional[Path]:
        value = getattr(self, name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p


# --- YAML mapping -------------------------------------------------------------

# yaml section -> (target, {yaml key: attribute}); None target means ScenarioConfig itself
_SECTIONS = {
    "scenario": (None, {"start": "start", "duration_h": "duration_h", "step_s": "step_s",
                        "eval_fraction": "eval_fraction"}),
    "orbit": (OrbitConfig, None),
    "gravity": (None, {"truth_degree": "truth_degree", "file": "gravity_file"}),
    "ephemeris": (None, {"file": "ephemeris_file"}),
    "constellation": (None, {"almanac": "almanac_file", "isb_galileo_m": "isb_galileo"}),
    "clock": (ClockNoise, None),
    "receiver": (ReceiverParams, None),
    "ionosphere": (IonoModel, None),
    "filter": (FilterConfig, None),
    "monte_carlo": (None, {"runs": "runs", "seed": "seed", "workers": "workers"}),
    "output": (None, {"dir": "output_dir"}),
}
_NESTED = {OrbitConfig: "orbit", ClockNoise: "clock", ReceiverParams: "receiver", IonoModel: "ionosphere",
           FilterConfig: "filter"}
_FILES = {"ephemeris_file": "ephemeris.file", "gravity_file": "gravity.file", "almanac_file": "constellation.almanac"}


def _line(node) -> int:
    return node.start_mark.line + 1


def _scalar(node, where: str, expected: type, source: str):
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError(f"{source}:{_line(node)}: {where} must be a single value")
    value = yaml.safe_load(yaml.serialize(node))
    if value is None:
        return None
    if expected in (float, int):
        if isinstance(value, str):
            # YAML 1.1 leaves exponents without a sign ("2.0e6") as strings
            try:
                value = int(value) if expected is int else float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{source}:{_line(node)}: {where} must be a number, got {value!r}")
        if expected is int and not isinstance(value, int):
            raise ConfigError(f"{source}:{_line(node)}: {where} must be an integer, got {value!r}")
        return expected(value)
    return str(value)


_TYPES = {"float": float, "int": int, "Optional[int]": int}


def _field_types(cls) -> dict[str, type]:
    return {f.name: _TYPES.get(str(f.type), str) for f in dataclasses.fields(cls)}


def _mapping(node, where: str, source: str) -> list:
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{source}:{_line(node)}: {where} must be a mapping")
    return node.value


def parse_config(text: str, source: str = "<config>", base_dir: str | Path = ".") -> ScenarioConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 0
        raise ConfigError(f"{source}:{line}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    top: dict[str, Any] = {"base_dir": str(base_dir)}
    nested: dict[str, dict] = {}
    lines: dict[str, int] = {}
    if root is not None:
        for knode, vnode in _mapping(root, "top level", source):
            sec = knode.value
            if sec not in _SECTIONS:
                raise ConfigError(f"{source}:{_line(knode)}: unknown section {sec!r}")
            target, keys = _SECTIONS[sec]
            types = _field_types(target or ScenarioConfig)
            for k2, v2 in _mapping(vnode, sec, source):
                name = k2.value
                where = f"{sec}.{name}"
                if target is None:
                    if name not in keys:
                        raise ConfigError(f"{source}:{_line(k2)}: unknown key {where!r}")
                    attr = keys[name]
                    top[attr] = _scalar(v2, where, types[attr], source)
                    lines[attr] = _line(k2)
                else:
                    if name not in types:
                        raise ConfigError(f"{source}:{_line(k2)}: unknown key {where!r}")
                    nested.setdefault(sec, {})[name] = _scalar(v2, where, types[name], source)
                    lines[where] = _line(k2)
    try:
        for cls, sec in _NESTED.items():
            if sec in nested:
                top[sec] = cls(**nested[sec])
        cfg = ScenarioConfig(**top)
    except (ConfigError, ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for attr, label in _FILES.items():
        p = cfg.resolve(attr)
        if p is not None and not p.exists():
            raise ConfigError(f"{source}:{lines.get(attr, 0)}: {label}: file not found: {p}")
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path), path.parent)


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (``default``, ``desk`` or ``minimal``)."""
    p = Path(__file__).parent / "data" / f"{name}.yaml"
    if not p.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return p
