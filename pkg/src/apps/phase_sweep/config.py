"""
Run configuration for ohphase.

A run is described by an INI file:

    [molecule]  delta_ghz | delta_hz | delta_rad_s, delta_is_angular, mu_e_debye,
                mu_b_j_per_t, hbar_j_s
    [fields]    b_tesla, theta_m, e_kv_per_cm, theta_e
    [sweep]     omega_r_min_rad_s | omega_r_min_hz, omega_r_max_rad_s | omega_r_max_hz,
                points, scale
    [output]    directory, stem, format, figure
    [toggles]   oracle_check, pt_compare, pt3_omega_l_squared
    [raw]       electric_rotation_rad_s | electric_rotation_hz

Output settings resolve as CLI option > config file > OHPHASE_* environment > default.
"""

import configparser
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from core.environment import runtime_defaults
from core.errors import ConfigError
from core.model import FieldProtocol, MoleculeParams

logger = logging.getLogger(__name__)

ALLOWED_KEYS = {
    "molecule": {"delta_ghz", "delta_hz", "delta_rad_s", "delta_is_angular", "mu_e_debye", "mu_b_j_per_t", "hbar_j_s"},
    "fields": {"b_tesla", "theta_m", "e_kv_per_cm", "theta_e"},
    "sweep": {"omega_r_min_rad_s", "omega_r_min_hz", "omega_r_max_rad_s", "omega_r_max_hz", "points", "scale"},
    "output": {"directory", "stem", "format", "figure"},
    "toggles": {"oracle_check", "pt_compare", "pt3_omega_l_squared"},
    "raw": {"electric_rotation_rad_s", "electric_rotation_hz"},
}

FORMATS = ("csv", "json")
SCALES = ("linear", "log")
DEFAULT_POINTS = 400
DEFAULT_FORMAT = "csv"
DEFAULT_OUTPUT_DIR = "."

_ANGLE = re.compile(r"^(?:(?P<factor>[0-9.]+(?:[eE][+-]?[0-9]+)?)\s*\*\s*)?pi(?:\s*/\s*(?P<divisor>[0-9.]+(?:[eE][+-]?[0-9]+)?))?$")


@dataclass(frozen=True)
class RunConfig:
    params: MoleculeParams
    fields: FieldProtocol
    omega_min: float  # rad/s
    omega_max: float  # rad/s
    points: int
    scale: str
    stem: str
    directory: Optional[str] = None
    format: Optional[str] = None
    figure: bool = False
    oracle_check: bool = False
    pt_compare: bool = False
    pt3_omega_l_squared: bool = False

    def grid(self) -> np.ndarray:
        """Rotation rates of the sweep, ascending."""
        if self.scale == "log":
            return np.geomspace(self.omega_min, self.omega_max, self.points)
        return np.linspace(self.omega_min, self.omega_max, self.points)


@dataclass(frozen=True)
class Runtime:
    """Where and how a command writes, after precedence is applied."""

    directory: Path
    format: str
    threads: int
    figure: bool


def parse_angle(text: str, key: str = "angle") -> float:
    """Read '0.3927', 'pi', 'pi/8' or '3*pi/8' as radians."""
    value = text.strip().lower()
    match = _ANGLE.match(value)
    if match:
        factor = float(match.group("factor") or 1.0)
        divisor = float(match.group("divisor") or 1.0)
        if divisor == 0.0:
            raise ConfigError(f"{key}: division by zero in {text!r}", key)
        return factor * math.pi / divisor
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as an angle", key) from None


def _float(section: configparser.SectionProxy, key: str, default: Optional[float] = None) -> Optional[float]:
    if key not in section:
        return default
    try:
        return float(section[key])
    except ValueError:
        raise ConfigError(f"{section.name}.{key}: {section[key]!r} is not a number", key) from None


def _bool(section: configparser.SectionProxy, key: str, default: bool = False) -> bool:
    if key not in section:
        return default
    try:
        return section.getboolean(key)
    except ValueError:
        raise ConfigError(f"{section.name}.{key}: {section[key]!r} is not a boolean", key) from None


def _rate(section: configparser.SectionProxy, base: str, required: bool) -> Optional[float]:
    """Read base_rad_s or base_hz (times 2 pi); exactly one may be given."""
    given = [key for key in (f"{base}_rad_s", f"{base}_hz") if key in section]
    if len(given) > 1:
        raise ConfigError(f"{section.name}: give only one of {base}_rad_s and {base}_hz", given[1])
    if not given:
        if required:
            raise ConfigError(f"{section.name}: missing {base}_rad_s or {base}_hz", f"{base}_rad_s")
        return None
    value = _float(section, given[0])
    return value if given[0].endswith("_rad_s") else 2.0 * math.pi * value


def _check_keys(parser: configparser.ConfigParser) -> None:
    for name in parser.sections():
        if name not in ALLOWED_KEYS:
            raise ConfigError(f"unknown section [{name}]", name)
        for key in parser[name]:
            if key not in ALLOWED_KEYS[name]:
                raise ConfigError(f"unknown key {name}.{key}", key)


def _molecule(section: configparser.SectionProxy) -> MoleculeParams:
    given = [key for key in ("delta_ghz", "delta_hz", "delta_rad_s") if key in section]
    if len(given) > 1:
        raise ConfigError("molecule: give only one of delta_ghz, delta_hz, delta_rad_s", given[1])
    overrides = {
        "mu_e_debye": _float(section, "mu_e_debye", 1.667),
        "mu_b": _float(section, "mu_b_j_per_t"),
        "hbar": _float(section, "hbar_j_s"),
    }
    try:
        if not given or given[0] == "delta_ghz":
            return MoleculeParams.oh_ground_state(
                delta_ghz=_float(section, "delta_ghz", 1.66),
                delta_is_angular=_bool(section, "delta_is_angular"),
                **overrides,
            )
        delta = _float(section, given[0])
        if given[0] == "delta_hz":
            delta *= 1e-9
            return MoleculeParams.oh_ground_state(delta_ghz=delta, **overrides)
        return MoleculeParams.oh_ground_state(delta_ghz=delta * 1e-9, delta_is_angular=True, **overrides)
    except ValueError as exc:
        raise ConfigError(f"molecule: {exc}") from exc


def _fields(section: configparser.SectionProxy, raw: configparser.SectionProxy) -> FieldProtocol:
    angles = {}
    for key in ("theta_m", "theta_e"):
        angles[key] = parse_angle(section[key], key) if key in section else 0.0
    try:
        return FieldProtocol(
            b_mag=_float(section, "b_tesla", 0.0),
            theta_m=angles["theta_m"],
            e_mag=_float(section, "e_kv_per_cm", 0.0) * 1e5,
            theta_e=angles["theta_e"],
            electric_rotation=_rate(raw, "electric_rotation", required=False),
        )
    except ValueError as exc:
        raise ConfigError(f"fields: {exc}") from exc


def parse_config(text: str, stem: str = "run") -> RunConfig:
    """
    Build a RunConfig from INI text.

    Args:
        text: INI content
        stem: Output stem used when [output] has none

    Raises:
        ConfigError: unknown section or key, missing sweep bounds, bad value
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    _check_keys(parser)

    for name in ALLOWED_KEYS:
        if not parser.has_section(name):
            parser.add_section(name)
    sweep, output, toggles = parser["sweep"], parser["output"], parser["toggles"]

    omega_min = _rate(sweep, "omega_r_min", required=True)
    omega_max = _rate(sweep, "omega_r_max", required=True)
    if not omega_min < omega_max:
        raise ConfigError(f"sweep: omega_r_min {omega_min} must be below omega_r_max {omega_max}", "omega_r_min_rad_s")
    if omega_min < 0:
        raise ConfigError("sweep: omega_r_min must be non-negative", "omega_r_min_rad_s")

    try:
        points = sweep.getint("points", DEFAULT_POINTS)
    except ValueError:
        raise ConfigError(f"sweep.points: {sweep['points']!r} is not an integer", "points") from None
    if points < 2:
        raise ConfigError(f"sweep.points must be at least 2, got {points}", "points")

    scale = sweep.get("scale", "linear").strip().lower()
    if scale not in SCALES:
        raise ConfigError(f"sweep.scale must be one of {SCALES}, got {scale!r}", "scale")
    if scale == "log" and omega_min <= 0:
        raise ConfigError("sweep.scale = log needs omega_r_min > 0", "scale")

    fmt = output.get("format")
    if fmt is not None:
        fmt = fmt.strip().lower()
        if fmt not in FORMATS:
            raise ConfigError(f"output.format must be one of {FORMATS}, got {fmt!r}", "format")

    return RunConfig(
        params=_molecule(parser["molecule"]),
        fields=_fields(parser["fields"], parser["raw"]),
        omega_min=omega_min,
        omega_max=omega_max,
        points=points,
        scale=scale,
        stem=output.get("stem", stem).strip(),
        directory=output.get("directory"),
        format=fmt,
        figure=_bool(output, "figure"),
        oracle_check=_bool(toggles, "oracle_check"),
        pt_compare=_bool(toggles, "pt_compare"),
        pt3_omega_l_squared=_bool(toggles, "pt3_omega_l_squared"),
    )


def load_config(path: str) -> RunConfig:
    """Read a config file; the output stem defaults to the file stem."""
    location = Path(path)
    try:
        text = location.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    config = parse_config(text, stem=location.stem)
    logger.debug("loaded %s: %d points on [%.6e, %.6e] rad/s", path, config.points, config.omega_min, config.omega_max)
    return config


def resolve_runtime(
    config: RunConfig,
    output_dir: Optional[str] = None,
    fmt: Optional[str] = None,
    threads: Optional[int] = None,
    figure: Optional[bool] = None,
    environment: Optional[Dict[str, str]] = None,
) -> Runtime:
    """Apply CLI > config > environment > default to the output settings."""
    env = runtime_defaults() if environment is None else environment

    directory = output_dir or config.directory or env.get("OUTPUT_DIR") or DEFAULT_OUTPUT_DIR
    chosen = (fmt or config.format or env.get("FORMAT") or DEFAULT_FORMAT).lower()
    if chosen not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got {chosen!r}", "format")

    if threads is None:
        try:
            threads = int(env.get("THREADS", 1))
        except ValueError:
            raise ConfigError(f"OHPHASE_THREADS={env['THREADS']!r} is not an integer", "THREADS") from None
    if threads < 1:
        raise ConfigError(f"threads must be at least 1, got {threads}", "threads")

    return Runtime(
        directory=Path(directory),
        format=chosen,
        threads=threads,
        figure=config.figure if figure is None else figure,
    )
