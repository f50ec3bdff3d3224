"""Episode/campaign configuration with INI-file round-tripping.

Every default is overridable from a key/value config file; the effective
configuration is echoed back out next to the reports so a run is fully
reproducible from its output directory.
"""

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SensorNoise, VehicleRanges
from .excitation import ExcitationSchedule


@dataclass
class DetectorConfig:
    """Free-fall release detector thresholds."""

    accel_threshold: float = 2.0   # m/s^2
    hold_time: float = 0.05        # s of continuous low ||f||


@dataclass
class EstimatorConfig:
    """External positioning and estimator initialization."""

    fix_rms: float = 0.005         # m, optical-tracking grade
    fix_rate: float = 100.0        # Hz
    init_att_err_deg: float = 5.0  # attitude estimate error at release
    init_vel_err: float = 0.2      # m/s


@dataclass
class SuccessCriteria:
    """What counts as a recovered episode."""

    attitude_deg: float = 25.0
    rate_max: float = 1.0          # rad/s
    position_tol: float = 0.3      # m
    speed_tol: float = 0.5         # m/s
    time_limit: float = 5.0        # s after switchover


@dataclass
class EpisodeConfig:
    """Everything one simulated throw needs; defaults follow the protocol
    of a 4 m parabolic throw with excitation 450 ms after release."""

    seed: int = 1
    throw_height: float = 4.0            # m
    omega0_max: float = 10.0             # rad/s
    delay_after_release: float = 0.450   # s, measured from detection
    setpoint: tuple = (0.0, 0.0, -1.5)   # inertial, z-down: 1.5 m above origin
    ground_below_release: float = 2.0    # m
    sample_rate: float = 2000.0          # Hz
    cutoff_ctl: float = 15.0             # Hz
    cutoff_ident: float = 20.0           # Hz
    rate_ref_limit: float = 4.5          # rad/s, vector-norm clamp on the rate reference
    oracle_attitude: bool = False
    log_ticks: bool = True

    noise: SensorNoise = field(default_factory=SensorNoise)
    schedule: ExcitationSchedule = field(default_factory=ExcitationSchedule)
    ranges: VehicleRanges = field(default_factory=VehicleRanges)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    success: SuccessCriteria = field(default_factory=SuccessCriteria)

    @property
    def dt(self):
        return 1.0 / self.sample_rate

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)


_SECTIONS = {
    "episode": None,          # scalar fields of EpisodeConfig itself
    "noise": "noise",
    "excitation": "schedule",
    "vehicle_ranges": "ranges",
    "detector": "detector",
    "estimation": "estimator",
    "success": "success",
}


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list, np.ndarray)):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(raw, template):
    if isinstance(template, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(template, (tuple, list, np.ndarray)):
        return tuple(float(v) for v in raw.split(","))
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    return raw


def _scalar_fields(obj):
    return [f.name for f in dataclasses.fields(obj)
            if not dataclasses.is_dataclass(getattr(obj, f.name))]


def config_to_ini(cfg, path=None):
    """Write (or return as text) the full effective configuration."""
    parser = configparser.ConfigParser()
    for section, attr in _SECTIONS.items():
        obj = cfg if attr is None else getattr(cfg, attr)
        parser[section] = {name: _format_value(getattr(obj, name))
                           for name in _scalar_fields(obj)}
    buf = io.StringIO()
    parser.write(buf)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def config_from_ini(path, base=None):
    """Load a config file on top of defaults (or a given base config).

    Unknown sections or keys raise so typos do not silently fall back to
    defaults.
    """
    cfg = base if base is not None else EpisodeConfig()
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    for section in parser.sections():
        if section not in _SECTIONS:
            raise KeyError(f"unknown config section [{section}]")
        attr = _SECTIONS[section]
        obj = cfg if attr is None else getattr(cfg, attr)
        valid = set(_scalar_fields(obj))
        for key, raw in parser[section].items():
            if key not in valid:
                raise KeyError(f"unknown key '{key}' in section [{section}]")
            setattr(obj, key, _parse_value(raw, getattr(obj, key)))
    return cfg
