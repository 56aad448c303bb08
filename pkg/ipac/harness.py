"""Scenario configuration, default constellation and the experiment runner.

A scenario file is flat ``key = value`` text, one key per line, ``#`` starts a
comment. Keys are exactly the ``Scenario`` field names; tuple fields are comma
separated.
"""
from __future__ import annotations

import dataclasses
import hashlib
import importlib
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from ipac import __version__
from ipac.channel import ArrayGeometry, AttenuationConfig, RfConfig
from ipac.errors import ConfigurationError, OutputError
from ipac.fim import TxMode
from ipac.geometry import (
    EARTH_RADIUS,
    LEO_MAX_ALTITUDE,
    LEO_MIN_ALTITUDE,
    SatelliteState,
    as_ecef,
    circular_speed,
)

logger = logging.getLogger(__name__)

# Geodetic (0 N, 0 E, 0 m) on the spherical Earth
REFERENCE_UE = (EARTH_RADIUS, 0.0, 0.0)
RING_ELEVATION = math.radians(45.0)

# Experiment name -> module under experiments/
EXPERIMENTS = {
    "se-sweep": "se_sweep",
    "crb-sweep": "crb_sweep",
    "rmse-sweep": "rmse_sweep",
    "link-budget": "link_budget",
    "doppler": "doppler",
    "pass-profile": "pass_profile",
}


def _default_delay_grid_ns() -> tuple[float, ...]:
    # 1 m to 1 km of range accuracy, seven points
    return tuple(float(x) for x in np.logspace(0.0, 3.0, 7) * 10.0 / 3.0)


@dataclass(frozen=True)
class Scenario:
    # Link
    carrier_hz: float = 28e9
    bandwidth_hz: float = 240e6
    tx_power_dbm: float = 60.0
    noise_psd_dbm_hz: float = -174.0
    altitude_m: float = 400e3
    rician_k_linear: float = 3.0
    array_n: int = 20
    spacing_wavelengths: float = 0.5
    n_satellites: int = 4
    tx_mode: TxMode = TxMode.COOPERATIVE
    xcorr: float = 0.5
    coherent_time_s: float = 1e-3
    single_antenna: bool = False

    # Attenuation terms beyond free space
    shadow_sigma_db: float = 0.0
    line_of_sight: bool = True
    atmospheric_enabled: bool = False
    atmospheric_zenith_db: float = 0.0
    ionospheric_scintillation_db: float = 0.0
    tropospheric_scintillation_db: float = 0.0
    penetration_db: float = 0.0

    # Sweep grids
    csi_error_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    pos_sigma_grid_m: tuple[float, ...] = (1e2, 1e3, 1e4, 1e5)
    crb_n_grid: tuple[int, ...] = (2, 4, 8, 16, 32)
    crb_s_values: tuple[int, ...] = (4, 5, 6)
    delay_sigma_grid_ns: tuple[float, ...] = field(default_factory=_default_delay_grid_ns)
    mismatch_levels_m: tuple[float, ...] = (0.0, 5e3, 10e3)
    doppler_altitudes_m: tuple[float, ...] = (400e3, 600e3, 800e3, 1200e3, 2000e3)
    doppler_carriers_hz: tuple[float, ...] = (2e9, 28e9, 30e9)
    pass_duration_s: float = 300.0
    pass_step_s: float = 1.0

    # Monte Carlo and solver
    se_trials: int = 10_000
    rmse_trials: int = 500
    seed: int = 2024
    workers: int = 1
    ml_grid_points: int = 5
    ml_grid_span_m: float = 200e3
    prior_sigma_m: float = 10e3

    def __post_init__(self):
        try:
            object.__setattr__(self, "tx_mode", TxMode(self.tx_mode))
        except ValueError:
            raise ConfigurationError(
                f"tx_mode: expected one of {[m.value for m in TxMode]}, got {self.tx_mode!r}"
            ) from None
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and not math.isfinite(value):
                raise ConfigurationError(f"{f.name}: must be finite, got {value}")
        positive = ("carrier_hz", "bandwidth_hz", "spacing_wavelengths", "coherent_time_s",
                    "pass_duration_s", "pass_step_s", "ml_grid_span_m")
        for name in positive:
            if not getattr(self, name) > 0.0:
                raise ConfigurationError(f"{name}: must be > 0, got {getattr(self, name)}")
        at_least_one = ("array_n", "n_satellites", "se_trials", "rmse_trials", "workers", "ml_grid_points")
        for name in at_least_one:
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name}: must be >= 1, got {getattr(self, name)}")
        non_negative = ("rician_k_linear", "shadow_sigma_db", "atmospheric_zenith_db",
                        "ionospheric_scintillation_db", "tropospheric_scintillation_db",
                        "penetration_db", "seed", "prior_sigma_m")
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name}: must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.xcorr <= 1.0:
            raise ConfigurationError(f"xcorr: must lie in [0, 1], got {self.xcorr}")
        if not LEO_MIN_ALTITUDE <= self.altitude_m <= LEO_MAX_ALTITUDE:
            raise ConfigurationError(
                f"altitude_m: must lie in [{LEO_MIN_ALTITUDE:.0f}, {LEO_MAX_ALTITUDE:.0f}], got {self.altitude_m}"
            )
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                if not value:
                    raise ConfigurationError(f"{f.name}: grid must not be empty")
                if any(not math.isfinite(v) or v < 0 for v in value):
                    raise ConfigurationError(f"{f.name}: grid values must be finite and >= 0")
        for name in ("crb_n_grid", "crb_s_values", "doppler_altitudes_m", "doppler_carriers_hz",
                     "delay_sigma_grid_ns"):
            if min(getattr(self, name)) <= 0:
                raise ConfigurationError(f"{name}: grid values must be > 0")

    def array(self) -> ArrayGeometry:
        return ArrayGeometry.square(self.array_n, self.spacing_wavelengths)

    def attenuation(self) -> AttenuationConfig:
        return AttenuationConfig(
            shadow_sigma_db=self.shadow_sigma_db,
            line_of_sight=self.line_of_sight,
            atmospheric_enabled=self.atmospheric_enabled,
            atmospheric_zenith_db=self.atmospheric_zenith_db,
            ionospheric_scintillation_db=self.ionospheric_scintillation_db,
            tropospheric_scintillation_db=self.tropospheric_scintillation_db,
            penetration_db=self.penetration_db,
        )

    def rf(self) -> RfConfig:
        return RfConfig(
            carrier_hz=self.carrier_hz,
            bandwidth_hz=self.bandwidth_hz,
            tx_power_dbm=self.tx_power_dbm,
            noise_psd_dbm_hz=self.noise_psd_dbm_hz,
            coherent_time_s=self.coherent_time_s,
            xcorr=self.xcorr,
            attenuation=self.attenuation(),
        )

    def reference_ue(self):
        return as_ecef(REFERENCE_UE)

    def satellites(self, s: int | None = None) -> list[SatelliteState]:
        layout = default_layout(self.n_satellites if s is None else s, self.altitude_m)
        return layout.satellite_states(self.reference_ue())

    def to_text(self) -> str:
        return "".join(f"{name} = {value}\n" for name, value in _serialize(self))

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _format_value(value) -> str:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def _serialize(scenario: Scenario) -> list[tuple[str, str]]:
    return [(f.name, _format_value(getattr(scenario, f.name))) for f in dataclasses.fields(scenario)]


_TRUE = {"true", "yes", "1"}
_FALSE = {"false", "no", "0"}


def _parse_scalar(text: str, kind: type, key: str):
    if kind is bool:
        lowered = text.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigurationError(f"{key}: expected a boolean, got {text!r}")
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigurationError(f"{key}: expected {kind.__name__}, got {text!r}") from None
    return text


def _parse_value(key: str, text: str):
    default = getattr(_DEFAULTS, key)
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        items = [item.strip() for item in text.split(",") if item.strip()]
        return tuple(_parse_scalar(item, kind, key) for item in items)
    if isinstance(default, Enum):
        return text
    return _parse_scalar(text, type(default), key)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario file {path}: {exc}") from exc

    known = {f.name for f in dataclasses.fields(Scenario)}
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if not sep or not key or not text:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in known:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, text)

    scenario = Scenario(**values)
    logger.debug("loaded scenario %s (%d keys set, sha256 %s)", path, len(values), scenario.digest()[:12])
    return scenario


def save_scenario(scenario: Scenario, path) -> Path:
    path = Path(path)
    try:
        path.write_text(scenario.to_text(), encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write scenario file {path}: {exc}") from exc
    return path


@dataclass(frozen=True)
class ConstellationLayout:
    """Satellite directions as seen from the UE, on a common altitude."""
    elevations: tuple[float, ...]
    azimuths: tuple[float, ...]
    altitude_m: float

    def __post_init__(self):
        if len(self.elevations) != len(self.azimuths) or not self.elevations:
            raise ValueError("layout needs one elevation and one azimuth per satellite")
        if any(not 0.0 < e <= math.pi / 2 for e in self.elevations):
            raise ValueError("layout elevations must lie in (0, pi/2]")
        # The zenith direction has no azimuth of its own
        off_zenith = [round(a % (2 * math.pi), 12)
                      for e, a in zip(self.elevations, self.azimuths) if e < math.pi / 2]
        if len(set(off_zenith)) != len(off_zenith):
            raise ValueError("layout satellites must sit at distinct azimuths")

    def __len__(self):
        return len(self.elevations)

    def satellite_states(self, ue) -> list[SatelliteState]:
        ue = as_ecef(ue)
        up = ue / np.linalg.norm(ue)
        east = np.cross([0.0, 0.0, 1.0], up)
        if np.linalg.norm(east) < 1e-12:
            east = np.array([0.0, 1.0, 0.0])
        east = east / np.linalg.norm(east)
        north = np.cross(up, east)

        ue_radius = float(np.linalg.norm(ue))
        orbit_radius = EARTH_RADIUS + self.altitude_m
        speed = circular_speed(orbit_radius)
        states = []
        for idx, (elev, az) in enumerate(zip(self.elevations, self.azimuths)):
            direction = math.cos(elev) * (math.sin(az) * east + math.cos(az) * north) + math.sin(elev) * up
            # Slant range to the orbit shell along that direction
            proj = ue_radius * math.sin(elev)
            slant = -proj + math.sqrt(proj**2 + orbit_radius**2 - ue_radius**2)
            heading = math.cos(az) * east - math.sin(az) * north
            states.append(SatelliteState(idx, ue + slant * direction, speed * heading))
        return states


def default_layout(s: int, altitude_m: float) -> ConstellationLayout:
    """One zenith satellite plus ``s - 1`` equally spaced at 45 degrees elevation."""
    if s < 1:
        raise ConfigurationError(f"layout needs at least one satellite, got {s}")
    ring = s - 1
    elevations = (math.pi / 2,) + (RING_ELEVATION,) * ring
    azimuths = (0.0,) + tuple(2.0 * math.pi * k / ring for k in range(ring))
    return ConstellationLayout(elevations, azimuths, altitude_m)


def _write_outputs(name: str, frame: pd.DataFrame, scenario: Scenario, out_dir: Path) -> list[Path]:
    csv_path = out_dir / f"{name}.csv"
    meta_path = out_dir / f"{name}.meta"
    meta = {
        "experiment": name,
        "scenario_sha256": scenario.digest(),
        "seed": scenario.seed,
        "version": __version__,
    }
    for path, write in (
        (csv_path, lambda p: frame.to_csv(p, index=False, float_format="%.12g", lineterminator="\n")),
        (meta_path, lambda p: p.write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")),
    ):
        try:
            write(path)
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc}") from exc
        logger.info("wrote %s", path)
    return [csv_path, meta_path]


def run_experiment(name: str, scenario: Scenario, out_dir) -> list[Path]:
    """Run one named experiment and write ``<name>.csv`` plus its ``<name>.meta`` sidecar."""
    if name not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out_dir}: {exc}") from exc

    module = importlib.import_module(f"experiments.{EXPERIMENTS[name]}")
    logger.info("running %s (scenario %s, seed %d, %d worker(s))",
                name, scenario.digest()[:12], scenario.seed, scenario.workers)
    frame = module.run(scenario)
    return _write_outputs(name, frame, scenario, out_dir)


_DEFAULTS = Scenario()
