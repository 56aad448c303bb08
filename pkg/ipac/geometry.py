"""Orbital and line-of-sight geometry on a spherical Earth.

Positions and velocities are ECEF 3-vectors in metres and metres per second.
The satellite antenna frame has its boresight on nadir and its x axis along the
in-plane component of the velocity, so AoD angles are (azimuth from the
velocity direction, polar angle from boresight).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy.spatial.transform import Rotation

from ipac.errors import DegenerateGeometryError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
MU_EARTH = 3.986004418e14  # m^3/s^2
EARTH_RADIUS = 6_371_000.0  # m

LEO_MIN_ALTITUDE = 160e3
LEO_MAX_ALTITUDE = 2_000e3
UE_RADIUS_TOLERANCE = 500.0
CIRCULAR_SPEED_TOLERANCE = 0.05

EcefVector = NDArray[np.float64]


def as_ecef(value) -> EcefVector:
    """Copy ``value`` into a read-only float 3-vector."""
    vec = np.array(value, dtype=float).reshape(3)
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"ECEF vector has non-finite components: {vec}")
    vec.setflags(write=False)
    return vec


def check_ue_position(value) -> EcefVector:
    vec = as_ecef(value)
    radius = float(np.linalg.norm(vec))
    if radius < EARTH_RADIUS - UE_RADIUS_TOLERANCE:
        raise ValueError(f"UE position radius {radius:.1f} m is below the Earth surface")
    return vec


def circular_speed(radius_m: float) -> float:
    return math.sqrt(MU_EARTH / radius_m)


@dataclass(frozen=True, eq=False)
class SatelliteState:
    id: int
    position: EcefVector
    velocity: EcefVector

    def __post_init__(self):
        object.__setattr__(self, "position", as_ecef(self.position))
        object.__setattr__(self, "velocity", as_ecef(self.velocity))
        self.validate()

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.position))

    @property
    def altitude(self) -> float:
        return self.radius - EARTH_RADIUS

    def validate(self) -> "SatelliteState":
        # LEO band and near-circular speed
        if not LEO_MIN_ALTITUDE <= self.altitude <= LEO_MAX_ALTITUDE:
            raise ValueError(
                f"satellite {self.id}: altitude {self.altitude:.0f} m outside "
                f"[{LEO_MIN_ALTITUDE:.0f}, {LEO_MAX_ALTITUDE:.0f}] m"
            )
        speed = float(np.linalg.norm(self.velocity))
        nominal = circular_speed(self.radius)
        if abs(speed - nominal) > CIRCULAR_SPEED_TOLERANCE * nominal:
            raise ValueError(
                f"satellite {self.id}: speed {speed:.1f} m/s is not within "
                f"{CIRCULAR_SPEED_TOLERANCE:.0%} of circular speed {nominal:.1f} m/s"
            )
        return self


@dataclass(frozen=True)
class LosGeometry:
    range: float
    elevation: float
    delay: float
    doppler: float
    aod_azimuth: float
    aod_elevation: float


def line_of_sight(sat_position: EcefVector, ue: EcefVector) -> tuple[EcefVector, float]:
    """Unit vector from satellite to UE, and the range."""
    offset = np.asarray(ue, dtype=float) - sat_position
    range_m = float(np.linalg.norm(offset))
    if range_m == 0.0:
        raise DegenerateGeometryError("satellite and UE positions coincide")
    return offset / range_m, range_m


def array_frame(sat: SatelliteState) -> NDArray[np.float64]:
    """Rows are the antenna x axis, y axis and boresight (nadir) in ECEF."""
    boresight = -sat.position / sat.radius
    along = sat.velocity - np.dot(sat.velocity, boresight) * boresight
    along_norm = float(np.linalg.norm(along))
    if along_norm == 0.0:
        raise DegenerateGeometryError(f"satellite {sat.id}: velocity is parallel to nadir")
    x_axis = along / along_norm
    return np.vstack([x_axis, np.cross(boresight, x_axis), boresight])


def direction_angles(direction_in_frame: NDArray[np.float64]) -> tuple[float, float]:
    """(azimuth, polar angle from boresight) of a unit vector in the antenna frame."""
    x, y, z = direction_in_frame
    return math.atan2(y, x), math.atan2(math.hypot(x, y), z)


def los_geometry(sat: SatelliteState, ue, carrier_hz: float, validate_ue: bool = True) -> LosGeometry:
    """LoS quantities from ``sat`` to ``ue``.

    Pass ``validate_ue=False`` for trial positions such as a perturbed
    location guess, which may fall below the surface.
    """
    ue = check_ue_position(ue) if validate_ue else as_ecef(ue)
    u, range_m = line_of_sight(sat.position, ue)
    ue_radius = float(np.linalg.norm(ue))
    if ue_radius == 0.0:
        raise DegenerateGeometryError("UE sits at the Earth centre")

    # Elevation of the satellite above the UE's local horizon
    sin_elev = float(np.dot(-u, ue / ue_radius))
    elevation = math.asin(min(1.0, max(-1.0, sin_elev)))

    azimuth, polar = direction_angles(array_frame(sat) @ u)
    return LosGeometry(
        range=range_m,
        elevation=elevation,
        delay=range_m / SPEED_OF_LIGHT,
        doppler=-float(np.dot(sat.velocity, u)) / SPEED_OF_LIGHT * carrier_hz,
        aod_azimuth=azimuth,
        aod_elevation=polar,
    )


def _check_altitude(altitude_m: float):
    if not LEO_MIN_ALTITUDE <= altitude_m <= LEO_MAX_ALTITUDE:
        raise ValueError(
            f"altitude {altitude_m:.0f} m outside the LEO band "
            f"[{LEO_MIN_ALTITUDE:.0f}, {LEO_MAX_ALTITUDE:.0f}] m"
        )


def max_doppler_and_rate(altitude_m: float, carrier_hz: float) -> tuple[float, float]:
    """Worst-case Doppler (horizon) and Doppler rate (zenith pass) for a circular orbit."""
    _check_altitude(altitude_m)
    radius = EARTH_RADIUS + altitude_m
    speed = circular_speed(radius)
    max_doppler = speed / SPEED_OF_LIGHT * carrier_hz * (EARTH_RADIUS / radius)
    max_rate = speed**2 / (altitude_m * SPEED_OF_LIGHT) * carrier_hz
    return max_doppler, max_rate


def coherence_time(doppler_spread_hz: float) -> float:
    """Channel coherence time taken as the inverse of the Doppler spread."""
    if doppler_spread_hz <= 0.0:
        return math.inf
    return 1.0 / doppler_spread_hz


def timing_advance(sat: SatelliteState, ue) -> float:
    # Round trip, so uplink frames arrive inside one cyclic prefix
    _, range_m = line_of_sight(sat.position, check_ue_position(ue))
    return 2.0 * (range_m / SPEED_OF_LIGHT)


def propagate_circular_orbit(state: SatelliteState, dt: float) -> SatelliteState:
    """Rotate position and velocity about the orbit normal by the circular-orbit angle."""
    if dt == 0.0:
        return state
    normal = np.cross(state.position, state.velocity)
    normal_norm = float(np.linalg.norm(normal))
    if normal_norm == 0.0:
        raise DegenerateGeometryError(f"satellite {state.id}: radial velocity only, no orbit plane")
    omega = circular_speed(state.radius) / state.radius
    rotation = Rotation.from_rotvec(normal / normal_norm * (omega * dt))
    return SatelliteState(state.id, rotation.apply(state.position), rotation.apply(state.velocity))


def pass_profile(sat: SatelliteState, ue, carrier_hz: float, duration_s: float, step_s: float) -> pd.DataFrame:
    """Delay, Doppler and timing advance over a window centred on the given epoch."""
    if duration_s <= 0.0 or step_s <= 0.0:
        raise ValueError("pass duration and step must be positive")
    ue = as_ecef(ue)
    half = duration_s / 2.0
    times = np.arange(-half, half + step_s / 2.0, step_s)

    rows = []
    for t in times:
        state = propagate_circular_orbit(sat, float(t))
        geom = los_geometry(state, ue, carrier_hz)
        rows.append({
            't_s': float(t),
            'range_m': geom.range,
            'elevation_deg': math.degrees(geom.elevation),
            'delay_s': geom.delay,
            'doppler_hz': geom.doppler,
            'timing_advance_s': timing_advance(state, ue),
        })
    profile = pd.DataFrame(rows)

    # Central differences inside, one-sided at the ends
    if len(profile) > 1:
        profile.insert(5, 'doppler_rate_hz_s', np.gradient(profile['doppler_hz'].to_numpy(), times))
    else:
        profile.insert(5, 'doppler_rate_hz_s', 0.0)
    logger.debug("pass profile: %d epochs over %.1f s", len(profile), duration_s)
    return profile
