import math

import numpy as np
import pytest

from ipac.geometry import EARTH_RADIUS, SatelliteState, circular_speed


def random_satellite(rng, ue, sat_id=0, elevation_deg=(20.0, 80.0), altitude_m=(400e3, 1200e3)):
    """A LEO satellite visible from ``ue`` with a random in-orbit heading."""
    ue = np.asarray(ue, dtype=float)
    up = ue / np.linalg.norm(ue)
    east = np.cross([0.0, 0.0, 1.0], up)
    east /= np.linalg.norm(east)
    north = np.cross(up, east)

    elev = math.radians(rng.uniform(*elevation_deg))
    az = rng.uniform(0.0, 2.0 * math.pi)
    radius = EARTH_RADIUS + rng.uniform(*altitude_m)
    direction = math.cos(elev) * (math.sin(az) * east + math.cos(az) * north) + math.sin(elev) * up
    ue_radius = float(np.linalg.norm(ue))
    proj = ue_radius * math.sin(elev)
    position = ue + (-proj + math.sqrt(proj**2 + radius**2 - ue_radius**2)) * direction

    heading = rng.standard_normal(3)
    heading -= (heading @ position) / (position @ position) * position
    heading /= np.linalg.norm(heading)
    return SatelliteState(sat_id, position, circular_speed(radius) * heading)


@pytest.fixture
def make_satellites():
    def make(rng, ue, count):
        return [random_satellite(rng, ue, sat_id=i) for i in range(count)]
    return make
