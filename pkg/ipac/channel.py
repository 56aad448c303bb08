"""Large-scale attenuation chain and Rician flat fading over a planar array."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.random import Generator
from numpy.typing import NDArray

from ipac.errors import BelowHorizonError
from ipac.geometry import SPEED_OF_LIGHT, LosGeometry

logger = logging.getLogger(__name__)

IONOSPHERIC_SCINTILLATION_LIMIT_HZ = 6e9
ATMOSPHERIC_NEGLIGIBLE_BELOW_HZ = 10e9
ATMOSPHERIC_LOW_ELEVATION_DEG = 10.0

# Representative NLoS clutter profile, overridable per scenario
DEFAULT_CLUTTER_ELEVATIONS_DEG = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0)
DEFAULT_CLUTTER_DB = (34.3, 30.9, 29.0, 27.7, 26.8, 26.2, 25.8, 25.5, 25.5)


@dataclass(frozen=True)
class ArrayGeometry:
    n_rows: int
    n_cols: int
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if int(self.n_rows) < 1 or int(self.n_cols) < 1:
            raise ValueError(f"array needs at least one element, got {self.n_rows}x{self.n_cols}")
        if not self.spacing_wavelengths > 0.0:
            raise ValueError(f"element spacing must be positive, got {self.spacing_wavelengths}")

    @classmethod
    def square(cls, n: int, spacing_wavelengths: float = 0.5) -> "ArrayGeometry":
        return cls(n, n, spacing_wavelengths)

    @property
    def n_elements(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def per_dimension(self) -> int:
        return min(self.n_rows, self.n_cols)


@dataclass(frozen=True)
class AttenuationConfig:
    """Switches and parameters of the additive dB terms beyond free-space loss.

    Everything defaults to off, which is the rural LoS outdoor snapshot of the
    case studies.
    """
    shadow_sigma_db: float = 0.0
    line_of_sight: bool = True
    clutter_elevations_deg: tuple[float, ...] = DEFAULT_CLUTTER_ELEVATIONS_DEG
    clutter_db: tuple[float, ...] = DEFAULT_CLUTTER_DB
    atmospheric_enabled: bool = False
    atmospheric_zenith_db: float = 0.0
    ionospheric_scintillation_db: float = 0.0
    tropospheric_scintillation_db: float = 0.0
    penetration_db: float = 0.0

    def __post_init__(self):
        if self.shadow_sigma_db < 0.0:
            raise ValueError("shadow_sigma_db must be >= 0")
        if len(self.clutter_elevations_deg) != len(self.clutter_db) or not self.clutter_db:
            raise ValueError("clutter profile needs matching, non-empty elevation and loss lists")
        if list(self.clutter_elevations_deg) != sorted(self.clutter_elevations_deg):
            raise ValueError("clutter elevations must be increasing")
        for name in ("atmospheric_zenith_db", "ionospheric_scintillation_db",
                     "tropospheric_scintillation_db", "penetration_db"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if min(self.clutter_db) < 0.0:
            raise ValueError("clutter losses must be >= 0")


@dataclass(frozen=True)
class LinkBudget:
    fspl_db: float
    shadow_db: float
    clutter_db: float
    atmospheric_db: float
    scintillation_db: float
    penetration_db: float

    TERMS = ("fspl_db", "shadow_db", "clutter_db", "atmospheric_db", "scintillation_db", "penetration_db")

    @property
    def total_db(self) -> float:
        return (self.fspl_db + self.shadow_db + self.clutter_db + self.atmospheric_db
                + self.scintillation_db + self.penetration_db)

    @property
    def amplitude(self) -> float:
        # 0 dBi element gains at both ends
        return 10.0 ** (-self.total_db / 20.0)

    def terms(self) -> list[tuple[str, float]]:
        return [(name, getattr(self, name)) for name in self.TERMS] + [("total_db", self.total_db)]


def free_space_loss_db(range_m: float, carrier_hz: float) -> float:
    return 20.0 * math.log10(4.0 * math.pi * range_m * carrier_hz / SPEED_OF_LIGHT)


def large_scale_loss(range_m: float, elevation_rad: float, carrier_hz: float,
                     env: AttenuationConfig, rng: Generator | None = None) -> LinkBudget:
    """Attenuation chain of the satellite-terrestrial link.

    Without ``rng`` the shadowing term is its median, 0 dB.
    """
    if range_m <= 0.0 or carrier_hz <= 0.0:
        raise ValueError(f"range and carrier must be positive, got {range_m}, {carrier_hz}")
    elevation_deg = math.degrees(elevation_rad)

    shadow = 0.0
    if env.shadow_sigma_db > 0.0 and rng is not None:
        shadow = float(rng.normal(0.0, env.shadow_sigma_db))

    clutter = 0.0
    if not env.line_of_sight:
        clutter = float(np.interp(elevation_deg, env.clutter_elevations_deg, env.clutter_db))

    atmospheric = 0.0
    if env.atmospheric_enabled:
        if elevation_rad <= 0.0:
            raise BelowHorizonError(f"atmospheric loss undefined at elevation {elevation_deg:.2f} deg")
        negligible = (carrier_hz < ATMOSPHERIC_NEGLIGIBLE_BELOW_HZ
                      and elevation_deg >= ATMOSPHERIC_LOW_ELEVATION_DEG)
        if not negligible:
            atmospheric = env.atmospheric_zenith_db / math.sin(elevation_rad)

    if carrier_hz < IONOSPHERIC_SCINTILLATION_LIMIT_HZ:
        scintillation = env.ionospheric_scintillation_db
    else:
        scintillation = env.tropospheric_scintillation_db

    return LinkBudget(
        fspl_db=free_space_loss_db(range_m, carrier_hz),
        shadow_db=shadow,
        clutter_db=clutter,
        atmospheric_db=atmospheric,
        scintillation_db=scintillation,
        penetration_db=env.penetration_db,
    )


def steering_vector(array: ArrayGeometry, az: float, el: float) -> NDArray[np.complex128]:
    """Planar-array response toward (azimuth, angle off boresight).

    Column index runs along the antenna x axis and row index along y; the
    result is flattened row-major.
    """
    if not (math.isfinite(az) and math.isfinite(el)):
        raise ValueError(f"non-finite steering angles ({az}, {el})")
    rows, cols = np.meshgrid(np.arange(array.n_rows), np.arange(array.n_cols), indexing='ij')
    sin_el = math.sin(el)
    phase = 2.0 * math.pi * array.spacing_wavelengths * (
        cols * (sin_el * math.cos(az)) + rows * (sin_el * math.sin(az))
    )
    return np.exp(1j * phase).ravel()


def _rician_weights(k_linear: float) -> tuple[float, float]:
    if math.isinf(k_linear):
        return 1.0, 0.0
    return math.sqrt(k_linear / (k_linear + 1.0)), math.sqrt(1.0 / (k_linear + 1.0))


def _complex_normal(size: int, rng: Generator) -> NDArray[np.complex128]:
    # Unit variance per entry
    draws = rng.standard_normal((2, size))
    return (draws[0] + 1j * draws[1]) / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    los_part: NDArray[np.complex128]
    nlos_part: NDArray[np.complex128]
    rician_k: float
    amplitude: float

    def __post_init__(self):
        if self.rician_k < 0.0:
            raise ValueError(f"Rician factor must be >= 0, got {self.rician_k}")
        if not self.amplitude > 0.0:
            raise ValueError(f"channel amplitude must be > 0, got {self.amplitude}")
        if self.los_part.shape != self.nlos_part.shape:
            raise ValueError("LoS and NLoS parts differ in length")
        if not np.allclose(np.abs(self.los_part), 1.0, rtol=0.0, atol=1e-9):
            raise ValueError("LoS part must have unit-modulus entries")

    @property
    def n_elements(self) -> int:
        return self.los_part.size

    @property
    def gains(self) -> NDArray[np.complex128]:
        los_w, nlos_w = _rician_weights(self.rician_k)
        return self.amplitude * (los_w * self.los_part + nlos_w * self.nlos_part)


def draw_rician_channel(geom: LosGeometry, array: ArrayGeometry, k_linear: float,
                        amplitude: float, rng: Generator) -> ChannelRealization:
    los = steering_vector(array, geom.aod_azimuth, geom.aod_elevation)
    return ChannelRealization(
        los_part=los,
        nlos_part=_complex_normal(array.n_elements, rng),
        rician_k=k_linear,
        amplitude=amplitude,
    )


def age_channel(ch: ChannelRealization, rng: Generator) -> ChannelRealization:
    """Same LoS component, freshly drawn NLoS component."""
    return replace(ch, nlos_part=_complex_normal(ch.n_elements, rng))


def perturb_channel_estimate(ch: ChannelRealization, err_ratio: float, rng: Generator) -> NDArray[np.complex128]:
    """Add circular Gaussian error whose total variance is ``err_ratio`` times the channel power."""
    if err_ratio < 0.0:
        raise ValueError(f"estimation error ratio must be >= 0, got {err_ratio}")
    gains = ch.gains
    per_entry_var = err_ratio * float(np.vdot(gains, gains).real) / gains.size
    return gains + math.sqrt(per_entry_var) * _complex_normal(gains.size, rng)


def watts_from_dbm(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def noise_power_dbm(noise_psd_dbm_hz: float, bandwidth_hz: float) -> float:
    """Thermal noise power over the occupied bandwidth."""
    if bandwidth_hz <= 0.0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth_hz}")
    return noise_psd_dbm_hz + 10.0 * math.log10(bandwidth_hz)


@dataclass(frozen=True)
class RfConfig:
    carrier_hz: float
    bandwidth_hz: float
    tx_power_dbm: float
    noise_psd_dbm_hz: float
    coherent_time_s: float = 1e-3
    xcorr: float = 0.5
    attenuation: AttenuationConfig = AttenuationConfig()

    @property
    def tx_power_w(self) -> float:
        return watts_from_dbm(self.tx_power_dbm)

    @property
    def noise_w(self) -> float:
        return watts_from_dbm(noise_power_dbm(self.noise_psd_dbm_hz, self.bandwidth_hz))

    @property
    def processing_gain(self) -> float:
        # Pilot energy collected over the coherent processing window
        return self.bandwidth_hz * self.coherent_time_s
