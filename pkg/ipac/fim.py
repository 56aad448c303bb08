"""Fisher information and Cramér-Rao bound for UE positioning.

Each satellite contributes delay, Doppler and (with an antenna array) the two
AoD angles. Angle noise is isotropic on the sphere of directions, so the
azimuth variance applies to the arc ``sin(el) * az`` and the information stays
finite for a UE on boresight.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from numpy.typing import NDArray

from ipac.channel import ArrayGeometry, RfConfig, large_scale_loss
from ipac.errors import ConfigurationError, DegenerateGeometryError, UnlocalizableGeometryError
from ipac.geometry import SPEED_OF_LIGHT, LosGeometry, SatelliteState, array_frame, line_of_sight, los_geometry

if TYPE_CHECKING:
    from ipac.harness import Scenario

logger = logging.getLogger(__name__)

ANGLE_CONSTANT = 6.0 / math.pi**2
SINGULAR_RATIO = 1e-12

CRB_CONFIGS = ("SA-C", "MA-C", "MA-NC")


class TxMode(str, Enum):
    COOPERATIVE = "cooperative"
    NON_COOPERATIVE = "non-cooperative"


@dataclass(frozen=True)
class ObservationNoise:
    var_delay: float
    var_doppler: float
    var_az: float | None = None
    var_el: float | None = None

    def __post_init__(self):
        if (self.var_az is None) != (self.var_el is None):
            raise ValueError("angle variances must be both present or both absent")
        for name in ("var_delay", "var_doppler", "var_az", "var_el"):
            value = getattr(self, name)
            if value is not None and not value > 0.0:
                raise ValueError(f"{name} must be > 0, got {value}")

    @property
    def has_angles(self) -> bool:
        return self.var_az is not None

    def scaled(self, factor: float) -> "ObservationNoise":
        """Every variance multiplied by ``factor``."""
        return ObservationNoise(
            self.var_delay * factor,
            self.var_doppler * factor,
            None if self.var_az is None else self.var_az * factor,
            None if self.var_el is None else self.var_el * factor,
        )

    def variances(self) -> NDArray[np.float64]:
        """Diagonal of the covariance in row order delay, Doppler, azimuth arc, elevation."""
        if self.has_angles:
            return np.array([self.var_delay, self.var_doppler, self.var_az, self.var_el])
        return np.array([self.var_delay, self.var_doppler])


@dataclass(frozen=True, eq=False)
class Fim3:
    matrix: NDArray[np.float64]

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError(f"FIM must be a finite 3x3 matrix, got shape {m.shape}")
        scale = max(float(np.max(np.abs(m))), np.finfo(float).tiny)
        if np.max(np.abs(m - m.T)) > 1e-9 * scale:
            raise ValueError("FIM is not symmetric")
        m = 0.5 * (m + m.T)
        trace = float(np.trace(m))
        if float(np.linalg.eigvalsh(m)[0]) < -1e-9 * abs(trace):
            raise ValueError("FIM is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __add__(self, other: "Fim3") -> "Fim3":
        return Fim3(self.matrix + other.matrix)


def effective_sinr(s: int, received_powers: Sequence[float], noise_w: float, mode: TxMode, xcorr: float) -> float:
    if noise_w <= 0.0 or any(p <= 0.0 for p in received_powers):
        raise ValueError("received powers and noise power must be positive")
    desired = received_powers[s]
    if TxMode(mode) is TxMode.COOPERATIVE:
        return desired / noise_w
    interference = sum(p for idx, p in enumerate(received_powers) if idx != s)
    return desired / (noise_w + xcorr * interference)


def observation_noise(sinr: float, bandwidth_hz: float, coherent_time_s: float,
                      array: ArrayGeometry, single_antenna: bool) -> ObservationNoise:
    """Delay, Doppler and AoD variances of one link at the given SINR."""
    if not sinr > 0.0:
        raise ValueError(f"SINR must be positive, got {sinr}")
    rms_bandwidth = bandwidth_hz / math.sqrt(12.0)
    rms_duration = coherent_time_s / math.sqrt(12.0)
    var_delay = 1.0 / (8.0 * math.pi**2 * rms_bandwidth**2 * sinr)
    var_doppler = 1.0 / (8.0 * math.pi**2 * rms_duration**2 * sinr)
    if single_antenna:
        return ObservationNoise(var_delay, var_doppler)

    n_dim = array.per_dimension
    if n_dim < 2:
        raise ConfigurationError(f"angle observations need at least 2 elements per dimension, got {n_dim}")
    var_angle = ANGLE_CONSTANT / (sinr * array.n_elements * (n_dim**2 - 1))
    return ObservationNoise(var_delay, var_doppler, var_angle, var_angle)


def aod_bases(azimuth: float, polar: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Unit tangent vectors along increasing polar angle and increasing azimuth."""
    cos_p, sin_p = math.cos(polar), math.sin(polar)
    cos_a, sin_a = math.cos(azimuth), math.sin(azimuth)
    e_polar = np.array([cos_p * cos_a, cos_p * sin_a, -sin_p])
    e_azimuth = np.array([-sin_a, cos_a, 0.0])
    return e_polar, e_azimuth


def position_jacobian(geom: LosGeometry, sat: SatelliteState, ue, carrier_hz: float,
                      arc_azimuth: bool = False) -> NDArray[np.float64]:
    """Gradients of delay, Doppler, AoD azimuth and AoD polar angle w.r.t. the UE position.

    With ``arc_azimuth`` the third row is ``sin(el) * grad(az)``, which stays
    finite on boresight.
    """
    u, range_m = line_of_sight(sat.position, ue)
    projector = np.eye(3) - np.outer(u, u)
    delay_row = u / SPEED_OF_LIGHT
    doppler_row = -carrier_hz / SPEED_OF_LIGHT * (projector @ sat.velocity) / range_m

    frame = array_frame(sat)
    e_polar, e_azimuth = aod_bases(geom.aod_azimuth, geom.aod_elevation)
    polar_row = frame.T @ e_polar / range_m
    arc_row = frame.T @ e_azimuth / range_m
    if not arc_azimuth:
        sin_p = math.sin(geom.aod_elevation)
        if abs(sin_p) < 1e-12:
            raise DegenerateGeometryError(f"satellite {sat.id}: azimuth undefined with the UE on boresight")
        arc_row = arc_row / sin_p
    return np.vstack([delay_row, doppler_row, arc_row, polar_row])


def observation_fim(sats: Sequence[SatelliteState], ue, noises: Sequence[ObservationNoise],
                    carrier_hz: float, use_angles: bool = True) -> Fim3:
    """Sum of per-satellite J^T diag(1/var) J."""
    if len(sats) != len(noises):
        raise ValueError(f"{len(sats)} satellites but {len(noises)} noise records")
    total = np.zeros((3, 3))
    for sat, noise in zip(sats, noises):
        # Rows: delay, Doppler, azimuth arc, polar angle
        geom = los_geometry(sat, ue, carrier_hz)
        jac = position_jacobian(geom, sat, ue, carrier_hz, arc_azimuth=True)
        # Single antennas see delay and Doppler only
        if use_angles and noise.has_angles:
            weights = 1.0 / noise.variances()
        else:
            jac = jac[:2]
            weights = 1.0 / noise.variances()[:2]
        total += jac.T @ (weights[:, None] * jac)
    return Fim3(total)


def received_powers(sats: Sequence[SatelliteState], ue, array: ArrayGeometry,
                    single_antenna: bool, rf: RfConfig) -> list[float]:
    """Median received pilot power per satellite, with array and processing gain, in watts."""
    array_gain = 1.0 if single_antenna else float(array.n_elements)
    powers = []
    for sat in sats:
        geom = los_geometry(sat, ue, rf.carrier_hz)
        # Median loss, no shadowing draw
        budget = large_scale_loss(geom.range, geom.elevation, rf.carrier_hz, rf.attenuation)
        powers.append(rf.tx_power_w * array_gain * 10.0 ** (-budget.total_db / 10.0) * rf.processing_gain)
    return powers


def link_noises(sats: Sequence[SatelliteState], ue, mode: TxMode, array: ArrayGeometry,
                single_antenna: bool, rf: RfConfig) -> list[ObservationNoise]:
    powers = received_powers(sats, ue, array, single_antenna, rf)
    # Every satellite sees the others as interference unless cooperative
    noises = []
    for s in range(len(sats)):
        sinr = effective_sinr(s, powers, rf.noise_w, mode, rf.xcorr)
        noises.append(observation_noise(sinr, rf.bandwidth_hz, rf.coherent_time_s, array, single_antenna))
    return noises


def position_fim(sats: Sequence[SatelliteState], ue, mode: TxMode, array: ArrayGeometry,
                 single_antenna: bool, rf: RfConfig) -> Fim3:
    if not sats:
        raise ValueError("position FIM needs at least one satellite")
    noises = link_noises(sats, ue, mode, array, single_antenna, rf)
    return observation_fim(sats, ue, noises, rf.carrier_hz, use_angles=not single_antenna)


def position_crb(fim: Fim3) -> float:
    """Root-trace of the inverse FIM, in metres."""
    eigenvalues = np.linalg.eigvalsh(fim.matrix)
    # Condition number check before inverting
    largest = float(eigenvalues[-1])
    ratio = float(eigenvalues[0]) / largest if largest > 0.0 else 0.0
    if ratio < SINGULAR_RATIO:
        raise UnlocalizableGeometryError(
            f"singular position information (eigenvalue ratio {ratio:.3g})", eigen_ratio=ratio
        )
    return math.sqrt(float(np.sum(1.0 / eigenvalues)))


def _config_crb(config: str, s: int, n: int, scenario: "Scenario") -> float:
    single_antenna = config == "SA-C"
    mode = TxMode.NON_COOPERATIVE if config == "MA-NC" else TxMode.COOPERATIVE
    array = ArrayGeometry.square(n, scenario.spacing_wavelengths)
    sats = scenario.satellites(s)
    fim = position_fim(sats, scenario.reference_ue(), mode, array, single_antenna, scenario.rf())
    try:
        crb = position_crb(fim)
    except UnlocalizableGeometryError as exc:
        logger.warning("%s S=%d N=%d: %s", config, s, n, exc)
        return math.inf
    logger.info("%s S=%d N=%d: CRB %.4g m", config, s, n, crb)
    return crb


def crb_sweep(n_grid: Sequence[int], s_values: Sequence[int], modes: Sequence[str] = CRB_CONFIGS,
              scenario: "Scenario | None" = None) -> pd.DataFrame:
    """CRB table over array size and constellation size for each configuration.

    Single-antenna rows do not depend on N, so they are computed once per S
    and repeated along the N axis.
    """
    if scenario is None:
        from ipac.harness import Scenario
        scenario = Scenario()
    if not n_grid or not s_values or not modes:
        raise ConfigurationError("crb sweep needs non-empty N, S and configuration grids")
    unknown = [m for m in modes if m not in CRB_CONFIGS]
    if unknown:
        raise ConfigurationError(f"unknown CRB configuration(s) {unknown}; choose from {CRB_CONFIGS}")

    tasks = []
    for config in modes:
        for s in s_values:
            if config == "SA-C":
                tasks.append((config, s, n_grid[0]))
            else:
                tasks.extend((config, s, n) for n in n_grid)
    values = Parallel(n_jobs=scenario.workers)(
        delayed(_config_crb)(config, s, n, scenario) for config, s, n in tasks
    )
    computed = dict(zip(tasks, values))

    rows = []
    for config in modes:
        for s in s_values:
            for n in n_grid:
                key = (config, s, n_grid[0] if config == "SA-C" else n)
                rows.append({"config": config, "S": int(s), "N": int(n), "crb_m": computed[key]})
    return pd.DataFrame(rows, columns=["config", "S", "N", "crb_m"])
