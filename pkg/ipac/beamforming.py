"""Analog beamformers and the spectral-efficiency Monte Carlo sweep."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from numpy.random import Generator
from numpy.typing import NDArray
from statsmodels.stats.weightstats import DescrStatsW

from ipac.channel import (
    ArrayGeometry,
    ChannelRealization,
    age_channel,
    draw_rician_channel,
    large_scale_loss,
    noise_power_dbm,
    perturb_channel_estimate,
    steering_vector,
    watts_from_dbm,
)
from ipac.errors import ConfigurationError, DegenerateInputError
from ipac.geometry import SatelliteState, check_ue_position, los_geometry
from ipac.streams import derive_rng

if TYPE_CHECKING:
    from ipac.harness import Scenario

logger = logging.getLogger(__name__)


class BeamformingMode(str, Enum):
    OUTDATED_CSI = "outdated-csi"
    LOCATION_BASED = "location-based"


@dataclass(frozen=True, eq=False)
class Beamformer:
    weights: NDArray[np.complex128]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("beamformer weights must be a non-empty vector")
        if abs(float(np.linalg.norm(w)) - 1.0) > 1e-12:
            raise ValueError("beamformer weights must have unit norm")
        if np.max(np.abs(np.abs(w) - 1.0 / math.sqrt(w.size))) > 1e-12:
            raise ValueError("analog beamformer entries must all have modulus 1/sqrt(N)")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class LinkResult:
    snr_db: float
    spectral_efficiency: float


def _phase_only(phases: NDArray[np.float64]) -> Beamformer:
    return Beamformer(np.exp(1j * phases) / math.sqrt(phases.size))


def conjugate_beamformer(channel_estimate) -> Beamformer:
    """Phase-only match to the channel estimate."""
    estimate = np.asarray(channel_estimate, dtype=complex).ravel()
    if estimate.size == 0 or not np.any(estimate):
        raise DegenerateInputError("channel estimate is all zeros")
    return _phase_only(-np.angle(estimate))


def location_based_beamformer(ue_prior, pos_sigma_m: float, sat: SatelliteState, array: ArrayGeometry,
                              carrier_hz: float, rng: Generator) -> Beamformer:
    """Steer at the LoS direction of a Gaussian-perturbed UE position.

    The per-axis deviation is ``pos_sigma_m / sqrt(3)`` so the RMS position
    error equals ``pos_sigma_m``.
    """
    if pos_sigma_m < 0.0:
        raise ValueError(f"position uncertainty must be >= 0, got {pos_sigma_m}")
    guess = np.asarray(check_ue_position(ue_prior)) + rng.normal(0.0, pos_sigma_m / math.sqrt(3.0), size=3)
    geom = los_geometry(sat, guess, carrier_hz, validate_ue=False)
    return _phase_only(-np.angle(steering_vector(array, geom.aod_azimuth, geom.aod_elevation)))


def evaluate_link(true_channel: ChannelRealization, bf: Beamformer, tx_power_dbm: float,
                  noise_psd_dbm_hz: float, bandwidth_hz: float) -> LinkResult:
    noise_w = watts_from_dbm(noise_power_dbm(noise_psd_dbm_hz, bandwidth_hz))
    gain = abs(complex(true_channel.gains @ bf.weights)) ** 2
    snr = watts_from_dbm(tx_power_dbm) * gain / noise_w
    snr_db = 10.0 * math.log10(snr) if snr > 0.0 else -math.inf
    return LinkResult(snr_db=snr_db, spectral_efficiency=math.log2(1.0 + snr))


def _se_trials(scenario: "Scenario", mode: BeamformingMode, error_idx: int, error_level: float,
               trials: int, seed: int) -> tuple[float, float]:
    sat = scenario.satellites(1)[0]
    ue = scenario.reference_ue()
    array = scenario.array()
    env = scenario.attenuation()
    geom = los_geometry(sat, ue, scenario.carrier_hz)

    se = np.empty(trials)
    for trial in range(trials):
        rng = derive_rng(seed, error_idx, trial)
        # Loss and channel come first so both modes see the same draws
        budget = large_scale_loss(geom.range, geom.elevation, scenario.carrier_hz, env, rng)
        channel = draw_rician_channel(geom, array, scenario.rician_k_linear, budget.amplitude, rng)
        if mode is BeamformingMode.OUTDATED_CSI:
            stale = age_channel(channel, rng)
            bf = conjugate_beamformer(perturb_channel_estimate(stale, error_level, rng))
        else:
            bf = location_based_beamformer(ue, error_level, sat, array, scenario.carrier_hz, rng)
        result = evaluate_link(channel, bf, scenario.tx_power_dbm, scenario.noise_psd_dbm_hz, scenario.bandwidth_hz)
        se[trial] = result.spectral_efficiency

    stats = DescrStatsW(se)
    stderr = float(stats.std_mean) if trials > 1 else 0.0
    logger.info("%s error %.4g: mean SE %.4f bit/s/Hz over %d trials", mode.value, error_level, stats.mean, trials)
    return float(stats.mean), stderr


def se_sweep(scenario: "Scenario", error_grid: Sequence[float], mode: BeamformingMode,
             trials: int, seed: int) -> pd.DataFrame:
    """Mean spectral efficiency per error level for one beamforming mode.

    Error levels are the relative channel-estimation error for outdated CSI and
    the RMS UE position error in metres for location-based beamforming. Trial
    ``t`` at grid index ``i`` always draws from stream ``(seed, i, t)``.
    """
    mode = BeamformingMode(mode)
    if len(error_grid) == 0:
        raise ConfigurationError("se sweep needs a non-empty error grid")
    if trials < 1:
        raise ConfigurationError(f"se sweep needs at least one trial, got {trials}")

    results = Parallel(n_jobs=scenario.workers)(
        delayed(_se_trials)(scenario, mode, idx, float(level), trials, seed)
        for idx, level in enumerate(error_grid)
    )
    return pd.DataFrame({
        "error_level": [float(level) for level in error_grid],
        "mean_se_bps_hz": [mean for mean, _ in results],
        "stderr": [stderr for _, stderr in results],
    })
