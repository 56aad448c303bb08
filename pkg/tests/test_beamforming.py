"""
Beamforming tests.

Proves:
  - both beamformers are phase-only with unit norm
  - matched beamforming on a pure-LoS channel collects the full array gain
  - the 28 GHz / 400 km / 20x20 link budget lands near 2.8 dB
  - a large location error averages out to no array gain
  - the SE sweep is deterministic, worker-count invariant and validates its input
  - location-based beamforming beats the outdated-CSI beamformer on shared draws
"""
import math

import numpy as np
import pandas as pd
import pytest

from ipac.beamforming import (
    Beamformer,
    BeamformingMode,
    conjugate_beamformer,
    evaluate_link,
    location_based_beamformer,
    se_sweep,
)
from ipac.channel import ArrayGeometry, ChannelRealization, draw_rician_channel, free_space_loss_db, steering_vector
from ipac.errors import ConfigurationError, DegenerateInputError
from ipac.geometry import los_geometry
from ipac.harness import Scenario
from ipac.streams import derive_rng

SCENARIO = Scenario()
SMALL = Scenario(array_n=4, se_trials=200)


def pure_los(scenario=SCENARIO, amplitude=None):
    sat = scenario.satellites(1)[0]
    geom = los_geometry(sat, scenario.reference_ue(), scenario.carrier_hz)
    if amplitude is None:
        amplitude = 10.0 ** (-free_space_loss_db(geom.range, scenario.carrier_hz) / 20.0)
    channel = draw_rician_channel(geom, scenario.array(), math.inf, amplitude, derive_rng(1))
    return sat, channel


def test_equal_phases_give_equal_weights():
    bf = conjugate_beamformer(np.full(9, 2.0 * np.exp(0.3j)))
    np.testing.assert_allclose(bf.weights, bf.weights[0])
    assert np.linalg.norm(bf.weights) == pytest.approx(1.0, abs=1e-12)


def test_random_estimate_gives_analog_weights():
    rng = derive_rng(2)
    estimate = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    bf = conjugate_beamformer(estimate)
    np.testing.assert_allclose(np.abs(bf.weights), 1.0 / 8.0, atol=1e-12)


def test_zero_estimate_is_degenerate():
    with pytest.raises(DegenerateInputError):
        conjugate_beamformer(np.zeros(16, complex))


def test_beamformer_rejects_non_analog_weights():
    with pytest.raises(ValueError):
        Beamformer(np.array([1.0, 0.0], complex))
    with pytest.raises(ValueError):
        Beamformer(np.ones(4, complex))


def test_full_array_gain_on_pure_los():
    _, channel = pure_los(amplitude=1e-3)
    bf = conjugate_beamformer(channel.gains)
    gain = abs(channel.gains @ bf.weights) ** 2
    assert gain == pytest.approx(400 * 1e-6, rel=1e-9)
    assert gain == pytest.approx(np.linalg.norm(channel.gains) ** 2, rel=1e-9)


def test_gain_never_exceeds_channel_norm():
    rng = derive_rng(3)
    for _ in range(100):
        h = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        w = np.exp(1j * rng.uniform(-np.pi, np.pi, 16)) / 4.0
        assert abs(h @ w) ** 2 <= np.linalg.norm(h) ** 2 * (1 + 1e-12)


def test_link_snr_at_operating_point():
    _, channel = pure_los()
    result = evaluate_link(channel, conjugate_beamformer(channel.gains), 60.0, -174.0, 240e6)
    assert result.snr_db == pytest.approx(2.8, abs=0.05)
    assert result.spectral_efficiency == pytest.approx(math.log2(1.0 + 10.0 ** (result.snr_db / 10.0)), abs=1e-9)


def test_tx_power_shifts_snr():
    _, channel = pure_los()
    bf = conjugate_beamformer(channel.gains)
    low = evaluate_link(channel, bf, 50.0, -174.0, 240e6)
    high = evaluate_link(channel, bf, 60.0, -174.0, 240e6)
    assert high.snr_db - low.snr_db == pytest.approx(10.0, abs=1e-9)


def test_zero_gain_gives_zero_se():
    los = steering_vector(ArrayGeometry(1, 2), 0.0, math.pi / 2)
    channel = ChannelRealization(los, np.zeros(2, complex), math.inf, 1e-6)
    result = evaluate_link(channel, conjugate_beamformer(np.ones(2)), 60.0, -174.0, 240e6)
    assert result.spectral_efficiency == pytest.approx(0.0, abs=1e-12)


def test_location_based_with_exact_position_matches_conjugate():
    sat, channel = pure_los()
    ue = SCENARIO.reference_ue()
    located = location_based_beamformer(ue, 0.0, sat, SCENARIO.array(), SCENARIO.carrier_hz, derive_rng(4))
    matched = conjugate_beamformer(channel.gains)
    snr_located = evaluate_link(channel, located, 60.0, -174.0, 240e6).snr_db
    snr_matched = evaluate_link(channel, matched, 60.0, -174.0, 240e6).snr_db
    assert snr_located == pytest.approx(snr_matched, abs=1e-9)


def test_location_based_rejects_negative_sigma():
    sat = SCENARIO.satellites(1)[0]
    with pytest.raises(ValueError):
        location_based_beamformer(SCENARIO.reference_ue(), -1.0, sat, SCENARIO.array(), 28e9, derive_rng(5))


def test_huge_location_error_loses_array_gain():
    # Direction cosines of a uniformly random direction are uniform, so a line array averages to gain 1
    array = ArrayGeometry(1, 8)
    sat = SCENARIO.satellites(1)[0]
    ue = SCENARIO.reference_ue()
    geom = los_geometry(sat, ue, SCENARIO.carrier_hz)
    a = steering_vector(array, geom.aod_azimuth, geom.aod_elevation)
    rng = derive_rng(6)
    gains = [abs(a @ location_based_beamformer(ue, 1e9, sat, array, SCENARIO.carrier_hz, rng).weights) ** 2
             for _ in range(10_000)]
    assert np.mean(gains) == pytest.approx(1.0, rel=0.2)


def test_se_sweep_columns_and_determinism():
    first = se_sweep(SMALL, [1e-3, 1e-1], BeamformingMode.OUTDATED_CSI, 1, seed=42)
    second = se_sweep(SMALL, [1e-3, 1e-1], "outdated-csi", 1, seed=42)
    assert list(first.columns) == ["error_level", "mean_se_bps_hz", "stderr"]
    assert (first["stderr"] == 0.0).all()
    pd.testing.assert_frame_equal(first, second, check_exact=True)


def test_se_sweep_invariant_to_workers():
    grid = [1e2, 1e4]
    serial = se_sweep(SMALL, grid, BeamformingMode.LOCATION_BASED, 50, seed=7)
    parallel = se_sweep(Scenario(array_n=4, workers=2), grid, BeamformingMode.LOCATION_BASED, 50, seed=7)
    pd.testing.assert_frame_equal(serial, parallel, check_exact=True)


def test_se_sweep_validates_input():
    with pytest.raises(ConfigurationError):
        se_sweep(SMALL, [], BeamformingMode.OUTDATED_CSI, 10, seed=1)
    with pytest.raises(ConfigurationError):
        se_sweep(SMALL, [0.1], BeamformingMode.OUTDATED_CSI, 0, seed=1)
    with pytest.raises(ValueError):
        se_sweep(SMALL, [0.1], "digital", 10, seed=1)


def test_location_based_beats_outdated_csi():
    located = se_sweep(SCENARIO, [0.0], BeamformingMode.LOCATION_BASED, 1000, seed=9)
    outdated = se_sweep(SCENARIO, [1e-3], BeamformingMode.OUTDATED_CSI, 1000, seed=9)
    assert located["mean_se_bps_hz"][0] > outdated["mean_se_bps_hz"][0]
    assert located["stderr"][0] > 0.0


@pytest.mark.slow
@pytest.mark.parametrize("mode, grid", [
    (BeamformingMode.LOCATION_BASED, SCENARIO.pos_sigma_grid_m),
    (BeamformingMode.OUTDATED_CSI, SCENARIO.csi_error_grid),
])
def test_se_non_increasing_in_error(mode, grid):
    curve = se_sweep(SCENARIO, grid, mode, 10_000, seed=SCENARIO.seed)["mean_se_bps_hz"].to_numpy()
    for better, worse in zip(curve[:-1], curve[1:]):
        assert worse <= better * 1.02


def test_location_prior_must_be_on_the_ground():
    sat = SCENARIO.satellites(1)[0]
    with pytest.raises(ValueError, match="below the Earth surface"):
        location_based_beamformer(SCENARIO.reference_ue() * 0.2, 10e3, sat, SCENARIO.array(), 28e9, derive_rng(21))
