"""
Fisher information tests.

Proves:
  - SINR under cooperative and non-cooperative transmission
  - observation variances scale as 1/SINR and drop the angles for single antennas
  - the position Jacobian matches central differences on random geometries
  - FIM assembly is symmetric PSD, additive across cooperative satellites,
    and ordered cooperative over non-cooperative
  - the CRB scalar and its singular-geometry signal
  - the CRB sweep table has the expected shape and orderings
"""
import math

import numpy as np
import pytest

from conftest import random_satellite
from ipac.channel import ArrayGeometry
from ipac.errors import ConfigurationError, DegenerateGeometryError, UnlocalizableGeometryError
from ipac.fim import (
    Fim3,
    ObservationNoise,
    TxMode,
    crb_sweep,
    effective_sinr,
    link_noises,
    observation_fim,
    observation_noise,
    position_crb,
    position_fim,
    position_jacobian,
)
from ipac.geometry import EARTH_RADIUS, SPEED_OF_LIGHT, los_geometry
from ipac.harness import Scenario
from ipac.streams import derive_rng

SCENARIO = Scenario()
ARRAY = SCENARIO.array()
UE = SCENARIO.reference_ue()


def random_ue(rng):
    lat = rng.uniform(-1.0, 1.0)
    lon = rng.uniform(-math.pi, math.pi)
    return EARTH_RADIUS * np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])


def observe(sat, ue, carrier):
    geom = los_geometry(sat, ue, carrier)
    return np.array([geom.delay, geom.doppler, geom.aod_azimuth, geom.aod_elevation])


def test_cooperative_sinr_ignores_interferers():
    assert effective_sinr(0, [10.0, 50.0, 80.0], 1.0, TxMode.COOPERATIVE, 0.5) == 10.0


def test_non_cooperative_with_zero_xcorr_matches_cooperative():
    powers = [3.0, 7.0]
    assert effective_sinr(1, powers, 0.2, TxMode.NON_COOPERATIVE, 0.0) == \
        effective_sinr(1, powers, 0.2, TxMode.COOPERATIVE, 0.5)


def test_two_equal_interfering_satellites():
    assert effective_sinr(0, [10.0, 10.0], 1.0, "non-cooperative", 1.0) == pytest.approx(10.0 / 11.0)


def test_sinr_needs_positive_powers():
    with pytest.raises(ValueError):
        effective_sinr(0, [1.0, 0.0], 1.0, TxMode.COOPERATIVE, 0.5)


def test_doubling_sinr_halves_every_variance():
    low = observation_noise(100.0, 240e6, 1e-3, ARRAY, single_antenna=False)
    high = observation_noise(200.0, 240e6, 1e-3, ARRAY, single_antenna=False)
    np.testing.assert_allclose(high.variances(), low.variances() / 2.0, rtol=1e-12)


def test_delay_variance_uses_flat_spectrum_rms_bandwidth():
    noise = observation_noise(1.0, 240e6, 1e-3, ARRAY, single_antenna=True)
    beta = 240e6 / math.sqrt(12.0)
    assert beta == pytest.approx(69.28e6, rel=1e-4)
    assert noise.var_delay == pytest.approx(1.0 / (8.0 * math.pi**2 * beta**2))


def test_single_antenna_has_no_angles():
    noise = observation_noise(10.0, 240e6, 1e-3, ARRAY, single_antenna=True)
    assert not noise.has_angles
    assert noise.var_az is None and noise.var_el is None
    assert noise.variances().shape == (2,)


def test_angle_noise_needs_two_elements_per_dimension():
    with pytest.raises(ConfigurationError):
        observation_noise(10.0, 240e6, 1e-3, ArrayGeometry(1, 16), single_antenna=False)
    with pytest.raises(ValueError):
        observation_noise(0.0, 240e6, 1e-3, ARRAY, single_antenna=True)


def test_noise_record_validation():
    with pytest.raises(ValueError):
        ObservationNoise(1.0, 1.0, var_az=1.0)
    with pytest.raises(ValueError):
        ObservationNoise(0.0, 1.0)


def test_jacobian_simple_rows():
    rng = derive_rng(1)
    for _ in range(20):
        sat = random_satellite(rng, UE)
        geom = los_geometry(sat, UE, 28e9)
        jac = position_jacobian(geom, sat, UE, 28e9)
        u = (UE - sat.position) / geom.range
        assert np.linalg.norm(jac[0]) == pytest.approx(1.0 / SPEED_OF_LIGHT, rel=1e-12)
        assert abs(jac[1] @ u) <= 1e-12 * np.linalg.norm(jac[1])


def test_jacobian_matches_central_differences():
    rng = derive_rng(2)
    step = 0.1
    for _ in range(100):
        ue = random_ue(rng)
        sat = random_satellite(rng, ue)
        carrier = rng.uniform(2e9, 30e9)
        jac = position_jacobian(los_geometry(sat, ue, carrier), sat, ue, carrier)
        numeric = np.empty((4, 3))
        for axis in range(3):
            offset = np.zeros(3)
            offset[axis] = step
            diff = observe(sat, ue + offset, carrier) - observe(sat, ue - offset, carrier)
            diff[2] = (diff[2] + math.pi) % (2 * math.pi) - math.pi
            numeric[:, axis] = diff / (2 * step)
        for row in range(4):
            assert np.linalg.norm(numeric[row] - jac[row]) <= 1e-5 * np.linalg.norm(jac[row])


def test_literal_azimuth_gradient_undefined_on_boresight():
    sat = SCENARIO.satellites(1)[0]
    geom = los_geometry(sat, UE, 28e9)
    with pytest.raises(DegenerateGeometryError):
        position_jacobian(geom, sat, UE, 28e9)
    jac = position_jacobian(geom, sat, UE, 28e9, arc_azimuth=True)
    assert np.all(np.isfinite(jac))


def test_fim_symmetric_psd_on_random_constellations(make_satellites):
    rng = derive_rng(3)
    for _ in range(100):
        ue = random_ue(rng)
        sats = make_satellites(rng, ue, int(rng.integers(1, 7)))
        mode = TxMode.COOPERATIVE if rng.uniform() < 0.5 else TxMode.NON_COOPERATIVE
        fim = position_fim(sats, ue, mode, ArrayGeometry.square(int(rng.integers(2, 9))),
                           bool(rng.uniform() < 0.3), SCENARIO.rf())
        m = fim.matrix
        np.testing.assert_allclose(m, m.T, rtol=1e-9, atol=0.0)
        assert np.linalg.eigvalsh(m)[0] >= -1e-9 * np.trace(m)


def test_cooperative_fim_is_additive():
    sats = SCENARIO.satellites(5)
    rf = SCENARIO.rf()
    together = position_fim(sats, UE, TxMode.COOPERATIVE, ARRAY, False, rf).matrix
    apart = sum(position_fim([sat], UE, TxMode.COOPERATIVE, ARRAY, False, rf).matrix for sat in sats)
    np.testing.assert_allclose(together, apart, rtol=1e-9, atol=0.0)


def test_cooperative_dominates_non_cooperative():
    sats = SCENARIO.satellites(4)
    rf = SCENARIO.rf()
    coop = position_fim(sats, UE, TxMode.COOPERATIVE, ARRAY, False, rf).matrix
    non_coop = position_fim(sats, UE, TxMode.NON_COOPERATIVE, ARRAY, False, rf).matrix
    assert np.linalg.eigvalsh(coop - non_coop)[0] >= -1e-9 * np.trace(coop)


def test_isotropic_fim_crb():
    assert position_crb(Fim3(np.eye(3) / 4.0)) == pytest.approx(2.0 * math.sqrt(3.0))


def test_rank_deficient_fim_is_unlocalizable():
    with pytest.raises(UnlocalizableGeometryError) as info:
        position_crb(Fim3(np.diag([1.0, 1.0, 0.0])))
    assert info.value.eigen_ratio == 0.0


def test_single_satellite_delay_only_is_unlocalizable():
    sat = SCENARIO.satellites(1)[0]
    fim = observation_fim([sat], UE, [ObservationNoise(1e-18, 1e300)], 28e9, use_angles=False)
    assert np.linalg.matrix_rank(fim.matrix, tol=1e-9 * np.abs(fim.matrix).max()) == 1
    with pytest.raises(UnlocalizableGeometryError):
        position_crb(fim)


def test_scaling_variances_scales_crb():
    sats = SCENARIO.satellites(4)
    noises = link_noises(sats, UE, TxMode.COOPERATIVE, ARRAY, False, SCENARIO.rf())
    base = position_crb(observation_fim(sats, UE, noises, 28e9))
    scaled = position_crb(observation_fim(sats, UE, [n.scaled(4.0) for n in noises], 28e9))
    assert scaled == pytest.approx(2.0 * base, rel=1e-9)


def test_fim_rejects_asymmetric_matrix():
    with pytest.raises(ValueError):
        Fim3(np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    with pytest.raises(ValueError):
        Fim3(-np.eye(3))


def test_more_cooperative_satellites_never_hurt():
    rf = SCENARIO.rf()
    for single_antenna in (False, True):
        crbs = [position_crb(position_fim(SCENARIO.satellites(s), UE, TxMode.COOPERATIVE, ARRAY, single_antenna, rf))
                for s in (4, 5, 6)]
        assert crbs[0] >= crbs[1] >= crbs[2]


def test_single_antenna_crb_ignores_array_size():
    sats = SCENARIO.satellites(4)
    rf = SCENARIO.rf()
    small = position_crb(position_fim(sats, UE, TxMode.COOPERATIVE, ArrayGeometry.square(2), True, rf))
    large = position_crb(position_fim(sats, UE, TxMode.COOPERATIVE, ArrayGeometry.square(32), True, rf))
    assert small == large


@pytest.fixture(scope="module")
def crb_table():
    return crb_sweep(SCENARIO.crb_n_grid, SCENARIO.crb_s_values, scenario=SCENARIO)


def curve(table, config, s):
    rows = table[(table["config"] == config) & (table["S"] == s)].sort_values("N")
    return rows["crb_m"].to_numpy()


def test_crb_sweep_shape(crb_table):
    assert len(crb_table) == 45
    assert list(crb_table.columns) == ["config", "S", "N", "crb_m"]
    assert set(crb_table["config"]) == {"SA-C", "MA-C", "MA-NC"}


def test_single_antenna_rows_flat_in_n(crb_table):
    for s in SCENARIO.crb_s_values:
        values = curve(crb_table, "SA-C", s)
        np.testing.assert_allclose(values, values[0], rtol=1e-9)


def test_multi_antenna_crb_decreases_in_n(crb_table):
    for config in ("MA-C", "MA-NC"):
        for s in SCENARIO.crb_s_values:
            assert np.all(np.diff(curve(crb_table, config, s)) < 0.0)


def test_cooperation_beats_interference(crb_table):
    for s in SCENARIO.crb_s_values:
        assert np.all(curve(crb_table, "MA-C", s) < curve(crb_table, "MA-NC", s))
    assert np.all(curve(crb_table, "MA-C", 4) < curve(crb_table, "MA-NC", 5))


def test_array_growth_reduces_crb_tenfold(crb_table):
    values = curve(crb_table, "MA-C", 4)
    assert values[0] / values[-1] >= 10.0


def test_crb_sweep_rejects_empty_or_unknown():
    with pytest.raises(ConfigurationError):
        crb_sweep([], [4], scenario=SCENARIO)
    with pytest.raises(ConfigurationError):
        crb_sweep([2], [4], ["MA-X"], SCENARIO)


def test_underground_ue_has_no_crb():
    deep = np.array([1_000e3, 0.0, 0.0])
    with pytest.raises(ValueError, match="below the Earth surface"):
        position_fim(SCENARIO.satellites(4), deep, TxMode.COOPERATIVE, ARRAY, False, SCENARIO.rf())
