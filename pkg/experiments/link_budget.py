import logging

import pandas as pd

from ipac.channel import large_scale_loss, noise_power_dbm
from ipac.geometry import los_geometry

logger = logging.getLogger(__name__)


# Median budget of the zenith link
def run(scenario):
    sat = scenario.satellites(1)[0]
    geom = los_geometry(sat, scenario.reference_ue(), scenario.carrier_hz)
    budget = large_scale_loss(geom.range, geom.elevation, scenario.carrier_hz, scenario.attenuation())

    # Per-element SNR before array gain
    noise_dbm = noise_power_dbm(scenario.noise_psd_dbm_hz, scenario.bandwidth_hz)
    logger.info("noise power %.2f dBm, zenith SNR %.2f dB without array gain",
                noise_dbm, scenario.tx_power_dbm - budget.total_db - noise_dbm)
    return pd.DataFrame(budget.terms(), columns=['term', 'value_db'])
