import logging

import pandas as pd

from ipac.geometry import coherence_time, max_doppler_and_rate

logger = logging.getLogger(__name__)


def run(scenario):
    rows = []
    for altitude in scenario.doppler_altitudes_m:
        for carrier in scenario.doppler_carriers_hz:
            max_doppler, max_rate = max_doppler_and_rate(altitude, carrier)
            logger.debug("%.0f km, %.1f GHz: coherence time %.3g s",
                         altitude / 1e3, carrier / 1e9, coherence_time(2.0 * max_doppler))
            rows.append({
                'altitude_m': float(altitude),
                'carrier_hz': float(carrier),
                'max_doppler_hz': max_doppler,
                'max_rate_hz_s': max_rate,
            })
    return pd.DataFrame(rows)
