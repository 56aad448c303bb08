import logging

from ipac.geometry import coherence_time, pass_profile

logger = logging.getLogger(__name__)


# Zenith satellite, window centred on closest approach
def run(scenario):
    sat = scenario.satellites(1)[0]
    profile = pass_profile(sat, scenario.reference_ue(), scenario.carrier_hz,
                           scenario.pass_duration_s, scenario.pass_step_s)

    spread = profile['doppler_hz'].max() - profile['doppler_hz'].min()
    logger.info("Doppler swing %.1f kHz over the pass, coherence time %.3g s",
                spread / 1e3, coherence_time(spread))
    return profile
