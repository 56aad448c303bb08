import pandas as pd

from ipac.beamforming import BeamformingMode, se_sweep


# Both beamforming curves, each on its own error axis
def run(scenario):
    curves = []
    for mode, grid in (
        (BeamformingMode.OUTDATED_CSI, scenario.csi_error_grid),
        (BeamformingMode.LOCATION_BASED, scenario.pos_sigma_grid_m),
    ):
        curve = se_sweep(scenario, grid, mode, scenario.se_trials, scenario.seed)
        curve.insert(0, 'mode', mode.value)
        curves.append(curve)
    return pd.concat(curves, ignore_index=True)
