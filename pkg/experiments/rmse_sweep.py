from ipac.estimator import rmse_sweep


def run(scenario):
    return rmse_sweep(
        scenario.delay_sigma_grid_ns,
        scenario.mismatch_levels_m,
        scenario.rmse_trials,
        scenario,
        scenario.seed,
    )
