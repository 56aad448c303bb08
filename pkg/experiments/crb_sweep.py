from ipac.fim import CRB_CONFIGS, crb_sweep


def run(scenario):
    return crb_sweep(scenario.crb_n_grid, scenario.crb_s_values, CRB_CONFIGS, scenario)
