"""One module per experiment; each exposes ``run(scenario) -> DataFrame``."""
