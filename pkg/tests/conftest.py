import time

import pytest

from nvltm.config import load_config
from nvltm.harness import calibrated_physics, run_calibration


@pytest.fixture(scope="session")
def base_config(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return load_config(environ={}).with_overrides({"run.output_dir": str(out)})


@pytest.fixture(scope="session")
def calibration(base_config):
    """Calibration of the shipped defaults, run once per session."""
    started = time.perf_counter()
    record = run_calibration(base_config)
    return {"record": record, "elapsed": time.perf_counter() - started}


@pytest.fixture(scope="session")
def calibrated(base_config, calibration):
    return base_config, calibrated_physics(base_config, calibration["record"])
