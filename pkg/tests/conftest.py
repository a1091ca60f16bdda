from dataclasses import replace

import pytest

from axongrowth import closed_loop as cl
from axongrowth.backstepping import GainConfig, build_kernel_model
from axongrowth.model import BioParams, derive_constants


@pytest.fixture(scope="session")
def bio():
    return BioParams()


@pytest.fixture(scope="session")
def dc(bio):
    return derive_constants(bio)


@pytest.fixture(scope="session")
def km(dc, bio):
    return build_kernel_model(dc, GainConfig(), 24e-6, bio)


@pytest.fixture(scope="session")
def preset():
    return cl.ScenarioConfig()


@pytest.fixture(scope="session")
def preset_design(preset):
    return cl.design(preset)


@pytest.fixture(scope="session")
def etc_run(preset, preset_design):
    return cl.run_scenario(replace(preset, mode="etc"), design_override=preset_design)


@pytest.fixture(scope="session")
def continuous_run(preset, preset_design):
    return cl.run_scenario(replace(preset, mode="continuous"), design_override=preset_design)
