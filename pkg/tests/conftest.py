import numpy as np
import pytest

from dltsim.model import CyclePlan, DoseGrid
from dltsim.priors import default_b1_prior, default_b3_prior, default_tte_prior
from dltsim.trial import PriorLibrary

DOSES = (10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0, 1280.0)


@pytest.fixture(scope="session")
def grid() -> DoseGrid:
    return DoseGrid(doses=DOSES, reference_dose=160.0)


@pytest.fixture(scope="session")
def plan() -> CyclePlan:
    return CyclePlan(n_cycles=3, cycle_length_days=42.0, reference_cycle=3)


@pytest.fixture(scope="session")
def priors(plan) -> PriorLibrary:
    return PriorLibrary(
        tte=default_tte_prior(plan),
        b1=default_b1_prior(),
        b3=default_b3_prior(),
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
