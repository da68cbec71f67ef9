import numpy as np
import pytest

from coulombmpc import FormationConfig, MpcParams, ScenarioConfig, SolverSettings

FOURCRAFT_DESIRED = np.array([50.0, 100.0, 150.0])
FOURCRAFT_INITIAL = np.array([53.0, 109.0, 147.0, 0.0, 0.0, 0.0])
FOURCRAFT_MASS = 750.0
FOURCRAFT_STEPS = 2400


def fourcraft_formation(mass=FOURCRAFT_MASS):
    center = np.concatenate([FOURCRAFT_DESIRED, np.zeros(3)])
    return FormationConfig(
        num_spacecraft=4,
        masses=mass,
        state_min=center - 10.0,
        state_max=center + 10.0,
        charge_min=-0.1,
        charge_max=0.1,
    )


def fourcraft_params(trace_weight=1.5):
    center = np.concatenate([FOURCRAFT_DESIRED, np.zeros(3)])
    return MpcParams(
        horizon=9,
        desired_positions=FOURCRAFT_DESIRED,
        state_weight=np.array([1.0, 1.0, 1.0, 400.0, 400.0, 400.0]),
        product_weight=0.0,
        product_delta_weight=1e8,
        state_min=center - 10.0,
        state_max=center + 10.0,
        trace_weight=trace_weight,
    )


def fourcraft_scenario(mass=FOURCRAFT_MASS, steps=FOURCRAFT_STEPS, warm_start=True,
                       substeps=10):
    return ScenarioConfig(
        formation=fourcraft_formation(mass),
        params=fourcraft_params(),
        solver=SolverSettings(warm_start=warm_start),
        initial_state=FOURCRAFT_INITIAL.copy(),
        sample_period=0.5,
        steps=steps,
        substeps=substeps,
    )


@pytest.fixture
def twocraft_formation():
    return FormationConfig(
        num_spacecraft=2,
        masses=50.0,
        state_min=np.array([10.0, -5.0]),
        state_max=np.array([500.0, 5.0]),
        charge_min=-0.2,
        charge_max=0.2,
    )


@pytest.fixture
def threecraft_formation():
    center = np.concatenate([np.array([40.0, 80.0]), np.zeros(2)])
    return FormationConfig(
        num_spacecraft=3,
        masses=np.array([40.0, 55.0, 70.0]),
        state_min=center - 30.0,
        state_max=center + 30.0,
        charge_min=-0.3,
        charge_max=0.3,
    )
