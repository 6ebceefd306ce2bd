"""
Shared fixtures: preset configs and the expensive closed-loop runs,
simulated once per session.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from .controllers import ControllerKind
from .experiment import ExperimentConfig, load_config
from .propagation import Trajectory, simulate
from .states import ComplexState

settings.register_profile("ladder", deadline=None)
settings.load_profile("ladder")

PRESETS = Path(__file__).resolve().parent.parent / "presets"

# Time at which the rubidium comparison is read.
T_COMPARE = 16.6814


def preset(name: str) -> ExperimentConfig:
    return load_config(PRESETS / f"{name}.cfg")


def run(config: ExperimentConfig, kind: ControllerKind | None = None) -> Trajectory:
    return simulate(config.system(), config.params(kind), config.initial(),
                    config.target_state(), config.integrator())


@st.composite
def interior_states(draw, n_min: int = 2, n_max: int = 6) -> ComplexState:
    """Normalised states with every amplitude bounded away from zero."""
    n = draw(st.integers(n_min, n_max))
    mags = draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n))
    phases = draw(st.lists(st.floats(-np.pi, np.pi), min_size=n, max_size=n))
    c = np.array(mags) * np.exp(1j * np.array(phases))
    return ComplexState(amplitudes=c / np.linalg.norm(c))


def random_state(rng: np.random.Generator, n: int) -> ComplexState:
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return ComplexState(amplitudes=c / np.linalg.norm(c))


@pytest.fixture(scope="session")
def fig3_config() -> ExperimentConfig:
    return preset("fig3")


@pytest.fixture(scope="session")
def fig5_config() -> ExperimentConfig:
    return preset("fig5")


@pytest.fixture(scope="session")
def fig3_runs(fig3_config) -> dict[ControllerKind, Trajectory]:
    return {kind: run(fig3_config, kind) for kind in ControllerKind}


@pytest.fixture(scope="session")
def fig5_run(fig5_config) -> Trajectory:
    return run(fig5_config)
