"""Shared fixtures: the two example qubits and their heavier derived
objects (spectra, rate tables, readout outcomes, subspace probes), built
once per session."""

from __future__ import annotations

import numpy as np
import pytest

from fluxlab.dispersive import ResonatorConfig, g_from_published
from fluxlab.hilbert import CircuitParams, diagonalize
from fluxlab.noise import NoiseModel, rate_table
from fluxlab.readout import ReadoutSystem, simulate_readout, subspace_error_probe


@pytest.fixture(scope="session")
def ef_params() -> CircuitParams:
    return CircuitParams(e_j=3.0, e_c=0.75, e_l=0.146)


@pytest.fixture(scope="session")
def gf_params() -> CircuitParams:
    return CircuitParams(e_j=4.0, e_c=2.0, e_l=0.133)


@pytest.fixture(scope="session")
def ef_spec(ef_params):
    return diagonalize(ef_params, n_levels=12)


@pytest.fixture(scope="session")
def gf_spec(gf_params):
    return diagonalize(gf_params, n_levels=12)


@pytest.fixture(scope="session")
def noise_model() -> NoiseModel:
    return NoiseModel()


@pytest.fixture(scope="session")
def gf_rates(gf_params, noise_model):
    return rate_table(gf_params, noise_model, n_levels=7)


@pytest.fixture(scope="session")
def ef_system(ef_params) -> ReadoutSystem:
    return ReadoutSystem(
        params=ef_params,
        res=ResonatorConfig(omega_r=8.461, g=g_from_published(0.25),
                            kappa=1.0 / 200.0),
        bright=0,
        computational=(1, 2),
        amplitude=0.0628,
    )


@pytest.fixture(scope="session")
def gf_system(gf_params) -> ReadoutSystem:
    return ReadoutSystem(
        params=gf_params,
        res=ResonatorConfig(omega_r=13.634, g=g_from_published(0.3),
                            kappa=1.0 / 500.0),
        bright=1,
        computational=(0, 2),
        amplitude=0.0628,
    )


@pytest.fixture(scope="session")
def ef_outcome(ef_system):
    return simulate_readout(ef_system)


@pytest.fixture(scope="session")
def gf_outcome(gf_system):
    return simulate_readout(gf_system)


@pytest.fixture(scope="session")
def ef_probe_error(ef_system, ef_outcome) -> float:
    tau = ef_outcome.stop_time
    return float(subspace_error_probe(ef_system, np.array([0.0, tau]))[-1])


@pytest.fixture(scope="session")
def gf_probe_error(gf_system, gf_outcome) -> float:
    tau = gf_outcome.stop_time
    return float(subspace_error_probe(gf_system, np.array([0.0, tau]))[-1])
