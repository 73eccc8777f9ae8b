"""Pytest configuration and fixtures for the network bound tests."""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src directory to path for imports
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from network import NetworkSpec, Parameters  # noqa: E402


def random_parameters(spec: NetworkSpec, seed: int, scale: float = 1.0) -> Parameters:
    """Gaussian weights with entries of variance scale^2 / L_j."""
    rng = np.random.default_rng(seed)
    return Parameters(tuple(
        rng.standard_normal(spec.block_shape(j)) * (scale / np.sqrt(spec.widths[j]))
        for j in range(spec.k + 1)
    ))


@pytest.fixture(scope="session")
def make_params():
    """Factory for seeded random parameters (session scope: usable under @given)."""
    return random_parameters


@pytest.fixture
def small_tanh_spec() -> NetworkSpec:
    """Two hidden layers, two inputs, two outputs."""
    return NetworkSpec((3, 4, 3, 2), "tanh")


@pytest.fixture
def reports_dir(tmp_path) -> Path:
    return tmp_path / "reports"
