"""Shared pytest fixtures for the entire test suite."""

import shutil
import tempfile

import pytest

from least_gradient.anisotropy import MetricIntegrand
from least_gradient.grid import rasterize
from least_gradient.scenarios import get_scenario, rasterize_scenario


@pytest.fixture
def temp_dir():
    """Create a temporary directory for testing file operations.

    Provides a clean temporary directory that gets automatically cleaned up
    after the test completes.
    """
    # Arrange
    temp_path = tempfile.mkdtemp()

    yield temp_path

    # Cleanup
    shutil.rmtree(temp_path, ignore_errors=True)


@pytest.fixture
def euclidean():
    return MetricIntegrand.euclidean()


@pytest.fixture
def small_square():
    """8×8 unit square with Γ on the bottom and top edges, f = y."""
    return rasterize(
        lambda x, y: (x > 0) & (x < 1) & (y > 0) & (y < 1),
        lambda x, y: (y < 1e-9) | (y > 1 - 1e-9),
        lambda x, y: y,
        (0.0, 0.0, 1.0, 1.0),
        8,
    )


@pytest.fixture
def square_16():
    scenario = get_scenario("square_updown")
    grid, faces = rasterize_scenario(scenario, 16)
    return scenario, grid, faces


@pytest.fixture
def bm_disk_32():
    scenario = get_scenario("bm_disk")
    grid, faces = rasterize_scenario(scenario, 32)
    return scenario, grid, faces


@pytest.fixture
def disk_arc_32():
    scenario = get_scenario("disk_arc")
    grid, faces = rasterize_scenario(scenario, 32)
    return scenario, grid, faces
