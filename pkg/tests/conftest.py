"""Shared fixtures and generators for the test suite."""

import numpy as np
import pytest

from s2c.model import PlantModel, SpecEntry, SpecSet


def random_stable_system(rng, n_max=5):
    """Random Hurwitz (A, B, C, D) quadruple for norm/analysis tests."""
    n = int(rng.integers(2, n_max + 1))
    w = int(rng.integers(1, 3))
    z = int(rng.integers(1, 3))
    A = rng.normal(size=(n, n))
    shift = max(np.max(np.linalg.eigvals(A).real), 0.0)
    A = A - (shift + rng.uniform(0.2, 1.0)) * np.eye(n)
    B = rng.normal(size=(n, w))
    C = rng.normal(size=(z, n))
    D = 0.1 * rng.normal(size=(z, w))
    return A, B, C, D


def easy_plant(name="easy"):
    """Stable 2-state plant with a nondegenerate regulated output."""
    return PlantModel(
        name=name,
        A=[[-0.4, 1.0], [0.0, -0.6]],
        B=[[0.0], [1.0]],
        E=[[1.0], [0.5]],
        Cz=[[1.0, 0.0], [0.0, 0.0]],
        Dz=[[0.0], [1.0]],
    )


def easy_specs(**overrides):
    base = dict(
        hinf=SpecEntry(10.0, 1.0, "medium"),
        settling_time=SpecEntry(10.0, 2.0, "medium"),
        overshoot=SpecEntry(0.5, 0.1, "low"),
    )
    base.update(overrides)
    return SpecSet(**base)


@pytest.fixture
def plant():
    return easy_plant()


@pytest.fixture
def specs():
    return easy_specs()
