"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from qstream import GridSpec, PhysicalConstants, gaussian_packet


@pytest.fixture(scope="session")
def const():
    return PhysicalConstants()


def sym_grid(half: float, n: int) -> GridSpec:
    return GridSpec(-half, half, n)


def max_abs(a) -> float:
    return float(np.max(np.abs(a)))


__all__ = ["sym_grid", "max_abs", "gaussian_packet"]
