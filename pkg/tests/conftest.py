"""Shared fixtures and random-state generators for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.spatial.transform import Rotation as SciRotation

from b2closure.moments import MomentState, build_moments

ACCEPTANCE_LINES: list[str] = []


def random_rotation(rng) -> np.ndarray:
    return SciRotation.random(random_state=rng).as_matrix()


def state_from_frame(e0, q, lam_hat, f_hat) -> MomentState:
    """State whose E2 eigenframe is the columns of ``q``."""
    lam_hat = np.asarray(lam_hat, dtype=float)
    e2 = e0 * q @ np.diag(lam_hat) @ q.T
    return build_moments(e0, e0 * q @ np.asarray(f_hat, dtype=float), 0.5 * (e2 + e2.T))


def random_box_state(rng, min_lam=1.0 / 7.0, box_frac=1.0, rotate=True):
    """Random state with ``min(lam_hat) >= min_lam`` and ``f_hat`` inside the box.

    Returns ``(state, e0, q, lam_hat, f_hat)``.
    """
    lam = min_lam + (1.0 - 3.0 * min_lam) * rng.dirichlet([1.0, 1.0, 1.0])
    f = box_frac * lam * rng.uniform(-1.0, 1.0, 3)
    e0 = rng.uniform(0.5, 3.0)
    q = random_rotation(rng) if rotate else np.eye(3)
    return state_from_frame(e0, q, lam, f), e0, q, lam, f


def random_unit(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def equilibrium():
    return build_moments(1.0, (0.0, 0.0, 0.0), np.eye(3) / 3.0)


@pytest.fixture
def crossing_beam():
    return build_moments(2.0, (1.0, 1.0, 0.0), np.diag([1.0, 1.0, 0.0]))


@pytest.fixture
def x_beam():
    return build_moments(1.0, (1.0, 0.0, 0.0), np.diag([1.0, 0.0, 0.0]))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
