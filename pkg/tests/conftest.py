from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from heataco.instance import compute_distance_matrix, random_uniform_instance

DATA = Path(__file__).parent / "data"

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance outcomes, filled by tests/test_acceptance.py and printed at the end
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {status} {detail}")


@pytest.fixture
def data_dir() -> Path:
    return DATA


def uniform_dist(n: int, seed: int) -> np.ndarray:
    return compute_distance_matrix(random_uniform_instance(n, seed))


@pytest.fixture
def square_dist() -> np.ndarray:
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
