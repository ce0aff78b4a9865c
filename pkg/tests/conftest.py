"""Shared fixtures: canonical preparations and seeded generators."""

from __future__ import annotations

import numpy as np
import pytest

from pmlab.qcore import StateVector, make_state, random_state


@pytest.fixture
def state_00() -> StateVector:
    return make_state((1, 0, 0, 0))


@pytest.fixture
def singlet() -> StateVector:
    return make_state((0, 1, -1, 0))


def rng_from(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


@pytest.fixture
def test_states(state_00, singlet) -> list[StateVector]:
    """Five preparations: two named, one eigenstate, two generic random."""
    gen = rng_from(2024)
    return [
        state_00,
        singlet,
        make_state((1, 0, 0, 1)),  # (|00> + |11>)/sqrt(2)
        random_state(gen),
        random_state(gen),
    ]
