"""Shared fixtures: a fixed corpus of five hand-checked 2x2-scale games.

Every payoff below is pinned by hand so tests can assert against manual
arithmetic rather than against the library itself.
"""

from __future__ import annotations

import numpy as np
import pytest

from foggame.games import NormalFormGame


@pytest.fixture(scope="session")
def pd_game() -> NormalFormGame:
    """Mutual-defection dominance: action 1 strictly dominant for both."""
    return NormalFormGame.two_player(
        [[3.0, 0.0], [5.0, 1.0]],
        [[3.0, 5.0], [0.0, 1.0]],
    )


@pytest.fixture(scope="session")
def coord_game() -> NormalFormGame:
    """Symmetric coordination: pure equilibria at (0,0) and (1,1)."""
    return NormalFormGame.two_player(
        [[4.0, 0.0], [0.0, 2.0]],
        [[4.0, 0.0], [0.0, 2.0]],
    )


@pytest.fixture(scope="session")
def pennies_game() -> NormalFormGame:
    """Zero-sum matcher/mismatcher: no pure equilibrium."""
    return NormalFormGame.two_player(
        [[1.0, -1.0], [-1.0, 1.0]],
        [[-1.0, 1.0], [1.0, -1.0]],
    )


@pytest.fixture(scope="session")
def asym_game() -> NormalFormGame:
    """Asymmetric, dominance-solvable; unique pure equilibrium (0,0)."""
    return NormalFormGame.two_player(
        [[2.0, -1.0], [1.0, 3.0]],
        [[1.0, 0.0], [2.0, 1.0]],
    )


@pytest.fixture(scope="session")
def tie_game() -> NormalFormGame:
    """Constant payoffs: every action ties, every profile is an equilibrium."""
    return NormalFormGame.two_player(
        [[1.0, 1.0], [1.0, 1.0]],
        [[2.0, 2.0], [2.0, 2.0]],
    )


@pytest.fixture(scope="session")
def corpus(pd_game, coord_game, pennies_game, asym_game, tie_game):
    return [pd_game, coord_game, pennies_game, asym_game, tie_game]


@pytest.fixture(scope="session")
def dominant_3x2_game() -> NormalFormGame:
    """3-action row player with strictly dominant action 0; equilibrium (0,0)."""
    return NormalFormGame.two_player(
        [[5.0, 5.0], [1.0, 1.0], [0.0, 0.0]],
        [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]],
    )


def random_game(rng: np.random.Generator, counts=(2, 2), scale=5.0) -> NormalFormGame:
    payoffs = rng.uniform(-scale, scale, size=(len(counts), *counts))
    return NormalFormGame(action_counts=tuple(counts), payoffs=payoffs)
