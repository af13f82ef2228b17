"""Prospect-theory valuation and social-preference payoff recomposition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .games import NormalFormGame

# Below ~0.28 the single-parameter weighting curve stops being monotone, so
# the constructor rejects that region outright and double-checks on a grid.
WEIGHT_CURVE_MIN = 0.28


@dataclass(frozen=True)
class Lottery:
    """Finite lottery: outcome values with matching probabilities."""

    outcomes: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        outcomes = tuple(float(x) for x in self.outcomes)
        probs = tuple(float(p) for p in self.probs)
        if not outcomes:
            raise ValueError("lottery needs at least one outcome")
        if len(outcomes) != len(probs):
            raise ValueError("outcomes and probs must have equal length")
        if not all(np.isfinite(outcomes)):
            raise ValueError("outcomes must be finite")
        if any(p < 0 or p > 1 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {sum(probs)!r}, expected 1")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class ProspectParams:
    """Power value function plus single-parameter probability weighting.

    Defaults are the conventional experimental estimates; they are package
    defaults, not claims about any particular dataset.
    """

    gain_curvature: float = 0.88
    loss_curvature: float = 0.88
    loss_aversion: float = 2.25
    weight_curvature: float = 0.61
    reference: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.gain_curvature <= 1.0:
            raise ValueError("gain_curvature must lie in (0, 1]")
        if not 0.0 < self.loss_curvature <= 1.0:
            raise ValueError("loss_curvature must lie in (0, 1]")
        if self.loss_aversion < 1.0:
            raise ValueError("loss_aversion must be >= 1")
        if not WEIGHT_CURVE_MIN < self.weight_curvature <= 1.0:
            raise ValueError(
                f"weight_curvature must lie in ({WEIGHT_CURVE_MIN}, 1]"
            )
        if not np.isfinite(self.reference):
            raise ValueError("reference must be finite")
        # Cheap guard: the admissible range is chosen so the weighting curve
        # is strictly increasing; verify on a grid at construction time.
        grid = np.linspace(0.0, 1.0, 101)
        values = [_weight(p, self.weight_curvature) for p in grid]
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("weighting curve not monotone for these parameters")


def _weight(p: float, curve: float) -> float:
    num = p**curve
    return num / (num + (1.0 - p) ** curve) ** (1.0 / curve)


def pt_value(outcome: float, params: ProspectParams) -> float:
    """Reference-dependent value: concave power gains, amplified power losses."""
    x = float(outcome)
    if not np.isfinite(x):
        raise ValueError("outcome must be finite")
    g = x - params.reference
    if g >= 0.0:
        return g**params.gain_curvature
    return -params.loss_aversion * (-g) ** params.loss_curvature


def pt_weight(p: float, params: ProspectParams) -> float:
    """Probability weighting; maps [0, 1] onto [0, 1] with exact endpoints."""
    q = float(p)
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"probability {q!r} outside [0, 1]")
    return _weight(q, params.weight_curvature)


def pt_evaluate(lottery: Lottery, params: ProspectParams) -> float:
    """Sum of weighted probabilities times valued outcomes."""
    return sum(
        pt_weight(p, params) * pt_value(x, params)
        for x, p in zip(lottery.outcomes, lottery.probs)
    )


InequityMetric = Literal["range", "mean_deviation"]


@dataclass(frozen=True)
class SocialPrefParams:
    """Linear blend of own payoff, altruism, inequity aversion, and envy."""

    selfish_weight: float = 1.0
    altruism_weight: float = 0.0
    inequity_weight: float = 0.0
    envy_weight: float = 0.0
    inequity_metric: InequityMetric = "range"

    def __post_init__(self) -> None:
        weights = (
            self.selfish_weight,
            self.altruism_weight,
            self.inequity_weight,
            self.envy_weight,
        )
        if any(not np.isfinite(w) or w < 0 for w in weights):
            raise ValueError("social preference weights must be nonnegative")
        if all(w == 0 for w in weights):
            raise ValueError("at least one social preference weight must be positive")
        if self.inequity_metric not in ("range", "mean_deviation"):
            raise ValueError(f"unknown inequity metric {self.inequity_metric!r}")


def _inequity(base: np.ndarray, metric: InequityMetric) -> float:
    if metric == "range":
        return float(base.max() - base.min())
    return float(np.mean(np.abs(base - base.mean())))


def social_utility(
    base_payoffs: Sequence[float], player: int, params: SocialPrefParams
) -> float:
    """Recompose one payoff vector from ``player``'s social point of view."""
    base = np.asarray(list(base_payoffs), dtype=float)
    if base.size == 0:
        raise ValueError("base_payoffs must be nonempty")
    if not np.all(np.isfinite(base)):
        raise ValueError("base payoffs must be finite")
    if not 0 <= player < base.size:
        raise ValueError(f"player {player} out of range for {base.size} payoffs")
    own = base[player]
    others = float(base.sum() - own)
    envy = max(0.0, float(base.max()) - own)
    return float(
        params.selfish_weight * own
        + params.altruism_weight * others
        - params.inequity_weight * _inequity(base, params.inequity_metric)
        - params.envy_weight * envy
    )


def transform_game_social(
    game: NormalFormGame, params_per_player: Sequence[SocialPrefParams]
) -> NormalFormGame:
    """New game whose payoffs are each cell recomposed via social_utility.

    All-selfish parameters (weight 1, everything else 0) reproduce the input
    game exactly.
    """
    if len(params_per_player) != game.num_players:
        raise ValueError(
            f"need one SocialPrefParams per player "
            f"({game.num_players}), got {len(params_per_player)}"
        )
    tensor = np.empty_like(game.payoffs)
    flat_cells = np.ndindex(*game.action_counts)
    for cell in flat_cells:
        base = game.payoffs[(slice(None),) + cell]
        for player, params in enumerate(params_per_player):
            tensor[(player,) + cell] = social_utility(base, player, params)
    return NormalFormGame(game.action_counts, tensor)
