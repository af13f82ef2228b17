"""Finite normal-form games: payoff tensors, beliefs, best responses, pure Nash.

A game with N players is stored as one payoff tensor per player over the joint
action space.  Beliefs are independent per-opponent mixed strategies; expected
utility contracts the owner's payoff tensor against those marginals.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

# Actions whose expected utility is within TIE_TOL of the maximum count as
# best responses; pure_nash applies the same slack to deviation checks.
TIE_TOL = 1e-9
# Mixed-strategy weights must sum to one within this.
PROB_SUM_TOL = 1e-9
_WEIGHT_EPS = 1e-12


@dataclass(frozen=True)
class MixedStrategy:
    """Probability distribution over a single player's actions."""

    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        weights = tuple(float(w) for w in self.weights)
        if not weights:
            raise ValueError("MixedStrategy needs at least one action weight")
        for w in weights:
            if not np.isfinite(w) or w < -_WEIGHT_EPS or w > 1.0 + _WEIGHT_EPS:
                raise ValueError(f"weight {w!r} outside [0, 1]")
        total = sum(weights)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, num_actions: int) -> "MixedStrategy":
        if num_actions < 1:
            raise ValueError("num_actions must be >= 1")
        return cls((1.0 / num_actions,) * num_actions)

    @classmethod
    def point_mass(cls, action: int, num_actions: int) -> "MixedStrategy":
        if not 0 <= action < num_actions:
            raise ValueError(f"action {action} out of range for {num_actions} actions")
        w = [0.0] * num_actions
        w[action] = 1.0
        return cls(tuple(w))

    @property
    def num_actions(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def mix(self, other: "MixedStrategy", weight_other: float) -> "MixedStrategy":
        """Convex combination (1 - t) * self + t * other."""
        if self.num_actions != other.num_actions:
            raise ValueError("cannot mix strategies over different action counts")
        t = float(weight_other)
        if not 0.0 <= t <= 1.0:
            raise ValueError("mixing weight must lie in [0, 1]")
        merged = (1.0 - t) * self.as_array() + t * other.as_array()
        return MixedStrategy(tuple(merged))


@dataclass(frozen=True)
class Belief:
    """One player's belief: an independent mixed strategy per opponent.

    ``opponents`` is ordered by increasing opponent player index (the owner
    skipped), so for a 3-player game belief of player 1 holds strategies for
    players (0, 2) in that order.
    """

    owner: int
    opponents: tuple[MixedStrategy, ...]

    def __post_init__(self) -> None:
        if self.owner < 0:
            raise ValueError("owner must be a valid player index")
        object.__setattr__(self, "opponents", tuple(self.opponents))

    @classmethod
    def from_profile(cls, profile: Sequence[MixedStrategy], owner: int) -> "Belief":
        """Belief of ``owner`` when all players follow ``profile``."""
        if not 0 <= owner < len(profile):
            raise ValueError(f"owner {owner} out of range for {len(profile)} players")
        return cls(owner, tuple(s for i, s in enumerate(profile) if i != owner))


@dataclass(frozen=True, eq=False)
class NormalFormGame:
    """N-player finite game.

    ``payoffs`` has shape ``(num_players, *action_counts)``; entry
    ``payoffs[i, a_0, ..., a_{N-1}]`` is player i's payoff at that joint
    action profile.
    """

    action_counts: tuple[int, ...]
    payoffs: np.ndarray

    def __post_init__(self) -> None:
        counts = tuple(int(n) for n in self.action_counts)
        if not counts:
            raise ValueError("game needs at least one player")
        if any(n < 1 for n in counts):
            raise ValueError("every player needs at least one action")
        tensor = np.asarray(self.payoffs, dtype=float)
        expected = (len(counts),) + counts
        if tensor.shape != expected:
            raise ValueError(f"payoff tensor shape {tensor.shape} != expected {expected}")
        if not np.all(np.isfinite(tensor)):
            raise ValueError("payoffs must be finite")
        tensor = tensor.copy()
        tensor.setflags(write=False)
        object.__setattr__(self, "action_counts", counts)
        object.__setattr__(self, "payoffs", tensor)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NormalFormGame):
            return NotImplemented
        return self.action_counts == other.action_counts and np.array_equal(
            self.payoffs, other.payoffs
        )

    def __hash__(self) -> int:
        return hash((self.action_counts, self.payoffs.tobytes()))

    @property
    def num_players(self) -> int:
        return len(self.action_counts)

    @classmethod
    def two_player(
        cls,
        row_payoffs: Sequence[Sequence[float]],
        col_payoffs: Sequence[Sequence[float]],
    ) -> "NormalFormGame":
        a = np.asarray(row_payoffs, dtype=float)
        b = np.asarray(col_payoffs, dtype=float)
        if a.shape != b.shape or a.ndim != 2:
            raise ValueError("row/column payoff matrices must share a 2-D shape")
        return cls((a.shape[0], a.shape[1]), np.stack([a, b]))

    def payoff(self, player: int, profile: Sequence[int]) -> float:
        _check_player(self, player)
        idx = tuple(int(a) for a in profile)
        if len(idx) != self.num_players:
            raise ValueError("profile length must equal the number of players")
        for i, a in enumerate(idx):
            if not 0 <= a < self.action_counts[i]:
                raise ValueError(f"action {a} out of range for player {i}")
        return float(self.payoffs[(player,) + idx])

    def to_dict(self) -> dict:
        return {
            "action_counts": list(self.action_counts),
            "payoffs": {
                str(p): [float(x) for x in self.payoffs[p].ravel(order="C")]
                for p in range(self.num_players)
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormalFormGame":
        try:
            counts = tuple(int(n) for n in data["action_counts"])
            raw = data["payoffs"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed game record: {exc}") from exc
        if not counts:
            raise ValueError("game needs at least one player")
        tensors = []
        for p in range(len(counts)):
            key = str(p)
            if key not in raw:
                raise ValueError(f"missing payoffs for player {p}")
            flat = np.asarray(raw[key], dtype=float)
            size = int(np.prod(counts))
            if flat.size != size:
                raise ValueError(
                    f"player {p} has {flat.size} payoff entries, expected {size}"
                )
            tensors.append(flat.reshape(counts, order="C"))
        return cls(counts, np.stack(tensors))


def save_game(game: NormalFormGame, path: str | Path) -> None:
    Path(path).write_text(json.dumps(game.to_dict(), sort_keys=True, indent=2) + "\n")


def load_game(path: str | Path) -> NormalFormGame:
    return NormalFormGame.from_dict(json.loads(Path(path).read_text()))


def _check_player(game: NormalFormGame, player: int) -> None:
    if not 0 <= player < game.num_players:
        raise ValueError(f"player {player} out of range for {game.num_players} players")


def _check_belief(game: NormalFormGame, player: int, belief: Belief) -> None:
    if belief.owner != player:
        raise ValueError(f"belief owned by player {belief.owner}, expected {player}")
    opponents = [i for i in range(game.num_players) if i != player]
    if len(belief.opponents) != len(opponents):
        raise ValueError(
            f"belief has {len(belief.opponents)} opponent strategies, "
            f"expected {len(opponents)}"
        )
    for opp, strat in zip(opponents, belief.opponents):
        if strat.num_actions != game.action_counts[opp]:
            raise ValueError(
                f"strategy for player {opp} has {strat.num_actions} actions, "
                f"expected {game.action_counts[opp]}"
            )


def expected_utility(
    game: NormalFormGame, player: int, action: int, belief: Belief
) -> float:
    """Expected payoff of ``action`` for ``player`` under independent beliefs."""
    _check_player(game, player)
    if not 0 <= action < game.action_counts[player]:
        raise ValueError(f"action {action} out of range for player {player}")
    _check_belief(game, player, belief)
    # Fix the player's own axis, then contract the remaining axes (ordered by
    # opponent player index) against the per-opponent marginals.
    sub = np.take(game.payoffs[player], action, axis=player)
    for strat in belief.opponents:
        sub = np.tensordot(strat.as_array(), sub, axes=([0], [0]))
    return float(sub)


def best_response_set(game: NormalFormGame, player: int, belief: Belief) -> list[int]:
    """Actions within ``TIE_TOL`` of the maximal expected utility, ascending."""
    _check_player(game, player)
    values = [
        expected_utility(game, player, a, belief)
        for a in range(game.action_counts[player])
    ]
    top = max(values)
    return [a for a, v in enumerate(values) if v >= top - TIE_TOL]


def pure_nash(game: NormalFormGame) -> list[tuple[int, ...]]:
    """All pure-strategy Nash profiles, in lexicographic order.

    A profile qualifies when no player has a unilateral deviation that
    improves their payoff by more than ``TIE_TOL``.
    """
    equilibria: list[tuple[int, ...]] = []
    ranges = [range(n) for n in game.action_counts]
    for profile in itertools.product(*ranges):
        stable = True
        for player in range(game.num_players):
            here = game.payoffs[(player,) + profile]
            best = here
            for dev in range(game.action_counts[player]):
                alt = profile[:player] + (dev,) + profile[player + 1 :]
                val = game.payoffs[(player,) + alt]
                if val > best:
                    best = val
            if best > here + TIE_TOL:
                stable = False
                break
        if stable:
            equilibria.append(profile)
    return equilibria
