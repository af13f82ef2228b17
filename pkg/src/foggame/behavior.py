"""Bounded-rational choice models over normal-form games.

Every model maps ``(game, player)`` to a mixed strategy.  The family covers:

* ``BestResponse`` — exact best response to uniform opponent play, ties
  broken uniformly.
* ``EpsilonNash`` — play the first pure Nash profile's action with
  probability ``1 - epsilon``, spreading ``epsilon`` over the rest.
* ``LogitQBR`` — the player's component of the logit quantal-response fixed
  point for the whole game.
* ``LevelK`` — iterated best/logit response seeded at a level-0 anchor,
  mixed across levels by an explicit weight vector.
* ``CognitiveHierarchy`` — each level responds to a truncated, renormalized
  Poisson mixture of all strictly lower levels.
* ``NoisyIntrospection`` — iterated logit response whose precision decays
  geometrically with reasoning depth, truncated at a uniform anchor.

All predictions are deterministic; sampling lives in :mod:`foggame.estimation`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence, Union

import numpy as np
from scipy.optimize import root

from .games import (
    Belief,
    MixedStrategy,
    NormalFormGame,
    best_response_set,
    expected_utility,
    pure_nash,
)

PROB_SUM_TOL = 1e-9


class NoEquilibriumError(ValueError):
    """Raised when a model requires a pure Nash profile and none exists."""


class FixedPointError(RuntimeError):
    """Quantal-response iteration failed to reach the residual tolerance.

    Carries the last iterate and its residual so callers can inspect how
    close the search got.
    """

    def __init__(self, message: str, profile: list[MixedStrategy], residual: float):
        super().__init__(message)
        self.profile = profile
        self.residual = residual


def logit_qbr(utilities: Sequence[float], precision: float) -> MixedStrategy:
    """Logit choice over a utility vector.

    Weight of action i is ``exp(precision * u_i)`` normalized over all
    actions.  ``precision = 0`` returns the exact uniform distribution; large
    precision concentrates on the argmax.  The maximum utility is subtracted
    before exponentiation so large magnitudes cannot overflow.
    """
    u = np.asarray(list(utilities), dtype=float)
    if u.size == 0:
        raise ValueError("utilities must be nonempty")
    if not np.all(np.isfinite(u)):
        raise ValueError("utilities must be finite")
    lam = float(precision)
    if not np.isfinite(lam) or lam < 0.0:
        raise ValueError("precision must be a finite nonnegative real")
    z = lam * u
    z -= z.max()
    w = np.exp(z)
    w /= w.sum()
    return MixedStrategy(tuple(float(x) for x in w))


def _uniform_profile(game: NormalFormGame) -> list[MixedStrategy]:
    return [MixedStrategy.uniform(n) for n in game.action_counts]


def _eu_vector(
    game: NormalFormGame, player: int, profile: Sequence[MixedStrategy]
) -> list[float]:
    belief = Belief.from_profile(profile, player)
    return [
        expected_utility(game, player, a, belief)
        for a in range(game.action_counts[player])
    ]


def _br_uniform(game: NormalFormGame, player: int, profile: Sequence[MixedStrategy]) -> MixedStrategy:
    """Uniform distribution over exact best responses to ``profile``."""
    belief = Belief.from_profile(profile, player)
    support = best_response_set(game, player, belief)
    n = game.action_counts[player]
    w = [0.0] * n
    for a in support:
        w[a] = 1.0 / len(support)
    return MixedStrategy(tuple(w))


def _softmax(z: np.ndarray) -> np.ndarray:
    w = np.exp(z - z.max())
    return w / w.sum()


def _profile_slices(counts: Sequence[int]) -> list[slice]:
    edges = np.concatenate([[0], np.cumsum(counts)])
    return [slice(int(a), int(b)) for a, b in zip(edges, edges[1:])]


def _project_profile(x: np.ndarray, slices: Sequence[slice]) -> np.ndarray | None:
    """Clip each player's block to the simplex; None if a block collapses."""
    out = np.clip(x, 0.0, None)
    for block in slices:
        total = out[block].sum()
        if not np.isfinite(total) or total <= 0.0:
            return None
        out[block] /= total
    return out


def _raw_eu(game: NormalFormGame, player: int, arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Expected-utility vector without distribution validation.

    Accepts arbitrary real weight vectors (root-finding probes may step
    slightly off the simplex); contracts opponent axes highest-first so
    remaining axis indices stay put.
    """
    t = game.payoffs[player]
    for j in range(game.num_players - 1, -1, -1):
        if j != player:
            t = np.tensordot(t, arrays[j], axes=(j, 0))
    return t


def qbr_equilibrium(
    game: NormalFormGame,
    precision: float,
    damping: float = 0.5,
    max_iters: int = 10_000,
    tol: float = 1e-10,
) -> list[MixedStrategy]:
    """Damped fixed-point iteration for the logit quantal-response equilibrium.

    Starting from the uniform profile, each step moves every player's
    mixture a ``damping`` fraction toward their logit response to the
    current profile.  Two safeguards handle games where the plain iteration
    cycles or spirals too slowly (adversarial payoffs at high precision):
    when the residual stops improving, the iterate is polished with a
    root-finder seeded at the best point so far, and failing that the step
    is halved and the search resumes from that best point.  The returned
    profile always satisfies ``max |sigma - response(sigma)| < tol``;
    :class:`FixedPointError` carries the best iterate and its residual when
    no such point is found within ``max_iters`` response evaluations.
    Deterministic throughout.
    """
    lam = float(precision)
    if not np.isfinite(lam) or lam < 0.0:
        raise ValueError("precision must be a finite nonnegative real")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if tol <= 0.0:
        raise ValueError("tol must be positive")

    counts = game.action_counts
    slices = _profile_slices(counts)

    def response(x: np.ndarray) -> np.ndarray:
        arrays = [x[b] for b in slices]
        return np.concatenate(
            [
                _softmax(lam * _raw_eu(game, p, arrays))
                for p in range(game.num_players)
            ]
        )

    def as_profile(x: np.ndarray) -> list[MixedStrategy]:
        return [MixedStrategy(tuple(float(v) for v in x[b])) for b in slices]

    x = np.concatenate([np.full(n, 1.0 / n) for n in counts])
    step = damping
    min_step = 1e-3
    stall_limit = 30
    best_x = x
    best_residual = math.inf
    stall = 0
    residual = math.inf
    for _ in range(max_iters):
        f = response(x) - x
        residual = float(np.max(np.abs(f)))
        if residual < tol:
            return as_profile(x)
        if residual < best_residual:
            best_residual = residual
            best_x = x
            stall = 0
        else:
            stall += 1

        if residual > 4.0 * best_residual:
            # Blown well past the best point: retreat there, smaller step.
            step = max(step * 0.5, min_step)
            x = best_x
            stall = 0
            continue
        if stall >= stall_limit:
            polished = _project_profile(
                root(lambda y: response(y) - y, best_x, method="hybr").x, slices
            )
            if polished is not None:
                f_p = response(polished) - polished
                if float(np.max(np.abs(f_p))) < best_residual:
                    x = polished
                    stall = 0
                    continue
            step = max(step * 0.5, min_step)
            x = best_x
            stall = 0
            continue
        x = _project_profile(x + step * f, slices)
    raise FixedPointError(
        f"no fixed point within {max_iters} iterations (residual {best_residual:.3e})",
        as_profile(best_x),
        best_residual,
    )


Level0 = Union[tuple[MixedStrategy, ...], None]
ResponseKind = Literal["exact_br", "qbr"]


def _check_level0(game: NormalFormGame, level0: Level0) -> list[MixedStrategy]:
    if level0 is None:
        return _uniform_profile(game)
    if len(level0) != game.num_players:
        raise ValueError(
            f"level-0 profile has {len(level0)} strategies for "
            f"{game.num_players} players"
        )
    for i, strat in enumerate(level0):
        if strat.num_actions != game.action_counts[i]:
            raise ValueError(f"level-0 strategy for player {i} has the wrong length")
    return list(level0)


def _respond(
    game: NormalFormGame,
    player: int,
    profile: Sequence[MixedStrategy],
    response: ResponseKind,
    precision: float | None,
) -> MixedStrategy:
    if response == "exact_br":
        return _br_uniform(game, player, profile)
    return logit_qbr(_eu_vector(game, player, profile), float(precision))


def _check_response(response: str, precision: float | None) -> None:
    if response not in ("exact_br", "qbr"):
        raise ValueError(f"unknown response kind {response!r}")
    if response == "qbr":
        if precision is None or not np.isfinite(precision) or precision < 0:
            raise ValueError("qbr response requires a nonnegative precision")
    elif precision is not None:
        raise ValueError("precision is only meaningful for the qbr response")


@dataclass(frozen=True)
class BestResponse:
    """Exact best response to uniform opponent play; ties broken uniformly."""

    def predict(self, game: NormalFormGame, player: int) -> MixedStrategy:
        return _br_uniform(game, player, _uniform_profile(game))


@dataclass(frozen=True)
class EpsilonNash:
    """Nash play with an epsilon chance of spreading over the other actions.

    The target profile is the lexicographically first pure Nash equilibrium.
    With no pure equilibrium the model either raises
    :class:`NoEquilibriumError` or falls back to uniform, per
    ``no_nash_fallback``.
    """

    epsilon: float
    no_nash_fallback: Literal["error", "uniform"] = "error"

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.no_nash_fallback not in ("error", "uniform"):
            raise ValueError(f"unknown fallback {self.no_nash_fallback!r}")

    def predict(self, game: NormalFormGame, player: int) -> MixedStrategy:
        if not 0 <= player < game.num_players:
            raise ValueError(f"player {player} out of range")
        equilibria = pure_nash(game)
        n = game.action_counts[player]
        if not equilibria:
            if self.no_nash_fallback == "uniform":
                return MixedStrategy.uniform(n)
            raise NoEquilibriumError("game has no pure Nash equilibrium")
        target = equilibria[0][player]
        if n == 1:
            return MixedStrategy.point_mass(0, 1)
        w = [self.epsilon / (n - 1)] * n
        w[target] = 1.0 - self.epsilon
        return MixedStrategy(tuple(w))


@dataclass(frozen=True)
class LogitQBR:
    """Logit quantal-response equilibrium play at a fixed precision."""

    precision: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.precision) or self.precision < 0:
            raise ValueError("precision must be a finite nonnegative real")

    def predict(self, game: NormalFormGame, player: int) -> MixedStrategy:
        if not 0 <= player < game.num_players:
            raise ValueError(f"player {player} out of range")
        return qbr_equilibrium(game, self.precision)[player]


def _level_profiles(
    game: NormalFormGame,
    top_level: int,
    level0: Level0,
    response: ResponseKind,
    precision: float | None,
) -> list[list[MixedStrategy]]:
    """Strategy profile for every level 0..top_level.

    Level k players respond to opponents playing their level k-1 strategies.
    """
    levels = [_check_level0(game, level0)]
    for _ in range(top_level):
        prev = levels[-1]
        levels.append(
            [
                _respond(game, p, prev, response, precision)
                for p in range(game.num_players)
            ]
        )
    return levels


@dataclass(frozen=True)
class LevelK:
    """Mixture over iterated-response levels.

    ``level_weights[k]`` is the share of level-k reasoners; the prediction is
    the weight-mixed strategy of the requested player across levels
    ``0..len(level_weights) - 1``.
    """

    level_weights: tuple[float, ...]
    level0: Level0 = None
    response: ResponseKind = "exact_br"
    precision: float | None = None

    def __post_init__(self) -> None:
        weights = tuple(float(w) for w in self.level_weights)
        if not weights:
            raise ValueError("level_weights must be nonempty")
        if any(w < 0 or not np.isfinite(w) for w in weights):
            raise ValueError("level weights must be nonnegative")
        if abs(sum(weights) - 1.0) > PROB_SUM_TOL:
            raise ValueError("level weights must sum to 1")
        _check_response(self.response, self.precision)
        object.__setattr__(self, "level_weights", weights)
        if self.level0 is not None:
            object.__setattr__(self, "level0", tuple(self.level0))

    def predict(self, game: NormalFormGame, player: int) -> MixedStrategy:
        if not 0 <= player < game.num_players:
            raise ValueError(f"player {player} out of range")
        top = len(self.level_weights) - 1
        levels = _level_profiles(game, top, self.level0, self.response, self.precision)
        mixed = np.zeros(game.action_counts[player])
        for w, profile in zip(self.level_weights, levels):
            mixed += w * profile[player].as_array()
        return MixedStrategy(tuple(float(x) for x in mixed))


def _truncated_poisson(mean: float, count: int) -> np.ndarray:
    """Poisson(mean) pmf over 0..count-1, renormalized to sum to one."""
    logs = [k * math.log(mean) - math.lgamma(k + 1) for k in range(count)]
    top = max(logs)
    w = np.exp(np.asarray(logs) - top)
    return w / w.sum()


@dataclass(frozen=True)
class CognitiveHierarchy:
    """Poisson cognitive hierarchy.

    A level-k player responds to the mixture of levels ``0..k-1`` weighted by
    a Poisson pmf truncated and renormalized over those levels.  ``predict``
    returns the top-level agent's strategy; ``predict_population`` returns
    the Poisson-weighted population mixture over all modeled levels.
    """

    poisson_mean: float
    max_level: int
    level0: Level0 = None
    response: ResponseKind = "exact_br"
    precision: float | None = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.poisson_mean) or self.poisson_mean <= 0:
            raise ValueError("poisson_mean must be positive")
        if self.max_level < 1:
            raise ValueError("max_level must be >= 1")
        _check_response(self.response, self.precision)
        if self.level0 is not None:
            object.__setattr__(self, "level0", tuple(self.level0))

    def _levels(self, game: NormalFormGame) -> list[list[MixedStrategy]]:
        levels = [_check_level0(game, self.level0)]
        pmf = _truncated_poisson(self.poisson_mean, self.max_level + 1)
        for k in range(1, self.max_level + 1):
            share = pmf[:k] / pmf[:k].sum()
            opponent_mix: list[MixedStrategy] = []
            for p in range(game.num_players):
                acc = np.zeros(game.action_counts[p])
                for weight, profile in zip(share, levels):
                    acc += weight * profile[p].as_array()
                opponent_mix.append(MixedStrategy(tuple(float(x) for x in acc)))
            levels.append(
                [
                    _respond(game, p, opponent_mix, self.response, self.precision)
                    for p in range(game.num_players)
                ]
            )
        return levels

    def predict(self, game: NormalFormGame, player: int) -> MixedStrategy:
        if not 0 <= player < game.num_players:
            raise ValueError(f"player {player} out of range")
        return self._levels(game)[self.max_level][player]

    def predict_population(self, game: NormalFormGame, player: int) -> MixedStrategy:
        """Mixture of all levels 0..max_level under the truncated Poisson."""
        if not 0 <= player < game.num_players:
            raise ValueError(f"player {player} out of range")
        levels = self._levels(game)
        pmf = _truncated_poisson(self.poisson_mean, self.max_level + 1)
        acc = np.zeros(game.action_counts[player])
        for weight, profile in zip(pmf, levels):
            acc += weight * profile[player].as_array()
        return MixedStrategy(tuple(float(x) for x in acc))


@dataclass(frozen=True)
class NoisyIntrospection:
    """Iterated logit response with geometrically decaying precision.

    The response at depth d uses precision ``precision * decay ** d``; the
    recursion starts from a uniform profile at ``max_depth`` (where the
    decayed precision makes the response approximately uniform anyway) and
    returns the depth-0 output.
    """

    precision: float
    decay: float
    max_depth: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.precision) or self.precision < 0:
            raise ValueError("precision must be a finite nonnegative real")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie strictly inside (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")

    def predict(self, game: NormalFormGame, player: int) -> MixedStrategy:
        if not 0 <= player < game.num_players:
            raise ValueError(f"player {player} out of range")
        profile = _uniform_profile(game)
        for depth in range(self.max_depth - 1, -1, -1):
            lam = self.precision * self.decay**depth
            profile = [
                logit_qbr(_eu_vector(game, p, profile), lam)
                for p in range(game.num_players)
            ]
        return profile[player]


BehavioralModel = Union[
    BestResponse,
    EpsilonNash,
    LogitQBR,
    LevelK,
    CognitiveHierarchy,
    NoisyIntrospection,
]


def predict(model: BehavioralModel, game: NormalFormGame, player: int) -> MixedStrategy:
    """Dispatch: the model's predicted mixed strategy for ``player``."""
    return model.predict(game, player)


_MODEL_TAGS = {
    BestResponse: "best_response",
    EpsilonNash: "epsilon_nash",
    LogitQBR: "logit_qbr",
    LevelK: "level_k",
    CognitiveHierarchy: "cognitive_hierarchy",
    NoisyIntrospection: "noisy_introspection",
}


def _level0_to_json(level0: Level0):
    if level0 is None:
        return "uniform"
    return [list(s.weights) for s in level0]


def _level0_from_json(data) -> Level0:
    if data is None or data == "uniform":
        return None
    return tuple(MixedStrategy(tuple(row)) for row in data)


def model_to_dict(model: BehavioralModel) -> dict:
    """Tagged JSON-friendly form: ``{"model": tag, "params": {...}}``."""
    tag = _MODEL_TAGS.get(type(model))
    if tag is None:
        raise ValueError(f"unknown model type {type(model).__name__}")
    params: dict = {}
    if isinstance(model, EpsilonNash):
        params = {"epsilon": model.epsilon, "no_nash_fallback": model.no_nash_fallback}
    elif isinstance(model, LogitQBR):
        params = {"precision": model.precision}
    elif isinstance(model, LevelK):
        params = {
            "level_weights": list(model.level_weights),
            "level0": _level0_to_json(model.level0),
            "response": model.response,
        }
        if model.precision is not None:
            params["precision"] = model.precision
    elif isinstance(model, CognitiveHierarchy):
        params = {
            "poisson_mean": model.poisson_mean,
            "max_level": model.max_level,
            "level0": _level0_to_json(model.level0),
            "response": model.response,
        }
        if model.precision is not None:
            params["precision"] = model.precision
    elif isinstance(model, NoisyIntrospection):
        params = {
            "precision": model.precision,
            "decay": model.decay,
            "max_depth": model.max_depth,
        }
    return {"model": tag, "params": params}


def model_from_dict(data: dict) -> BehavioralModel:
    """Inverse of :func:`model_to_dict`; raises ``ValueError`` on bad input."""
    if not isinstance(data, dict) or "model" not in data:
        raise ValueError("model record needs a 'model' tag")
    tag = data["model"]
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ValueError("'params' must be an object")
    try:
        if tag == "best_response":
            return BestResponse()
        if tag == "epsilon_nash":
            return EpsilonNash(
                epsilon=float(params["epsilon"]),
                no_nash_fallback=params.get("no_nash_fallback", "error"),
            )
        if tag == "logit_qbr":
            return LogitQBR(precision=float(params["precision"]))
        if tag == "level_k":
            return LevelK(
                level_weights=tuple(float(w) for w in params["level_weights"]),
                level0=_level0_from_json(params.get("level0")),
                response=params.get("response", "exact_br"),
                precision=(
                    float(params["precision"]) if "precision" in params else None
                ),
            )
        if tag == "cognitive_hierarchy":
            return CognitiveHierarchy(
                poisson_mean=float(params["poisson_mean"]),
                max_level=int(params["max_level"]),
                level0=_level0_from_json(params.get("level0")),
                response=params.get("response", "exact_br"),
                precision=(
                    float(params["precision"]) if "precision" in params else None
                ),
            )
        if tag == "noisy_introspection":
            return NoisyIntrospection(
                precision=float(params["precision"]),
                decay=float(params["decay"]),
                max_depth=int(params["max_depth"]),
            )
    except KeyError as exc:
        raise ValueError(f"model {tag!r} missing parameter {exc}") from exc
    raise ValueError(f"unknown model tag {tag!r}")
