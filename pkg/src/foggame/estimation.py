"""Fitting behavioral-model parameters to observed choices.

An observation is one discrete choice: a game, the player who moved, and the
action they picked.  A model family maps a parameter vector to a behavioral
model; the log-likelihood of the vector sums the log predicted probability
of each chosen action.  Fitting is derivative-free — a coarse grid over the
parameter box followed by golden-section coordinate refinement — because the
likelihood surfaces of mixture models are piecewise-smooth with plateaus
where gradient methods stall.

Predicted probabilities are floored at ``PROB_FLOOR`` before the log so a
single zero-probability observation (possible under degenerate models such
as a hard best response) cannot send the objective to −∞.  Outputs record
the floor so downstream consumers can see it was in effect.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .behavior import EpsilonNash, LevelK, LogitQBR, predict
from .games import NormalFormGame

PROB_FLOOR = 1e-12

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

_SEARCH_DEFAULTS = {"grid_points": 11, "refine_iters": 40}


@dataclass(frozen=True)
class Observation:
    """One observed discrete choice."""

    game: NormalFormGame
    player: int
    action: int

    def __post_init__(self) -> None:
        if not 0 <= self.player < self.game.num_players:
            raise ValueError(f"player {self.player} out of range")
        if not 0 <= self.action < self.game.action_counts[self.player]:
            raise ValueError(
                f"action {self.action} out of range for player {self.player}"
            )


@dataclass(frozen=True)
class ObservationDataset:
    observations: tuple[Observation, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "observations", tuple(self.observations))

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    def subset(self, indices: Sequence[int]) -> ObservationDataset:
        return ObservationDataset(tuple(self.observations[i] for i in indices))


def save_observations(dataset: ObservationDataset, path: str | Path) -> None:
    """Write one JSON object per line: {"game": ..., "player": ..., "action": ...}."""
    with open(path, "w") as handle:
        for obs in dataset:
            record = {
                "game": obs.game.to_dict(),
                "player": obs.player,
                "action": obs.action,
            }
            handle.write(json.dumps(record) + "\n")


def load_observations(path: str | Path) -> ObservationDataset:
    """Read a JSON-lines observation file.

    Blank lines are ignored.  Malformed lines do not abort the scan; they are
    collected and reported together in a single error naming every offending
    line number.
    """
    observations: list[Observation] = []
    bad: list[tuple[int, str]] = []
    with open(path) as handle:
        for line_number, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                record = json.loads(text)
                game = NormalFormGame.from_dict(record["game"])
                observations.append(
                    Observation(
                        game=game,
                        player=int(record["player"]),
                        action=int(record["action"]),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                bad.append((line_number, str(exc)))
    if bad:
        numbers = ", ".join(str(n) for n, _ in bad)
        raise ValueError(
            f"malformed observation lines: {numbers} (first error: {bad[0][1]})"
        )
    return ObservationDataset(tuple(observations))


@dataclass(frozen=True)
class ModelFamily:
    """A named, parameterized slice of model space.

    ``build`` maps a parameter vector to a behavioral model and raises
    ``ValueError`` for invalid parameters.  ``simplex_groups`` lists index
    groups (e.g. mixture weights) that are normalized to sum to one inside
    ``build``, which makes the likelihood scale-invariant within each group.
    """

    name: str
    param_names: tuple[str, ...]
    build: Callable[[tuple[float, ...]], object]
    simplex_groups: tuple[tuple[int, ...], ...] = ()

    @property
    def num_params(self) -> int:
        return len(self.param_names)


def qbr_family() -> ModelFamily:
    """Logit quantal-response-equilibrium family; one precision parameter."""

    def build(theta: tuple[float, ...]) -> LogitQBR:
        return LogitQBR(precision=theta[0])

    return ModelFamily(name="logit_qbr", param_names=("precision",), build=build)


def epsilon_nash_family(no_nash_fallback: str = "uniform") -> ModelFamily:
    """Nash-with-trembles family; one error-rate parameter.

    The uniform fallback keeps the likelihood defined on games without a
    pure equilibrium (those observations are then uninformative about the
    error rate rather than fatal).
    """

    def build(theta: tuple[float, ...]) -> EpsilonNash:
        return EpsilonNash(epsilon=theta[0], no_nash_fallback=no_nash_fallback)

    return ModelFamily(name="epsilon_nash", param_names=("epsilon",), build=build)


def level_k_family(
    num_levels: int,
    response: str = "exact_br",
    fixed_precision: float | None = None,
) -> ModelFamily:
    """Mixture over reasoning levels 0..num_levels-1.

    Parameters are the level weights (a simplex group, renormalized inside
    ``build``) plus a trailing precision parameter when ``response`` is
    ``"qbr"`` and no fixed precision is supplied.
    """
    if num_levels < 1:
        raise ValueError("num_levels must be >= 1")
    names = tuple(f"weight_{k}" for k in range(num_levels))
    fit_precision = response == "qbr" and fixed_precision is None
    if fit_precision:
        names = names + ("precision",)

    def build(theta: tuple[float, ...]) -> LevelK:
        weights = np.asarray(theta[:num_levels], dtype=float)
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("level weights must be finite and nonnegative")
        total = float(weights.sum())
        if total <= 0:
            raise ValueError("level weights must not all be zero")
        weights = weights / total
        precision = None
        if response == "qbr":
            precision = theta[num_levels] if fit_precision else fixed_precision
        return LevelK(
            level_weights=tuple(float(w) for w in weights),
            response=response,  # type: ignore[arg-type]
            precision=precision,
        )

    return ModelFamily(
        name=f"level_k_{num_levels}",
        param_names=names,
        build=build,
        simplex_groups=(tuple(range(num_levels)),),
    )


def log_likelihood(
    family: ModelFamily,
    theta: Sequence[float],
    data: ObservationDataset,
) -> float:
    """Sum of log predicted probabilities of the chosen actions.

    Probabilities are floored at ``PROB_FLOOR``, so the result is always
    finite.  Predictions are computed once per distinct (game, player) pair.
    """
    model = family.build(tuple(float(x) for x in theta))
    cache: dict[tuple[NormalFormGame, int], tuple[float, ...]] = {}
    total = 0.0
    for obs in data:
        key = (obs.game, obs.player)
        weights = cache.get(key)
        if weights is None:
            weights = predict(model, obs.game, obs.player).weights
            cache[key] = weights
        total += math.log(max(weights[obs.action], PROB_FLOOR))
    return total


@dataclass(frozen=True)
class FitResult:
    params: tuple[float, ...]
    log_likelihood: float
    evaluations: int
    param_names: tuple[str, ...] = ()
    cv_score: float | None = None

    def to_dict(self) -> dict:
        return {
            "params": list(self.params),
            "param_names": list(self.param_names),
            "log_likelihood": self.log_likelihood,
            "evaluations": self.evaluations,
            "cv_score": self.cv_score,
            "probability_floor": PROB_FLOOR,
        }


def _resolve_search(search: Mapping | None) -> dict:
    resolved = dict(_SEARCH_DEFAULTS)
    if search is not None:
        for key, value in search.items():
            if key not in _SEARCH_DEFAULTS:
                raise ValueError(f"unknown search option {key!r}")
            resolved[key] = int(value)
    if resolved["grid_points"] < 3:
        raise ValueError("grid_points must be >= 3")
    if resolved["refine_iters"] < 0:
        raise ValueError("refine_iters must be >= 0")
    return resolved


def _check_bounds(
    bounds: Sequence[tuple[float, float]], num_params: int
) -> list[tuple[float, float]]:
    checked = [(float(lo), float(hi)) for lo, hi in bounds]
    if len(checked) != num_params:
        raise ValueError(
            f"expected {num_params} bounds, got {len(checked)}"
        )
    for lo, hi in checked:
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ValueError(f"invalid bound ({lo}, {hi})")
    return checked


class _Tracker:
    """Counts objective evaluations and remembers the best point ever seen."""

    def __init__(self, objective: Callable[[Sequence[float]], float]):
        self.objective = objective
        self.evaluations = 0
        self.best_theta: tuple[float, ...] | None = None
        self.best_value = -math.inf

    def __call__(self, theta: Sequence[float]) -> float:
        self.evaluations += 1
        try:
            value = self.objective(theta)
        except ValueError:
            # Box-gridding a simplex produces infeasible corners (all-zero
            # weights); score them as hopeless instead of aborting the fit.
            return -math.inf
        if value > self.best_value:
            self.best_value = value
            self.best_theta = tuple(float(x) for x in theta)
        return value


def _golden_max(
    line: Callable[[float], float], lo: float, hi: float, iters: int
) -> tuple[float, float]:
    """Golden-section maximization on [lo, hi]; returns the best probe."""
    best_x, best_v = lo, line(lo)
    v_hi = line(hi)
    if v_hi > best_v:
        best_x, best_v = hi, v_hi
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = line(c), line(d)
    for x, v in ((c, fc), (d, fd)):
        if v > best_v:
            best_x, best_v = x, v
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = line(c)
            if fc > best_v:
                best_x, best_v = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = line(d)
            if fd > best_v:
                best_x, best_v = d, fd
    return best_x, best_v


def fit_mle(
    family: ModelFamily,
    data: ObservationDataset,
    bounds: Sequence[tuple[float, float]],
    search: Mapping | None = None,
) -> FitResult:
    """Maximize the dataset log-likelihood over the family's parameter box.

    Stage one evaluates a full Cartesian grid (``grid_points`` per axis);
    stage two runs two cycles of per-coordinate golden-section refinement
    (``refine_iters`` shrink steps each) inside the grid cell around the
    best point, renormalizing simplex groups after each coordinate move.
    The result is the best point over *all* evaluations, so it can never be
    worse than any grid point.  Fully deterministic.
    """
    if len(data) == 0:
        raise ValueError("dataset is empty")
    box = _check_bounds(bounds, family.num_params)
    opts = _resolve_search(search)
    grid_points = opts["grid_points"]
    refine_iters = opts["refine_iters"]

    evaluate = _Tracker(lambda theta: log_likelihood(family, theta, data))

    axes = [np.linspace(lo, hi, grid_points) for lo, hi in box]
    for point in product(*axes):
        evaluate(point)
    if evaluate.best_theta is None:
        raise ValueError("no feasible parameter vector on the search grid")

    theta = list(evaluate.best_theta)
    cells = [(hi - lo) / (grid_points - 1) for lo, hi in box]
    in_group = {
        i: group for group in family.simplex_groups for i in group
    }
    if refine_iters > 0:
        for _cycle in range(2):
            for i in range(family.num_params):
                lo = max(box[i][0], theta[i] - cells[i])
                hi = min(box[i][1], theta[i] + cells[i])
                if hi <= lo:
                    continue

                def line(x: float, i: int = i) -> float:
                    probe = list(theta)
                    probe[i] = x
                    return evaluate(probe)

                x_best, v_best = _golden_max(line, lo, hi, refine_iters)
                if math.isfinite(v_best) and v_best >= evaluate.best_value:
                    theta[i] = x_best
                group = in_group.get(i)
                if group is not None:
                    total = sum(theta[j] for j in group)
                    if total > 0:
                        scaled = {j: theta[j] / total for j in group}
                        if all(
                            box[j][0] <= scaled[j] <= box[j][1] for j in group
                        ):
                            for j in group:
                                theta[j] = scaled[j]

    best_theta = list(evaluate.best_theta)
    for group in family.simplex_groups:
        total = sum(best_theta[j] for j in group)
        if total > 0:
            for j in group:
                best_theta[j] /= total
    return FitResult(
        params=tuple(best_theta),
        log_likelihood=evaluate.best_value,
        evaluations=evaluate.evaluations,
        param_names=family.param_names,
    )


def fold_indices(
    num_observations: int, k: int, seed: int
) -> list[np.ndarray]:
    """Seeded permutation split into k near-equal contiguous folds."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if num_observations < k:
        raise ValueError(
            f"dataset of {num_observations} observations cannot form {k} folds"
        )
    order = np.random.default_rng(seed).permutation(num_observations)
    return np.array_split(order, k)


def cross_validate_details(
    family: ModelFamily,
    data: ObservationDataset,
    k: int,
    bounds: Sequence[tuple[float, float]],
    search: Mapping | None = None,
    seed: int = 0,
) -> tuple[float, tuple[float, ...]]:
    """K-fold CV; returns (mean per-observation held-out ll, per-fold sums).

    Folds come from a seeded shuffle, so the same seed reproduces the same
    assignment and score exactly.  The mean weights every observation
    equally (total held-out log-likelihood over the dataset size).
    """
    folds = fold_indices(len(data), k, seed)
    all_indices = set(range(len(data)))
    fold_scores = []
    for fold in folds:
        held_out = set(int(i) for i in fold)
        train = data.subset(sorted(all_indices - held_out))
        test = data.subset(sorted(held_out))
        fitted = fit_mle(family, train, bounds, search)
        fold_scores.append(log_likelihood(family, fitted.params, test))
    mean_score = sum(fold_scores) / len(data)
    return mean_score, tuple(fold_scores)


def cross_validate(
    family: ModelFamily,
    data: ObservationDataset,
    k: int,
    bounds: Sequence[tuple[float, float]],
    search: Mapping | None = None,
    seed: int = 0,
) -> float:
    mean_score, _ = cross_validate_details(family, data, k, bounds, search, seed)
    return mean_score


def sample_observations(
    model: object,
    games: Sequence[NormalFormGame],
    num_observations: int,
    seed: int = 0,
) -> ObservationDataset:
    """Draw synthetic choices from a model's predictions.

    Games are visited round-robin; the moving player is drawn uniformly and
    the action from the model's predicted strategy for that seat.  Output is
    a pure function of (model, games, num_observations, seed).
    """
    if not games:
        raise ValueError("games must be nonempty")
    if num_observations < 1:
        raise ValueError("num_observations must be >= 1")
    rng = np.random.default_rng(seed)
    cache: dict[tuple[NormalFormGame, int], np.ndarray] = {}
    observations = []
    for i in range(num_observations):
        game = games[i % len(games)]
        player = int(rng.integers(game.num_players))
        key = (game, player)
        probs = cache.get(key)
        if probs is None:
            probs = np.asarray(predict(model, game, player).weights)
            cache[key] = probs
        action = int(rng.choice(len(probs), p=probs))
        observations.append(Observation(game=game, player=player, action=action))
    return ObservationDataset(tuple(observations))
