from __future__ import annotations

import json
import math

import numpy as np
import pytest

from foggame.behavior import EpsilonNash, LevelK, LogitQBR, predict
from foggame.estimation import (
    PROB_FLOOR,
    FitResult,
    Observation,
    ObservationDataset,
    cross_validate,
    cross_validate_details,
    epsilon_nash_family,
    fit_mle,
    fold_indices,
    level_k_family,
    load_observations,
    log_likelihood,
    qbr_family,
    sample_observations,
    save_observations,
)

from conftest import random_game


class TestObservation:
    def test_valid(self, pd_game):
        obs = Observation(game=pd_game, player=1, action=0)
        assert obs.action == 0

    def test_player_out_of_range(self, pd_game):
        with pytest.raises(ValueError):
            Observation(game=pd_game, player=2, action=0)

    def test_action_out_of_range(self, pd_game):
        with pytest.raises(ValueError):
            Observation(game=pd_game, player=0, action=2)

    def test_dataset_subset(self, pd_game, coord_game):
        data = ObservationDataset(
            (
                Observation(pd_game, 0, 0),
                Observation(coord_game, 1, 1),
                Observation(pd_game, 1, 0),
            )
        )
        sub = data.subset([2, 0])
        assert len(sub) == 2
        assert sub.observations[0].player == 1


class TestObservationIO:
    def test_round_trip(self, tmp_path, pd_game, asym_game):
        data = ObservationDataset(
            (
                Observation(pd_game, 0, 1),
                Observation(asym_game, 1, 0),
            )
        )
        path = tmp_path / "obs.jsonl"
        save_observations(data, path)
        again = load_observations(path)
        assert len(again) == 2
        assert again.observations[0].game == pd_game
        assert again.observations[0].action == 1
        assert again.observations[1].game == asym_game

    def test_file_is_json_lines(self, tmp_path, pd_game):
        path = tmp_path / "obs.jsonl"
        save_observations(
            ObservationDataset((Observation(pd_game, 0, 0),)), path
        )
        record = json.loads(path.read_text().strip())
        assert set(record) == {"game", "player", "action"}

    def test_blank_lines_ignored(self, tmp_path, pd_game):
        good = json.dumps(
            {"game": pd_game.to_dict(), "player": 0, "action": 1}
        )
        path = tmp_path / "obs.jsonl"
        path.write_text(f"\n{good}\n\n{good}\n")
        assert len(load_observations(path)) == 2

    def test_malformed_lines_reported_together(self, tmp_path, pd_game):
        good = json.dumps(
            {"game": pd_game.to_dict(), "player": 0, "action": 1}
        )
        missing = json.dumps({"game": pd_game.to_dict(), "player": 0})
        path = tmp_path / "obs.jsonl"
        path.write_text(f"{good}\n{{oops\n{good}\n{missing}\n")
        with pytest.raises(ValueError) as err:
            load_observations(path)
        message = str(err.value)
        assert "2" in message and "4" in message


class TestLogLikelihood:
    def test_half_probability_single_observation(self, pennies_game):
        data = ObservationDataset((Observation(pennies_game, 0, 0),))
        # uniform play: the chosen action has probability exactly 1/2
        got = log_likelihood(qbr_family(), (0.0,), data)
        assert got == pytest.approx(math.log(0.5), abs=1e-12)

    def test_additivity_over_identical_observations(self, pennies_game):
        single = ObservationDataset((Observation(pennies_game, 0, 0),))
        many = ObservationDataset(tuple(single.observations * 7))
        one = log_likelihood(qbr_family(), (0.0,), single)
        assert log_likelihood(qbr_family(), (0.0,), many) == pytest.approx(
            7 * one, abs=1e-12
        )

    def test_additivity_over_concatenation(self, pd_game, asym_game):
        a = ObservationDataset(
            (Observation(pd_game, 0, 1), Observation(pd_game, 1, 0))
        )
        b = ObservationDataset((Observation(asym_game, 0, 0),))
        both = ObservationDataset(a.observations + b.observations)
        family = qbr_family()
        assert log_likelihood(family, (1.5,), both) == pytest.approx(
            log_likelihood(family, (1.5,), a)
            + log_likelihood(family, (1.5,), b),
            abs=1e-12,
        )

    def test_product_then_log_oracle(self, pd_game, asym_game, coord_game):
        observations = (
            Observation(pd_game, 0, 1),
            Observation(asym_game, 1, 0),
            Observation(coord_game, 0, 0),
        )
        model = LogitQBR(precision=1.0)
        prod = 1.0
        for obs in observations:
            prod *= predict(model, obs.game, obs.player).weights[obs.action]
        got = log_likelihood(
            qbr_family(), (1.0,), ObservationDataset(observations)
        )
        assert got == pytest.approx(math.log(prod), abs=1e-10)

    def test_floor_keeps_zero_probability_finite(self, pd_game):
        # epsilon=0 puts zero mass on the dominated action
        data = ObservationDataset((Observation(pd_game, 0, 0),))
        got = log_likelihood(epsilon_nash_family(), (0.0,), data)
        assert math.isfinite(got)
        assert got == pytest.approx(math.log(PROB_FLOOR), abs=1e-12)

    def test_never_positive_for_probabilities(self, corpus):
        family = qbr_family()
        rng = np.random.default_rng(2)
        observations = []
        for game in corpus:
            observations.append(
                Observation(game, int(rng.integers(2)), int(rng.integers(2)))
            )
        data = ObservationDataset(tuple(observations))
        assert log_likelihood(family, (2.0,), data) <= 0.0

    def test_invalid_theta_raises(self, pd_game):
        data = ObservationDataset((Observation(pd_game, 0, 0),))
        with pytest.raises(ValueError):
            log_likelihood(qbr_family(), (-1.0,), data)


class TestFamilies:
    def test_qbr_family_shape(self):
        family = qbr_family()
        assert family.param_names == ("precision",)
        assert isinstance(family.build((2.0,)), LogitQBR)

    def test_epsilon_family_fallback(self, pennies_game):
        family = epsilon_nash_family()
        model = family.build((0.3,))
        assert isinstance(model, EpsilonNash)
        # uniform fallback keeps likelihood defined without a pure equilibrium
        assert predict(model, pennies_game, 0).weights == (0.5, 0.5)

    def test_level_k_family_normalizes_weights(self):
        family = level_k_family(2)
        model = family.build((2.0, 2.0))
        assert isinstance(model, LevelK)
        assert model.level_weights == (0.5, 0.5)
        assert family.simplex_groups == ((0, 1),)

    def test_level_k_family_zero_weights_rejected(self):
        with pytest.raises(ValueError):
            level_k_family(2).build((0.0, 0.0))

    def test_level_k_family_qbr_appends_precision(self):
        family = level_k_family(2, response="qbr")
        assert family.param_names == ("weight_0", "weight_1", "precision")
        model = family.build((1.0, 3.0, 2.5))
        assert model.precision == 2.5
        assert model.level_weights == (0.25, 0.75)

    def test_level_k_family_fixed_precision(self):
        family = level_k_family(2, response="qbr", fixed_precision=1.5)
        assert family.param_names == ("weight_0", "weight_1")
        assert family.build((1.0, 1.0)).precision == 1.5

    def test_bad_num_levels(self):
        with pytest.raises(ValueError):
            level_k_family(0)


class TestFitMle:
    def test_uniform_data_fits_near_zero(
        self, pennies_game, asym_game, coord_game
    ):
        games = [pennies_game, asym_game, coord_game]
        data = sample_observations(
            LogitQBR(precision=0.0), games, 240, seed=10
        )
        result = fit_mle(
            qbr_family(),
            data,
            bounds=[(0.0, 10.0)],
            search={"grid_points": 11, "refine_iters": 10},
        )
        first_step = 10.0 / 10
        assert result.params[0] < first_step

    def test_result_at_least_every_grid_point(self, pd_game, asym_game):
        data = ObservationDataset(
            (
                Observation(pd_game, 0, 1),
                Observation(asym_game, 0, 0),
                Observation(asym_game, 1, 1),
            )
        )
        family = qbr_family()
        bounds = [(0.0, 5.0)]
        result = fit_mle(
            family, data, bounds, search={"grid_points": 6, "refine_iters": 8}
        )
        for lam in np.linspace(0.0, 5.0, 6):
            assert result.log_likelihood >= log_likelihood(
                family, (float(lam),), data
            ) - 1e-12

    def test_deterministic(self, asym_game, coord_game):
        data = sample_observations(
            LogitQBR(precision=1.2), [asym_game, coord_game], 80, seed=4
        )
        kwargs = dict(
            bounds=[(0.0, 8.0)], search={"grid_points": 9, "refine_iters": 12}
        )
        a = fit_mle(qbr_family(), data, **kwargs)
        b = fit_mle(qbr_family(), data, **kwargs)
        assert a == b

    def test_level_weight_mixture_recovery(self, asym_game, pd_game):
        rng = np.random.default_rng(99)
        games = [asym_game, pd_game] + [random_game(rng) for _ in range(3)]
        truth = LevelK(level_weights=(0.3, 0.7))
        data = sample_observations(truth, games, 400, seed=8)
        result = fit_mle(
            level_k_family(2),
            data,
            bounds=[(0.0, 1.0), (0.0, 1.0)],
            search={"grid_points": 6, "refine_iters": 12},
        )
        assert sum(result.params) == pytest.approx(1.0, abs=1e-9)
        assert abs(result.params[1] - 0.7) < 0.15

    def test_fit_result_serialization(self, pennies_game):
        data = ObservationDataset((Observation(pennies_game, 0, 0),))
        result = fit_mle(
            qbr_family(),
            data,
            bounds=[(0.0, 2.0)],
            search={"grid_points": 3, "refine_iters": 0},
        )
        payload = result.to_dict()
        assert payload["param_names"] == ["precision"]
        assert payload["probability_floor"] == PROB_FLOOR
        assert payload["cv_score"] is None
        assert payload["evaluations"] == result.evaluations > 0

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            fit_mle(qbr_family(), ObservationDataset(()), bounds=[(0.0, 1.0)])

    def test_bounds_length_checked(self, pennies_game):
        data = ObservationDataset((Observation(pennies_game, 0, 0),))
        with pytest.raises(ValueError):
            fit_mle(qbr_family(), data, bounds=[(0.0, 1.0), (0.0, 1.0)])

    def test_unknown_search_option_rejected(self, pennies_game):
        data = ObservationDataset((Observation(pennies_game, 0, 0),))
        with pytest.raises(ValueError):
            fit_mle(
                qbr_family(), data, bounds=[(0.0, 1.0)], search={"steps": 5}
            )


class TestCrossValidation:
    def test_identical_halves_equal_fold_scores(self, asym_game):
        obs = Observation(asym_game, 0, 1)
        data = ObservationDataset((obs, obs, obs, obs))
        _, folds = cross_validate_details(
            qbr_family(),
            data,
            k=2,
            bounds=[(0.0, 4.0)],
            search={"grid_points": 5, "refine_iters": 0},
            seed=0,
        )
        assert folds[0] == pytest.approx(folds[1], abs=1e-12)

    def test_seed_reproducibility(self, pd_game, asym_game):
        data = sample_observations(
            EpsilonNash(epsilon=0.25, no_nash_fallback="uniform"),
            [pd_game, asym_game],
            40,
            seed=3,
        )
        kwargs = dict(
            k=4,
            bounds=[(0.0, 1.0)],
            search={"grid_points": 9, "refine_iters": 0},
        )
        a = cross_validate(epsilon_nash_family(), data, seed=11, **kwargs)
        b = cross_validate(epsilon_nash_family(), data, seed=11, **kwargs)
        assert a == b
        assert np.all(
            fold_indices(40, 4, 11)[0] == fold_indices(40, 4, 11)[0]
        )

    def test_heldout_not_better_than_training_on_average(
        self, pd_game, asym_game, coord_game, dominant_3x2_game
    ):
        games = [pd_game, asym_game, coord_game, dominant_3x2_game]
        truth = EpsilonNash(epsilon=0.25, no_nash_fallback="uniform")
        data = sample_observations(truth, games, 60, seed=21)
        family = epsilon_nash_family()
        bounds = [(0.0, 1.0)]
        search = {"grid_points": 9, "refine_iters": 6}
        train = fit_mle(family, data, bounds, search)
        train_per_obs = train.log_likelihood / len(data)
        scores = [
            cross_validate(family, data, 3, bounds, search, seed=s)
            for s in range(20)
        ]
        assert sum(scores) / len(scores) <= train_per_obs + 1e-9

    def test_too_many_folds_rejected(self, pennies_game):
        obs = Observation(pennies_game, 0, 0)
        data = ObservationDataset((obs,) * 4)
        with pytest.raises(ValueError):
            cross_validate(
                qbr_family(), data, k=5, bounds=[(0.0, 1.0)]
            )
        with pytest.raises(ValueError):
            fold_indices(4, 1, 0)


class TestSampleObservations:
    def test_deterministic(self, pd_game, asym_game):
        model = LogitQBR(precision=1.0)
        a = sample_observations(model, [pd_game, asym_game], 30, seed=5)
        b = sample_observations(model, [pd_game, asym_game], 30, seed=5)
        assert a.observations == b.observations

    def test_round_robin_games(self, pd_game, asym_game, coord_game):
        games = [pd_game, asym_game, coord_game]
        data = sample_observations(LogitQBR(0.0), games, 7, seed=0)
        for i, obs in enumerate(data):
            assert obs.game == games[i % 3]

    def test_uniform_model_uniform_actions(self, pennies_game):
        data = sample_observations(LogitQBR(0.0), [pennies_game], 600, seed=1)
        freq = sum(obs.action == 0 for obs in data) / len(data)
        assert abs(freq - 0.5) < 0.08

    def test_validation(self, pd_game):
        with pytest.raises(ValueError):
            sample_observations(LogitQBR(0.0), [], 5)
        with pytest.raises(ValueError):
            sample_observations(LogitQBR(0.0), [pd_game], 0)


def test_fit_result_invariant_nonpositive(pennies_game):
    obs = Observation(pennies_game, 0, 0)
    data = ObservationDataset((obs,) * 3)
    result = fit_mle(
        qbr_family(),
        data,
        bounds=[(0.0, 3.0)],
        search={"grid_points": 4, "refine_iters": 0},
    )
    assert isinstance(result, FitResult)
    assert result.log_likelihood <= 0.0
