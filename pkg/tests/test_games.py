from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foggame.games import (
    TIE_TOL,
    Belief,
    MixedStrategy,
    NormalFormGame,
    best_response_set,
    expected_utility,
    load_game,
    pure_nash,
    save_game,
)

from conftest import random_game


class TestMixedStrategy:
    def test_valid_weights(self):
        s = MixedStrategy((0.25, 0.75))
        assert s.weights == (0.25, 0.75)
        assert s.num_actions == 2

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            MixedStrategy((-0.1, 1.1))

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            MixedStrategy((0.5, 0.6))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            MixedStrategy(())

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            MixedStrategy((math.inf, 0.0))

    def test_uniform(self):
        s = MixedStrategy.uniform(4)
        assert s.weights == (0.25, 0.25, 0.25, 0.25)

    def test_point_mass(self):
        s = MixedStrategy.point_mass(1, 3)
        assert s.weights == (0.0, 1.0, 0.0)

    def test_point_mass_out_of_range(self):
        with pytest.raises(ValueError):
            MixedStrategy.point_mass(3, 3)

    def test_mix_is_convex_combination(self):
        a = MixedStrategy((1.0, 0.0))
        b = MixedStrategy((0.0, 1.0))
        assert a.mix(b, 0.25).weights == (0.75, 0.25)
        assert a.mix(b, 0.0).weights == a.weights
        assert a.mix(b, 1.0).weights == b.weights

    def test_as_array_is_copy(self):
        s = MixedStrategy((0.5, 0.5))
        arr = s.as_array()
        arr[0] = 99.0
        assert s.weights == (0.5, 0.5)


class TestBelief:
    def test_from_profile_skips_owner(self):
        profile = [
            MixedStrategy((1.0, 0.0)),
            MixedStrategy((0.0, 1.0)),
            MixedStrategy((0.5, 0.5)),
        ]
        b = Belief.from_profile(profile, owner=1)
        assert b.owner == 1
        assert b.opponents == (profile[0], profile[2])

    def test_opponent_count_checked(self, pd_game):
        with pytest.raises(ValueError):
            expected_utility(
                pd_game, 0, 0, Belief(owner=0, opponents=())
            )


class TestNormalFormGame:
    def test_two_player_shape(self, pd_game):
        assert pd_game.num_players == 2
        assert pd_game.action_counts == (2, 2)
        assert pd_game.payoffs.shape == (2, 2, 2)

    def test_payoff_accessor(self, pd_game):
        assert pd_game.payoff(0, (1, 0)) == 5.0
        assert pd_game.payoff(1, (0, 1)) == 5.0

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            NormalFormGame(action_counts=(2, 2), payoffs=np.zeros((2, 2, 3)))

    def test_rejects_nonfinite(self):
        bad = np.zeros((2, 2, 2))
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            NormalFormGame(action_counts=(2, 2), payoffs=bad)

    def test_rejects_zero_actions(self):
        with pytest.raises(ValueError):
            NormalFormGame(action_counts=(0, 2), payoffs=np.zeros((2, 0, 2)))

    def test_payoffs_immutable(self, pd_game):
        with pytest.raises(ValueError):
            pd_game.payoffs[0, 0, 0] = 7.0

    def test_equality_and_hash(self, pd_game):
        clone = NormalFormGame.two_player(
            [[3.0, 0.0], [5.0, 1.0]],
            [[3.0, 5.0], [0.0, 1.0]],
        )
        assert clone == pd_game
        assert hash(clone) == hash(pd_game)
        assert clone in {pd_game}

    def test_dict_round_trip(self, corpus):
        for game in corpus:
            again = NormalFormGame.from_dict(game.to_dict())
            assert again == game

    def test_dict_format(self, pd_game):
        d = pd_game.to_dict()
        assert d["action_counts"] == [2, 2]
        assert d["payoffs"]["0"] == [3.0, 0.0, 5.0, 1.0]
        assert d["payoffs"]["1"] == [3.0, 5.0, 0.0, 1.0]

    def test_file_round_trip(self, pd_game, tmp_path):
        path = tmp_path / "game.json"
        save_game(pd_game, path)
        assert load_game(path) == pd_game

    def test_from_dict_rejects_garbage(self):
        with pytest.raises(ValueError):
            NormalFormGame.from_dict({"action_counts": [2, 2]})
        with pytest.raises(ValueError):
            NormalFormGame.from_dict(
                {"action_counts": [2, 2], "payoffs": {"0": [1, 2, 3]}}
            )


class TestExpectedUtility:
    def test_degenerate_belief_selects_column(self, pd_game):
        belief = Belief(owner=0, opponents=(MixedStrategy((1.0, 0.0)),))
        assert expected_utility(pd_game, 0, 1, belief) == 5.0

    def test_constant_payoff_expectation(self, tie_game):
        belief = Belief(owner=1, opponents=(MixedStrategy.uniform(2),))
        assert expected_utility(tie_game, 1, 0, belief) == pytest.approx(2.0)

    def test_brute_force_oracle_2x3(self):
        rng = np.random.default_rng(7)
        game = random_game(rng, counts=(2, 3))
        belief = Belief(owner=0, opponents=(MixedStrategy.uniform(3),))
        for action in range(2):
            oracle = sum(
                (1.0 / 3.0) * game.payoffs[0][action, j] for j in range(3)
            )
            assert expected_utility(game, 0, action, belief) == pytest.approx(
                oracle, abs=1e-12
            )

    def test_brute_force_oracle_three_player(self):
        rng = np.random.default_rng(11)
        game = random_game(rng, counts=(2, 2, 2))
        marginals = (MixedStrategy((0.3, 0.7)), MixedStrategy((0.6, 0.4)))
        belief = Belief(owner=1, opponents=marginals)
        for action in range(2):
            oracle = 0.0
            for a0 in range(2):
                for a2 in range(2):
                    p = marginals[0].weights[a0] * marginals[1].weights[a2]
                    oracle += p * game.payoffs[1][a0, action, a2]
            assert expected_utility(game, 1, action, belief) == pytest.approx(
                oracle, abs=1e-12
            )

    def test_linear_in_belief(self, asym_game):
        b1 = Belief(owner=0, opponents=(MixedStrategy((1.0, 0.0)),))
        b2 = Belief(owner=0, opponents=(MixedStrategy((0.0, 1.0)),))
        for t in (0.0, 0.25, 0.5, 1.0):
            mixed = Belief(
                owner=0,
                opponents=(MixedStrategy((1.0 - t, t)),),
            )
            for action in range(2):
                expect = (1 - t) * expected_utility(
                    asym_game, 0, action, b1
                ) + t * expected_utility(asym_game, 0, action, b2)
                assert expected_utility(
                    asym_game, 0, action, mixed
                ) == pytest.approx(expect, abs=1e-12)

    def test_action_out_of_range(self, pd_game):
        belief = Belief(owner=0, opponents=(MixedStrategy.uniform(2),))
        with pytest.raises(ValueError):
            expected_utility(pd_game, 0, 2, belief)
        with pytest.raises(ValueError):
            expected_utility(pd_game, 5, 0, belief)


class TestBestResponseSet:
    def test_dominant_action_singleton(self, pd_game):
        belief = Belief(owner=0, opponents=(MixedStrategy.uniform(2),))
        assert best_response_set(pd_game, 0, belief) == [1]

    def test_total_tie_returns_all(self, tie_game):
        belief = Belief(owner=0, opponents=(MixedStrategy.uniform(2),))
        assert best_response_set(tie_game, 0, belief) == [0, 1]

    def test_matches_argmax_oracle_random_3x3(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            game = random_game(rng, counts=(3, 3))
            weights = rng.dirichlet(np.ones(3))
            belief = Belief(
                owner=0, opponents=(MixedStrategy(tuple(weights)),)
            )
            eus = np.array(
                [expected_utility(game, 0, a, belief) for a in range(3)]
            )
            oracle = [
                a for a in range(3) if eus[a] >= eus.max() - TIE_TOL
            ]
            assert best_response_set(game, 0, belief) == oracle

    def test_near_tie_within_tolerance_included(self):
        eps = 1e-10  # inside TIE_TOL
        game = NormalFormGame.two_player(
            [[1.0, 1.0], [1.0 - eps, 1.0 - eps]],
            [[0.0, 0.0], [0.0, 0.0]],
        )
        belief = Belief(owner=0, opponents=(MixedStrategy.uniform(2),))
        assert best_response_set(game, 0, belief) == [0, 1]

    def test_shift_invariance(self, asym_game):
        shifted = NormalFormGame(
            action_counts=asym_game.action_counts,
            payoffs=np.stack(
                [asym_game.payoffs[0] + 100.0, asym_game.payoffs[1]]
            ),
        )
        belief = Belief(owner=0, opponents=(MixedStrategy((0.4, 0.6)),))
        assert best_response_set(shifted, 0, belief) == best_response_set(
            asym_game, 0, belief
        )

    def test_positive_scaling_invariance(self, asym_game):
        scaled = NormalFormGame(
            action_counts=asym_game.action_counts,
            payoffs=np.stack(
                [asym_game.payoffs[0] * 3.5, asym_game.payoffs[1]]
            ),
        )
        belief = Belief(owner=0, opponents=(MixedStrategy((0.4, 0.6)),))
        assert best_response_set(scaled, 0, belief) == best_response_set(
            asym_game, 0, belief
        )


def _deviation_check_nash(game: NormalFormGame) -> list[tuple[int, ...]]:
    """Brute-force oracle: profiles with no improving unilateral deviation."""
    out = []
    for profile in itertools.product(
        *[range(n) for n in game.action_counts]
    ):
        stable = True
        for player in range(game.num_players):
            here = game.payoffs[player][profile]
            for alt in range(game.action_counts[player]):
                trial = list(profile)
                trial[player] = alt
                if game.payoffs[player][tuple(trial)] > here + TIE_TOL:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            out.append(profile)
    return out


class TestPureNash:
    def test_mutual_defection(self, pd_game):
        assert pure_nash(pd_game) == [(1, 1)]

    def test_coordination_has_both_diagonals(self, coord_game):
        assert pure_nash(coord_game) == [(0, 0), (1, 1)]

    def test_pennies_empty(self, pennies_game):
        assert pure_nash(pennies_game) == []

    def test_asym_unique(self, asym_game):
        assert pure_nash(asym_game) == [(0, 0)]

    def test_tie_game_everything(self, tie_game):
        assert pure_nash(tie_game) == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_lexicographic_order(self, coord_game):
        profiles = pure_nash(coord_game)
        assert profiles == sorted(profiles)

    def test_three_player_matches_deviation_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(25):
            game = random_game(rng, counts=(2, 2, 2))
            assert pure_nash(game) == _deviation_check_nash(game)

    def test_corpus_matches_deviation_oracle(self, corpus):
        for game in corpus:
            assert pure_nash(game) == _deviation_check_nash(game)

    def test_larger_games_match_oracle(self):
        rng = np.random.default_rng(37)
        for counts in [(3, 3), (4, 2), (2, 3, 2), (4, 4)]:
            for _ in range(5):
                game = random_game(rng, counts=counts)
                assert pure_nash(game) == _deviation_check_nash(game)

    def test_shift_invariance(self, coord_game):
        shifted = NormalFormGame(
            action_counts=coord_game.action_counts,
            payoffs=np.stack(
                [coord_game.payoffs[0] - 42.0, coord_game.payoffs[1]]
            ),
        )
        assert pure_nash(shifted) == pure_nash(coord_game)


@settings(max_examples=200, deadline=None)
@given(
    data=st.data(),
    t=st.sampled_from([0.0, 0.25, 0.5, 1.0]),
)
def test_expected_utility_belief_linearity_property(data, t):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    game = random_game(rng, counts=(2, 2))
    w1 = rng.dirichlet(np.ones(2))
    w2 = rng.dirichlet(np.ones(2))
    mixed_w = (1 - t) * w1 + t * w2
    b1 = Belief(owner=0, opponents=(MixedStrategy(tuple(w1)),))
    b2 = Belief(owner=0, opponents=(MixedStrategy(tuple(w2)),))
    bm = Belief(owner=0, opponents=(MixedStrategy(tuple(mixed_w)),))
    for action in range(2):
        left = expected_utility(game, 0, action, bm)
        right = (1 - t) * expected_utility(game, 0, action, b1) + (
            t
        ) * expected_utility(game, 0, action, b2)
        assert left == pytest.approx(right, abs=1e-9)
