import collections
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmab.cmab_rl import (
    SNAPSHOT_FORMAT,
    CmabRl,
    CmabRlConfig,
    ReadCounter,
    aggregate_means,
    m_for_horizon,
    pair_gaps,
    relevance_mask,
    uncertainty,
    variations,
)
from cmab.core import seeded_rng
from cmab.environments import SparseEnvConfig, SparseRelevanceEnvironment
from cmab.harness import run_episode
from cmab.partition import CellStats


def _policy(
    d_x=4,
    d_a=2,
    relevant_d_x=1,
    relevant_d_a=1,
    horizon=2000,
    seed=0,
    **kwargs,
):
    config = CmabRlConfig(
        d_x=d_x,
        d_a=d_a,
        relevant_d_x=relevant_d_x,
        relevant_d_a=relevant_d_a,
        horizon=horizon,
        **kwargs,
    )
    return CmabRl(config, seed=seed)


def _contexts(d_x, count, seed=1):
    rng = seeded_rng(seed, 0)
    return [rng.random(d_x) for _ in range(count)]


def _pairs(firsts, seconds):
    return (
        np.array(firsts, dtype=np.int64).reshape(len(firsts), -1),
        np.array(seconds, dtype=np.int64).reshape(len(seconds), -1),
    )


class TestPartitionNumber:
    @pytest.mark.parametrize(
        "horizon, rdx, rda, expected",
        [
            (10**5, 1, 1, 10),
            (10**5, 2, 1, 6),
            (1, 1, 1, 1),
            (33, 1, 1, 3),
            (32, 1, 1, 2),
        ],
    )
    def test_m_for_horizon(self, horizon, rdx, rda, expected):
        assert m_for_horizon(horizon, rdx, rda) == expected

    def test_invalid_horizon(self):
        with pytest.raises(ValueError):
            m_for_horizon(0, 1, 1)

    def test_config_default(self):
        config = CmabRlConfig(5, 5, 1, 1, horizon=10**5)
        assert config.m == 10

    def test_config_override(self):
        config = CmabRlConfig(5, 5, 1, 1, horizon=10**5, partition_number=3)
        assert config.m == 3

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"relevant_d_x": 3},
            {"relevant_d_x": 0},
            {"relevant_d_a": 6},
            {"horizon": 0},
            {"lipschitz": 0.0},
            {"multiplier": -1.0},
            {"partition_number": 0},
        ],
    )
    def test_config_invalid(self, kwargs):
        arguments = {
            "d_x": 5,
            "d_a": 5,
            "relevant_d_x": 1,
            "relevant_d_a": 1,
            "horizon": 100,
        }
        arguments.update(kwargs)
        with pytest.raises(ValueError):
            CmabRlConfig(**arguments)


class TestUncertainty:
    def test_unvisited(self):
        assert uncertainty(0, 25, 4, 5, 1, 1000) == math.inf

    def test_value(self):
        assert uncertainty(100, 25, 4, 5, 1, 1000, 1) == pytest.approx(
            0.880428, rel=1e-5
        )

    def test_scaling(self):
        once = uncertainty(100, 25, 4, 5, 1, 1000)
        assert uncertainty(200, 25, 4, 5, 1, 1000) == pytest.approx(
            once / math.sqrt(2)
        )
        assert uncertainty(100, 25, 4, 5, 1, 1000, 0.1) == pytest.approx(
            0.1 * once
        )


class TestKernels:
    def test_relevance_excluded(self):
        """0.9 and 0.1 can't both be within 0.2 + 0.05 + 0.05"""
        means = np.array([[0.9], [0.1]])
        widths = np.full((2, 1), 0.05)
        mask = relevance_mask(means, widths, _pairs([[0]], [[1]]), 0.2)
        assert mask.tolist() == [[False]]

    def test_relevance_unvisited(self):
        means = np.array([[0.9], [0.1]])
        widths = np.array([[math.inf], [0.05]])
        mask = relevance_mask(means, widths, _pairs([[0]], [[1]]), 0.2)
        assert mask.tolist() == [[True]]

    def test_relevance_single_supertuple(self):
        """A tuple with one supertuple has no pair to test"""
        means = np.array([[0.9, 0.1]])
        widths = np.full((1, 2), 0.01)
        mask = relevance_mask(means, widths, _pairs([[], []], [[], []]), 0.0)
        assert mask.tolist() == [[True, True], [True, True]]

    def test_variation(self):
        means = np.array([[0.2], [0.5], [0.4]])
        pairs = _pairs([[0, 0, 1]], [[1, 2, 2]])
        assert variations(means, pairs)[0, 0] == pytest.approx(0.3)

    def test_variation_single_supertuple(self):
        means = np.array([[0.7, 0.2]])
        pairs = _pairs([[], []], [[], []])
        assert variations(means, pairs).tolist() == [[0, 0], [0, 0]]

    def test_aggregate_mean(self):
        counts = np.array([[2], [2]])
        means = np.array([[0.5], [1.0]])
        membership = np.array([[1.0, 1.0]])
        result = aggregate_means(counts, means, membership)
        assert result[0, 0] == pytest.approx(0.75)

    def test_aggregate_mean_unvisited(self):
        counts = np.zeros((2, 1), dtype=np.int64)
        means = np.zeros((2, 1))
        result = aggregate_means(counts, means, np.array([[1.0, 1.0]]))
        assert result[0, 0] == 0.0

    def test_aggregate_mean_single(self):
        counts = np.array([[7], [3]])
        means = np.array([[0.42], [0.9]])
        result = aggregate_means(counts, means, np.array([[1.0, 0.0]]))
        assert result[0, 0] == pytest.approx(0.42)

    def test_pair_gaps_counted(self):
        means = np.array([[0.2, 0.3], [0.5, 0.3], [0.4, 0.9]])
        reads = ReadCounter()
        gaps = pair_gaps(means, _pairs([[0, 0, 1]], [[1, 2, 2]]), reads)
        assert gaps.shape == (1, 3, 2)
        assert gaps[0, :, 0] == pytest.approx([0.3, 0.2, 0.1])
        assert reads.total == 12

    def test_aggregate_mean_counted(self):
        reads = ReadCounter()
        aggregate_means(
            np.ones((3, 2)),
            np.zeros((3, 2)),
            np.array([[1.0, 0.0, 1.0]]),
            reads,
        )
        assert reads.total == 4


_STRUCTURE = _policy(partition_number=3)
_UNIT = st.floats(0.0, 1.0)


class TestKernelProperties:
    @given(
        means=st.lists(_UNIT, min_size=12, max_size=12),
        widths=st.lists(st.floats(0.0, 0.5), min_size=12, max_size=12),
        slack=st.floats(0.0, 0.3),
        order=st.permutations(range(3)),
    )
    def test_relevance_ignores_pair_order(self, means, widths, slack, order):
        means = np.reshape(means, (6, 2))
        widths = np.reshape(widths, (6, 2))
        first, second = _STRUCTURE.pairs
        shuffled = (first[:, order], second[:, order])
        assert np.array_equal(
            relevance_mask(means, widths, shuffled, slack),
            relevance_mask(means, widths, (first, second), slack),
        )

    @given(
        counts=st.lists(st.integers(0, 20), min_size=6, max_size=6),
        means=st.lists(_UNIT, min_size=6, max_size=6),
    )
    def test_aggregate_between_cell_means(self, counts, means):
        counts = np.array(counts)[:, None]
        means = np.array(means)[:, None]
        result = aggregate_means(counts, means, _STRUCTURE.membership)
        for row, members in zip(result[:, 0], _STRUCTURE.membership):
            visited = means[(members > 0) & (counts[:, 0] > 0), 0]
            if visited.size == 0:
                assert row == 0.0
            else:
                assert visited.min() - 1e-12 <= row <= visited.max() + 1e-12


class TestStructure:
    def test_sizes(self):
        policy = _policy(partition_number=3)
        assert policy.n_arms == 6
        assert len(policy.context_tuples) == 4
        assert len(policy.pair_tuples) == 6
        assert policy.supertuple_count == 3
        assert policy.c_bar == 3
        assert policy.pairs[0].shape == (4, 3)
        assert policy.membership.sum(axis=1).tolist() == [3, 3, 3, 3]

    def test_slack(self):
        policy = _policy(relevant_d_x=2, d_x=5, partition_number=4)
        assert policy.slack == pytest.approx(2 * math.sqrt(2) / 4)

    def test_round_keys(self):
        policy = _policy(partition_number=5)
        keys = policy.round_keys(np.array([0.0, 0.3, 0.6, 1.0]))
        assert [tuple(key) for key in keys] == [
            ((0, 1), (0, 1)),
            ((0, 2), (0, 2)),
            ((0, 3), (0, 4)),
            ((1, 2), (1, 2)),
            ((1, 3), (1, 4)),
            ((2, 3), (2, 4)),
        ]


class TestChoose:
    def test_fresh_policy_is_uniform(self):
        policy = _policy(partition_number=3)
        context = np.full(4, 0.5)
        counts = collections.Counter(
            policy.arm_id(policy.choose(context)) for _ in range(6000)
        )
        assert sorted(counts) == list(range(6))
        assert all(abs(count - 1000) < 150 for count in counts.values())

    def test_fresh_candidates(self):
        policy = _policy(partition_number=3)
        keys = policy.round_keys(np.full(4, 0.5))
        assert policy.candidate_relevant_tuples(0, keys) == set(
            policy.context_tuples
        )

    def test_arms_in_unit_cube(self):
        policy = _policy(partition_number=3)
        for context in _contexts(4, 50):
            arm = policy.choose(context)
            assert arm.shape == (2,)
            assert np.all((arm >= 0) & (arm <= 1))
            policy.learn(context, arm, 0.5)

    def test_highest_index_wins(self, mocker):
        """Means 0.5 and 0.3 with radii 0.1 and 0.2 give indices 1.0 and
        1.3"""
        policy = _policy(d_x=2, d_a=1, partition_number=2)
        context = np.array([0.2, 0.7])
        (key,) = policy.round_keys(context)
        policy.store.put(0, key, CellStats(1, 0.5))
        policy.store.put(1, key, CellStats(1, 0.3))
        mocker.patch(
            "cmab.cmab_rl.radii", return_value=np.array([[0.1, 0.2]])
        )
        assert policy.indices([key]) == pytest.approx([1.0, 1.3])
        assert policy.choose(context).tolist() == [0.75]

    def test_multiplier_scales_exploration(self):
        """With a single supertuple the index is the arm's mean plus
        five times its scaled radius"""
        context = np.array([0.4, 0.6])
        policies = [
            _policy(d_x=2, d_a=1, partition_number=2, multiplier=multiplier)
            for multiplier in (1.0, 0.25)
        ]
        for seen in _contexts(2, 40) + [context]:
            for policy in policies:
                policy.update(seen, 0, float(seen[1]))
                policy.update(seen, 1, float(seen[0]))
        keys = policies[0].round_keys(context)
        counts, means = policies[0].statistics(keys)
        assert np.all(counts > 0)
        full, scaled = (policy.indices(keys) - means[0] for policy in policies)
        assert scaled == pytest.approx(0.25 * full)

    def test_deterministic(self):
        contexts = _contexts(4, 200)
        arms = []
        for _ in range(2):
            policy = _policy(partition_number=3, seed=5)
            played = []
            for context in contexts:
                arm = policy.choose(context)
                policy.learn(context, arm, float(context[2] > 0.5))
                played.append(arm.tolist())
            arms.append(played)
        assert arms[0] == arms[1]

    def test_reads(self):
        """Reads stay within |Y|·V·S² + |Y|·W (mean, radius) pairs"""
        policy = _policy(partition_number=3)
        n_arms, n_tuples, size = policy.n_arms, 4, policy.supertuple_count
        bound = n_arms * (n_tuples * size**2 + len(policy.pair_tuples))
        for context in _contexts(4, 20):
            arm = policy.choose(context)
            assert 0 < policy.reads_last_round <= bound
            policy.learn(context, arm, float(context[0] > 0.5))
        assert policy.last_candidates.shape == (n_tuples, n_arms)
        assert policy.last_estimated.shape == (n_arms,)


class TestPerArmOperations:
    @pytest.fixture(autouse=True)
    def setup_policy(self):
        self.policy = _policy(partition_number=3)
        self.keys = self.policy.round_keys(np.full(4, 0.5))

    def test_no_candidates(self, mocker):
        """Without candidates the estimated tuple is drawn uniformly"""
        counts = collections.Counter(
            self.policy.select_estimated_tuple(0, set(), self.keys)
            for _ in range(4000)
        )
        assert sorted(counts) == self.policy.context_tuples
        assert all(abs(count - 1000) < 150 for count in counts.values())

    def test_least_variation(self, mocker):
        spread = {(0,): 0.1, (1,): 0.3}
        mocker.patch.object(
            self.policy, "variation", side_effect=lambda y, v, k: spread[v]
        )
        selected = self.policy.select_estimated_tuple(
            0, {(0,), (1,)}, self.keys
        )
        assert selected == (0,)

    def test_tie_break(self, mocker):
        mocker.patch.object(self.policy, "variation", return_value=0.2)
        picks = [
            self.policy.select_estimated_tuple(0, {(1,), (2,)}, self.keys)
            for _ in range(10_000)
        ]
        share = picks.count((1,)) / len(picks)
        assert share == pytest.approx(0.5, abs=0.05)

    def test_variation(self):
        keys = self.keys
        for y_key, mean in zip(keys[:3], (0.2, 0.5, 0.4)):
            self.policy.store.put(0, y_key, CellStats(1, mean))
        # Supertuples (0, 1), (0, 2) and (0, 3) contain (0,)
        assert self.policy.variation(0, (0,), keys) == pytest.approx(0.3)

    def test_aggregate_mean(self):
        keys = self.keys
        self.policy.store.put(1, keys[0], CellStats(2, 0.5))
        self.policy.store.put(1, keys[1], CellStats(2, 1.0))
        assert self.policy.aggregate_mean(1, (0,), keys) == pytest.approx(
            0.75
        )
        assert self.policy.aggregate_mean(1, (3,), keys) == 0.0


class TestLearn:
    def test_touches_every_supertuple(self):
        policy = _policy(partition_number=3)
        context = np.array([0.1, 0.4, 0.7, 0.95])
        arm = policy.choose(context)
        policy.learn(context, arm, 1.0)
        assert len(policy.store) == 6

    def test_running_means(self):
        policy = _policy(partition_number=3)
        context = np.array([0.1, 0.4, 0.7, 0.95])
        policy.update(context, 2, 0.0)
        policy.update(context, 2, 1.0)
        for key in policy.round_keys(context):
            assert policy.store.get(2, key) == CellStats(2, 0.5)
            assert policy.store.get(3, key) == CellStats(0, 0.0)

    def test_unknown_arm(self):
        policy = _policy(partition_number=3)
        with pytest.raises(ValueError):
            policy.learn(np.full(4, 0.5), np.array([0.3, 0.3]), 1.0)

    @pytest.mark.parametrize("y, reward", [(-1, 0.5), (6, 0.5), (0, math.inf)])
    def test_invalid_update(self, y, reward):
        policy = _policy(partition_number=3)
        with pytest.raises(ValueError):
            policy.update(np.full(4, 0.5), y, reward)

    def test_counter_consistency(self):
        """Every supertuple sees each arm as often as it was played"""
        policy = _policy(partition_number=3, seed=3)
        played = collections.Counter()
        for context in _contexts(4, 300):
            arm = policy.choose(context)
            played[policy.arm_id(arm)] += 1
            policy.learn(context, arm, float(context[0]))

        totals = collections.Counter()
        for (y, key), stats in policy.store.items():
            totals[(y, key.dims)] += stats.count
        for y in range(policy.n_arms):
            for w in policy.pair_tuples:
                assert totals[(y, w)] == played[y]

    def test_reset(self):
        policy = _policy(partition_number=3)
        context = np.full(4, 0.5)
        policy.learn(context, policy.choose(context), 1.0)
        policy.reset(0)
        assert len(policy.store) == 0

    @pytest.mark.slow
    def test_lazy_storage(self):
        """Touched entries never exceed T·W, and storage stays below the
        size of a full table"""
        horizon = 10_000
        policy = _policy(d_x=5, d_a=5, horizon=horizon, seed=1)
        n_supertuples = len(policy.pair_tuples)
        full_table = policy.n_arms * n_supertuples * policy.m**2
        for t, context in enumerate(_contexts(5, horizon), start=1):
            arm = policy.choose(context)
            policy.learn(context, arm, float(context[0] > 0.5))
            if t % 1000 == 0:
                assert len(policy.store) <= t * n_supertuples
                assert len(policy.store) <= full_table
                assert policy.store.allocated <= min(
                    t * n_supertuples * policy.n_arms, full_table
                )


class TestRestrictArms:
    def _policy(self, finite_arms=None):
        config = CmabRlConfig(2, 1, 1, 1, horizon=16, partition_number=2)
        return CmabRl(config, finite_arms=finite_arms)

    def test_centers(self):
        policy = self._policy([[0.25], [0.75]])
        assert policy.arm_set.arms.tolist() == [[0.25], [0.75]]

    def test_first_listed_arm_kept(self):
        policy = self._policy([[0.1], [0.2], [0.9]])
        assert policy.arm_set.arms.tolist() == [[0.1], [0.9]]

    def test_empty_cells_dropped(self):
        policy = self._policy([[0.3]])
        assert policy.arm_set.arms.tolist() == [[0.3]]
        assert policy.arm_set.cells == (((0,), (0,)),)
        assert policy.choose(np.array([0.5, 0.5])).tolist() == [0.3]

    def test_empty_list(self):
        with pytest.raises(ValueError):
            self._policy([])

    def test_malformed_arm(self):
        with pytest.raises(ValueError):
            self._policy([[0.2, 0.3]])

    def test_after_learning(self):
        policy = self._policy()
        policy.update(np.array([0.5, 0.5]), 0, 1.0)
        with pytest.raises(ValueError):
            policy.restrict_arms([[0.1]])


class TestSnapshot:
    def _trained(self, seed=0):
        policy = _policy(partition_number=3, seed=seed)
        for context in _contexts(4, 100):
            arm = policy.choose(context)
            policy.learn(context, arm, float(context[1]))
        return policy

    def test_round_trip(self):
        text = self._trained().snapshot()
        restored = _policy(partition_number=3)
        restored.load_snapshot(text)
        assert restored.snapshot() == text
        assert len(restored.store) == len(self._trained().store)

    def test_format(self):
        document = json.loads(self._trained().snapshot())
        assert document["format"] == SNAPSHOT_FORMAT
        assert document["m"] == 3
        assert document["entries"] == sorted(document["entries"])

    def test_same_choices(self):
        text = self._trained().snapshot()
        first, second = _policy(partition_number=3, seed=9), _policy(
            partition_number=3, seed=9
        )
        first.load_snapshot(text)
        second.load_snapshot(text)
        for context in _contexts(4, 20, seed=4):
            expected = first.choose(context)
            assert np.array_equal(second.choose(context), expected)

    def test_unknown_format(self):
        text = json.dumps({"format": "other/1"})
        with pytest.raises(ValueError):
            _policy(partition_number=3).load_snapshot(text)

    def test_mismatched_partition(self):
        text = self._trained().snapshot()
        with pytest.raises(ValueError):
            _policy(partition_number=4).load_snapshot(text)


@pytest.mark.slow
class TestRelevanceGuarantee:
    def test_true_tuple_stays_candidate(self):
        """The context tuple the reward reads passes the relevance test
        for every arm in every round of at least 90% of the runs"""
        config = SparseEnvConfig(d_x=4, d_a=2, context_dims=((2,),))
        environment = SparseRelevanceEnvironment(config)
        true_index = 2
        kept = 0
        for seed in range(50):
            policy = _policy(partition_number=3, seed=seed)
            rounds = []

            def on_round(record, policy=policy, rounds=rounds):
                rounds.append(bool(policy.last_candidates[true_index].all()))

            run_episode(policy, environment, 2000, seed, on_round=on_round)
            kept += all(rounds)
        assert kept >= 45
