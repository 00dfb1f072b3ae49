"""Contextual bandit with relevance learning (CMAB-RL)

The policy discretizes the arms into the centers of the cells of every
d̄a-subspace and keeps, for each arm, one sample mean per cell of every
2·d̄x-subspace of the contexts. Each round it:

1. tests every d̄x-tuple of context dimensions for relevance, by
   checking that the means of its supertuples agree within their
   confidence radii,
2. picks the candidate whose supertuple means vary the least,
3. scores each arm with the count-weighted mean over that tuple's
   supertuples plus five times its widest confidence radius.

The relevance test and the scores are computed for all arms at once on
(tuple, arm) arrays. The per-arm operations below read the same arrays.
"""
import dataclasses
import json
import logging
import math

import numpy as np

from cmab.constants import DEFAULT_LIPSCHITZ, UCB_EXPLORATION_FACTOR
from cmab.core import Policy, as_arm, as_context
from cmab.partition import (
    CellKey,
    CellStats,
    StatsStore,
    ceil_root,
    cell_indices,
    enumerate_tuples,
    generate_arms,
    supertuples,
)

SNAPSHOT_FORMAT = "cmab-rl-snapshot/1"


def m_for_horizon(horizon, relevant_d_x, relevant_d_a):
    """Partition number ⌈T^(1 / (2 + 2·d̄x + d̄a))⌉

    :param horizon: Number of rounds T, at least 1
    :type horizon: int
    :param relevant_d_x: Number of relevant context dimensions d̄x
    :type relevant_d_x: int
    :param relevant_d_a: Number of relevant arm dimensions d̄a
    :type relevant_d_a: int

    :rtype: int
    """
    if horizon < 1:
        raise ValueError(f"Horizon must be at least 1 (got {horizon!r})")
    return ceil_root(horizon, 2 + 2 * relevant_d_x + relevant_d_a)


def log_term(n_arms, c_bar, m, relevant_d_x, horizon):
    """2 + 4·ln(2·|Y|·C̄·m^(2·d̄x)·T^(3/2)), shared by every radius"""
    return 2.0 + 4.0 * (
        math.log(2.0 * n_arms * c_bar)
        + 2 * relevant_d_x * math.log(m)
        + 1.5 * math.log(horizon)
    )


def uncertainty(
    count, n_arms, c_bar, m, relevant_d_x, horizon, multiplier=1.0
):
    """Confidence radius of a sample mean built from `count` rewards

    :return: +inf when `count` is 0
    :rtype: float
    """
    if count == 0:
        return math.inf
    constant = log_term(n_arms, c_bar, m, relevant_d_x, horizon)
    return multiplier * math.sqrt(constant / count)


def radii(counts, constant, multiplier):
    """Vectorized :func:`uncertainty` over an array of counts"""
    counts = np.asarray(counts)
    with np.errstate(divide="ignore"):
        values = multiplier * np.sqrt(constant / counts)
    return np.where(counts > 0, values, np.inf)


class ReadCounter:
    """Running count of the (mean, radius) entries the kernels index

    A mean and the radius at the same (supertuple, arm) entry count as
    one read.
    """

    def __init__(self):
        self.total = 0

    def add(self, entries):
        self.total += int(entries)


def pair_gaps(means, pairs, reads=None):
    """Absolute gaps between the means of each tuple's supertuple pairs

    :param reads: Incremented by the number of entries indexed
    :type reads: ReadCounter

    :return: Array of shape (V, P, Y)
    :rtype: numpy.ndarray
    """
    first, second = pairs
    lhs, rhs = means[first], means[second]
    if reads is not None:
        reads.add(lhs.size + rhs.size)
    return np.abs(lhs - rhs)


def relevance_mask(means, widths, pairs, slack, gaps=None):
    """Which tuples pass the relevance test, for each arm

    :param means: Sample means, shape (W, Y)
    :type means: numpy.ndarray
    :param widths: Confidence radii, shape (W, Y)
    :type widths: numpy.ndarray
    :param pairs: Two (V, P) arrays of supertuple indices, one row of
        unordered supertuple pairs per tuple
    :type pairs: tuple[numpy.ndarray, numpy.ndarray]
    :param slack: 2·L·sqrt(d̄x) / m
    :type slack: float
    :param gaps: :func:`pair_gaps` of the means, if already computed
    :type gaps: numpy.ndarray

    :return: Boolean array of shape (V, Y)
    :rtype: numpy.ndarray
    """
    first, second = pairs
    if gaps is None:
        gaps = pair_gaps(means, pairs)
    thresholds = slack + widths[first] + widths[second]
    # All-pass on an empty pair axis
    return np.all(gaps <= thresholds, axis=1)


def variations(means, pairs, gaps=None):
    """Largest gap between the supertuple means of each tuple

    :return: Array of shape (V, Y), zero where a tuple has a single
        supertuple
    :rtype: numpy.ndarray
    """
    first, _ = pairs
    if first.shape[1] == 0:
        return np.zeros((first.shape[0], means.shape[1]))
    if gaps is None:
        gaps = pair_gaps(means, pairs)
    return gaps.max(axis=1)


def aggregate_means(counts, means, membership, reads=None):
    """Count-weighted means over the supertuples of each tuple

    :param membership: 0/1 matrix of shape (V, W), 1 where supertuple w
        contains tuple v
    :type membership: numpy.ndarray
    :param reads: Incremented by the member entries read
    :type reads: ReadCounter

    :return: Array of shape (V, Y), 0 where no supertuple cell was
        visited
    :rtype: numpy.ndarray
    """
    if reads is not None:
        reads.add(np.count_nonzero(membership) * counts.shape[1])
    totals = membership @ counts
    weighted = membership @ (counts * means)
    with np.errstate(invalid="ignore", divide="ignore"):
        result = weighted / totals
    return np.where(totals > 0, result, 0.0)


@dataclasses.dataclass(frozen=True)
class CmabRlConfig:
    """Inputs of the CMAB-RL policy

    `partition_number` defaults to :func:`m_for_horizon`.
    """

    d_x: int
    d_a: int
    relevant_d_x: int
    relevant_d_a: int
    horizon: int
    lipschitz: float = DEFAULT_LIPSCHITZ
    multiplier: float = 1.0
    partition_number: int = None

    def __post_init__(self):
        if not 1 <= self.relevant_d_x <= self.d_x // 2:
            raise ValueError(
                f"Need 1 <= 2 * relevant_d_x <= d_x "
                f"(got relevant_d_x={self.relevant_d_x}, d_x={self.d_x})"
            )
        if not 1 <= self.relevant_d_a <= self.d_a:
            raise ValueError(
                f"Need 1 <= relevant_d_a <= d_a "
                f"(got relevant_d_a={self.relevant_d_a}, d_a={self.d_a})"
            )
        if self.horizon < 1:
            raise ValueError(f"Horizon must be positive: {self.horizon!r}")
        if not self.lipschitz > 0:
            raise ValueError(f"Lipschitz constant: {self.lipschitz!r}")
        if not self.multiplier > 0:
            raise ValueError(f"Confidence multiplier: {self.multiplier!r}")
        if self.partition_number is not None and self.partition_number < 1:
            raise ValueError(f"Partition number: {self.partition_number!r}")

    @property
    def m(self):
        if self.partition_number is not None:
            return self.partition_number
        return m_for_horizon(
            self.horizon, self.relevant_d_x, self.relevant_d_a
        )


class CmabRl(Policy):
    """CMAB-RL policy

    After each :meth:`choose`, `last_candidates` holds the (V, Y)
    relevance mask of the round, `last_estimated` the index of the
    estimated tuple of each arm and `reads_last_round` the number of
    (mean, radius) reads the round made.
    """

    name = "cmab_rl"

    def __init__(self, config, *, seed=0, finite_arms=None):
        super().__init__(config.d_x, config.d_a, seed=seed)
        self.config = config
        self.m = config.m
        self.arm_set = generate_arms(config.d_a, config.relevant_d_a, self.m)
        self.context_tuples = enumerate_tuples(config.d_x, config.relevant_d_x)
        self.pair_tuples = enumerate_tuples(
            config.d_x, 2 * config.relevant_d_x
        )
        self.c_bar = math.comb(config.d_x - 1, 2 * config.relevant_d_x - 1)
        self.slack = (
            2.0 * config.lipschitz * math.sqrt(config.relevant_d_x) / self.m
        )
        self._build_index()
        self.store = StatsStore(len(self.arm_set))
        self._log_term = log_term(
            len(self.arm_set),
            self.c_bar,
            self.m,
            config.relevant_d_x,
            config.horizon,
        )
        self._last_context = None
        self._last_keys = None
        self._last_arm = None
        self.last_candidates = None
        self.last_estimated = None
        self.reads_last_round = 0
        if finite_arms is not None:
            self.restrict_arms(finite_arms)
        logging.info(
            "CMAB-RL: m=%r, %r arms, %r context tuples, %r supertuples",
            self.m,
            len(self.arm_set),
            len(self.context_tuples),
            len(self.pair_tuples),
        )

    def _build_index(self):
        rank = {w: i for i, w in enumerate(self.pair_tuples)}
        n_tuples = len(self.context_tuples)
        self.membership = np.zeros((n_tuples, len(self.pair_tuples)))
        firsts, seconds = [], []
        for v_index, v in enumerate(self.context_tuples):
            members = [
                rank[w]
                for w in supertuples(v, 2 * self.config.relevant_d_x, self.d_x)
            ]
            self.membership[v_index, members] = 1.0
            pairs = [
                (a, b)
                for i, a in enumerate(members)
                for b in members[i + 1 :]
            ]
            firsts.append([a for a, _ in pairs])
            seconds.append([b for _, b in pairs])
        self.pairs = (
            np.array(firsts, dtype=np.int64).reshape(n_tuples, -1),
            np.array(seconds, dtype=np.int64).reshape(n_tuples, -1),
        )
        self._dims = np.array(self.pair_tuples, dtype=np.int64)
        self.supertuple_count = math.comb(
            self.d_x - self.config.relevant_d_x, self.config.relevant_d_x
        )

    @property
    def n_arms(self):
        return len(self.arm_set)

    def round_keys(self, context):
        """Cell of each supertuple's partition that contains the context

        :rtype: list[CellKey]
        """
        x = as_context(context, self.d_x)
        intervals = cell_indices(x[self._dims], self.m)
        return [
            CellKey(w, tuple(int(k) for k in row))
            for w, row in zip(self.pair_tuples, intervals)
        ]

    def _keys_for(self, context):
        x = as_context(context, self.d_x)
        if self._last_context is not None and np.array_equal(
            x, self._last_context
        ):
            return self._last_keys
        keys = self.round_keys(x)
        self._last_context = x
        self._last_keys = keys
        return keys

    def statistics(self, keys):
        """Counters and means of every arm at the given cells

        :return: (counts, means), both of shape (W, Y)
        :rtype: tuple[numpy.ndarray, numpy.ndarray]
        """
        counts = np.zeros((len(keys), self.n_arms), dtype=np.int64)
        means = np.zeros((len(keys), self.n_arms))
        for row, key in enumerate(keys):
            block = self.store.block(key)
            if block is not None:
                counts[row], means[row] = block
        return counts, means

    def _radii(self, counts):
        return radii(counts, self._log_term, self.config.multiplier)

    def _pick(self, values):
        """Index of the largest value, ties drawn from the policy stream"""
        best = np.flatnonzero(values == values.max())
        if best.size == 1:
            return int(best[0])
        return int(self.rng.choice(best))

    def _estimate(self, passes, spread):
        """Estimated tuple index per arm, random among ties

        Arms without candidates draw uniformly from all tuples.
        """
        masked = np.where(passes, spread, np.inf)
        ties = masked == masked.min(axis=0)
        priorities = np.where(ties, self.rng.random(masked.shape), -1.0)
        return priorities.argmax(axis=0)

    def candidate_relevant_tuples(self, y, keys):
        """Tuples that pass the relevance test for arm `y`

        :rtype: set[tuple[int, ...]]
        """
        counts, means = self.statistics(keys)
        passes = relevance_mask(
            means[:, [y]], self._radii(counts[:, [y]]), self.pairs, self.slack
        )[:, 0]
        return {v for v, ok in zip(self.context_tuples, passes) if ok}

    def variation(self, y, v, keys):
        _, means = self.statistics(keys)
        spread = variations(means[:, [y]], self.pairs)
        return float(spread[self.context_tuples.index(tuple(v)), 0])

    def select_estimated_tuple(self, y, candidates, keys):
        """Candidate with the least variation, or a uniformly drawn tuple
        when there are no candidates

        :rtype: tuple[int, ...]
        """
        if not candidates:
            index = self.rng.integers(len(self.context_tuples))
            return self.context_tuples[index]
        ordered = sorted(candidates)
        spread = np.array([self.variation(y, v, keys) for v in ordered])
        return ordered[self._pick(-spread)]

    def aggregate_mean(self, y, c_hat, keys):
        counts, means = self.statistics(keys)
        row = self.membership[self.context_tuples.index(tuple(c_hat))]
        return float(
            aggregate_means(counts[:, [y]], means[:, [y]], row[None, :])[0, 0]
        )

    def indices(self, keys):
        """UCB of every arm at the given cells

        Also refreshes `last_candidates`, `last_estimated` and
        `reads_last_round`.

        :rtype: numpy.ndarray
        """
        reads = ReadCounter()
        counts, means = self.statistics(keys)
        widths = self._radii(counts)
        gaps = pair_gaps(means, self.pairs, reads)
        passes = relevance_mask(
            means, widths, self.pairs, self.slack, gaps=gaps
        )
        c_hat = self._estimate(
            passes, variations(means, self.pairs, gaps=gaps)
        )
        estimates = aggregate_means(counts, means, self.membership, reads)
        widest = widths.max(axis=0)
        reads.add(widths.size)
        arms = np.arange(self.n_arms)
        self.last_candidates = passes
        self.last_estimated = c_hat
        self.reads_last_round = reads.total
        return estimates[c_hat, arms] + UCB_EXPLORATION_FACTOR * widest

    def choose(self, context):
        keys = self._keys_for(context)
        y = self._pick(self.indices(keys))
        self._last_arm = y
        return self.arm_set.arm(y)

    def arm_id(self, arm):
        """Id of an arm of the catalog

        The arm returned by the last :meth:`choose` wins when several
        ids share the same coordinates.

        :raises ValueError: `arm` is not in the catalog
        """
        arm = as_arm(arm, self.d_a)
        if self._last_arm is not None and np.array_equal(
            arm, self.arm_set.arms[self._last_arm]
        ):
            return self._last_arm
        matches = np.flatnonzero(np.all(self.arm_set.arms == arm, axis=1))
        if matches.size == 0:
            raise ValueError(f"Arm {arm!r} is not in the catalog")
        return int(matches[0])

    def learn(self, context, arm, reward):
        self.update(context, self.arm_id(arm), reward)

    def update(self, context, y, reward):
        """Fold `reward` into arm `y`'s mean at every supertuple cell"""
        if not 0 <= y < self.n_arms:
            raise ValueError(f"Arm id {y!r} outside [0, {self.n_arms})")
        if not math.isfinite(reward):
            raise ValueError(f"Reward must be finite (got {reward!r})")
        for key in self._keys_for(context):
            self.store.update(y, key, reward)

    def restrict_arms(self, finite_arms):
        """Replace each arm cell's center by the first listed arm inside
        the cell, dropping cells without any

        :param finite_arms: Arms to choose from
        :type finite_arms: Sequence[Sequence[float]]

        :raises ValueError: Empty list, malformed arm, no arm inside any
            cell, or statistics already collected
        """
        arms = [as_arm(arm, self.d_a) for arm in finite_arms]
        if not arms:
            raise ValueError("The finite arm list is empty")
        if len(self.store):
            raise ValueError("Arms must be restricted before learning")
        catalog = generate_arms(self.d_a, self.config.relevant_d_a, self.m)
        kept_arms, kept_cells = [], []
        for y, cell in enumerate(catalog.cells):
            for arm in arms:
                if catalog.contains(y, arm, self.m):
                    kept_arms.append(arm)
                    kept_cells.append(cell)
                    break
        if not kept_arms:
            raise ValueError("No listed arm lies in any arm cell")
        self.arm_set = dataclasses.replace(
            catalog, arms=np.array(kept_arms), cells=tuple(kept_cells)
        )
        self.store = StatsStore(len(self.arm_set))
        self._log_term = log_term(
            len(self.arm_set),
            self.c_bar,
            self.m,
            self.config.relevant_d_x,
            self.config.horizon,
        )
        self._last_arm = None
        logging.info(
            "CMAB-RL: %r finite arms kept out of %r cells",
            len(kept_arms),
            len(catalog),
        )

    def reset(self, seed):
        super().reset(seed)
        self.store = StatsStore(self.n_arms)
        self._last_context = None
        self._last_keys = None
        self._last_arm = None

    def snapshot(self):
        """Counters and means as JSON text

        Entries are [arm id, supertuple rank, interval indices, count,
        mean], sorted.

        :rtype: str
        """
        rank = {w: i for i, w in enumerate(self.pair_tuples)}
        entries = sorted(
            [y, rank[key.dims], list(key.intervals), stats.count, stats.mean]
            for (y, key), stats in self.store.items()
        )
        document = {
            "format": SNAPSHOT_FORMAT,
            "d_x": self.d_x,
            "d_a": self.d_a,
            "relevant_d_x": self.config.relevant_d_x,
            "relevant_d_a": self.config.relevant_d_a,
            "m": self.m,
            "n_arms": self.n_arms,
            "entries": entries,
        }
        return json.dumps(document, sort_keys=True)

    def load_snapshot(self, text):
        """Restore counters and means written by :meth:`snapshot`

        :raises ValueError: Unknown format or mismatched shape
        """
        document = json.loads(text)
        tag = document.get("format")
        if tag != SNAPSHOT_FORMAT:
            raise ValueError(f"Unknown snapshot format {tag!r}")
        expected = {
            "d_x": self.d_x,
            "d_a": self.d_a,
            "relevant_d_x": self.config.relevant_d_x,
            "relevant_d_a": self.config.relevant_d_a,
            "m": self.m,
            "n_arms": self.n_arms,
        }
        for name, value in expected.items():
            if document.get(name) != value:
                raise ValueError(
                    f"Snapshot has {name}={document.get(name)!r}, "
                    f"policy has {value!r}"
                )
        store = StatsStore(self.n_arms)
        for y, rank, intervals, count, mean in document["entries"]:
            key = CellKey(self.pair_tuples[rank], tuple(intervals))
            store.put(y, key, CellStats(int(count), float(mean)))
        self.store = store
