"""Types and contracts shared by every policy and environment

Contexts and arms are plain 1-D float numpy arrays with values in
[0, 1]. The round loop only talks to :class:`Policy` and
:class:`Environment`.
"""
import abc
import dataclasses
import math

import numpy as np

from cmab.constants import POLICY_STREAM

_SEED_MODULUS = 2**64


def as_unit_vector(values, dim, name="vector"):
    """Validate a point of [0, 1]^dim and return it as a float array

    :param values: Coordinates
    :type values: Sequence[float] | numpy.ndarray
    :param dim: Expected length
    :type dim: int
    :param name: Used in error messages
    :type name: str

    :raises ValueError: Wrong length, non-finite or out-of-range entries

    :return: A new float array
    :rtype: numpy.ndarray
    """
    vector = np.array(values, dtype=float).reshape(-1)
    if vector.shape[0] != dim:
        raise ValueError(
            f"{name} must have {dim} entries (got {vector.shape[0]})"
        )
    if not np.all(np.isfinite(vector)):
        raise ValueError(f"{name} has non-finite entries: {vector!r}")
    if np.any(vector < 0.0) or np.any(vector > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]: {vector!r}")
    return vector


def as_context(values, d_x):
    return as_unit_vector(values, d_x, name="context")


def as_arm(values, d_a):
    return as_unit_vector(values, d_a, name="arm")


@dataclasses.dataclass(frozen=True)
class RoundRecord:
    """What happened in one round of an episode

    `expected_reward` and `oracle_reward` are reported by the
    environment and only used to compute the regret.
    """

    t: int
    context: np.ndarray
    arm: np.ndarray
    reward: float
    expected_reward: float
    oracle_reward: float

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise ValueError(f"Round {self.t}: reward {self.reward!r}")

    @property
    def gap(self):
        return self.oracle_reward - self.expected_reward

    @property
    def overshoot(self):
        """How far the played arm beats the grid oracle, 0 if it doesn't

        The round loop compares it with the oracle tolerance.
        """
        return max(0.0, self.expected_reward - self.oracle_reward)


class Policy(abc.ABC):
    """Abstract base class of the learners

    A policy is driven by the round loop: `choose` is called with the
    round's context, then `learn` with the same context, the arm that
    was returned and the observed reward.
    """

    name = None

    def __init__(self, d_x, d_a, *, seed=0):
        """
        :param d_x: Number of context dimensions
        :type d_x: int
        :param d_a: Number of arm dimensions
        :type d_a: int
        :param seed: Seed of the policy's random stream
        :type seed: int
        """
        self.d_x = d_x
        self.d_a = d_a
        self.rng = seeded_rng(seed, POLICY_STREAM)

    @abc.abstractmethod
    def choose(self, context):
        """Select an arm for the context

        :param context: Current context
        :type context: numpy.ndarray

        :return: Arm in [0, 1]^d_a
        :rtype: numpy.ndarray
        """
        ...

    @abc.abstractmethod
    def learn(self, context, arm, reward):
        """Update the statistics with the outcome of a round

        :return: None
        """
        ...

    def reset(self, seed):
        """Forget everything learned and reseed the random stream

        Subclasses extend this to clear their statistics.

        :param seed: Seed of the policy's random stream
        :type seed: int

        :return: None
        """
        self.rng = seeded_rng(seed, POLICY_STREAM)


class Environment(abc.ABC):
    """Abstract base class of the reward environments

    Subclasses declare which coordinates the expected reward depends on
    through `relevant_context_dims` and `relevant_arm_dims`.
    """

    def __init__(self, d_x, d_a):
        self.d_x = d_x
        self.d_a = d_a

    @property
    @abc.abstractmethod
    def relevant_context_dims(self):
        """Sorted tuple of the context coordinates the reward reads"""
        ...

    @property
    @abc.abstractmethod
    def relevant_arm_dims(self):
        """Sorted tuple of the arm coordinates the reward reads"""
        ...

    def sample_context(self, rng):
        """Draw a context uniformly from [0, 1]^d_x

        :param rng: Random stream
        :type rng: numpy.random.Generator

        :rtype: numpy.ndarray
        """
        return rng.random(self.d_x)

    @abc.abstractmethod
    def expected_rewards(self, context, arms):
        """Expected rewards of many arms for one context

        :param context: Context, shape (d_x,)
        :type context: numpy.ndarray
        :param arms: Arms, shape (n, d_a)
        :type arms: numpy.ndarray

        :return: Expected rewards, shape (n,)
        :rtype: numpy.ndarray
        """
        ...

    def expected_reward(self, context, arm):
        arms = np.asarray(arm, dtype=float).reshape(1, -1)
        return float(self.expected_rewards(context, arms)[0])

    @abc.abstractmethod
    def sample_reward(self, context, arm, rng):
        """Draw a noisy reward with mean `expected_reward(context, arm)`

        :rtype: float
        """
        ...

    @abc.abstractmethod
    def oracle_best(self, context):
        """Best achievable expected reward for the context

        :rtype: float
        """
        ...


def selfnormalized_bound(count, delta):
    """Confidence radius of a sample mean of 1-sub-Gaussian rewards

    With probability at least 1 - delta, the sample mean of `count`
    rewards is within the returned radius of the true mean, uniformly
    over all counts.

    :param count: Number of samples, at least 1
    :type count: int
    :param delta: Failure probability, in (0, 1)
    :type delta: float

    :raises ValueError: `count` < 1 or `delta` outside (0, 1)

    :rtype: float
    """
    if count < 1:
        raise ValueError(f"count must be at least 1 (got {count!r})")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1) (got {delta!r})")
    log_term = math.log(math.sqrt(1.0 + count) / delta)
    return math.sqrt((2.0 / count) * (1.0 + 2.0 * log_term))


def cumulative_regret(records):
    """Running sum of oracle minus expected reward

    :param records: Rounds of an episode, in order
    :type records: Sequence[RoundRecord]

    :return: Element t is the regret accumulated up to round t + 1
    :rtype: numpy.ndarray
    """
    if not records:
        raise ValueError("Cannot compute the regret of an empty trajectory")
    gaps = np.fromiter((record.gap for record in records), dtype=float)
    return np.cumsum(gaps)


def seeded_rng(base_seed, stream_id):
    """Create an independent, reproducible random stream

    Streams are PCG64 generators seeded from a SeedSequence whose
    entropy is `base_seed` and whose spawn key is `stream_id`, so every
    (base_seed, stream_id) pair maps to its own stream.

    :param base_seed: Seed of the run. Reduced modulo 2**64
    :type base_seed: int
    :param stream_id: Identifies the consumer of the stream
    :type stream_id: int

    :rtype: numpy.random.Generator
    """
    sequence = np.random.SeedSequence(
        entropy=int(base_seed) % _SEED_MODULUS, spawn_key=(int(stream_id),)
    )
    return np.random.Generator(np.random.PCG64(sequence))
