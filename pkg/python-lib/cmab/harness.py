"""Seeded repetitions of the round loop and their aggregation"""
import dataclasses
import logging
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd

from cmab.baselines import ChooPolicy, IupPolicy, UniformPolicy, iup_m
from cmab.cmab_rl import CmabRl, CmabRlConfig
from cmab.constants import (
    CONTEXT_STREAM,
    CSV_COLUMNS,
    ORACLE_TOLERANCE,
    REWARD_STREAM,
)
from cmab.core import RoundRecord, as_arm, seeded_rng
from cmab.environments import build_environment

LEARNING_ALGORITHMS = ("cmab_rl", "iup", "choo")


class ExperimentError(Exception):
    """Raised when an episode of an experiment fails"""

    def __init__(self, message, algorithm=None, seed=None):
        super().__init__(message)
        self.algorithm = algorithm
        self.seed = seed

    def __reduce__(self):
        return self.__class__, (str(self), self.algorithm, self.seed)


def recorded_rounds(horizon, stride):
    """Multiples of `stride` up to `horizon`, plus `horizon` itself

    :rtype: numpy.ndarray
    """
    if horizon < 1 or stride < 1:
        raise ValueError(
            f"Horizon and stride must be positive ({horizon!r}, {stride!r})"
        )
    rounds = np.arange(stride, horizon + 1, stride)
    if not rounds.size or rounds[-1] != horizon:
        rounds = np.append(rounds, horizon)
    return rounds


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Cumulative series of one episode at the recorded rounds

    `cum_expected_reward` sums the expected rewards of the played arms
    and `cum_oracle_reward` the oracle rewards, so that
    cum_regret = cum_oracle_reward - cum_expected_reward.
    """

    rounds: np.ndarray
    cum_reward: np.ndarray
    cum_expected_reward: np.ndarray
    cum_oracle_reward: np.ndarray
    cum_regret: np.ndarray
    seed: int
    duration: float

    @property
    def total_reward(self):
        return float(self.cum_reward[-1])

    @property
    def total_regret(self):
        return float(self.cum_regret[-1])


@dataclasses.dataclass(frozen=True)
class AggregateResult:
    """Mean and population std across repetitions at the recorded rounds"""

    algorithm: str
    rounds: np.ndarray
    mean_cum_reward: np.ndarray
    std_cum_reward: np.ndarray
    mean_cum_regret: np.ndarray
    std_cum_regret: np.ndarray
    seeds: tuple

    @classmethod
    def from_trajectories(cls, algorithm, trajectories):
        """Aggregate episodes, whatever order they finished in

        :raises ValueError: No trajectories, or mismatched rounds
        """
        if not trajectories:
            raise ValueError(f"No trajectory to aggregate for {algorithm}")
        trajectories = sorted(trajectories, key=lambda t: t.seed)
        rounds = trajectories[0].rounds
        for trajectory in trajectories[1:]:
            if not np.array_equal(trajectory.rounds, rounds):
                raise ValueError(
                    f"Trajectories of {algorithm} were recorded at "
                    "different rounds"
                )
        rewards = np.stack([t.cum_reward for t in trajectories])
        regrets = np.stack([t.cum_regret for t in trajectories])
        return cls(
            algorithm=algorithm,
            rounds=rounds,
            mean_cum_reward=rewards.mean(axis=0),
            std_cum_reward=rewards.std(axis=0),
            mean_cum_regret=regrets.mean(axis=0),
            std_cum_regret=regrets.std(axis=0),
            seeds=tuple(t.seed for t in trajectories),
        )

    @property
    def repetitions(self):
        return len(self.seeds)

    @property
    def final_mean_reward(self):
        return float(self.mean_cum_reward[-1])

    @property
    def final_mean_regret(self):
        return float(self.mean_cum_regret[-1])

    def to_frame(self):
        """One row per recorded round, with the CSV columns

        :rtype: pandas.DataFrame
        """
        return pd.DataFrame(
            {
                "round": self.rounds,
                "mean_cum_reward": self.mean_cum_reward,
                "std_cum_reward": self.std_cum_reward,
                "mean_cum_regret": self.mean_cum_regret,
                "std_cum_regret": self.std_cum_regret,
            },
            columns=list(CSV_COLUMNS),
        )


def run_episode(
    policy,
    environment,
    horizon,
    seed,
    stride=1,
    on_round=None,
    oracle_tolerance=ORACLE_TOLERANCE,
):
    """Play `horizon` rounds of `policy` against `environment`

    Contexts and rewards come from two streams derived from `seed`, so
    every policy run with the same seed sees the same contexts.

    :param policy: Learner, seeded by its owner
    :type policy: cmab.core.Policy
    :param environment: Reward environment
    :type environment: cmab.core.Environment
    :param horizon: Number of rounds
    :type horizon: int
    :param seed: Seed of the context and reward streams
    :type seed: int
    :param stride: Rounds between two recorded points
    :type stride: int
    :param on_round: Called with the RoundRecord of every round
    :type on_round: Callable[[cmab.core.RoundRecord], Any] | None
    :param oracle_tolerance: Margin by which a played arm may beat the
        grid oracle before a warning is logged
    :type oracle_tolerance: float

    :raises ValueError: Dimension mismatch or invalid horizon, before
        the first round

    :rtype: Trajectory
    """
    if (policy.d_x, policy.d_a) != (environment.d_x, environment.d_a):
        raise ValueError(
            f"Policy dimensions {(policy.d_x, policy.d_a)} don't match the "
            f"environment's {(environment.d_x, environment.d_a)}"
        )
    rounds = recorded_rounds(horizon, stride)
    context_rng = seeded_rng(seed, CONTEXT_STREAM)
    reward_rng = seeded_rng(seed, REWARD_STREAM)
    rewards = np.empty(horizon)
    expected = np.empty(horizon)
    oracle = np.empty(horizon)

    start = time.perf_counter()
    for t in range(1, horizon + 1):
        context = environment.sample_context(context_rng)
        arm = as_arm(policy.choose(context), environment.d_a)
        reward = environment.sample_reward(context, arm, reward_rng)
        record = RoundRecord(
            t=t,
            context=context,
            arm=arm,
            reward=reward,
            expected_reward=environment.expected_reward(context, arm),
            oracle_reward=environment.oracle_best(context),
        )
        policy.learn(context, arm, reward)
        rewards[t - 1] = record.reward
        expected[t - 1] = record.expected_reward
        oracle[t - 1] = record.oracle_reward
        if on_round is not None:
            on_round(record)
    duration = time.perf_counter() - start
    overshoot = float(np.max(expected - oracle))
    if overshoot > oracle_tolerance:
        logging.warning(
            "Played arms beat the oracle by up to %r, above its tolerance "
            "%r: the oracle grid is too coarse",
            overshoot,
            oracle_tolerance,
        )

    index = rounds - 1
    cum_expected = np.cumsum(expected)
    cum_oracle = np.cumsum(oracle)
    return Trajectory(
        rounds=rounds,
        cum_reward=np.cumsum(rewards)[index],
        cum_expected_reward=cum_expected[index],
        cum_oracle_reward=cum_oracle[index],
        cum_regret=np.cumsum(oracle - expected)[index],
        seed=seed,
        duration=duration,
    )


def build_policy(config, algorithm, seed):
    """Instantiate the learner described by an algorithm block

    :param config: Run config, for dimensions and horizon
    :type config: cmab.params.RunConfig
    :param algorithm: Algorithm block
    :type algorithm: cmab.params.AlgorithmConfig
    :param seed: Seed of the policy stream
    :type seed: int

    :rtype: cmab.core.Policy
    """
    if algorithm.name == "cmab_rl":
        policy_config = CmabRlConfig(
            d_x=config.d_x,
            d_a=config.d_a,
            relevant_d_x=config.relevant_d_x,
            relevant_d_a=config.relevant_d_a,
            horizon=config.horizon,
            lipschitz=config.lipschitz,
            multiplier=algorithm.multiplier,
            partition_number=algorithm.partition_number,
        )
        return CmabRl(
            policy_config, seed=seed, finite_arms=algorithm.finite_arms
        )
    if algorithm.name == "iup":
        return IupPolicy(
            config.d_x,
            config.d_a,
            config.horizon,
            algorithm.multiplier,
            seed=seed,
        )
    if algorithm.name == "choo":
        return ChooPolicy(
            config.d_x,
            config.d_a,
            config.horizon,
            algorithm.multiplier,
            seed=seed,
        )
    if algorithm.name == "uniform":
        return UniformPolicy(config.d_x, config.d_a, seed=seed)
    raise ValueError(f"Unknown algorithm {algorithm.name!r}")


def partition_number(config, algorithm):
    """Partition number the algorithm uses at the config's horizon, or
    None for the algorithms that don't partition"""
    if algorithm.name == "cmab_rl":
        if algorithm.partition_number is not None:
            return algorithm.partition_number
        return CmabRlConfig(
            config.d_x,
            config.d_a,
            config.relevant_d_x,
            config.relevant_d_a,
            config.horizon,
        ).m
    if algorithm.name == "iup":
        return iup_m(config.horizon, config.d_x, config.d_a)
    return None


def run_repetition(config, algorithm, seed):
    """One episode of one algorithm, with fresh policy and environment

    :raises ExperimentError: The episode failed

    :rtype: Trajectory
    """
    logging.info("Starting %s with seed %r", algorithm.name, seed)
    try:
        policy = build_policy(config, algorithm, seed)
        environment = build_environment(config.environment, config.oracle)
        trajectory = run_episode(
            policy,
            environment,
            config.horizon,
            seed,
            stride=config.record_stride,
            oracle_tolerance=config.oracle.tolerance,
        )
    except Exception as err:
        raise ExperimentError(
            f"{algorithm.name} failed with seed {seed}: {err}",
            algorithm=algorithm.name,
            seed=seed,
        ) from err
    logging.info(
        "Finished %s with seed %r: cumulative reward %r, regret %r",
        algorithm.name,
        seed,
        trajectory.total_reward,
        trajectory.total_regret,
    )
    return trajectory


def _run_all(config, algorithms):
    """Every (algorithm, seed) episode, in worker processes when the
    config asks for more than one worker"""
    jobs = [
        (algorithm, seed) for algorithm in algorithms for seed in config.seeds
    ]
    if config.workers <= 1:
        trajectories = [run_repetition(config, a, s) for a, s in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            futures = [
                executor.submit(run_repetition, config, a, s) for a, s in jobs
            ]
            trajectories = [future.result() for future in futures]

    results = {}
    for algorithm in algorithms:
        own = [
            trajectory
            for (a, _), trajectory in zip(jobs, trajectories)
            if a is algorithm
        ]
        results[algorithm.name] = AggregateResult.from_trajectories(
            algorithm.name, own
        )
    return results


def run_experiment(config):
    """Run every algorithm of the config over seeds seed .. seed+R-1

    :param config: Run config
    :type config: cmab.params.RunConfig

    :raises ExperimentError: An episode failed

    :return: Results by algorithm name, in config order
    :rtype: dict[str, AggregateResult]
    """
    logging.info(
        "Running %r for %r rounds, %r repetitions",
        [a.name for a in config.algorithms],
        config.horizon,
        config.repetitions,
    )
    return _run_all(config, config.algorithms)


@dataclasses.dataclass(frozen=True)
class GridSearchReport:
    """Results per (algorithm, multiplier) and the selected multipliers"""

    results: dict
    best: dict

    def final_means(self):
        return {
            key: result.final_mean_reward
            for key, result in self.results.items()
        }

    def to_frame(self):
        rows = [
            {
                "algorithm": name,
                "multiplier": multiplier,
                "final_mean_cum_reward": result.final_mean_reward,
                "final_mean_cum_regret": result.final_mean_regret,
                "selected": self.best[name] == multiplier,
            }
            for (name, multiplier), result in self.results.items()
        ]
        return pd.DataFrame(rows)


def grid_search(config, multipliers):
    """Pick, for each learning algorithm, the confidence multiplier
    with the largest final mean cumulative reward

    Ties go to the multiplier listed first. Uniform random has no
    multiplier and is left out.

    :param config: Run config
    :type config: cmab.params.RunConfig
    :param multipliers: Candidate multipliers
    :type multipliers: Sequence[float]

    :raises ValueError: No multiplier, or no learning algorithm

    :rtype: GridSearchReport
    """
    multipliers = list(dict.fromkeys(float(m) for m in multipliers))
    if not multipliers:
        raise ValueError("Grid search needs at least one multiplier")
    if any(not m > 0 for m in multipliers):
        raise ValueError(f"Multipliers must be positive: {multipliers!r}")
    learners = [
        a for a in config.algorithms if a.name in LEARNING_ALGORITHMS
    ]
    if not learners:
        raise ValueError("Grid search needs at least one learning algorithm")

    candidates = [
        dataclasses.replace(algorithm, multiplier=multiplier)
        for algorithm in learners
        for multiplier in multipliers
    ]
    results = {}
    for candidate in candidates:
        run = _run_all(config, [candidate])
        results[(candidate.name, candidate.multiplier)] = run[candidate.name]

    best = {}
    for algorithm in learners:
        finals = [
            results[(algorithm.name, m)].final_mean_reward for m in multipliers
        ]
        best[algorithm.name] = multipliers[int(np.argmax(finals))]
        logging.info(
            "Grid search: best multiplier of %s is %r",
            algorithm.name,
            best[algorithm.name],
        )
    return GridSearchReport(results=results, best=best)


@dataclasses.dataclass(frozen=True)
class SweepReport:
    """Results per horizon, each a dict by algorithm name"""

    results: dict
    partition_numbers: dict

    @property
    def horizons(self):
        return list(self.results)

    def to_frame(self):
        rows = []
        for horizon, by_algorithm in self.results.items():
            for name, result in by_algorithm.items():
                rows.append(
                    {
                        "horizon": horizon,
                        "algorithm": name,
                        "partition_number": self.partition_numbers[
                            (horizon, name)
                        ],
                        "final_mean_cum_reward": result.final_mean_reward,
                        "final_std_cum_reward": float(
                            result.std_cum_reward[-1]
                        ),
                        "final_mean_cum_regret": result.final_mean_regret,
                        "final_std_cum_regret": float(
                            result.std_cum_regret[-1]
                        ),
                        "mean_regret_per_round": (
                            result.final_mean_regret / horizon
                        ),
                    }
                )
        frame = pd.DataFrame(rows)
        frame["partition_number"] = frame["partition_number"].astype("Int64")
        return frame


def horizon_sweep(config, horizons):
    """Run the experiment once per horizon, with policies rebuilt for
    that horizon

    :param config: Run config; its own horizon is ignored
    :type config: cmab.params.RunConfig
    :param horizons: Horizons to run. Duplicates are dropped
    :type horizons: Iterable[int]

    :raises ValueError: No horizon, or a horizon below 1

    :rtype: SweepReport
    """
    horizons = [int(h) for h in horizons]
    if not horizons:
        raise ValueError("The sweep needs at least one horizon")
    if any(h < 1 for h in horizons):
        raise ValueError(f"Horizons must be positive: {horizons!r}")
    unique = sorted(set(horizons))
    if len(unique) != len(horizons):
        logging.warning(
            "Dropping duplicate horizons: %r -> %r", horizons, unique
        )

    results = {}
    partition_numbers = {}
    for horizon in unique:
        run_config = dataclasses.replace(config, horizon=horizon)
        results[horizon] = run_experiment(run_config)
        for algorithm in run_config.algorithms:
            partition_numbers[(horizon, algorithm.name)] = partition_number(
                run_config, algorithm
            )
    return SweepReport(results=results, partition_numbers=partition_numbers)
