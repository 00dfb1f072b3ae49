"""Reward environments and the grid oracle used to compute the regret"""
import dataclasses
import itertools
import logging
import math

import numpy as np

from cmab.constants import (
    DEFAULT_LIPSCHITZ,
    GLUCOSE_BREAKPOINTS,
    GLUCOSE_NOISE_STD,
    GMM_DEFAULTS,
    ORACLE_RESOLUTION,
    ORACLE_TOLERANCE,
    UNUSED_ARM_COORDINATE,
)
from cmab.core import Environment, as_arm, as_context
from cmab.partition import check_tuple

GLUCOSE_LEVELS = (0.0, 1.0, 1.0, 0.0)


@dataclasses.dataclass(frozen=True)
class OracleConfig:
    """Grid used to approximate the best expected reward of a context

    The grid has `resolution` + 1 evenly spaced points per searched arm
    dimension, so doubling the resolution refines the grid.
    """

    resolution: int = ORACLE_RESOLUTION
    tolerance: float = ORACLE_TOLERANCE

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError(
                f"Oracle resolution must be at least 2: {self.resolution!r}"
            )
        if not self.tolerance > 0:
            raise ValueError(f"Oracle tolerance: {self.tolerance!r}")


def oracle_grid(d_a, dims, resolution):
    """Arms on the k / resolution grid over `dims`, 0.5 elsewhere

    :rtype: numpy.ndarray
    """
    levels = np.arange(resolution + 1) / resolution
    points = np.array(list(itertools.product(levels, repeat=len(dims))))
    grid = np.full((points.shape[0], d_a), UNUSED_ARM_COORDINATE)
    if dims:
        grid[:, list(dims)] = points
    return grid


def oracle_best(environment, context, config=None):
    """Best expected reward for the context over the oracle grid

    The grid spans the environment's relevant arm dimensions, or all of
    them when the environment declares its arm relevance as None.

    :param environment: Environment exposing `expected_rewards`
    :type environment: cmab.core.Environment
    :param context: Context
    :type context: numpy.ndarray
    :param config: Grid settings, defaults to OracleConfig()
    :type config: OracleConfig

    :rtype: float
    """
    config = config or OracleConfig()
    dims = environment.relevant_arm_dims
    if dims is None:
        dims = tuple(range(environment.d_a))
    grid = oracle_grid(environment.d_a, dims, config.resolution)
    return float(np.max(environment.expected_rewards(context, grid)))


def glucose_reward(cgm):
    """Map a CGM reading (mg/dL) to a reward in [0, 1]

    0 up to 80 (hypoglycemia), rising linearly to 1 at 90, 1 up to 130,
    falling linearly to 0 at 180 and 0 above (hyperglycemia).

    :raises ValueError: Non-finite reading

    :rtype: float
    """
    if not math.isfinite(cgm):
        raise ValueError(f"CGM reading must be finite (got {cgm!r})")
    return float(
        np.interp(cgm, GLUCOSE_BREAKPOINTS, GLUCOSE_LEVELS, left=0, right=0)
    )


def noisy_glucose_reward(cgm, rng, noise_std=GLUCOSE_NOISE_STD):
    """Reward of a simulated reading: `cgm` plus zero-mean Gaussian noise"""
    return glucose_reward(cgm + noise_std * rng.standard_normal())


def gaussian_density_2d(points, mean, covariance):
    """Density of a 2-D Gaussian at each row of `points`

    :param points: Shape (n, 2)
    :type points: numpy.ndarray

    :rtype: numpy.ndarray
    """
    (a, b), (_, c) = covariance
    determinant = a * c - b * b
    dx = points[:, 0] - mean[0]
    dy = points[:, 1] - mean[1]
    quadratic = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / determinant
    return np.exp(-0.5 * quadratic) / (2.0 * math.pi * math.sqrt(determinant))


def _tupled(value):
    if isinstance(value, (list, tuple)):
        return tuple(_tupled(v) for v in value)
    return value


@dataclasses.dataclass(frozen=True)
class GmmEnvConfig:
    """Bernoulli rewards whose mean is a scaled, clamped Gaussian mixture
    density over one context coordinate and one arm coordinate"""

    d_x: int
    d_a: int
    scale: float = GMM_DEFAULTS["scale"]
    weights: tuple = GMM_DEFAULTS["weights"]
    means: tuple = GMM_DEFAULTS["means"]
    covariances: tuple = GMM_DEFAULTS["covariances"]
    relevant_context_dim: int = GMM_DEFAULTS["relevant_context_dim"]
    relevant_arm_dim: int = GMM_DEFAULTS["relevant_arm_dim"]

    def __post_init__(self):
        for name in ("weights", "means", "covariances"):
            object.__setattr__(self, name, _tupled(getattr(self, name)))
        if self.scale < 0:
            raise ValueError(f"GMM scale must be nonnegative: {self.scale!r}")
        n_components = len(self.weights)
        if not n_components or len(self.means) != n_components:
            raise ValueError(
                f"Got {n_components} weights for {len(self.means)} means"
            )
        if len(self.covariances) != n_components:
            raise ValueError(
                f"Got {n_components} weights for "
                f"{len(self.covariances)} covariances"
            )
        if any(w <= 0 for w in self.weights) or not math.isclose(
            sum(self.weights), 1.0, abs_tol=1e-9
        ):
            raise ValueError(
                f"Weights must be positive and sum to 1: {self.weights!r}"
            )
        for mean in self.means:
            if len(mean) != 2:
                raise ValueError(f"Mean {mean!r} must have 2 entries")
        for covariance in self.covariances:
            _check_covariance(covariance)
        if not 0 <= self.relevant_context_dim < self.d_x:
            raise ValueError(
                f"Relevant context dimension {self.relevant_context_dim} "
                f"is outside [0, {self.d_x})"
            )
        if not 0 <= self.relevant_arm_dim < self.d_a:
            raise ValueError(
                f"Relevant arm dimension {self.relevant_arm_dim} "
                f"is outside [0, {self.d_a})"
            )


def _check_covariance(covariance):
    if len(covariance) != 2 or any(len(row) != 2 for row in covariance):
        raise ValueError(f"Covariance {covariance!r} must be 2x2")
    (a, b), (b_t, c) = covariance
    if not math.isclose(b, b_t):
        raise ValueError(f"Covariance {covariance!r} is not symmetric")
    if a <= 0 or a * c - b * b <= 0:
        raise ValueError(
            f"Covariance {covariance!r} is not positive definite"
        )


class GmmEnvironment(Environment):
    """μ_a(x) = min(scale · Σ weight_i · density_i(x_c, a_c), 1) with
    Bernoulli rewards"""

    def __init__(self, config, oracle=None):
        super().__init__(config.d_x, config.d_a)
        self.config = config
        self.oracle = oracle or OracleConfig()

    @property
    def relevant_context_dims(self):
        return (self.config.relevant_context_dim,)

    @property
    def relevant_arm_dims(self):
        return (self.config.relevant_arm_dim,)

    def expected_rewards(self, context, arms):
        x = as_context(context, self.d_x)
        arms = np.asarray(arms, dtype=float).reshape(-1, self.d_a)
        points = np.column_stack(
            (
                np.full(arms.shape[0], x[self.config.relevant_context_dim]),
                arms[:, self.config.relevant_arm_dim],
            )
        )
        density = sum(
            weight * gaussian_density_2d(points, mean, covariance)
            for weight, mean, covariance in zip(
                self.config.weights, self.config.means, self.config.covariances
            )
        )
        return np.minimum(self.config.scale * density, 1.0)

    def sample_reward(self, context, arm, rng):
        mean = self.expected_reward(context, as_arm(arm, self.d_a))
        return 1.0 if rng.random() < mean else 0.0

    def oracle_best(self, context):
        return oracle_best(self, context, self.oracle)


PRIMITIVES = ("tent", "identity")
NOISES = ("bernoulli", "gaussian")


@dataclasses.dataclass(frozen=True)
class SparseEnvConfig:
    """Environment whose reward reads a known handful of coordinates

    The first coordinate of `arm_dims` is split into len(`context_dims`)
    equal regions. On region j the reward reads the context coordinates
    `context_dims[j]`:

    - ``tent``: 0.5 + s·(mean(x[context_dims[j]]) - 0.5)·g(a), where g
      is a tent along the region (0 on its borders, 1 in its middle)
      times a tent over [0, 1] for every other arm dimension, and s is
      chosen so that the reward is `lipschitz`-Lipschitz.
    - ``identity``: mean(x[context_dims[0]]), whatever the arm.
    """

    d_x: int
    d_a: int
    arm_dims: tuple = (0,)
    context_dims: tuple = ((0,),)
    primitive: str = "tent"
    noise: str = "bernoulli"
    noise_std: float = 0.1
    lipschitz: float = DEFAULT_LIPSCHITZ

    def __post_init__(self):
        object.__setattr__(self, "arm_dims", _tupled(self.arm_dims))
        object.__setattr__(self, "context_dims", _tupled(self.context_dims))
        if not self.arm_dims:
            raise ValueError("At least one relevant arm dimension is needed")
        check_tuple(self.arm_dims, self.d_a)
        if not self.context_dims:
            raise ValueError("At least one relevant context tuple is needed")
        for dims in self.context_dims:
            if not dims:
                raise ValueError("Relevant context tuples cannot be empty")
            check_tuple(dims, self.d_x)
        if self.primitive not in PRIMITIVES:
            raise ValueError(
                f"Primitive {self.primitive!r} is not one of {PRIMITIVES}"
            )
        if self.noise not in NOISES:
            raise ValueError(f"Noise {self.noise!r} is not one of {NOISES}")
        if self.noise_std < 0:
            raise ValueError(f"Noise std: {self.noise_std!r}")
        if not self.lipschitz > 0:
            raise ValueError(f"Lipschitz constant: {self.lipschitz!r}")

    @property
    def strength(self):
        """Largest s that keeps the tent reward in [0, 1] and
        `lipschitz`-Lipschitz"""
        regions = len(self.context_dims)
        steepness = math.sqrt(regions**2 + len(self.arm_dims))
        return min(1.0, self.lipschitz / steepness)


def _tent(values):
    """1 at 0.5, 0 at 0 and 1, linear in between"""
    return 1.0 - np.abs(2.0 * values - 1.0)


class SparseRelevanceEnvironment(Environment):
    """Known-relevance environment built from a :class:`SparseEnvConfig`"""

    def __init__(self, config, oracle=None):
        super().__init__(config.d_x, config.d_a)
        self.config = config
        self.oracle = oracle or OracleConfig()
        if config.noise == "gaussian" and config.noise_std > 1.0:
            logging.warning(
                "Gaussian noise std %r exceeds 1, rewards are not "
                "1-sub-Gaussian",
                config.noise_std,
            )

    @property
    def relevant_context_dims(self):
        if self.config.primitive == "identity":
            return self.config.context_dims[0]
        return tuple(sorted(set().union(*self.config.context_dims)))

    @property
    def relevant_arm_dims(self):
        if self.config.primitive == "identity":
            return ()
        return self.config.arm_dims

    def expected_rewards(self, context, arms):
        x = as_context(context, self.d_x)
        arms = np.asarray(arms, dtype=float).reshape(-1, self.d_a)
        config = self.config
        levels = np.array(
            [x[list(dims)].mean() for dims in config.context_dims]
        )
        if config.primitive == "identity":
            return np.full(arms.shape[0], levels[0])

        regions = len(config.context_dims)
        position = arms[:, config.arm_dims[0]] * regions
        region = np.minimum(np.floor(position).astype(np.int64), regions - 1)
        weight = _tent(position - region)
        for dim in config.arm_dims[1:]:
            weight = weight * _tent(arms[:, dim])
        return 0.5 + config.strength * (levels[region] - 0.5) * weight

    def sample_reward(self, context, arm, rng):
        mean = self.expected_reward(context, as_arm(arm, self.d_a))
        if self.config.noise == "bernoulli":
            return 1.0 if rng.random() < mean else 0.0
        return mean + self.config.noise_std * rng.standard_normal()

    def oracle_best(self, context):
        return oracle_best(self, context, self.oracle)


def build_environment(config, oracle=None):
    """Environment for a validated environment config

    :param config: Environment settings
    :type config: GmmEnvConfig | SparseEnvConfig
    :param oracle: Oracle grid settings
    :type oracle: OracleConfig

    :rtype: cmab.core.Environment
    """
    if isinstance(config, GmmEnvConfig):
        return GmmEnvironment(config, oracle)
    if isinstance(config, SparseEnvConfig):
        return SparseRelevanceEnvironment(config, oracle)
    raise ValueError(f"Unknown environment config {config!r}")
