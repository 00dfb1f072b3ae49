import dataclasses
import logging
from collections.abc import Mapping

import yaml

from dku_config import DkuConfig, DSSParameterError
from cmab.constants import (
    ALGORITHMS,
    DEFAULT_LIPSCHITZ,
    GMM_DEFAULTS,
    ORACLE_RESOLUTION,
    ORACLE_TOLERANCE,
    SCHEMA_VERSION,
)
from cmab.environments import (
    NOISES,
    PRIMITIVES,
    GmmEnvConfig,
    OracleConfig,
    SparseEnvConfig,
)

ENVIRONMENTS = ("gmm", "sparse")
MODES = ("run", "grid_search", "sweep")
DEFAULT_REPETITIONS = 20


@dataclasses.dataclass(frozen=True)
class AlgorithmConfig:
    """One learner of an experiment

    `partition_number` and `finite_arms` only apply to ``cmab_rl``.
    """

    name: str
    multiplier: float = 1.0
    partition_number: int = None
    finite_arms: tuple = None


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Validated experiment settings

    Built by :func:`get_run_config`. Instances are picklable so that
    repetitions can run in worker processes.
    """

    d_x: int
    d_a: int
    relevant_d_x: int
    relevant_d_a: int
    horizon: int
    repetitions: int
    seed: int
    lipschitz: float
    environment: object
    algorithms: tuple
    oracle: OracleConfig = OracleConfig()
    stride: int = None
    workers: int = 1

    @property
    def record_stride(self):
        """Rounds between two recorded rows, max(1, T // 1000) by
        default"""
        if self.stride is not None:
            return self.stride
        return max(1, self.horizon // 1000)

    @property
    def seeds(self):
        return [self.seed + i for i in range(self.repetitions)]

    def algorithm(self, name):
        for algorithm in self.algorithms:
            if algorithm.name == name:
                return algorithm
        raise ValueError(f"No algorithm named {name!r} in the config")


def _plain(value):
    """Nested tuples to lists, so that PyYAML's safe dumper accepts them"""
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def config_echo(config):
    """The run config as a YAML-ready dict, in the experiment schema

    :param config: Run config
    :type config: RunConfig

    :rtype: dict
    """
    echo = dataclasses.asdict(config)
    environment = echo.pop("environment")
    environment.pop("d_x")
    environment.pop("d_a")
    if isinstance(config.environment, GmmEnvConfig):
        environment = {"type": "gmm", **environment}
    else:
        environment = {"type": "sparse", **environment}
    return _plain(
        {
            "schema_version": SCHEMA_VERSION,
            **echo,
            "environment": environment,
        }
    )


def _get(block, key, default=None):
    value = block.get(key)
    return default if value is None else value


def _holds(predicate, *values):
    """Evaluate a cross-field condition on raw values, False if they
    can't be compared"""
    try:
        return bool(predicate(*values))
    except (TypeError, ValueError, IndexError):
        return False


def _as_nested_tuple(value):
    if isinstance(value, (list, tuple)):
        return tuple(_as_nested_tuple(v) for v in value)
    if isinstance(value, str):
        raise ValueError(f"Expected a number or a list (got {value!r})")
    return float(value)


def _as_int_tuple(value):
    if isinstance(value, (str, bytes)):
        raise ValueError(f"Expected a list of integers (got {value!r})")
    return tuple(int(v) for v in value)


def _as_tuple_of_int_tuples(value):
    if isinstance(value, (str, bytes)):
        raise ValueError(f"Expected a list of lists (got {value!r})")
    return tuple(_as_int_tuple(v) for v in value)


def _as_arm_list(value):
    if isinstance(value, (str, bytes)):
        raise ValueError(f"Expected a list of arms (got {value!r})")
    return tuple(tuple(float(x) for x in arm) for arm in value)


def load_config_file(path):
    """Read an experiment YAML file

    :param path: Path of the file
    :type path: str | os.PathLike

    :raises OSError: The file can't be read
    :raises ValueError: The file isn't valid YAML

    :return: Raw config
    :rtype: Any
    """
    logging.info("Reading experiment config: %r", str(path))
    with open(path, encoding="utf-8") as file:
        text = file.read()
    return parse_config_text(text, source=str(path))


def parse_config_text(text, source="<config>"):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ValueError(f"{source} is not valid YAML: {err}") from err


def get_run_config(raw):
    """Validate a raw experiment config

    :param raw: Config read from YAML or built by the recipe
    :type raw: Mapping[str, Any]

    :raises dku_config.DSSParameterError: A value is missing or invalid

    :return: Validated, frozen config
    :rtype: RunConfig
    """
    logging.info("Experiment config: %r", raw)
    if not isinstance(raw, Mapping):
        raise DSSParameterError(
            f"The experiment config must be a mapping (got {type(raw)})"
        )

    config = DkuConfig()
    config.add_param(
        name="schema_version",
        label="Schema version",
        value=raw.get("schema_version"),
        default=SCHEMA_VERSION,
        cast_to=int,
        checks=(
            {
                "type": "in",
                "op": frozenset((SCHEMA_VERSION,)),
            },
        ),
    )
    for name, label in (
        ("d_x", "Context dimensions"),
        ("d_a", "Arm dimensions"),
    ):
        config.add_param(
            name=name,
            label=label,
            value=raw.get(name),
            required=True,
            cast_to=int,
            checks=(
                {
                    "type": "sup_eq",
                    "op": 1,
                },
            ),
        )

    relevant_d_x = _get(raw, "relevant_d_x", 1)
    config.add_param(
        name="relevant_d_x",
        label="Relevant context dimensions",
        value=relevant_d_x,
        cast_to=int,
        checks=(
            {
                "type": "sup_eq",
                "op": 1,
            },
            {
                "type": "custom",
                "op": _holds(
                    lambda v: 2 * int(v) <= config.d_x, relevant_d_x
                ),
                "err_msg": (
                    f"Twice its value should be at most d_x={config.d_x} "
                    f"(Currently {relevant_d_x!r})."
                ),
            },
        ),
    )
    relevant_d_a = _get(raw, "relevant_d_a", 1)
    config.add_param(
        name="relevant_d_a",
        label="Relevant arm dimensions",
        value=relevant_d_a,
        cast_to=int,
        checks=(
            {
                "type": "between",
                "op": (1, config.d_a),
            },
        ),
    )
    config.add_param(
        name="horizon",
        label="Horizon",
        value=raw.get("horizon"),
        required=True,
        cast_to=int,
        checks=(
            {
                "type": "sup_eq",
                "op": 1,
            },
        ),
    )
    config.add_param(
        name="repetitions",
        label="Repetitions",
        value=raw.get("repetitions"),
        default=DEFAULT_REPETITIONS,
        cast_to=int,
        checks=(
            {
                "type": "sup_eq",
                "op": 1,
            },
        ),
    )
    config.add_param(
        name="seed",
        label="Random seed",
        value=raw.get("seed"),
        default=0,
        cast_to=int,
        checks=(
            {
                "type": "sup_eq",
                "op": 0,
            },
        ),
    )
    config.add_param(
        name="lipschitz",
        label="Lipschitz constant",
        value=raw.get("lipschitz"),
        default=DEFAULT_LIPSCHITZ,
        cast_to=float,
        checks=(
            {
                "type": "is_finite",
            },
            {
                "type": "sup",
                "op": 0.0,
            },
        ),
    )
    config.add_param(
        name="stride",
        label="Record stride",
        value=raw.get("stride"),
        required=False,
        cast_to=int,
        checks=(
            {
                "type": "sup_eq",
                "op": 1,
            },
        ),
    )
    config.add_param(
        name="workers",
        label="Worker processes",
        value=raw.get("workers"),
        default=1,
        cast_to=int,
        checks=(
            {
                "type": "sup_eq",
                "op": 1,
            },
        ),
    )

    environment = get_environment_config(
        _get(raw, "environment", {}), config.d_x, config.d_a, config.lipschitz
    )
    oracle = get_oracle_config(_get(raw, "oracle", {}))
    algorithms = get_algorithm_configs(raw.get("algorithms"), config.d_a)

    return RunConfig(
        d_x=config.d_x,
        d_a=config.d_a,
        relevant_d_x=config.relevant_d_x,
        relevant_d_a=config.relevant_d_a,
        horizon=config.horizon,
        repetitions=config.repetitions,
        seed=config.seed,
        lipschitz=config.lipschitz,
        environment=environment,
        algorithms=algorithms,
        oracle=oracle,
        stride=config.stride,
        workers=config.workers,
    )


def get_environment_config(block, d_x, d_a, lipschitz=DEFAULT_LIPSCHITZ):
    """Validate the `environment` block

    :param block: Raw block
    :type block: Mapping[str, Any]
    :param d_x: Number of context dimensions
    :type d_x: int
    :param d_a: Number of arm dimensions
    :type d_a: int
    :param lipschitz: Lipschitz constant of the sparse environment
    :type lipschitz: float

    :raises dku_config.DSSParameterError: A value is missing or invalid

    :rtype: GmmEnvConfig | SparseEnvConfig
    """
    if not isinstance(block, Mapping):
        raise DSSParameterError("The environment block must be a mapping")

    config = DkuConfig()
    config.add_param(
        name="type",
        label="Environment type",
        value=block.get("type"),
        default="gmm",
        checks=(
            {
                "type": "in",
                "op": ENVIRONMENTS,
            },
        ),
    )

    if config.type == "gmm":
        config.add_param(
            name="scale",
            label="GMM scale",
            value=block.get("scale"),
            default=GMM_DEFAULTS["scale"],
            cast_to=float,
            checks=(
                {
                    "type": "sup_eq",
                    "op": 0.0,
                },
            ),
        )
        for name, label in (
            ("weights", "GMM weights"),
            ("means", "GMM means"),
            ("covariances", "GMM covariances"),
        ):
            config.add_param(
                name=name,
                label=label,
                value=block.get(name),
                default=GMM_DEFAULTS[name],
                cast_to=_as_nested_tuple,
            )
        for name, label, dim in (
            ("relevant_context_dim", "Relevant context dimension", d_x),
            ("relevant_arm_dim", "Relevant arm dimension", d_a),
        ):
            config.add_param(
                name=name,
                label=label,
                value=block.get(name),
                default=GMM_DEFAULTS[name],
                cast_to=int,
                checks=(
                    {
                        "type": "between",
                        "op": (0, dim - 1),
                    },
                ),
            )
        kwargs = config.as_dict()
        kwargs.pop("type")
        return _build(GmmEnvConfig, "Environment", d_x=d_x, d_a=d_a, **kwargs)

    config.add_param(
        name="arm_dims",
        label="Relevant arm dimensions",
        value=block.get("arm_dims"),
        default=(0,),
        cast_to=_as_int_tuple,
    )
    config.add_param(
        name="context_dims",
        label="Relevant context tuples",
        value=block.get("context_dims"),
        default=((0,),),
        cast_to=_as_tuple_of_int_tuples,
    )
    config.add_param(
        name="primitive",
        label="Reward primitive",
        value=block.get("primitive"),
        default="tent",
        checks=(
            {
                "type": "in",
                "op": PRIMITIVES,
            },
        ),
    )
    config.add_param(
        name="noise",
        label="Reward noise",
        value=block.get("noise"),
        default="bernoulli",
        checks=(
            {
                "type": "in",
                "op": NOISES,
            },
        ),
    )
    config.add_param(
        name="noise_std",
        label="Noise std",
        value=block.get("noise_std"),
        default=0.1,
        cast_to=float,
        checks=(
            {
                "type": "sup_eq",
                "op": 0.0,
            },
        ),
    )
    kwargs = config.as_dict()
    kwargs.pop("type")
    return _build(
        SparseEnvConfig,
        "Environment",
        d_x=d_x,
        d_a=d_a,
        lipschitz=lipschitz,
        **kwargs,
    )


def _build(cls, label, **kwargs):
    """Instantiate a config dataclass, reporting its validation errors
    as parameter errors"""
    try:
        return cls(**kwargs)
    except ValueError as err:
        raise DSSParameterError(
            f'Validation error with parameter "{label}": {err}'
        ) from err


def get_oracle_config(block):
    """Validate the optional `oracle` block

    :rtype: OracleConfig
    """
    if not isinstance(block, Mapping):
        raise DSSParameterError("The oracle block must be a mapping")
    config = DkuConfig()
    config.add_param(
        name="resolution",
        label="Oracle resolution",
        value=block.get("resolution"),
        default=ORACLE_RESOLUTION,
        cast_to=int,
        checks=(
            {
                "type": "sup_eq",
                "op": 2,
            },
        ),
    )
    config.add_param(
        name="tolerance",
        label="Oracle tolerance",
        value=block.get("tolerance"),
        default=ORACLE_TOLERANCE,
        cast_to=float,
        checks=(
            {
                "type": "sup",
                "op": 0.0,
            },
        ),
    )
    return OracleConfig(**config.as_dict())


def get_algorithm_configs(blocks, d_a):
    """Validate the `algorithms` list

    :param blocks: Raw algorithm blocks
    :type blocks: Sequence[Mapping[str, Any]]
    :param d_a: Number of arm dimensions, to check finite arm lists
    :type d_a: int

    :raises dku_config.DSSParameterError: A value is missing or invalid

    :rtype: tuple[AlgorithmConfig, ...]
    """
    config = DkuConfig()
    config.add_param(
        name="algorithms",
        label="Algorithms",
        value=blocks,
        required=True,
        checks=(
            {
                "type": "custom",
                "op": isinstance(blocks, (list, tuple))
                and all(isinstance(b, Mapping) for b in blocks),
                "err_msg": "Should be a list of algorithm blocks.",
            },
        ),
    )
    algorithms = tuple(
        get_algorithm_config(block, d_a) for block in config.algorithms
    )
    names = [algorithm.name for algorithm in algorithms]
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise DSSParameterError(
            'Validation error with parameter "Algorithms": '
            f"Each algorithm can only appear once (Repeated: {duplicates})."
        )
    return algorithms


def get_algorithm_config(block, d_a):
    """Validate one entry of the `algorithms` list

    :rtype: AlgorithmConfig
    """
    config = DkuConfig()
    config.add_param(
        name="name",
        label="Algorithm",
        value=block.get("name"),
        required=True,
        checks=(
            {
                "type": "in",
                "op": ALGORITHMS,
            },
        ),
    )
    config.add_param(
        name="multiplier",
        label=f"Confidence multiplier of {config.name}",
        value=block.get("multiplier"),
        default=1.0,
        cast_to=float,
        checks=(
            {
                "type": "is_finite",
            },
            {
                "type": "sup",
                "op": 0.0,
            },
        ),
    )

    is_cmab_rl = config.name == "cmab_rl"
    partition_number = block.get("partition_number")
    config.add_param(
        name="partition_number",
        label="Partition number",
        value=partition_number,
        required=False,
        cast_to=int,
        checks=(
            {
                "type": "sup_eq",
                "op": 1,
            },
            {
                "type": "custom",
                "op": is_cmab_rl,
                "err_msg": f"Only cmab_rl takes it (Set on {config.name}).",
            },
        ),
    )
    finite_arms = block.get("finite_arms")
    if finite_arms is not None and not finite_arms:
        # An empty list would read as a missing value and skip the checks
        raise DSSParameterError(
            'Validation error with parameter "Finite arms": '
            "Should not be empty."
        )
    config.add_param(
        name="finite_arms",
        label="Finite arms",
        value=finite_arms,
        required=False,
        cast_to=_as_arm_list,
        checks=(
            {
                "type": "custom",
                "op": is_cmab_rl,
                "err_msg": f"Only cmab_rl takes it (Set on {config.name}).",
            },
            {
                "type": "custom",
                "op": _holds(
                    lambda arms: len(arms) > 0
                    and all(
                        len(arm) == d_a
                        and all(0.0 <= float(v) <= 1.0 for v in arm)
                        for arm in arms
                    ),
                    finite_arms,
                ),
                "err_msg": (
                    f"Should be a non-empty list of points of [0, 1]^{d_a}."
                ),
            },
        ),
    )
    return AlgorithmConfig(**config.as_dict())


def get_recipe_config(recipe_config):
    """Create a DkuConfig instance from the recipe's form

    :param recipe_config: Recipe config
    :type recipe_config: Mapping[str, Any]

    :return: DkuConfig with the mode, the validated run config and the
        multipliers or horizons the mode needs
    :rtype: dku_config.DkuConfig
    """
    logging.info("Recipe config: %r", recipe_config)

    config = DkuConfig()
    config.add_param(
        name="mode",
        label="Mode",
        value=recipe_config.get("mode"),
        default="run",
        checks=(
            {
                "type": "in",
                "op": MODES,
            },
        ),
    )
    config.add_param(
        name="experiment_yaml",
        label="Experiment config",
        value=recipe_config.get("experiment_yaml"),
        required=True,
    )
    config.add_param(
        name="experiment",
        value=get_run_config(parse_config_text(config.experiment_yaml)),
        required=True,
    )
    config.add_param(
        name="multipliers",
        label="Multipliers",
        value=recipe_config.get("multipliers"),
        required=config.mode == "grid_search",
        cast_to=lambda values: tuple(float(v) for v in values),
        checks=(
            {
                "type": "custom",
                "op": _holds(
                    lambda values: all(float(v) > 0 for v in values),
                    recipe_config.get("multipliers") or (),
                ),
                "err_msg": "Should all be positive.",
            },
        ),
    )
    config.add_param(
        name="horizons",
        label="Horizons",
        value=recipe_config.get("horizons"),
        required=config.mode == "sweep",
        cast_to=lambda values: tuple(int(v) for v in values),
        checks=(
            {
                "type": "custom",
                "op": _holds(
                    lambda values: all(int(v) >= 1 for v in values),
                    recipe_config.get("horizons") or (),
                ),
                "err_msg": "Should all be at least 1.",
            },
        ),
    )
    return config
