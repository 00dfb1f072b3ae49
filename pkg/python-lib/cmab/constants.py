ORACLE_TOLERANCE = 1e-3
"""Slack allowed between the grid oracle and the true best reward"""

ORACLE_RESOLUTION = 1000
"""Default number of grid intervals per relevant arm dimension"""

DEFAULT_LIPSCHITZ = 1.0

UNUSED_ARM_COORDINATE = 0.5
"""Value of the arm coordinates outside an arm's dimension tuple"""

UCB_EXPLORATION_FACTOR = 5.0
"""Weight of the uncertainty term in the CMAB-RL arm index"""

GRID_MULTIPLIERS = (0.001, 0.005, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0)
"""Confidence multipliers searched over by default"""

GMM_DEFAULTS = {
    "scale": 0.25,
    "weights": (0.5, 0.5),
    "means": ((0.25, 0.75), (0.5, 0.5)),
    "covariances": (
        ((0.05, 0.03), (0.03, 0.025)),
        ((0.025, -0.03), (-0.03, 0.05)),
    ),
    "relevant_context_dim": 0,
    "relevant_arm_dim": 0,
}
"""Synthetic Gaussian-mixture reward surface"""

GLUCOSE_BREAKPOINTS = (80.0, 90.0, 130.0, 180.0)
"""CGM values (mg/dL) where the glucose reward map changes slope"""

GLUCOSE_NOISE_STD = 5.0
"""Std (mg/dL) of the noise added to simulated CGM readings"""

CONTEXT_STREAM = 0
REWARD_STREAM = 1
POLICY_STREAM = 2
"""Stream ids derived from each repetition seed"""

SCHEMA_VERSION = 1

CSV_COLUMNS = (
    "round",
    "mean_cum_reward",
    "std_cum_reward",
    "mean_cum_regret",
    "std_cum_regret",
)

ALGORITHMS = ("cmab_rl", "choo", "iup", "uniform")
