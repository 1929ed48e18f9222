"""Python access to the perla C++ core."""

from ._perla import (
    ConfigError,
    InputError,
    NumericError,
    UnsupportedOperation,
    check_qhat_variance,
    coordination_reward,
    measure_variance,
    penalty_reward,
    read_csv,
    run_experiment,
    summarize,
    toy_gradient_mean,
    toy_gradient_variance,
    toy_reward,
)

__all__ = [
    "ConfigError",
    "InputError",
    "NumericError",
    "UnsupportedOperation",
    "check_qhat_variance",
    "coordination_reward",
    "measure_variance",
    "penalty_reward",
    "read_csv",
    "run_experiment",
    "summarize",
    "toy_gradient_mean",
    "toy_gradient_variance",
    "toy_reward",
]
