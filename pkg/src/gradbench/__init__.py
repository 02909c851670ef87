"""Clipped policy-gradient learners with swappable advantage baselines on classic-control tasks."""

from .advantage import AdvantageConfig, ConfigError, Mode
from .experiment import SweepSpec, aggregate, run_sweep, smooth
from .trainer import RunLog, TrainConfig, train

__all__ = [
    "AdvantageConfig",
    "ConfigError",
    "Mode",
    "RunLog",
    "SweepSpec",
    "TrainConfig",
    "aggregate",
    "run_sweep",
    "smooth",
    "train",
]
__version__ = "0.1.0"
