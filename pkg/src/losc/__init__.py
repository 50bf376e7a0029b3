"""Missile guidance with learned line-of-sight curvature.

Proportional navigation (PN), augmented PN and PN with a recurrent policy
that curves the measured line of sight (PN-LOSC), plus the engagement
simulator, PPO trainer and Monte Carlo benchmark harness around them.
"""

from .config import Config, apply_overrides, benchmark_config, load, loads
from .env import EngagementEnv, run_episode

__version__ = "0.1.0"

__all__ = ["Config", "EngagementEnv", "apply_overrides", "benchmark_config", "load", "loads", "run_episode"]
