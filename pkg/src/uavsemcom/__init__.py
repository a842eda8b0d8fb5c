"""UAV-assisted uplink semantic data collection with hybrid-action PPO."""

from .agents import (ConfigError, EpisodeRecord, FixedPolicy, HybridPolicy, RandomPolicy,
                     evaluate_policy, run_equal_power, run_hybrid, run_triple_ppo, train_policy)
from .channel import ChannelParams, ChannelRealization, Position3D
from .env import EnvConfig, HybridAction, MissionEnv, MissionState, StepOutcome
from .harness import RunConfig, compare, evaluate, load_config, sweep, train
from .ppo import PPOConfig
from .semantic import EnergyParams, QualityParams, UtilityWeights

__version__ = "0.1.0"
