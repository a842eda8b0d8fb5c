"""Hybrid-action policies: the two-agent method and its two benchmarks.

``hybrid``  discrete channel agent + one Gaussian agent for scale ratios,
            powers and UAV displacement.
``ep``      as ``hybrid`` but every user transmits at ``P_max``; the Gaussian
            agent only outputs scale ratios and displacement.
``triple``  as ``ep`` plus a third, independent Gaussian agent for powers.

Continuous actions live in ``[-1, 1]`` and are mapped affinely to physical
ranges by :func:`denormalize`.  The full raw layout is
``[etas (N), powers (N), dx, dy]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from .env import (EnvConfig, HybridAction, MissionEnv, MissionState, decode_discrete,
                  observe_continuous, observe_discrete, trace_row)
from .nn import load_checkpoint, save_checkpoint
from .ppo import DiscreteAgent, GaussianAgent, PPOConfig

VARIANTS = ("hybrid", "ep", "triple")


class ConfigError(ValueError):
    """A configuration value is invalid; the message names the field."""


def denormalize(raw, config: EnvConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map a raw ``[etas, powers, dx, dy]`` vector (or batch) to (powers, etas, delta)."""
    raw = np.asarray(raw, dtype=float)
    n = config.num_users
    if raw.shape[-1] != 2 * n + 2:
        raise ValueError(f"raw continuous action needs {2 * n + 2} entries")
    u = (raw + 1.0) / 2.0
    etas = config.eta_min + u[..., :n] * (1.0 - config.eta_min)
    powers = u[..., n:2 * n] * config.max_power
    delta = raw[..., 2 * n:] * config.max_step
    return powers, etas, delta


def normalize(powers, etas, delta, config: EnvConfig) -> np.ndarray:
    etas_raw = 2.0 * (np.asarray(etas) - config.eta_min) / (1.0 - config.eta_min) - 1.0
    powers_raw = 2.0 * np.asarray(powers) / config.max_power - 1.0
    delta_raw = np.asarray(delta) / config.max_step
    return np.concatenate([etas_raw, powers_raw, delta_raw], axis=-1)


def assemble_action(index: int, raw_full, config: EnvConfig) -> HybridAction:
    powers, etas, delta = denormalize(raw_full, config)
    assignment = decode_discrete(index, config.num_users, config.num_channels)
    return HybridAction(assignment, powers, etas, delta)


@dataclass
class Transition:
    obs_d: np.ndarray
    obs_c: np.ndarray
    action_index: int
    raw: dict  # role -> clamped raw continuous action
    log_prob: dict  # role -> log-probability under the acting policy
    value: dict  # role -> critic estimate
    reward_d: float = 0.0
    reward_c: float = 0.0
    done: bool = False


def discrete_action_count(config: EnvConfig, cap: int) -> int:
    count = (config.num_channels + 1) ** config.num_users
    if count > cap:
        raise ConfigError(
            f"num_users: discrete action space (M+1)^N = {count} exceeds the cap of {cap}")
    return count


class HybridPolicy:
    """Cooperating PPO sub-agents producing one :class:`HybridAction` per slot."""

    def __init__(self, config: EnvConfig, ppo: PPOConfig = PPOConfig(),
                 variant: str = "hybrid", seed: int = 0, pin_power: bool = False):
        if variant not in VARIANTS:
            raise ConfigError(f"algo: unknown algorithm {variant!r}")
        self.config = config
        self.ppo = ppo
        self.variant = variant
        self.pin_power = pin_power
        n = config.num_users
        obs_d = n * (1 + config.num_channels)
        obs_c = obs_d + 2
        n_actions = discrete_action_count(config, ppo.max_discrete_actions)
        seeds = np.random.SeedSequence(seed).spawn(3)
        cont_dim = 2 * n + 2 if variant == "hybrid" else n + 2
        self.agents = {
            "discrete": DiscreteAgent(obs_d, n_actions, ppo, seeds[0]),
            "continuous": GaussianAgent(obs_c, cont_dim, ppo, seeds[1]),
        }
        if variant == "triple":
            self.agents["power"] = GaussianAgent(obs_c, n, ppo, seeds[2])

    @property
    def continuous_dim(self) -> int:
        return self.agents["continuous"].action_dim

    def _full_raw(self, raw: dict) -> np.ndarray:
        n = self.config.num_users
        cont = raw["continuous"]
        if self.variant == "hybrid":
            return cont
        if self.variant == "triple" and not self.pin_power:
            powers = raw["power"]
        else:
            powers = np.ones(n)
        return np.concatenate([cont[:n], powers, cont[n:]])

    def act(self, state: MissionState, mode: str = "sample") -> tuple[HybridAction, Transition]:
        obs_d = observe_discrete(state, self.config)
        obs_c = observe_continuous(state, self.config)
        index, lp_d, v_d = self.agents["discrete"].act(obs_d, mode)
        raw, log_prob, value = {}, {"discrete": lp_d}, {"discrete": v_d}
        for role, agent in self.agents.items():
            if role == "discrete" or (role == "power" and self.pin_power):
                continue
            raw[role], log_prob[role], value[role] = agent.act(obs_c, mode)
        action = assemble_action(index, self._full_raw(raw), self.config)
        if self.variant == "ep" or self.pin_power:
            action.powers = np.full(self.config.num_users, float(self.config.max_power))
        return action, Transition(obs_d, obs_c, index, raw, log_prob, value)

    def decide(self, state: MissionState, mode: str = "mean") -> HybridAction:
        return self.act(state, mode)[0]

    def update(self, buffer: list[Transition]) -> dict:
        """One PPO update per sub-agent, each on its own observation and reward."""
        if not buffer:
            raise ValueError("cannot update on an empty buffer")
        dones = [t.done for t in buffer]
        stats = {}
        for role, agent in self.agents.items():
            if role == "power" and self.pin_power:
                continue
            if role == "discrete":
                obs = [t.obs_d for t in buffer]
                actions = [t.action_index for t in buffer]
                rewards = [t.reward_d for t in buffer]
            else:
                obs = [t.obs_c for t in buffer]
                actions = [t.raw[role] for t in buffer]
                rewards = [t.reward_c for t in buffer]
            stats[role] = agent.update(obs, actions, [t.log_prob[role] for t in buffer],
                                       rewards, [t.value[role] for t in buffer], dones)
        return stats

    def save(self, directory) -> None:
        """One checkpoint file per sub-agent plus a manifest of roles."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = {}
        for role, agent in self.agents.items():
            files[role] = f"{role}.json"
            save_checkpoint(directory / files[role], agent.networks())
        manifest = {"variant": self.variant, "pin_power": self.pin_power,
                    "num_users": self.config.num_users,
                    "num_channels": self.config.num_channels, "agents": files}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, directory, config: EnvConfig, ppo: PPOConfig = PPOConfig()) -> "HybridPolicy":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        if (manifest["num_users"], manifest["num_channels"]) != (config.num_users, config.num_channels):
            raise ValueError(f"{directory}: checkpoint was trained for a different N or M")
        policy = cls(config, ppo, manifest["variant"], pin_power=manifest["pin_power"])
        if set(manifest["agents"]) != set(policy.agents):
            raise ValueError(f"{directory}: manifest roles do not match variant")
        for role, fname in manifest["agents"].items():
            policy.agents[role].load_networks(load_checkpoint(directory / fname))
        return policy


class RandomPolicy:
    """Uniform channel index and uniform raw continuous actions."""

    def __init__(self, config: EnvConfig, seed: int = 0):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.num_actions = (config.num_channels + 1) ** config.num_users

    def decide(self, state: MissionState, mode: str = "sample") -> HybridAction:
        index = int(self.rng.integers(self.num_actions))
        raw = self.rng.uniform(-1.0, 1.0, 2 * self.config.num_users + 2)
        return assemble_action(index, raw, self.config)


class FixedPolicy:
    """Replays one action every slot, ignoring the state."""

    def __init__(self, action: HybridAction):
        self.action = action

    def decide(self, state: MissionState, mode: str = "mean") -> HybridAction:
        return self.action

    @classmethod
    def round_robin(cls, config: EnvConfig, eta: float = 1.0) -> "FixedPolicy":
        """Users spread over channels in turn, full power, UAV hovering."""
        n = config.num_users
        assignment = np.arange(n) % config.num_channels + 1
        return cls(HybridAction(assignment, np.full(n, float(config.max_power)),
                                np.full(n, eta), np.zeros(2)))

    @classmethod
    def single_channel(cls, config: EnvConfig, eta: float = 1.0) -> "FixedPolicy":
        """Every user NOMA-multiplexed on channel 1 at full power, UAV hovering."""
        n = config.num_users
        return cls(HybridAction(np.ones(n, dtype=int), np.full(n, float(config.max_power)),
                                np.full(n, eta), np.zeros(2)))


@dataclass
class EpisodeRecord:
    episode: int
    mission_time: float
    completed: bool
    total_reward_d: float
    total_reward_c: float
    mean_eta: float
    total_energy: float
    total_quality: float

    FIELDS = ("episode", "mission_time", "completed", "total_reward_d", "total_reward_c",
              "mean_eta", "total_energy", "total_quality")

    def row(self) -> list[str]:
        return [str(self.episode), repr(float(self.mission_time)), str(int(self.completed)),
                repr(float(self.total_reward_d)), repr(float(self.total_reward_c)),
                repr(float(self.mean_eta)), repr(float(self.total_energy)),
                repr(float(self.total_quality))]


def run_episode(env: MissionEnv, decide: Callable[[MissionState], tuple[HybridAction, Optional[Transition]]],
                episode: int = 0, trace: Optional[list] = None,
                on_action: Optional[Callable[[HybridAction], None]] = None
                ) -> tuple[EpisodeRecord, list[Transition]]:
    """Play one episode to termination, filling rewards into the transitions."""
    state = env.reset()
    transitions: list[Transition] = []
    r_d = r_c = q = e = 0.0
    etas: list[np.ndarray] = []
    while True:
        action, tr = decide(state)
        if on_action is not None:
            on_action(action)
        out = env.step(action)
        r_d += out.reward_discrete
        r_c += out.reward_continuous
        q += out.diagnostics["quality"]
        e += out.diagnostics["energy"]
        etas.append(out.diagnostics["etas"])
        if tr is not None:
            tr.reward_d, tr.reward_c, tr.done = out.reward_discrete, out.reward_continuous, out.done
            transitions.append(tr)
        if trace is not None:
            trace.append(trace_row(out))
        state = out.next_state
        if out.done:
            break
    all_etas = np.concatenate(etas) if etas else np.zeros(0)
    record = EpisodeRecord(
        episode=episode,
        mission_time=state.slot * env.config.slot_seconds,
        completed=not out.failed and not np.any(state.remaining > 0),
        total_reward_d=r_d, total_reward_c=r_c,
        mean_eta=float(all_etas.mean()) if all_etas.size else 0.0,
        total_energy=e, total_quality=q,
    )
    return record, transitions


def train_policy(config: EnvConfig, ppo: PPOConfig = PPOConfig(), variant: str = "hybrid",
                 episodes: int = 1000, seed: int = 0, pin_power: bool = False,
                 on_episode: Optional[Callable[[EpisodeRecord, HybridPolicy], None]] = None,
                 on_action: Optional[Callable[[HybridAction], None]] = None
                 ) -> tuple[HybridPolicy, list[EpisodeRecord], list[dict]]:
    """Train a policy for ``episodes`` episodes; updates fire every ``rollout_slots`` slots."""
    env_ss, policy_ss = np.random.SeedSequence(seed).spawn(2)
    policy = HybridPolicy(config, ppo, variant, seed=int(policy_ss.generate_state(1)[0]),
                          pin_power=pin_power)
    env = MissionEnv(config, np.random.default_rng(env_ss))
    records, update_stats = [], []
    buffer: list[Transition] = []
    for ep in range(episodes):
        record, transitions = run_episode(env, lambda s: policy.act(s, "sample"), ep,
                                          on_action=on_action)
        buffer.extend(transitions)
        records.append(record)
        if len(buffer) >= ppo.rollout_slots or (ep == episodes - 1 and buffer):
            update_stats.append(policy.update(buffer))
            buffer = []
        if on_episode is not None:
            on_episode(record, policy)
    return policy, records, update_stats


def run_hybrid(config: EnvConfig, ppo: PPOConfig = PPOConfig(), **kwargs):
    return train_policy(config, ppo, "hybrid", **kwargs)


def run_equal_power(config: EnvConfig, ppo: PPOConfig = PPOConfig(), **kwargs):
    return train_policy(config, ppo, "ep", **kwargs)


def run_triple_ppo(config: EnvConfig, ppo: PPOConfig = PPOConfig(), **kwargs):
    return train_policy(config, ppo, "triple", **kwargs)


def evaluate_policy(policy, config: EnvConfig, episodes: int = 20, seed: int = 0,
                    mode: str = "mean", freeze_fading: bool = False) -> dict:
    """Roll out ``episodes`` episodes and summarise mission time and semantic metrics.

    With ``freeze_fading`` every episode replays the same environment stream.
    """
    records = []
    env_rng = np.random.default_rng(seed)
    for ep in range(episodes):
        env = MissionEnv(config, np.random.default_rng(seed) if freeze_fading else env_rng)
        rec, _ = run_episode(env, lambda s: (policy.decide(s, mode), None), ep)
        records.append(rec)
    times = np.array([r.mission_time for r in records])
    return {
        "episodes": episodes,
        "mean_mission_time": float(times.mean()),
        "std_mission_time": float(times.std()),
        "completion_rate": float(np.mean([r.completed for r in records])),
        "mean_eta": float(np.mean([r.mean_eta for r in records])),
        "mean_energy": float(np.mean([r.total_energy for r in records])),
        "mean_quality": float(np.mean([r.total_quality for r in records])),
        "records": records,
    }
