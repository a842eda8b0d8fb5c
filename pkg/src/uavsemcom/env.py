"""Mission environment for UAV uplink semantic data collection.

One step is one time slot: the UAV moves, the channel is re-drawn at the new
position, users with data left transmit over their assigned NOMA channel and
the two agents receive their rewards.  The functional API (``reset``,
``step``) is pure given the random stream; :class:`MissionEnv` wraps it with
a config and generator for rollout code.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .channel import ChannelParams, ChannelRealization, all_rates, realize_channel
from .semantic import (ETA_MIN, EnergyParams, QualityParams, UtilityWeights,
                       energy, quality)

Placement = Union[str, Sequence[Sequence[float]]]


@dataclass(frozen=True)
class EnvConfig:
    area_size: float = 200.0
    uav_height: float = 100.0
    slot_seconds: float = 1.0
    max_speed: float = 10.0
    max_power: float = 5.0
    data_size: float = 1e8
    max_time: float = 100.0
    time_penalty: float = -1.0
    fail_penalty: float = -100.0
    bounds_penalty: float = -100.0
    eta_min: float = ETA_MIN
    utility_on_completion: bool = False
    user_placement: Placement = "uniform"
    channel: ChannelParams = field(default_factory=ChannelParams)
    quality: QualityParams = field(default_factory=QualityParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    weights: UtilityWeights = field(default_factory=UtilityWeights)

    def __post_init__(self):
        for name in ("area_size", "uav_height", "slot_seconds", "max_speed",
                     "max_power", "data_size", "max_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"invalid {name}: {getattr(self, name)!r} (must be > 0)")
        for name in ("time_penalty", "fail_penalty", "bounds_penalty"):
            if getattr(self, name) > 0:
                raise ValueError(f"invalid {name}: {getattr(self, name)!r} (must be <= 0)")
        if not 0 < self.eta_min <= 1:
            raise ValueError(f"invalid eta_min: {self.eta_min!r}")
        if isinstance(self.user_placement, str):
            if self.user_placement != "uniform":
                raise ValueError(f"invalid user_placement: {self.user_placement!r}")
        else:
            pos = np.asarray(self.user_placement, dtype=float)
            if pos.shape != (self.num_users, 2):
                raise ValueError(
                    f"invalid user_placement: need {self.num_users} (x, y) pairs")
            if np.any(pos < 0) or np.any(pos > self.area_size):
                raise ValueError("invalid user_placement: positions outside the area")
            object.__setattr__(self, "user_placement", tuple(map(tuple, pos.tolist())))

    @property
    def num_users(self) -> int:
        return self.channel.num_users

    @property
    def num_channels(self) -> int:
        return self.channel.num_channels

    @property
    def max_slots(self) -> int:
        return int(round(self.max_time / self.slot_seconds))

    @property
    def max_step(self) -> float:
        return self.slot_seconds * self.max_speed

    @property
    def energy_norm(self) -> float:
        return self.weights.norm(self.energy)

    def with_users(self, n: int) -> "EnvConfig":
        placement = self.user_placement if isinstance(self.user_placement, str) else "uniform"
        return replace(self, user_placement=placement,
                       channel=replace(self.channel, num_users=n))


@dataclass
class MissionState:
    remaining: np.ndarray  # bits left per user
    uav_xy: np.ndarray
    realization: ChannelRealization
    slot: int
    user_xy: np.ndarray  # (N, 2) ground positions

    @property
    def active(self) -> np.ndarray:
        return self.remaining > 0


@dataclass
class HybridAction:
    assignment: np.ndarray  # ints in [0, M]
    powers: np.ndarray
    etas: np.ndarray
    delta_xy: np.ndarray

    def validate(self, config: EnvConfig, tol: float = 1e-9) -> None:
        n, m = config.num_users, config.num_channels
        a = np.asarray(self.assignment)
        if a.shape != (n,) or np.any(a < 0) or np.any(a > m):
            raise ValueError(f"invalid channel assignment {a!r}")
        if np.any(self.powers < -tol) or np.any(self.powers > config.max_power + tol):
            raise ValueError("transmit power outside [0, P_max]")
        if np.any(self.etas < config.eta_min - tol) or np.any(self.etas > 1 + tol):
            raise ValueError("scale ratio outside [eta_min, 1]")
        if np.any(np.abs(self.delta_xy) > config.max_step + tol):
            raise ValueError("UAV displacement exceeds the speed limit")


@dataclass
class StepOutcome:
    next_state: MissionState
    reward_discrete: float
    reward_continuous: float
    done: bool
    failed: bool
    diagnostics: dict


def _placement(config: EnvConfig, rng: np.random.Generator) -> np.ndarray:
    if isinstance(config.user_placement, str):
        return rng.uniform(0.0, config.area_size, size=(config.num_users, 2))
    return np.asarray(config.user_placement, dtype=float)


def _realize(user_xy, uav_xy, config: EnvConfig, rng) -> ChannelRealization:
    uav = (uav_xy[0], uav_xy[1], config.uav_height)
    return realize_channel(user_xy, uav, config.channel, rng)


def reset(config: EnvConfig, rng: np.random.Generator) -> MissionState:
    user_xy = _placement(config, rng)
    uav_xy = np.array([config.area_size / 2, config.area_size / 2])
    return MissionState(
        remaining=np.full(config.num_users, float(config.data_size)),
        uav_xy=uav_xy,
        realization=_realize(user_xy, uav_xy, config, rng),
        slot=0,
        user_xy=user_xy,
    )


def reward_components(delivered, etas, active, slot: int, failed: bool,
                      out_of_bounds: bool, config: EnvConfig,
                      finished=None) -> tuple[float, float]:
    """Assemble (discrete, continuous) rewards for one slot.

    ``active`` selects the users whose utility counts this slot.  With
    ``utility_on_completion`` only the users in ``finished`` are credited.
    """
    credited = np.asarray(active, dtype=bool)
    if config.utility_on_completion:
        credited = (np.zeros_like(credited) if finished is None
                    else np.asarray(finished, dtype=bool))
    etas = np.asarray(etas, dtype=float)[credited]
    lam = config.weights.lam
    r_u = 0.0
    if etas.size:
        r_u = (lam * float(np.sum(quality(etas, config.quality)))
               - (1 - lam) * float(np.sum(energy(etas, config.energy))) / config.energy_norm)
    r_d = config.time_penalty + r_u
    if failed:
        r_d += config.fail_penalty
    r_c = r_d + (config.bounds_penalty if out_of_bounds else 0.0)
    return r_d, r_c


def step(state: MissionState, action: HybridAction, config: EnvConfig,
         rng: np.random.Generator) -> StepOutcome:
    n = config.num_users
    assignment = np.asarray(action.assignment, dtype=int)
    powers = np.asarray(action.powers, dtype=float)
    etas = np.asarray(action.etas, dtype=float)
    delta = np.asarray(action.delta_xy, dtype=float)
    if assignment.shape != (n,) or powers.shape != (n,) or etas.shape != (n,) or delta.shape != (2,):
        raise ValueError("action dimensions do not match the number of users")

    if not np.any(state.active):
        return StepOutcome(state, 0.0, 0.0, True, False,
                           {"rates": np.zeros(n), "delivered": np.zeros(n),
                            "quality": 0.0, "energy": 0.0, "etas": np.zeros(0)})

    moved = state.uav_xy + delta
    clamped = np.clip(moved, 0.0, config.area_size)
    out_of_bounds = bool(np.any(moved != clamped))

    realization = _realize(state.user_xy, clamped, config, rng)
    active = state.active
    rates = all_rates(realization, np.where(active, assignment, 0), powers,
                      config.channel.bandwidth_hz)
    delivered = np.minimum(state.remaining, config.slot_seconds * rates)
    remaining = np.where(active, state.remaining - delivered, 0.0)
    # float subtraction may leave dust below one bit
    remaining[remaining < 1e-6] = 0.0
    finished = active & (remaining == 0)
    slot = state.slot + 1

    complete = not np.any(remaining > 0)
    failed = (not complete) and slot > config.max_slots
    done = complete or failed

    r_d, r_c = reward_components(delivered, etas, active, slot, failed,
                                 out_of_bounds, config, finished=finished)
    next_state = MissionState(remaining, clamped, realization, slot, state.user_xy)
    active_etas = etas[active]
    diagnostics = {
        "rates": rates,
        "delivered": delivered,
        "etas": active_etas,
        "quality": float(np.sum(quality(active_etas, config.quality))) if active_etas.size else 0.0,
        "energy": float(np.sum(energy(active_etas, config.energy))) if active_etas.size else 0.0,
        "out_of_bounds": out_of_bounds,
    }
    return StepOutcome(next_state, r_d, r_c, done, failed, diagnostics)


def encode_discrete(assignment, num_channels: int) -> int:
    """Base-(M+1) positional index of a channel assignment, user 0 least significant."""
    base = num_channels + 1
    index = 0
    for choice in reversed([int(c) for c in assignment]):
        if not 0 <= choice <= num_channels:
            raise ValueError(f"channel choice {choice} outside [0, {num_channels}]")
        index = index * base + choice
    return index


def decode_discrete(index: int, num_users: int, num_channels: int) -> np.ndarray:
    base = num_channels + 1
    if not 0 <= index < base ** num_users:
        raise ValueError(f"action index {index} outside [0, {base ** num_users - 1}]")
    out = np.zeros(num_users, dtype=int)
    for n in range(num_users):
        index, out[n] = divmod(index, base)
    return out


def cnr_features(cnrs: np.ndarray) -> np.ndarray:
    return np.log10(1.0 + cnrs).ravel() / 10.0


def observe_discrete(state: MissionState, config: EnvConfig) -> np.ndarray:
    return np.concatenate([state.remaining / config.data_size,
                           cnr_features(state.realization.cnrs)])


def observe_continuous(state: MissionState, config: EnvConfig) -> np.ndarray:
    return np.concatenate([observe_discrete(state, config),
                           state.uav_xy / config.area_size])


class MissionEnv:
    """Stateful wrapper around :func:`reset` / :func:`step`."""

    def __init__(self, config: EnvConfig, rng: Optional[np.random.Generator] = None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng()
        self.state: Optional[MissionState] = None

    @property
    def obs_dim_discrete(self) -> int:
        return self.config.num_users * (1 + self.config.num_channels)

    @property
    def obs_dim_continuous(self) -> int:
        return self.obs_dim_discrete + 2

    def reset(self) -> MissionState:
        self.state = reset(self.config, self.rng)
        return self.state

    def step(self, action: HybridAction) -> StepOutcome:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        outcome = step(self.state, action, self.config, self.rng)
        self.state = outcome.next_state
        return outcome

    def observe(self) -> tuple[np.ndarray, np.ndarray]:
        return (observe_discrete(self.state, self.config),
                observe_continuous(self.state, self.config))


def trace_columns(num_users: int) -> list[str]:
    return (["slot", "uav_x", "uav_y"]
            + [f"remaining_{n}" for n in range(num_users)]
            + [f"rate_{n}" for n in range(num_users)]
            + ["reward_d", "reward_c"])


def write_trace(path, rows: list[dict], num_users: int) -> None:
    """Write an episode trace; each row holds one slot's outcome."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(trace_columns(num_users))
        for row in rows:
            writer.writerow([row["slot"], repr(float(row["uav_x"])), repr(float(row["uav_y"]))]
                            + [repr(float(v)) for v in row["remaining"]]
                            + [repr(float(v)) for v in row["rates"]]
                            + [repr(float(row["reward_d"])), repr(float(row["reward_c"]))])


def trace_row(outcome: StepOutcome) -> dict:
    s = outcome.next_state
    return {"slot": s.slot, "uav_x": s.uav_xy[0], "uav_y": s.uav_xy[1],
            "remaining": s.remaining, "rates": outcome.diagnostics["rates"],
            "reward_d": outcome.reward_discrete, "reward_c": outcome.reward_continuous}
