"""Air-to-ground propagation and NOMA uplink rate model.

Large-scale path loss ``beta0 * d**-alpha`` times Rician small-scale fading
gives the complex gain ``h[n, m]`` between user ``n`` and the UAV on channel
``m``.  Users sharing a channel are decoded by successive interference
cancellation (SIC) in order of received power.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

REFERENCE_DISTANCE = 1.0


class Position3D(NamedTuple):
    x: float
    y: float
    z: float = 0.0


@dataclass(frozen=True)
class ChannelParams:
    beta0: float = 1e-3
    alpha: float = 2.0
    rician_k: float = 10.0
    bandwidth_hz: float = 5e6
    noise_power_w: float = 5e-8
    num_users: int = 5
    num_channels: int = 3
    # treat noise_power_w as a PSD (W/Hz) and multiply by the bandwidth
    noise_is_psd: bool = False

    def __post_init__(self):
        checks = {
            "beta0": self.beta0 > 0,
            "alpha": 2.0 <= self.alpha <= 6.0,
            "rician_k": self.rician_k >= 0,
            "bandwidth_hz": self.bandwidth_hz > 0,
            "noise_power_w": self.noise_power_w > 0,
            "num_users": int(self.num_users) == self.num_users and self.num_users >= 1,
            "num_channels": int(self.num_channels) == self.num_channels and self.num_channels >= 1,
        }
        for name, ok in checks.items():
            if not ok:
                raise ValueError(f"invalid {name}: {getattr(self, name)!r}")

    @property
    def total_noise_w(self) -> float:
        if self.noise_is_psd:
            return self.noise_power_w * self.bandwidth_hz
        return self.noise_power_w

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray  # (N, M) complex amplitudes
    cnrs: np.ndarray  # (N, M) |h|^2 / noise

    @property
    def shape(self) -> tuple[int, int]:
        return self.gains.shape


def distance(user: Sequence[float], uav: Sequence[float]) -> float:
    """Euclidean distance between a ground user and the UAV."""
    if uav[2] <= 0:
        raise ValueError("UAV altitude must be positive")
    u = np.asarray(user, dtype=float)
    v = np.asarray(uav, dtype=float)
    return float(np.sqrt(np.sum((u - v) ** 2)))


def large_scale_gain(d, params: ChannelParams):
    """Path-loss power gain ``beta0 * d**-alpha``; ``d`` in metres, >= 1."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < REFERENCE_DISTANCE):
        raise ValueError(f"distance below reference distance {REFERENCE_DISTANCE} m")
    out = params.beta0 * d_arr ** (-params.alpha)
    return float(out) if out.ndim == 0 else out


def sample_small_scale(rng: np.random.Generator, rician_k: float, size=None):
    """Draw Rician fading amplitudes with unit mean power.

    The LoS component has unit magnitude and zero phase; the scattered part
    is circularly-symmetric complex Gaussian with unit variance.
    """
    if rician_k < 0:
        raise ValueError("rician_k must be nonnegative")
    shape = () if size is None else (size if isinstance(size, tuple) else (size,))
    iq = rng.standard_normal(shape + (2,)) * np.sqrt(0.5)
    scattered = iq[..., 0] + 1j * iq[..., 1]
    los_w = np.sqrt(rician_k / (rician_k + 1.0))
    nlos_w = np.sqrt(1.0 / (rician_k + 1.0))
    g = los_w * 1.0 + nlos_w * scattered
    return complex(g) if size is None else g


def realize_channel(user_positions, uav, params: ChannelParams,
                    rng: np.random.Generator) -> ChannelRealization:
    users = np.atleast_2d(np.asarray(user_positions, dtype=float))
    if users.shape[0] != params.num_users:
        raise ValueError(f"expected {params.num_users} user positions, got {users.shape[0]}")
    if users.shape[1] == 2:
        users = np.column_stack([users, np.zeros(len(users))])
    uav_arr = np.asarray(uav, dtype=float)
    if uav_arr[2] <= 0:
        raise ValueError("UAV altitude must be positive")
    d = np.sqrt(np.sum((users - uav_arr) ** 2, axis=1))
    beta = large_scale_gain(d, params)
    g = sample_small_scale(rng, params.rician_k, (params.num_users, params.num_channels))
    gains = np.sqrt(beta)[:, None] * g
    cnrs = np.abs(gains) ** 2 / params.total_noise_w
    return ChannelRealization(gains=gains, cnrs=cnrs)


def sic_order(received: np.ndarray, members: np.ndarray) -> np.ndarray:
    """Members sorted strongest first; ties go to the lower user index."""
    members = np.asarray(members, dtype=int)
    keys = np.lexsort((members, -received[members]))
    return members[keys]


def sic_sinr(powers, cnr_column, members) -> np.ndarray:
    """SINR of every member of one channel under SIC decoding.

    A user at decoding rank J only sees interference from ranks J+1..N_m.
    Returns a length-N vector; non-members get 0.
    """
    powers = np.asarray(powers, dtype=float)
    cnr_column = np.asarray(cnr_column, dtype=float)
    received = powers * cnr_column
    sinr = np.zeros_like(received)
    members = np.asarray(list(members), dtype=int)
    if members.size == 0:
        return sinr
    order = sic_order(received, members)
    rx = received[order]
    # interference for rank j is the sum of everything decoded after it
    tail = np.concatenate([np.cumsum(rx[::-1])[::-1][1:], [0.0]])
    sinr[order] = rx / (1.0 + tail)
    return sinr


def rate(sinr, bandwidth_hz: float):
    """Shannon rate in bit/s."""
    out = bandwidth_hz * np.log2(1.0 + np.asarray(sinr, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def all_rates(realization: ChannelRealization, assignment, powers,
              bandwidth_hz: float) -> np.ndarray:
    """Per-user rates for a channel assignment (0 = unassigned)."""
    assignment = np.asarray(assignment, dtype=int)
    powers = np.asarray(powers, dtype=float)
    n_users, n_channels = realization.cnrs.shape
    if assignment.shape != (n_users,) or powers.shape != (n_users,):
        raise ValueError("assignment and powers must have one entry per user")
    rates = np.zeros(n_users)
    for m in range(1, n_channels + 1):
        members = np.flatnonzero(assignment == m)
        if members.size == 0:
            continue
        sinr = sic_sinr(powers, realization.cnrs[:, m - 1], members)
        rates[members] = rate(sinr[members], bandwidth_hz)
    return rates
