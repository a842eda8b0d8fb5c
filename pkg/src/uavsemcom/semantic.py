"""Flexible-scale semantic encoder economics.

Reconstruction quality follows a fitted log curve in the model scale ratio
``eta``; computation energy grows with ``eta**2``.  The utility trades the two
off with an importance weight ``lam`` (1 = quality first, 0 = energy first).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

ETA_MIN = 0.01


@dataclass(frozen=True)
class QualityParams:
    omega1: float = -0.0815
    omega2: float = 10.7192
    omega3: float = -0.7957
    omega4: float = 1.0918

    def __post_init__(self):
        # log argument must stay positive on (0, 1]; omega2/eta is smallest at eta = 1
        if self.omega2 < 0 or self.omega2 + self.omega3 <= 0:
            raise ValueError("omega2/eta + omega3 must be positive for eta in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EnergyParams:
    latent_size: float = 512
    eps_encoder: float = 1e-26
    eps_decoder: float = 1e-26
    freq_encoder: float = 1e9
    freq_decoder: float = 1e9
    work_encoder: float = 0.65e6
    work_decoder: float = 3.25e6

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"invalid {name}: {value!r} (must be > 0)")

    @property
    def full_scale_energy(self) -> float:
        return self.latent_size * (
            self.eps_encoder * self.freq_encoder ** 2 * self.work_encoder
            + self.eps_decoder * self.freq_decoder ** 2 * self.work_decoder
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class UtilityWeights:
    lam: float = 0.5
    # None means "energy at full scale", so each term is O(1) per user
    energy_norm: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"invalid lambda: {self.lam!r} (must be in [0, 1])")
        if self.energy_norm is not None and not self.energy_norm > 0:
            raise ValueError(f"invalid energy_norm: {self.energy_norm!r} (must be > 0)")

    def norm(self, ep: EnergyParams) -> float:
        return ep.full_scale_energy if self.energy_norm is None else self.energy_norm

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "energy_norm": self.energy_norm}


def _check_eta(eta) -> np.ndarray:
    arr = np.asarray(eta, dtype=float)
    if np.any(~(arr > 0)) or np.any(arr > 1):
        raise ValueError(f"scale ratio must lie in (0, 1], got {eta!r}")
    return arr


def _scalar_or_array(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def quality(eta, qp: QualityParams = QualityParams()):
    """Reconstruction quality ``w1*ln(w2/eta + w3) + w4``."""
    e = _check_eta(eta)
    return _scalar_or_array(qp.omega1 * np.log(qp.omega2 / e + qp.omega3) + qp.omega4)


def energy(eta, ep: EnergyParams = EnergyParams()):
    """Encoder plus decoder computation energy in joules."""
    e = _check_eta(eta)
    return _scalar_or_array(e ** 2 * ep.full_scale_energy)


def utility(etas, weights: UtilityWeights = UtilityWeights(),
            qp: QualityParams = QualityParams(), ep: EnergyParams = EnergyParams()) -> float:
    etas = np.atleast_1d(np.asarray(etas, dtype=float))
    if etas.size == 0:
        return 0.0
    q = np.sum(quality(etas, qp))
    e = np.sum(energy(etas, ep)) / weights.norm(ep)
    return float(weights.lam * q - (1.0 - weights.lam) * e)


def optimal_eta(lam: float, grid_size: int = 1000, qp: QualityParams = QualityParams(),
                ep: EnergyParams = EnergyParams(), energy_norm: Optional[float] = None,
                eta_min: float = ETA_MIN) -> float:
    """Brute-force the per-user utility maximiser on a uniform eta grid.

    Ties resolve toward the larger scale ratio.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    weights = UtilityWeights(lam=lam, energy_norm=energy_norm)
    grid = np.linspace(eta_min, 1.0, grid_size)
    objective = lam * quality(grid, qp) - (1.0 - lam) * energy(grid, ep) / weights.norm(ep)
    best = grid_size - 1 - int(np.argmax(objective[::-1]))
    return float(grid[best])
