"""Run configuration, training/evaluation drivers, sweeps and CSV output.

Config files are JSON.  The ``env`` section is flat: channel, semantic and
utility parameters sit next to the mission parameters, e.g.::

    {"algo": "hybrid", "episodes": 2000,
     "env": {"num_users": 2, "num_channels": 2, "data_size": 5e6, "lambda": 0.5},
     "ppo": {"rollout_slots": 128, "minibatch_size": 32}}

Missing keys take their defaults.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .agents import (VARIANTS, ConfigError, EpisodeRecord, FixedPolicy, HybridPolicy,
                     RandomPolicy, evaluate_policy, train_policy)
from .channel import ChannelParams
from .env import EnvConfig
from .ppo import PPOConfig
from .semantic import EnergyParams, QualityParams, UtilityWeights, energy, optimal_eta, quality

log = logging.getLogger(__name__)

AXES = ("num_users", "lambda", "data_size")
METRIC_COLUMNS = EpisodeRecord.FIELDS
SWEEP_COLUMNS = ("axis", "value", "algo", "mean_mission_time", "std_mission_time",
                 "completion_rate", "mean_eta", "mean_quality", "mean_energy")
COMPARE_COLUMNS = ("algo", "mean_mission_time", "std_mission_time", "completion_rate",
                   "mean_eta", "mean_quality", "mean_energy")

_ENV_SCALARS = [f.name for f in fields(EnvConfig)
                if f.name not in ("channel", "quality", "energy", "weights")]
_SECTIONS = {
    "channel": (ChannelParams, [f.name for f in fields(ChannelParams)]),
    "quality": (QualityParams, [f.name for f in fields(QualityParams)]),
    "energy": (EnergyParams, [f.name for f in fields(EnergyParams)]),
}
_WEIGHT_KEYS = {"lambda": "lam", "energy_norm": "energy_norm"}


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    algo: str = "hybrid"
    episodes: int = 5000
    seed: int = 0
    eval_episodes: int = 50
    output_dir: str = "runs/default"
    checkpoint_every: int = 500

    def __post_init__(self):
        if self.algo not in VARIANTS:
            raise ConfigError(f"algo: must be one of {', '.join(VARIANTS)}, got {self.algo!r}")
        for name in ("episodes", "eval_episodes", "checkpoint_every"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name}: must be >= 1, got {getattr(self, name)!r}")


def _coerce(name: str, value, default):
    """Convert a JSON value to the type of its default, naming the field on failure."""
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected {type(default).__name__}, got {value!r}") from None
    return value


def env_to_dict(cfg: EnvConfig) -> dict:
    out = {}
    for name in _ENV_SCALARS:
        value = getattr(cfg, name)
        out[name] = value if isinstance(value, str) else (
            [list(p) for p in value] if isinstance(value, tuple) else value)
    for section, (_, keys) in _SECTIONS.items():
        sub = getattr(cfg, section)
        out.update({k: getattr(sub, k) for k in keys})
    out.update(cfg.weights.to_dict())
    return out


def env_from_dict(d: Mapping, base: EnvConfig = EnvConfig()) -> EnvConfig:
    known = set(_ENV_SCALARS) | set(_WEIGHT_KEYS)
    for _, keys in _SECTIONS.values():
        known |= set(keys)
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"env.{unknown[0]}: unknown field")
    try:
        subs = {}
        for section, (cls, keys) in _SECTIONS.items():
            cur = getattr(base, section)
            kw = {k: _coerce(f"env.{k}", d[k], getattr(cur, k)) for k in keys if k in d}
            subs[section] = replace(cur, **kw)
        wkw = {}
        if "lambda" in d:
            wkw["lam"] = _coerce("env.lambda", d["lambda"], 0.0)
        if "energy_norm" in d:
            wkw["energy_norm"] = (None if d["energy_norm"] is None
                                  else _coerce("env.energy_norm", d["energy_norm"], 0.0))
        subs["weights"] = replace(base.weights, **wkw)
        kw = {}
        for k in _ENV_SCALARS:
            if k not in d:
                continue
            if k == "user_placement":
                kw[k] = d[k]
            else:
                kw[k] = _coerce(f"env.{k}", d[k], getattr(base, k))
        return replace(base, **kw, **subs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"env: {exc}") from None


def ppo_from_dict(d: Mapping, base: PPOConfig = PPOConfig()) -> PPOConfig:
    names = {f.name for f in fields(PPOConfig)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"ppo.{unknown[0]}: unknown field")
    kw = {}
    for k, v in d.items():
        if k == "hidden_dims":
            if not isinstance(v, (list, tuple)):
                raise ConfigError(f"ppo.hidden_dims: expected a list, got {v!r}")
            kw[k] = tuple(_coerce("ppo.hidden_dims", h, 1) for h in v)
        else:
            kw[k] = _coerce(f"ppo.{k}", v, getattr(base, k))
    try:
        return replace(base, **kw)
    except ValueError as exc:
        raise ConfigError(f"ppo: {exc}") from None


def config_to_dict(cfg: RunConfig) -> dict:
    return {"algo": cfg.algo, "episodes": cfg.episodes, "seed": cfg.seed,
            "eval_episodes": cfg.eval_episodes, "output_dir": cfg.output_dir,
            "checkpoint_every": cfg.checkpoint_every,
            "env": env_to_dict(cfg.env), "ppo": cfg.ppo.to_dict()}


def config_from_dict(d: Mapping) -> RunConfig:
    if not isinstance(d, Mapping):
        raise ConfigError("config: top level must be a JSON object")
    top = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(d) - top)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field")
    default = RunConfig()
    kw = {}
    for k in ("algo", "episodes", "seed", "eval_episodes", "output_dir", "checkpoint_every"):
        if k in d:
            kw[k] = _coerce(k, d[k], getattr(default, k))
    if "env" in d:
        kw["env"] = env_from_dict(d["env"] or {})
    if "ppo" in d:
        kw["ppo"] = ppo_from_dict(d["ppo"] or {})
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    """Read and validate a JSON run config; missing fields take defaults."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return config_from_dict(doc)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n", encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class CsvAppender:
    """Header-first CSV writer that appends and flushes one whole row per call."""

    def __init__(self, path, columns: Sequence[str]):
        self.path = Path(path)
        self.columns = tuple(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._write(self.columns)

    def _write(self, values: Iterable) -> None:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(values)
        self._fh.write(buf.getvalue())
        self._fh.flush()

    def append(self, row) -> None:
        if isinstance(row, Mapping):
            row = [row[c] for c in self.columns]
        self._write([_fmt(v) for v in row])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class TrainResult:
    policy: HybridPolicy
    records: list[EpisodeRecord]
    metrics_path: Path
    checkpoint_dir: Path


def train(config: RunConfig) -> TrainResult:
    """Train ``config.algo``, streaming one CSV row per episode and periodic checkpoints."""
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_config(config, out / "config.json")
    except OSError as exc:
        raise OSError(f"cannot write to {out}: {exc}") from exc
    ckpt_root = out / "checkpoints"
    metrics = CsvAppender(out / "metrics.csv", METRIC_COLUMNS)

    def on_episode(record: EpisodeRecord, policy: HybridPolicy) -> None:
        metrics.append(record.row())
        if (record.episode + 1) % config.checkpoint_every == 0:
            policy.save(ckpt_root / f"ep{record.episode + 1:06d}")

    with metrics:
        policy, records, _ = train_policy(config.env, config.ppo, config.algo,
                                          config.episodes, config.seed, on_episode=on_episode)
    policy.save(ckpt_root / "final")
    log.info("trained %s for %d episodes; metrics in %s", config.algo,
             config.episodes, metrics.path)
    return TrainResult(policy, records, metrics.path, ckpt_root / "final")


def eval_seed(config: RunConfig) -> np.random.SeedSequence:
    # disjoint from the training streams spawned from config.seed
    return np.random.SeedSequence([config.seed, 7919])


def evaluate(config: RunConfig, checkpoint, freeze_fading: bool = False) -> dict:
    """Mean-mode evaluation of a saved policy; the checkpoint is only read."""
    policy = HybridPolicy.load(checkpoint, config.env, config.ppo)
    summary = evaluate_policy(policy, config.env, config.eval_episodes, eval_seed(config),
                              mode="mean", freeze_fading=freeze_fading)
    summary.pop("records")
    return summary


def _apply_axis(cfg: RunConfig, axis: str, value) -> RunConfig:
    if axis == "num_users":
        return replace(cfg, env=cfg.env.with_users(int(value)))
    if axis == "lambda":
        return replace(cfg, env=replace(cfg.env, weights=replace(cfg.env.weights, lam=float(value))))
    if axis == "data_size":
        return replace(cfg, env=replace(cfg.env, data_size=float(value)))
    raise ConfigError(f"axis: must be one of {', '.join(AXES)}, got {axis!r}")


def _summary_row(axis, value, algo, s: Mapping) -> dict:
    return {"axis": axis, "value": value, "algo": algo,
            **{k: s[k] for k in SWEEP_COLUMNS[3:]}}


def oracle_summary(env: EnvConfig, grid_size: int = 1000) -> dict:
    """Utility-optimal scale ratio per user, found by grid search (no RL)."""
    eta = optimal_eta(env.weights.lam, grid_size, env.quality, env.energy,
                      env.weights.energy_norm, env.eta_min)
    return {"mean_mission_time": float("nan"), "std_mission_time": float("nan"),
            "completion_rate": float("nan"), "mean_eta": eta,
            "mean_quality": quality(eta, env.quality), "mean_energy": energy(eta, env.energy)}


def sweep(base: RunConfig, axis: str, values: Sequence, algos: Optional[Sequence[str]] = None,
          policy_factory: Optional[Callable[[EnvConfig], object]] = None,
          freeze_fading: bool = False, write: bool = True) -> list[dict]:
    """Train and evaluate each algorithm at every axis value; emit a tidy CSV.

    ``algos`` may include ``"oracle"`` (grid-search scale ratio, lambda axis)
    and ``"fixed"`` (every user on one channel at full power, UAV hovering,
    no training).  A ``policy_factory`` replaces training with a frozen
    policy.  Training
    seeds are offset by the point index; every point is evaluated on the
    base seed's evaluation stream so points share random numbers.
    """
    if axis not in AXES:
        raise ConfigError(f"axis: must be one of {', '.join(AXES)}, got {axis!r}")
    algos = list(algos or [base.algo])
    out = Path(base.output_dir)
    writer = CsvAppender(out / f"sweep_{axis}.csv", SWEEP_COLUMNS) if write else None
    rows = []
    try:
        for i, value in enumerate(values):
            point = _apply_axis(replace(base, seed=base.seed + i), axis, value)
            for algo in algos:
                if algo == "oracle":
                    summary = oracle_summary(point.env)
                elif algo == "fixed" or policy_factory is not None:
                    policy = (policy_factory or FixedPolicy.single_channel)(point.env)
                    summary = evaluate_policy(policy, point.env, point.eval_episodes,
                                              eval_seed(base), freeze_fading=freeze_fading)
                else:
                    run = replace(point, algo=algo,
                                  output_dir=str(out / f"{axis}={value}" / algo))
                    result = train(run)
                    summary = evaluate_policy(result.policy, run.env, run.eval_episodes,
                                              eval_seed(base), freeze_fading=freeze_fading)
                row = _summary_row(axis, value, algo, summary)
                rows.append(row)
                if writer:
                    writer.append(row)
    finally:
        if writer:
            writer.close()
    return rows


def compare(base: RunConfig, algos: Sequence[str] = VARIANTS) -> list[dict]:
    """Train every algorithm on one config and tabulate evaluations beside a random policy."""
    out = Path(base.output_dir)
    rows = []
    with CsvAppender(out / "compare.csv", COMPARE_COLUMNS) as writer:
        summaries = [("random", evaluate_policy(RandomPolicy(base.env, base.seed), base.env,
                                                base.eval_episodes, eval_seed(base), mode="sample"))]
        for algo in algos:
            result = train(replace(base, algo=algo, output_dir=str(out / algo)))
            summaries.append((algo, evaluate_policy(result.policy, base.env,
                                                    base.eval_episodes, eval_seed(base))))
        for algo, summary in summaries:
            row = {"algo": algo, **{k: summary[k] for k in COMPARE_COLUMNS[1:]}}
            rows.append(row)
            writer.append(row)
    return rows
