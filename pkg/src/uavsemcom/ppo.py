"""PPO sub-agents: a categorical actor and a diagonal-Gaussian actor.

Each sub-agent owns an actor network, a separate critic network, their Adam
states and its own random streams.  Critics regress onto the one-step TD
target ``r + discount * V(s')``; actors minimise the clipped surrogate.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .nn import Head, Network, mlp_spec

LOG_2PI = np.log(2.0 * np.pi)
SIGMA_FLOOR = 1e-3


@dataclass(frozen=True)
class PPOConfig:
    discount: float = 0.99
    clip_ratio: float = 0.2
    epochs_per_update: int = 4
    minibatch_size: int = 64
    rollout_slots: int = 2048
    entropy_coef_discrete: float = 0.01
    entropy_coef_continuous: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    learning_rate: float = 3e-4
    hidden_dims: tuple = (64, 64)
    max_discrete_actions: int = 65536

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        checks = {
            "discount": 0 < self.discount < 1,
            "clip_ratio": self.clip_ratio > 0,
            "epochs_per_update": self.epochs_per_update >= 1,
            "minibatch_size": self.minibatch_size >= 1,
            "rollout_slots": self.rollout_slots >= 1,
            "entropy_coef_discrete": self.entropy_coef_discrete >= 0,
            "entropy_coef_continuous": self.entropy_coef_continuous >= 0,
            "value_coef": self.value_coef > 0,
            "max_grad_norm": self.max_grad_norm > 0,
            "learning_rate": self.learning_rate > 0,
            "hidden_dims": len(self.hidden_dims) >= 1 and min(self.hidden_dims) >= 1,
            "max_discrete_actions": self.max_discrete_actions >= 1,
        }
        for name, ok in checks.items():
            if not ok:
                raise ValueError(f"invalid {name}: {getattr(self, name)!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d


def gaussian_log_prob(x, mu, sigma):
    """Log-density of independent Gaussians, summed over the last axis."""
    x, mu, sigma = (np.asarray(a, dtype=float) for a in (x, mu, sigma))
    z = (x - mu) / sigma
    out = np.sum(-0.5 * z ** 2 - np.log(sigma) - 0.5 * LOG_2PI, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def gaussian_entropy(sigma):
    out = np.sum(0.5 * (LOG_2PI + 1.0) + np.log(sigma), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def td_advantage(rewards, values, next_values, dones, discount: float,
                 normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """One-step TD advantages and critic targets.

    Returns ``(advantages, targets)``; advantages are standardised per batch
    when ``normalize`` is set and the batch has spread.
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    v_next = np.asarray(next_values, dtype=float)
    not_done = 1.0 - np.asarray(dones, dtype=float)
    targets = r + discount * v_next * not_done
    adv = targets - v
    if normalize and adv.size > 1:
        std = adv.std()
        adv = (adv - adv.mean()) / (std if std > 1e-8 else 1.0)
    return adv, targets


def critic_loss(values, targets) -> float:
    diff = np.asarray(values, dtype=float) - np.asarray(targets, dtype=float)
    return float(np.mean(diff ** 2))


def clipped_actor_loss(log_prob_new, log_prob_old, advantage, clip_ratio: float,
                       entropy=None, entropy_coef: float = 0.0) -> float:
    """Negated clipped surrogate, averaged over the batch, minus the entropy bonus."""
    ratio = np.exp(np.asarray(log_prob_new, dtype=float) - np.asarray(log_prob_old, dtype=float))
    adv = np.asarray(advantage, dtype=float)
    surrogate = np.minimum(ratio * adv, np.clip(ratio, 1 - clip_ratio, 1 + clip_ratio) * adv)
    loss = -float(np.mean(surrogate))
    if entropy is not None and entropy_coef:
        loss -= entropy_coef * float(np.mean(entropy))
    return loss


def surrogate_log_prob_grad(log_prob_new, log_prob_old, advantage, clip_ratio: float) -> np.ndarray:
    """d(clipped_actor_loss)/d(log_prob_new), entropy term excluded."""
    ratio = np.exp(log_prob_new - log_prob_old)
    unclipped = ratio * advantage
    clipped = np.clip(ratio, 1 - clip_ratio, 1 + clip_ratio) * advantage
    active = unclipped <= clipped
    return -np.where(active, unclipped, 0.0) / len(ratio)


class _Agent:
    entropy_coef: float

    def __init__(self, obs_dim: int, actor_heads, ppo: PPOConfig,
                 seed: np.random.SeedSequence):
        init_ss, sample_ss, shuffle_ss = seed.spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.ppo = ppo
        self.obs_dim = obs_dim
        self.actor = Network.create(mlp_spec(obs_dim, actor_heads, ppo.hidden_dims),
                                    init_rng, lr=ppo.learning_rate)
        self.critic = Network.create(mlp_spec(obs_dim, [Head("value", 1)], ppo.hidden_dims),
                                     init_rng, lr=ppo.learning_rate, head_gains={"value": 1.0})
        self.sample_rng = np.random.default_rng(sample_ss)
        self.shuffle_rng = np.random.default_rng(shuffle_ss)

    def value(self, obs) -> np.ndarray:
        return self.critic(obs)["value"][..., 0]

    # subclasses: log-probs/entropy of stored actions, plus the actor upstream gradient
    def _actor_terms(self, obs, actions, dlogp):
        raise NotImplementedError

    def log_prob(self, obs, actions) -> np.ndarray:
        logp, _, _ = self._actor_terms(obs, actions, None)
        return logp

    def actor_gradient(self, obs, actions, log_prob_old, advantage):
        """Clipped-surrogate loss (with entropy bonus) and its parameter gradient."""
        logp, ent, _ = self._actor_terms(obs, actions, None)
        dlogp = surrogate_log_prob_grad(logp, log_prob_old, advantage, self.ppo.clip_ratio)
        _, _, upstream = self._actor_terms(obs, actions, dlogp)
        loss = clipped_actor_loss(logp, log_prob_old, advantage, self.ppo.clip_ratio,
                                  ent, self.entropy_coef)
        return loss, self.actor.gradient(obs, upstream), logp, ent

    def update(self, obs, actions, log_prob_old, rewards, values, dones) -> dict:
        """Run the configured epochs of minibatched PPO on one batch of transitions."""
        obs = np.asarray(obs, dtype=float)
        actions = np.asarray(actions)
        log_prob_old = np.asarray(log_prob_old, dtype=float)
        values = np.asarray(values, dtype=float)
        dones = np.asarray(dones, dtype=bool)
        # batches hold whole episodes, so V(s_{t+1}) is the next stored value
        next_values = np.append(values[1:], 0.0)
        adv, targets = td_advantage(rewards, values, next_values, dones, self.ppo.discount)

        n = len(obs)
        mb = min(self.ppo.minibatch_size, n)
        stats = {"actor_loss": [], "critic_loss": [], "entropy": [], "approx_kl": []}
        for _ in range(self.ppo.epochs_per_update):
            perm = self.shuffle_rng.permutation(n)
            for start in range(0, n, mb):
                b = perm[start:start + mb]
                loss, grad, logp, ent = self.actor_gradient(obs[b], actions[b],
                                                            log_prob_old[b], adv[b])
                self.actor.apply_gradient(grad, self.ppo.max_grad_norm)
                v = self.value(obs[b])
                coef = self.ppo.value_coef
                upstream_v = {"value": (coef * 2.0 * (v - targets[b]) / len(b))[:, None]}
                self.critic.apply_gradient(self.critic.gradient(obs[b], upstream_v),
                                           self.ppo.max_grad_norm)
                stats["actor_loss"].append(loss)
                stats["critic_loss"].append(coef * critic_loss(v, targets[b]))
                stats["entropy"].append(float(np.mean(ent)))
                stats["approx_kl"].append(float(np.mean(log_prob_old[b] - logp)))
        return {k: float(np.mean(v)) for k, v in stats.items()}

    def networks(self) -> dict[str, Network]:
        return {"actor": self.actor, "critic": self.critic}

    def load_networks(self, nets: dict[str, Network]) -> None:
        for name in ("actor", "critic"):
            if nets[name].spec != getattr(self, name).spec:
                raise ValueError(f"checkpoint {name} network does not match this agent")
        self.actor, self.critic = nets["actor"], nets["critic"]


class DiscreteAgent(_Agent):
    """Categorical actor over ``num_actions`` indices."""

    def __init__(self, obs_dim: int, num_actions: int, ppo: PPOConfig,
                 seed: np.random.SeedSequence):
        self.num_actions = num_actions
        self.entropy_coef = ppo.entropy_coef_discrete
        super().__init__(obs_dim, [Head("probs", num_actions, "softmax")], ppo, seed)

    def probs(self, obs) -> np.ndarray:
        return self.actor(obs)["probs"]

    def act(self, obs, mode: str = "sample") -> tuple[int, float, float]:
        p = self.probs(obs)
        if mode == "sample":
            index = int(self.sample_rng.choice(self.num_actions, p=p))
        else:
            index = int(np.argmax(p))
        return index, float(np.log(max(p[index], 1e-300))), float(self.value(obs))

    def _actor_terms(self, obs, actions, dlogp):
        p = self.probs(obs)
        rows = np.arange(len(p))
        actions = actions.astype(int)
        p_a = np.maximum(p[rows, actions], 1e-300)
        logp = np.log(p_a)
        logp_all = np.log(np.maximum(p, 1e-300))
        entropy = -np.sum(p * logp_all, axis=-1)
        if dlogp is None:
            return logp, entropy, None
        g = np.zeros_like(p)
        g[rows, actions] = dlogp / p_a
        # entropy bonus: d(-c * mean H)/dp = c/B * (log p + 1)
        g += self.entropy_coef / len(p) * (logp_all + 1.0)
        return logp, entropy, {"probs": g}


class GaussianAgent(_Agent):
    """Diagonal Gaussian actor on the normalised box ``[-1, 1]^dim``.

    Sampled values are clamped to the box; the stored action is the clamped
    value and its log-density is taken under the unclamped Gaussian.
    """

    def __init__(self, obs_dim: int, action_dim: int, ppo: PPOConfig,
                 seed: np.random.SeedSequence):
        self.action_dim = action_dim
        self.entropy_coef = ppo.entropy_coef_continuous
        heads = [Head("mu", action_dim, "linear"), Head("sigma", action_dim, "softplus")]
        super().__init__(obs_dim, heads, ppo, seed)

    def distribution(self, obs) -> tuple[np.ndarray, np.ndarray]:
        out = self.actor(obs)
        return out["mu"], out["sigma"] + SIGMA_FLOOR

    def act(self, obs, mode: str = "sample") -> tuple[np.ndarray, float, float]:
        mu, sigma = self.distribution(obs)
        if mode == "sample":
            raw = mu + sigma * self.sample_rng.standard_normal(self.action_dim)
        else:
            raw = mu
        raw = np.clip(raw, -1.0, 1.0)
        return raw, gaussian_log_prob(raw, mu, sigma), float(self.value(obs))

    def _actor_terms(self, obs, actions, dlogp):
        mu, sigma = self.distribution(obs)
        x = actions.astype(float)
        logp = gaussian_log_prob(x, mu, sigma)
        entropy = gaussian_entropy(sigma)
        if dlogp is None:
            return logp, entropy, None
        diff = x - mu
        coef = dlogp[:, None]
        g_mu = coef * diff / sigma ** 2
        g_sigma = coef * (diff ** 2 / sigma ** 3 - 1.0 / sigma)
        g_sigma -= self.entropy_coef / len(x) / sigma
        return logp, entropy, {"mu": g_mu, "sigma": g_sigma}
