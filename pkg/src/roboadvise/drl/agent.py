"""DDPG training for the multi-period mean-variance objective."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import Divergence, PoolTooSmall, RoboAdviseError, SpanTooShort, TrainingError, ZeroVariance
from ..market_data import PriceSeries
from ..metrics import sharpe
from ..mvenv import MarketEpisode, MultiplierTracker, WealthPath, episode_state, run_episode, step, update_multiplier
from .networks import (
    NetworkParams,
    actor_forward,
    actor_gradients,
    critic_forward,
    critic_gradients,
    flat_norm,
    init_network,
    mlp_forward,
    polyak,
    softmax,
)
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

POLICY_FORMAT = "roboadvise-policy"
POLICY_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    n: int = 5
    episodes: int = 200
    horizon: int = 252
    batch_size: int = 64
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    tau: float = 0.005
    noise_scale: float = 0.1  # std of Gaussian noise on actor logits
    noise_final: float = 0.0  # linear decay target at the last episode
    terminal_boost: float = 10.0
    priority_alpha: float = 0.6
    beta0: float = 0.4
    buffer_capacity: int = 50_000
    hidden: tuple[int, ...] = (64, 64)
    gamma: float = 1.0
    grad_clip: float = 1.0
    train_every: int = 1  # environment steps per gradient update
    omega0: float | None = None  # defaults to 1 + z
    omega_alpha: float = 0.05
    omega_decay_every: int = 50
    omega_window: int = 10
    omega_update_period: int = 10
    time_feature: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.episodes < 1 or self.n < 1 or self.horizon < 1:
            raise ValueError("episodes, n and horizon must be >= 1")
        if self.actor_lr < 0 or self.critic_lr < 0 or not 0 <= self.tau <= 1:
            raise ValueError("learning rates must be >= 0 and tau in [0, 1]")
        if self.omega_alpha <= 0 or self.batch_size < 1 or self.train_every < 1:
            raise ValueError("omega_alpha, batch_size and train_every must be positive")

    @property
    def state_dim(self) -> int:
        return 2 if self.time_feature else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)

    def omega_schedule(self, k: int) -> float:
        return self.omega_alpha / math.ceil(k / self.omega_decay_every)


@dataclass
class Policy:
    actor: NetworkParams
    critic: NetworkParams
    target_actor: NetworkParams
    target_critic: NetworkParams
    omega: float
    config: TrainConfig
    history: list[dict] = field(default_factory=list, repr=False)

    def __call__(self, state: np.ndarray) -> np.ndarray:
        return actor_forward(self.actor, state)

    @property
    def n(self) -> int:
        return self.actor.out_dim

    def run(self, episode: MarketEpisode) -> WealthPath:
        return run_episode(self, episode, self.omega, time_feature=self.config.time_feature)

    def equals(self, other: "Policy") -> bool:
        return (
            self.actor.equals(other.actor)
            and self.critic.equals(other.critic)
            and self.target_actor.equals(other.target_actor)
            and self.target_critic.equals(other.target_critic)
            and self.omega == other.omega
            and self.config == other.config
        )


def _pool_relatives(pool: PriceSeries) -> np.ndarray:
    return pool.relatives()


def universal_episode_sampler(
    pool: PriceSeries, n: int, N: int, rng: np.random.Generator | int, *, relatives: np.ndarray | None = None
) -> MarketEpisode:
    """Draw ``n`` distinct tickers and a contiguous ``N``-step window of their relatives."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    P = len(pool.tickers)
    if P < n:
        raise PoolTooSmall(f"pool has {P} tickers, need {n}")
    rel = _pool_relatives(pool) if relatives is None else relatives
    if rel.shape[0] < N:
        raise SpanTooShort(f"pool spans {rel.shape[0]} steps, need {N}")
    cols = np.sort(rng.choice(P, size=n, replace=False))
    start = int(rng.integers(0, rel.shape[0] - N + 1))
    return MarketEpisode(rel[start : start + N, cols], tuple(pool.tickers[c] for c in cols))


def init_policy(config: TrainConfig, z: float, rng: np.random.Generator) -> Policy:
    d, n = config.state_dim, config.n
    actor = init_network([d, *config.hidden, n], rng, head="softmax")
    critic = init_network([d + n, *config.hidden, 1], rng, head="linear")
    omega = 1.0 + z if config.omega0 is None else config.omega0
    return Policy(actor, critic, actor.copy(), critic.copy(), float(omega), config)


def _sgd(net: NetworkParams, gW, gb, lr: float, clip: float) -> float:
    grads = gW + gb
    norm = flat_norm(grads)
    scale = lr * (clip / norm if clip and norm > clip else 1.0)
    for W, g in zip(net.weights, gW):
        W -= scale * g
    for b, g in zip(net.biases, gb):
        b -= scale * g
    return norm


class _Learner:
    def __init__(self, policy: Policy, buffer: ReplayBuffer, rng: np.random.Generator):
        self.p, self.buffer, self.rng = policy, buffer, rng

    def update(self, beta: float) -> tuple[float, float]:
        cfg, p = self.p.config, self.p
        b = self.buffer.sample(cfg.batch_size, self.rng, beta)
        B = cfg.batch_size
        a2 = actor_forward(p.target_actor, b.next_states)
        q2 = critic_forward(p.target_critic, b.next_states, a2)
        y = b.rewards + cfg.gamma * np.where(b.terminal, 0.0, q2)
        q, acts = mlp_forward(p.critic, np.concatenate([b.states, b.actions], axis=1))
        td = q[:, 0] - y
        critic_loss = float(0.5 * np.mean(b.weights * td * td))
        gW, gb, _ = critic_gradients(p.critic, b.states, None, b.weights * td / B, acts=acts)
        _sgd(p.critic, gW, gb, cfg.critic_lr, cfg.grad_clip)

        logits, actor_acts = mlp_forward(p.actor, b.states)
        a_pi = softmax(logits)
        q_pi, acts = mlp_forward(p.critic, np.concatenate([b.states, a_pi], axis=1))
        _, _, dq_da = critic_gradients(p.critic, b.states, None, np.full(B, 1.0 / B), acts=acts, params=False)
        gW, gb, _ = actor_gradients(p.actor, b.states, -dq_da, cache=(a_pi, actor_acts))
        _sgd(p.actor, gW, gb, cfg.actor_lr, cfg.grad_clip)
        actor_loss = float(-q_pi.mean())

        self.buffer.update(b.index, td)
        polyak(p.target_critic, p.critic, cfg.tau)
        polyak(p.target_actor, p.actor, cfg.tau)
        if not (math.isfinite(critic_loss) and math.isfinite(actor_loss)):
            raise Divergence(f"non-finite loss (critic {critic_loss}, actor {actor_loss})")
        return critic_loss, actor_loss


def train(config: TrainConfig, pool: PriceSeries, z: float, *, log_path: str | Path | None = None) -> Policy:
    """Train a DDPG policy on random ``n``-stock episodes drawn from ``pool``."""
    if not math.isfinite(z):
        raise ValueError("target return must be finite")
    rng = np.random.default_rng(config.seed)
    policy = init_policy(config, z, rng)
    tracker = MultiplierTracker(
        omega=policy.omega,
        alpha=config.omega_schedule,
        window=config.omega_window,
        update_period=config.omega_update_period,
    )
    N, n = config.horizon, config.n
    buffer = ReplayBuffer(
        config.buffer_capacity, config.state_dim, n, alpha=config.priority_alpha, terminal_boost=config.terminal_boost
    )
    learner = _Learner(policy, buffer, rng)
    rel = _pool_relatives(pool)
    total_steps = config.episodes * N
    t = 0
    for ep in range(config.episodes):
        episode = universal_episode_sampler(pool, n, N, rng, relatives=rel)
        omega = tracker.omega
        frac = ep / max(config.episodes - 1, 1)
        sigma = config.noise_scale + (config.noise_final - config.noise_scale) * frac
        W = 1.0
        s = episode_state(W, omega, 0, N, config.time_feature)
        c_losses, a_losses = [], []
        for i in range(N):
            logits, _ = mlp_forward(policy.actor, s)
            noisy = logits[0] + sigma * rng.standard_normal(n) if sigma > 0 else logits[0]
            a = softmax(noisy)
            W_next = step(W, a * W, episode.relatives[i])
            done = i == N - 1
            reward = -((W_next - omega) ** 2) if done else 0.0
            s_next = episode_state(W_next, omega, i + 1, N, config.time_feature)
            buffer.add(s, a, reward, s_next, done)
            W, s = W_next, s_next
            t += 1
            if len(buffer) >= config.batch_size and t % config.train_every == 0:
                beta = config.beta0 + (1.0 - config.beta0) * min(1.0, t / total_steps)
                cl, al = learner.update(beta)
                c_losses.append(cl)
                a_losses.append(al)
        update_multiplier(tracker, W, z)
        policy.omega = float(tracker.omega)
        if not (policy.actor.is_finite() and policy.critic.is_finite() and math.isfinite(policy.omega)):
            raise Divergence(f"non-finite parameters after episode {ep}")
        policy.history.append(
            {
                "episode": ep,
                "terminal_wealth": W,
                "omega": policy.omega,
                "critic_loss": float(np.mean(c_losses)) if c_losses else float("nan"),
                "actor_loss": float(np.mean(a_losses)) if a_losses else float("nan"),
            }
        )
    if log_path is not None:
        write_training_log(log_path, policy.history)
    return policy


def write_training_log(path: str | Path, rows: Sequence[dict]) -> None:
    cols = ["episode", "terminal_wealth", "omega", "critic_loss", "actor_loss"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in cols})


def validation_sharpe(
    policy: Policy, pool: PriceSeries, portfolios: int, seed: int, *, horizon: int | None = None
) -> tuple[float, int]:
    """Mean annualized Sharpe over seeded random validation portfolios (and the number used)."""
    rel = _pool_relatives(pool)
    N = min(horizon or policy.config.horizon, rel.shape[0])
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(portfolios):
        episode = universal_episode_sampler(pool, policy.n, N, rng, relatives=rel)
        path = policy.run(episode)
        try:
            values.append(sharpe(path.daily_returns()))
        except ZeroVariance:
            continue
    if not values:
        raise ZeroVariance("every validation portfolio had zero variance")
    return float(np.mean(values)), len(values)


def hyperparameter_search(
    grid: Sequence[TrainConfig],
    train_pool: PriceSeries,
    val_pool: PriceSeries,
    z: float,
    portfolios: int = 100,
    *,
    seed: int = 0,
) -> tuple[Policy, list[dict]]:
    """Train every config and keep the one with the best mean validation Sharpe.

    All configs are scored on the same seeded validation draws.  A config
    that fails is recorded on the leaderboard and skipped; one whose validation
    returns all have zero variance is ranked last but still selectable.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    board, policies = [], []
    for idx, cfg in enumerate(grid):
        entry = {"index": idx, "config": cfg.to_dict()}
        try:
            pol = train(cfg, train_pool, z)
            try:
                score, used = validation_sharpe(pol, val_pool, portfolios, seed)
                entry.update(sharpe=score, portfolios=used, status="ok")
            except ZeroVariance:
                # a flat validation market scores nothing; keep the policy as a last resort
                score = -math.inf
                entry.update(sharpe=None, portfolios=0, status="zero_variance")
            policies.append((score, idx, pol))
        except (RoboAdviseError, TrainingError) as exc:
            log.warning("config %d failed: %s", idx, exc)
            entry.update(sharpe=None, portfolios=0, status=f"failed: {type(exc).__name__}: {exc}")
        board.append(entry)
    if not policies:
        raise TrainingError("every hyperparameter configuration failed")
    best_score, best_idx, best = max(policies, key=lambda t: (t[0], -t[1]))
    ranked = sorted(board, key=lambda e: (e["sharpe"] is None, -(e["sharpe"] or 0.0), e["index"]))
    for rank, e in enumerate(ranked, start=1):
        e["rank"] = rank
    return best, ranked


def _net_to_json(net: NetworkParams) -> dict:
    return {
        "head": net.head,
        "weights": [W.tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_json(d: dict) -> NetworkParams:
    return NetworkParams(
        [np.array(W, dtype=float).reshape(len(W), -1) for W in d["weights"]],
        [np.array(b, dtype=float) for b in d["biases"]],
        d["head"],
    )


def policy_to_dict(policy: Policy) -> dict:
    return {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "omega": policy.omega,
        "seed": policy.config.seed,
        "config": policy.config.to_dict(),
        "actor": _net_to_json(policy.actor),
        "critic": _net_to_json(policy.critic),
        "target_actor": _net_to_json(policy.target_actor),
        "target_critic": _net_to_json(policy.target_critic),
    }


def policy_from_dict(d: dict) -> Policy:
    if d.get("format") != POLICY_FORMAT:
        raise ValueError("not a policy file")
    if d.get("version") != POLICY_VERSION:
        raise ValueError(f"unsupported policy version {d.get('version')}")
    return Policy(
        _net_from_json(d["actor"]),
        _net_from_json(d["critic"]),
        _net_from_json(d["target_actor"]),
        _net_from_json(d["target_critic"]),
        float(d["omega"]),
        TrainConfig.from_dict(d["config"]),
    )


def save_policy(path: str | Path, policy: Policy, extra: dict | None = None) -> None:
    doc = policy_to_dict(policy)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_policy(path: str | Path) -> Policy:
    return policy_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


__all__ = [
    "Policy",
    "TrainConfig",
    "hyperparameter_search",
    "init_policy",
    "load_policy",
    "policy_from_dict",
    "policy_to_dict",
    "save_policy",
    "train",
    "universal_episode_sampler",
    "validation_sharpe",
    "write_training_log",
]
