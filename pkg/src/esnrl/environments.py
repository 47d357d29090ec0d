"""Bee World and the market-maker inventory problem.

Both environments emit one ``(observation, action, reward)`` step per
transition. The observation is what the agent sees *before* acting
(nectar at its current position / current inventory); the reward is the
quantity realised by the transition (nectar on arrival / cost of the
action plus the new inventory). The reservoir input at step ``k`` is
``z_k = (observation_k, action_k)``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ActionError, ParameterError
from .linalg import RngStream

__all__ = [
    "BeeWorldConfig",
    "BeeWorldState",
    "MarketMakerConfig",
    "MarketMakerState",
    "BeeWorld",
    "MarketMaker",
    "Experience",
    "nectar",
    "bee_step",
    "mm_step",
    "policy_bee_uniform",
    "policy_mm_initial",
    "bee_uniform_policy",
    "mm_initial_policy",
    "rollout",
]

DEFAULT_OMEGA = 2.0 * math.pi / 50.0


# --------------------------------------------------------------------------
# Bee World


@dataclass(frozen=True)
class BeeWorldConfig:
    c: float = 0.1
    omega: float = DEFAULT_OMEGA

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise ParameterError(f"need 0 < c < 1, got c={self.c}")
        if not self.omega > 0.0:
            raise ParameterError(f"need omega > 0, got {self.omega}")


@dataclass(frozen=True)
class BeeWorldState:
    y: float = 0.0
    t: int = 0

    def __post_init__(self):
        if not 0.0 <= self.y < 1.0:
            raise ParameterError(f"position must lie in [0, 1), got {self.y}")
        if self.t < 0:
            raise ParameterError(f"time must be non-negative, got {self.t}")


def nectar(y, t, omega):
    """Nectar field ``1 + cos(omega t) sin(2 pi y)``; ``y`` is taken mod 1."""
    y = np.mod(y, 1.0)
    return 1.0 + np.cos(omega * t) * np.sin(2.0 * np.pi * y)


def _wrap(y: float) -> float:
    y = y % 1.0
    # -tiny % 1.0 rounds to 1.0
    return 0.0 if y >= 1.0 else y


def bee_step(state: BeeWorldState, a: float, cfg: BeeWorldConfig):
    """Move by ``a`` (strictly inside ``(-c, c)``); reward is the nectar on arrival."""
    a = float(a)
    if not abs(a) < cfg.c:
        raise ActionError(f"bee action {a} outside (-{cfg.c}, {cfg.c})")
    y = _wrap(state.y + a)
    t = state.t + 1
    return BeeWorldState(y, t), float(nectar(y, t, cfg.omega))


# --------------------------------------------------------------------------
# market maker


@dataclass(frozen=True)
class MarketMakerConfig:
    alpha: float = 1.0
    beta: float = 1.0
    sigma: float = 1.0
    epsilon: float = 1.0
    r_base: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "sigma", "epsilon"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if not math.isfinite(self.r_base):
            raise ParameterError("r_base must be finite")


@dataclass(frozen=True)
class MarketMakerState:
    y: float = 0.0
    k: int = 0
    last_action: float = 0.0


def mm_reward(a: float, y_next: float, cfg: MarketMakerConfig) -> float:
    return cfg.epsilon * (cfg.r_base - cfg.alpha * a * a - cfg.beta * y_next * y_next)


def mm_step(state: MarketMakerState, a: float, cfg: MarketMakerConfig, rng: RngStream,
            noise: float | None = None):
    """Inventory update ``y' = y + eps a + sigma sqrt(eps) N``.

    ``noise`` overrides the standard normal draw (used when a caller has
    pre-drawn the shocks).
    """
    a = float(a)
    if not math.isfinite(a):
        raise ActionError(f"market-maker action must be finite, got {a}")
    if noise is None:
        noise = float(rng.generator.standard_normal())
    y = state.y + cfg.epsilon * a + cfg.sigma * math.sqrt(cfg.epsilon) * noise
    return MarketMakerState(y, state.k + 1, a), mm_reward(a, y, cfg)


# --------------------------------------------------------------------------
# policies


def policy_bee_uniform(cfg: BeeWorldConfig, rng: RngStream) -> float:
    """Uniform draw on the open interval ``(-c, c)``."""
    gen = rng.generator
    a = gen.uniform(-cfg.c, cfg.c)
    while a == -cfg.c:  # uniform() is half-open on the left
        a = gen.uniform(-cfg.c, cfg.c)
    return float(a)


def policy_mm_initial(y: float, eta: float, sigma_i: float, rng: RngStream) -> float:
    """Noisy mean reversion ``N(0, sigma_i^2) - eta y``."""
    if not eta >= 0 or not sigma_i >= 0:
        raise ParameterError(f"need eta >= 0 and sigma_i >= 0, got {eta}, {sigma_i}")
    draw = float(rng.generator.normal(0.0, sigma_i)) if sigma_i > 0 else 0.0
    return draw - eta * y


def bee_uniform_policy(cfg: BeeWorldConfig):
    def policy(obs, rng):
        return policy_bee_uniform(cfg, rng)

    policy.policy_id = "bee_uniform"
    return policy


def mm_initial_policy(eta: float = 0.05, sigma_i: float = 1.0):
    def policy(obs, rng):
        return policy_mm_initial(float(obs[0]), eta, sigma_i, rng)

    policy.policy_id = f"mm_initial(eta={eta},sigma_i={sigma_i})"
    return policy


# --------------------------------------------------------------------------
# stateful environment wrappers used by rollout()


class BeeWorld:
    env_id = "bee"
    obs_dim = 1
    action_dim = 1

    def __init__(self, config: BeeWorldConfig | None = None, state: BeeWorldState | None = None):
        self.config = config or BeeWorldConfig()
        self.state = state or BeeWorldState()

    def observe(self) -> np.ndarray:
        return np.array([nectar(self.state.y, self.state.t, self.config.omega)])

    @property
    def latent(self) -> float:
        return self.state.y

    def step(self, action) -> float:
        self.state, reward = bee_step(self.state, float(np.asarray(action).reshape(-1)[0]), self.config)
        return reward

    def sample_candidates(self, rng: RngStream, count: int) -> np.ndarray:
        """``count`` actions strictly inside ``(-c, c)``, shape ``(count, 1)``."""
        c = self.config.c
        a = rng.generator.uniform(-c, c, count)
        bad = a == -c
        while bad.any():
            a[bad] = rng.generator.uniform(-c, c, int(bad.sum()))
            bad = a == -c
        return a.reshape(count, 1)


class MarketMaker:
    env_id = "market_maker"
    obs_dim = 1
    action_dim = 1

    def __init__(self, config: MarketMakerConfig | None = None, rng: RngStream | None = None,
                 state: MarketMakerState | None = None, candidate_std: float = 1.0):
        self.config = config or MarketMakerConfig()
        self.rng = rng
        self.state = state or MarketMakerState()
        self.candidate_std = candidate_std

    def observe(self) -> np.ndarray:
        return np.array([self.state.y])

    @property
    def latent(self) -> float:
        return self.state.y

    def step(self, action) -> float:
        if self.rng is None:
            raise ParameterError("market maker needs an RngStream for its order-flow noise")
        self.state, reward = mm_step(self.state, float(np.asarray(action).reshape(-1)[0]),
                                     self.config, self.rng)
        return reward

    def sample_candidates(self, rng: RngStream, count: int) -> np.ndarray:
        return rng.generator.normal(0.0, self.candidate_std, (count, 1))


# --------------------------------------------------------------------------
# experience


@dataclass(eq=False)
class Experience:
    """Recorded rollout. Row ``k`` is ``(observation_k, action_k, reward_k)``.

    ``latent`` holds the hidden environment state at observation time
    (bee position / inventory) and is kept for plotting only.
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    latent: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float)
        act = np.asarray(self.actions, dtype=float)
        rew = np.asarray(self.rewards, dtype=float).reshape(-1)
        if obs.ndim == 1:
            obs = obs.reshape(-1, 1)
        if act.ndim == 1:
            act = act.reshape(-1, 1)
        if rew.size == 0:
            raise ParameterError("experience must contain at least one step")
        if obs.shape[0] != rew.size or act.shape[0] != rew.size:
            raise ParameterError(
                f"inconsistent lengths: obs {obs.shape}, actions {act.shape}, rewards {rew.shape}"
            )
        if not np.all(np.isfinite(rew)):
            raise ParameterError("rewards must be finite")
        self.observations, self.actions, self.rewards = obs, act, rew
        if self.latent is not None:
            self.latent = np.asarray(self.latent, dtype=float).reshape(-1)

    def __len__(self):
        return self.rewards.size

    @property
    def inputs(self) -> np.ndarray:
        """Reservoir inputs ``z_k = (observation_k, action_k)``."""
        return np.hstack([self.observations, self.actions])

    @property
    def obs_dim(self) -> int:
        return self.observations.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Experience):
            return NotImplemented
        same_latent = (self.latent is None and other.latent is None) or (
            self.latent is not None and other.latent is not None
            and np.array_equal(self.latent, other.latent)
        )
        return (
            np.array_equal(self.observations, other.observations)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
            and same_latent
            and self.metadata == other.metadata
        )

    def to_csv(self, path=None, phase: str | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        header = ["k"]
        if phase is not None:
            header.append("phase")
        header += [f"obs_{i}" for i in range(self.obs_dim)]
        header += [f"action_{i}" for i in range(self.action_dim)]
        header.append("reward")
        if self.latent is not None:
            header.append("latent")
        writer.writerow(header)
        for k in range(len(self)):
            row = [k] + ([phase] if phase is not None else [])
            row += [repr(float(v)) for v in self.observations[k]]
            row += [repr(float(v)) for v in self.actions[k]]
            row.append(repr(float(self.rewards[k])))
            if self.latent is not None:
                row.append(repr(float(self.latent[k])))
            writer.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str, metadata: dict | None = None) -> "Experience":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        cols = {name: i for i, name in enumerate(header)}
        obs_cols = [cols[h] for h in header if h.startswith("obs_")]
        act_cols = [cols[h] for h in header if h.startswith("action_")]
        data = lambda idx: np.array([[float(r[i]) for i in idx] for r in body])  # noqa: E731
        latent = data([cols["latent"]])[:, 0] if "latent" in cols else None
        return cls(data(obs_cols), data(act_cols), data([cols["reward"]])[:, 0], latent,
                   dict(metadata or {}))

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "observations": self.observations.tolist(),
            "actions": self.actions.tolist(),
            "rewards": self.rewards.tolist(),
            "latent": None if self.latent is None else self.latent.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Experience":
        doc = json.loads(text)
        return cls(np.array(doc["observations"]), np.array(doc["actions"]),
                   np.array(doc["rewards"]),
                   None if doc.get("latent") is None else np.array(doc["latent"]),
                   doc.get("metadata", {}))


def config_hash(config) -> str:
    doc = asdict(config) if hasattr(config, "__dataclass_fields__") else config
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def rollout(env, policy, steps: int, rng: RngStream, seed: int | None = None) -> Experience:
    """Run ``policy(observation, rng) -> action`` in ``env`` for ``steps`` transitions."""
    steps = int(steps)
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    obs = np.empty((steps, env.obs_dim))
    act = np.empty((steps, env.action_dim))
    rew = np.empty(steps)
    lat = np.empty(steps)
    for k in range(steps):
        o = env.observe()
        lat[k] = env.latent
        a = np.asarray(policy(o, rng), dtype=float).reshape(-1)
        obs[k] = o
        act[k] = a
        rew[k] = env.step(a)
    meta = {
        "env": env.env_id,
        "policy": getattr(policy, "policy_id", getattr(policy, "__name__", type(policy).__name__)),
        "seed": rng.seed if seed is None else seed,
        "config_hash": config_hash(env.config),
    }
    return Experience(obs, act, rew, lat, meta)


def with_state(env, **changes):
    """Copy of a frozen state with fields replaced."""
    env.state = replace(env.state, **changes)
    return env
