"""Clipped-surrogate policy optimization for the grid human.

Trains the stochastic surrogate policy on ground-truth rewards over freshly
randomized missions, and doubles as the generator step of the adversarial
reward-recovery loop (which only swaps the reward signal). Hyperparameters
live in config files shipped with the package, not in code.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import gridworld as gw
from .nets import Adam, Mlp, Policy, log_softmax, softmax

log = logging.getLogger(__name__)

HIDDEN = (64, 64)


@dataclass
class PpoConfig:
    gamma: float
    eps_clip: float
    epochs: int
    rollout: int
    minibatches: int
    steps: int
    gae_lambda: float
    value_coef: float
    entropy_coef: float
    lr: float
    # Optional exploration schedule: the entropy bonus decays linearly from
    # this down to entropy_coef across the run. Without the early boost the
    # policy settles on beelining to the terminal before it ever connects the
    # collect action to a target underfoot, and the bonus's final value alone
    # cannot pull it back out.
    entropy_coef_start: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.eps_clip <= 0.0:
            raise ValueError("eps_clip must be positive")
        if self.steps <= 0 or self.rollout <= 0:
            raise ValueError("steps and rollout must be positive")
        if self.entropy_coef_start is not None and self.entropy_coef_start < 0:
            raise ValueError("entropy_coef_start must be nonnegative")

    def entropy_at(self, done_frac: float) -> float:
        start = self.entropy_coef if self.entropy_coef_start is None else self.entropy_coef_start
        return start + (self.entropy_coef - start) * min(max(done_frac, 0.0), 1.0)

    @classmethod
    def from_mapping(cls, kv: dict) -> "PpoConfig":
        return cls(
            gamma=float(kv["gamma"]),
            eps_clip=float(kv["eps_clip"]),
            epochs=int(kv["epochs"]),
            rollout=int(kv["rollout"]),
            minibatches=int(kv["minibatches"]),
            steps=int(kv["steps"]),
            gae_lambda=float(kv["gae_lambda"]),
            value_coef=float(kv["value_coef"]),
            entropy_coef=float(kv["entropy_coef"]),
            lr=float(kv["lr"]),
            entropy_coef_start=(
                float(kv["entropy_coef_start"]) if "entropy_coef_start" in kv else None
            ),
        )


@dataclass
class Trajectory:
    env_seed: int
    actions: list[int]
    reached_terminal: bool


@dataclass
class DemoDataset:
    trajectories: list[Trajectory]

    @property
    def count(self) -> int:
        return len(self.trajectories)


def default_env_sampler(rng: np.random.Generator):
    return gw.random_env(rng)


class GridTask:
    """Episode protocol over the grid; the trainers only see this surface,
    so a different task (a toy MDP, say) can slot in for diagnostics."""

    action_count = gw.ACTION_COUNT

    def __init__(self, env_sampler=None, reward: gw.RewardSpec | None = None):
        self._sampler = env_sampler or default_env_sampler
        self._reward = reward

    def sample(self, rng: np.random.Generator):
        env, state = self._sampler(rng)
        if self._reward is not None:
            env = env.with_rewards(self._reward)
        return env, state

    def features(self, env, state) -> np.ndarray:
        return gw.features(env, state)

    def step(self, env, state, action: int):
        return gw.step(env, state, action)


class EnvStream:
    """Endless episode stream; finished missions are replaced by fresh ones."""

    def __init__(self, rng: np.random.Generator, task: GridTask):
        self.rng = rng
        self.task = task
        self.env, self.state = task.sample(rng)

    def observe(self) -> np.ndarray:
        return self.task.features(self.env, self.state)

    def advance(self, action: int) -> tuple[float, bool]:
        self.state, reward, done = self.task.step(self.env, self.state, action)
        if done:
            self.env, self.state = self.task.sample(self.rng)
        return reward, done


@dataclass
class Rollout:
    feats: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    last_value: float


def collect(
    policy: Policy,
    value_net: Mlp,
    stream: EnvStream,
    n_steps: int,
    rng: np.random.Generator,
    reward_fn=None,
) -> Rollout:
    """Gather one on-policy batch. `reward_fn(feats, action, logp)` overrides
    the environment reward when training against a learned signal."""
    fdim = stream.observe().shape[0]
    feats = np.empty((n_steps, fdim))
    actions = np.empty(n_steps, dtype=int)
    logp = np.empty(n_steps)
    rewards = np.empty(n_steps)
    values = np.empty(n_steps)
    dones = np.empty(n_steps, dtype=bool)
    for t in range(n_steps):
        obs = stream.observe()
        feats[t] = obs
        actions[t], logp[t] = policy.sample(obs, rng)
        values[t] = value_net.forward(obs)[0]
        env_reward, done = stream.advance(int(actions[t]))
        rewards[t] = (
            env_reward if reward_fn is None else reward_fn(obs, int(actions[t]), logp[t])
        )
        dones[t] = done
    last_value = 0.0 if dones[-1] else float(value_net.forward(stream.observe())[0])
    return Rollout(feats, actions, logp, rewards, values, dones, last_value)


def gae(rollout: Rollout, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets."""
    n = len(rollout.rewards)
    adv = np.empty(n)
    next_value = rollout.last_value
    acc = 0.0
    for t in range(n - 1, -1, -1):
        live = 0.0 if rollout.dones[t] else 1.0
        delta = rollout.rewards[t] + gamma * next_value * live - rollout.values[t]
        acc = delta + gamma * lam * live * acc
        adv[t] = acc
        next_value = rollout.values[t]
    return adv, adv + rollout.values


def ppo_clip_term(ratio, advantage, eps_clip):
    """min(r·A, clip(r, 1−ε, 1+ε)·A), elementwise."""
    ratio = np.asarray(ratio, dtype=float)
    advantage = np.asarray(advantage, dtype=float)
    clipped = np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * advantage
    return np.minimum(ratio * advantage, clipped)


def policy_loss_grad(
    logits: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    adv: np.ndarray,
    eps_clip: float,
    entropy_coef: float,
) -> tuple[float, np.ndarray]:
    """Clipped-surrogate loss (minus entropy bonus) and dL/dlogits."""
    n, k = logits.shape
    lp = log_softmax(logits)
    p = np.exp(lp)
    lp_act = lp[np.arange(n), actions]
    ratio = np.exp(lp_act - logp_old)
    surr = ppo_clip_term(ratio, adv, eps_clip)
    entropy = -np.sum(p * lp, axis=1)
    loss = float(-surr.mean() - entropy_coef * entropy.mean())
    # the min picks the unclipped branch exactly when gradient should flow
    active = ratio * adv <= np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * adv + 1e-12
    coef = -(ratio * adv * active) / n
    onehot = np.zeros((n, k))
    onehot[np.arange(n), actions] = 1.0
    dlogits = coef[:, None] * (onehot - p)
    dlogits += (entropy_coef / n) * p * (lp + entropy[:, None])
    return loss, dlogits


def value_loss_grad(values: np.ndarray, returns: np.ndarray) -> tuple[float, np.ndarray]:
    """Half squared error and dL/dvalues."""
    err = values - returns
    return float(0.5 * np.mean(err**2)), err / len(err)


def ppo_update(
    policy: Policy,
    value_net: Mlp,
    opt_pi: Adam,
    opt_v: Adam,
    rollout: Rollout,
    cfg: PpoConfig,
    rng: np.random.Generator,
) -> dict:
    adv, returns = gae(rollout, cfg.gamma, cfg.gae_lambda)
    n = len(adv)
    stats = {"policy_loss": 0.0, "value_loss": 0.0}
    updates = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for chunk in np.array_split(order, cfg.minibatches):
            if len(chunk) == 0:
                continue
            a = adv[chunk]
            a = (a - a.mean()) / (a.std() + 1e-8)
            logits, cache = policy.net.forward_cached(rollout.feats[chunk])
            loss_pi, dlogits = policy_loss_grad(
                logits,
                rollout.actions[chunk],
                rollout.logp[chunk],
                a,
                cfg.eps_clip,
                cfg.entropy_coef,
            )
            opt_pi.step(*policy.net.backward(cache, dlogits))
            v, vcache = value_net.forward_cached(rollout.feats[chunk])
            loss_v, dv = value_loss_grad(v[:, 0], returns[chunk])
            opt_v.step(*value_net.backward(vcache, cfg.value_coef * dv[:, None]))
            stats["policy_loss"] += loss_pi
            stats["value_loss"] += loss_v
            updates += 1
            if not (np.isfinite(loss_pi) and np.isfinite(loss_v)):
                raise FloatingPointError(
                    f"training diverged: policy loss {loss_pi}, value loss {loss_v}"
                )
    stats = {k: v / max(updates, 1) for k, v in stats.items()}
    stats["reward_mean"] = float(rollout.rewards.mean())
    return stats


def new_policy_net(feature_dim: int, action_count: int, rng: np.random.Generator) -> Mlp:
    return Mlp.init([feature_dim, *HIDDEN, action_count], rng)


def new_value_net(feature_dim: int, rng: np.random.Generator) -> Mlp:
    return Mlp.init([feature_dim, *HIDDEN, 1], rng, out_scale=1.0)


def train_ppo(
    cfg: PpoConfig,
    reward: gw.RewardSpec | None = None,
    rng: np.random.Generator | None = None,
    env_sampler=None,
    task=None,
    progress_every: int = 50,
) -> Policy:
    """Train the surrogate human on ground-truth rewards."""
    rng = rng or np.random.default_rng()
    task = task or GridTask(env_sampler, reward)
    stream = EnvStream(rng, task)
    fdim = stream.observe().shape[0]
    policy = Policy(new_policy_net(fdim, task.action_count, rng))
    value_net = new_value_net(fdim, rng)
    opt_pi = Adam(policy.net, cfg.lr)
    opt_v = Adam(value_net, cfg.lr)
    n_updates = cfg.steps // cfg.rollout
    for it in range(n_updates):
        cfg_it = replace(cfg, entropy_coef=cfg.entropy_at(it / max(n_updates - 1, 1)))
        rollout = collect(policy, value_net, stream, cfg.rollout, rng)
        stats = ppo_update(policy, value_net, opt_pi, opt_v, rollout, cfg_it, rng)
        if progress_every and (it + 1) % progress_every == 0:
            log.info(
                "update %d/%d: reward/step %.4f policy loss %.4f value loss %.4f",
                it + 1,
                n_updates,
                stats["reward_mean"],
                stats["policy_loss"],
                stats["value_loss"],
            )
    return policy


# -- rollout products ----------------------------------------------------------


def generate_demos(
    policy: Policy,
    count: int,
    rng: np.random.Generator,
    env_sampler=None,
) -> DemoDataset:
    """Sampled missions with stochastic actions; each is replayable from its seed."""
    sampler = env_sampler or default_env_sampler
    out = []
    for _ in range(count):
        env_seed = int(rng.integers(0, 2**63 - 1))
        env, state = sampler(np.random.default_rng(env_seed))
        actions: list[int] = []
        done = state.done
        while not done:
            action, _ = policy.sample(gw.features(env, state), rng)
            actions.append(int(action))
            state, _, done = gw.step(env, state, action)
        out.append(
            Trajectory(env_seed, actions, reached_terminal=state.cell == env.terminal)
        )
    return DemoDataset(out)


def replay(traj: Trajectory, task=None):
    """Yield (env, state, action) along a recorded trajectory."""
    task = task or GridTask()
    env, state = task.sample(np.random.default_rng(traj.env_seed))
    for action in traj.actions:
        yield env, state, action
        state, _, _ = task.step(env, state, action)


@dataclass
class Stat:
    mean: float
    lo: float
    hi: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.mean, self.lo, self.hi)


@dataclass
class PolicyStats:
    n: int
    length: Stat
    a_collected: Stat
    b_collected: Stat
    collisions: Stat
    terminal_rate: Stat
    ret: Stat
    ret_completed: Stat

    def rows(self) -> list[tuple[str, Stat]]:
        return [
            ("length", self.length),
            ("a_collected", self.a_collected),
            ("b_collected", self.b_collected),
            ("collisions", self.collisions),
            ("terminal_rate", self.terminal_rate),
            ("return", self.ret),
            ("return_completed", self.ret_completed),
        ]


def bootstrap_ci(
    samples: np.ndarray, rng: np.random.Generator, n_resamples: int = 2000
) -> Stat:
    """Percentile bootstrap of the mean at 95%."""
    samples = np.asarray(samples, dtype=float)
    if len(samples) == 0:
        return Stat(float("nan"), float("nan"), float("nan"))
    idx = rng.integers(0, len(samples), size=(n_resamples, len(samples)))
    means = samples[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return Stat(float(samples.mean()), float(lo), float(hi))


def evaluate_policy(
    policy,
    n_envs: int,
    rng: np.random.Generator,
    env_sampler=None,
    stochastic: bool = True,
) -> PolicyStats:
    """Roll the policy on fresh missions and report bootstrap statistics.

    Collisions counts bump events (wall or obstacle); return_completed averages
    only episodes that reached the terminal cell.
    """
    sampler = env_sampler or default_env_sampler
    lengths, colls_a, colls_b, bumps, rets, reached = [], [], [], [], [], []
    for _ in range(n_envs):
        env, state = sampler(rng)
        total = 0.0
        n_bump = 0
        n_steps = 0
        done = state.done
        while not done:
            feats = gw.features(env, state)
            if stochastic:
                action, _ = policy.sample(feats, rng)
            else:
                action = policy.argmax(feats)
            prev = state
            state, reward, done = gw.step(env, state, action)
            total += reward
            n_steps += 1
            if action != gw.COLLECT and state.cell == prev.cell:
                n_bump += 1
        n_a = sum(
            1
            for t in env.targets
            if t.kind == "A" and t.id not in state.uncollected
        )
        n_b = sum(
            1
            for t in env.targets
            if t.kind == "B" and t.id not in state.uncollected
        )
        lengths.append(n_steps)
        colls_a.append(n_a)
        colls_b.append(n_b)
        bumps.append(n_bump)
        rets.append(total)
        reached.append(state.cell == env.terminal)
    rets = np.array(rets)
    reached_arr = np.array(reached, dtype=bool)
    completed = rets[reached_arr] if reached_arr.any() else np.array([np.nan])
    return PolicyStats(
        n=n_envs,
        length=bootstrap_ci(np.array(lengths), rng),
        a_collected=bootstrap_ci(np.array(colls_a), rng),
        b_collected=bootstrap_ci(np.array(colls_b), rng),
        collisions=bootstrap_ci(np.array(bumps), rng),
        terminal_rate=bootstrap_ci(reached_arr.astype(float), rng),
        ret=bootstrap_ci(rets, rng),
        ret_completed=bootstrap_ci(completed, rng),
    )
