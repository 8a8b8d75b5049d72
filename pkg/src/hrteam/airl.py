"""Adversarial recovery of the human's reward and policy from demonstrations.

A reward network f scores state-action pairs; the discriminator compares f
against the current imitation policy's log-probability, D = sigma(f - log pi),
and is fit by logistic regression on balanced expert/generator batches. The
generator is the clipped-surrogate optimizer from the policy trainer, run on
the surrogate signal log D - log(1-D) = f - log pi. Discriminator steps touch
only f's parameters, generator steps only the policy's.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .nets import Adam, Mlp, Policy, log_softmax
from .ppo import (
    EnvStream,
    GridTask,
    PpoConfig,
    collect,
    new_policy_net,
    new_value_net,
    ppo_update,
    replay,
)

log = logging.getLogger(__name__)


@dataclass
class AirlConfig:
    disc_lr: float
    gen_lr: float
    disc_batch: int
    gen_batch: int
    steps: int
    eps_clip: float
    gamma: float
    ppo_epochs: int
    gae_lambda: float
    value_coef: float
    entropy_coef: float
    minibatches: int
    # Optional exploration schedule for the generator, mirroring PpoConfig:
    # the entropy bonus decays linearly from this down to entropy_coef.
    entropy_coef_start: float | None = None
    # Discriminator minibatches per generator round. The batch size is fixed;
    # how often the discriminator refits between policy rounds is not.
    disc_updates: int = 1

    def __post_init__(self):
        for name in (
            "disc_lr",
            "gen_lr",
            "disc_batch",
            "gen_batch",
            "steps",
            "eps_clip",
            "ppo_epochs",
            "disc_updates",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    @classmethod
    def from_mapping(cls, kv: dict) -> "AirlConfig":
        return cls(
            disc_lr=float(kv["disc_lr"]),
            gen_lr=float(kv["gen_lr"]),
            disc_batch=int(kv["disc_batch"]),
            gen_batch=int(kv["gen_batch"]),
            steps=int(kv["steps"]),
            eps_clip=float(kv["eps_clip"]),
            gamma=float(kv["gamma"]),
            ppo_epochs=int(kv["ppo_epochs"]),
            gae_lambda=float(kv["gae_lambda"]),
            value_coef=float(kv["value_coef"]),
            entropy_coef=float(kv["entropy_coef"]),
            minibatches=int(kv["minibatches"]),
            entropy_coef_start=(
                float(kv["entropy_coef_start"]) if "entropy_coef_start" in kv else None
            ),
            disc_updates=int(kv.get("disc_updates", 1)),
        )

    def ppo_view(self) -> PpoConfig:
        return PpoConfig(
            gamma=self.gamma,
            eps_clip=self.eps_clip,
            epochs=self.ppo_epochs,
            rollout=self.gen_batch,
            minibatches=self.minibatches,
            steps=self.steps,
            gae_lambda=self.gae_lambda,
            value_coef=self.value_coef,
            entropy_coef=self.entropy_coef,
            entropy_coef_start=self.entropy_coef_start,
            lr=self.gen_lr,
        )


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss; carries the last finite networks."""

    def __init__(self, message: str, reward_net: Mlp, policy: Policy):
        super().__init__(message)
        self.reward_net = reward_net
        self.policy = policy


def discriminator(f_value, log_pi):
    """D = exp(f) / (exp(f) + pi), evaluated in log space as sigma(f - log pi)."""
    scalar = np.ndim(f_value) == 0 and np.ndim(log_pi) == 0
    z = np.atleast_1d(np.asarray(f_value, dtype=float) - np.asarray(log_pi, dtype=float))
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep strictly inside (0,1); sigma rounds to the endpoints near |z|~745
    np.clip(out, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0), out=out)
    return float(out[0]) if scalar else out


def discriminator_loss(
    f_expert: np.ndarray,
    logpi_expert: np.ndarray,
    f_gen: np.ndarray,
    logpi_gen: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Balanced logistic loss -E_expert[log D] - E_gen[log(1-D)].

    Returns (loss, dloss/df_expert, dloss/df_gen); log-probabilities are
    constants here, so nothing flows back into the policy.
    """
    if len(f_expert) == 0 or len(f_gen) == 0:
        raise ValueError("discriminator batches must be nonempty")
    z_e = f_expert - logpi_expert
    z_g = f_gen - logpi_gen
    # log D = -softplus(-z), log(1-D) = -z - softplus(-z)
    loss = float(
        np.mean(np.logaddexp(0.0, -z_e)) + np.mean(z_g + np.logaddexp(0.0, -z_g))
    )
    d_e = (discriminator(f_expert, logpi_expert) - 1.0) / len(f_expert)
    d_g = discriminator(f_gen, logpi_gen) / len(f_gen)
    return loss, d_e, d_g


def reward_features(feats: np.ndarray, actions: np.ndarray, action_count: int) -> np.ndarray:
    """State features with the action one-hot appended, batched."""
    feats = np.atleast_2d(feats)
    onehot = np.zeros((len(feats), action_count))
    onehot[np.arange(len(feats)), actions] = 1.0
    return np.hstack([feats, onehot])


def new_reward_net(feature_dim: int, action_count: int, rng: np.random.Generator) -> Mlp:
    return Mlp.init([feature_dim + action_count, 64, 64, 1], rng, out_scale=1.0)


def expert_pairs(demos, task=None) -> tuple[np.ndarray, np.ndarray]:
    """Flatten demonstrations to (features, action) arrays by replaying them."""
    task = task or GridTask()
    feats = []
    actions = []
    for traj in demos.trajectories:
        for env, state, action in replay(traj, task):
            feats.append(task.features(env, state))
            actions.append(action)
    if not feats:
        raise ValueError("demonstration set is empty")
    return np.array(feats, dtype=float), np.array(actions, dtype=int)


def disc_grads(
    reward_net: Mlp,
    policy: Policy,
    e_feats: np.ndarray,
    e_actions: np.ndarray,
    g_feats: np.ndarray,
    g_actions: np.ndarray,
    action_count: int,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Loss and gradients of the logistic objective wrt f's parameters only;
    the policy is evaluated forward-only."""
    lp_e = log_softmax(policy.net.forward(e_feats))[
        np.arange(len(e_actions)), e_actions
    ]
    lp_g = log_softmax(policy.net.forward(g_feats))[
        np.arange(len(g_actions)), g_actions
    ]
    x_e = reward_features(e_feats, e_actions, action_count)
    x_g = reward_features(g_feats, g_actions, action_count)
    out_e, cache_e = reward_net.forward_cached(x_e)
    out_g, cache_g = reward_net.forward_cached(x_g)
    loss, d_e, d_g = discriminator_loss(out_e[:, 0], lp_e, out_g[:, 0], lp_g)
    gw_e, gb_e = reward_net.backward(cache_e, d_e[:, None])
    gw_g, gb_g = reward_net.backward(cache_g, d_g[:, None])
    grads_w = [a + b for a, b in zip(gw_e, gw_g)]
    grads_b = [a + b for a, b in zip(gb_e, gb_g)]
    return loss, grads_w, grads_b


def disc_update(reward_net: Mlp, opt: Adam, policy: Policy, *batches) -> float:
    loss, grads_w, grads_b = disc_grads(reward_net, policy, *batches)
    opt.step(grads_w, grads_b)
    return loss


def surrogate_rewards(
    reward_net: Mlp, rollout, logp: np.ndarray, action_count: int
) -> np.ndarray:
    """log D - log(1-D) = f - log pi on a rollout, batched."""
    x = reward_features(rollout.feats, rollout.actions, action_count)
    return reward_net.forward(x)[:, 0] - logp


def airl_train(
    demos,
    cfg: AirlConfig,
    rng: np.random.Generator | None = None,
    task=None,
    progress_every: int = 50,
    warm_start: tuple[Mlp, Policy, Mlp] | None = None,
) -> tuple[Mlp, Policy]:
    """Alternate discriminator and generator updates for cfg.steps env steps.

    `warm_start` resumes from (reward_net, policy, value_net) instead of fresh
    networks.
    """
    rng = rng or np.random.default_rng()
    task = task or GridTask()
    e_feats, e_actions = expert_pairs(demos, task)
    stream = EnvStream(rng, task)
    fdim = stream.observe().shape[0]
    if fdim != e_feats.shape[1]:
        raise ValueError("demonstrations and task disagree on feature size")
    if warm_start is not None:
        reward_net, policy, value_net = warm_start
    else:
        policy = Policy(new_policy_net(fdim, task.action_count, rng))
        value_net = new_value_net(fdim, rng)
        reward_net = new_reward_net(fdim, task.action_count, rng)
    opt_pi = Adam(policy.net, cfg.gen_lr)
    opt_v = Adam(value_net, cfg.gen_lr)
    opt_f = Adam(reward_net, cfg.disc_lr)
    pcfg = cfg.ppo_view()
    n_iters = cfg.steps // cfg.gen_batch
    for it in range(n_iters):
        pcfg_it = replace(pcfg, entropy_coef=pcfg.entropy_at(it / max(n_iters - 1, 1)))
        snap_f, snap_pi = reward_net.copy(), policy.net.copy()
        rollout = collect(policy, value_net, stream, cfg.gen_batch, rng)
        for _ in range(cfg.disc_updates):
            e_idx = rng.integers(0, len(e_actions), size=cfg.disc_batch)
            g_idx = rng.integers(0, cfg.gen_batch, size=cfg.disc_batch)
            loss_d = disc_update(
                reward_net,
                opt_f,
                policy,
                e_feats[e_idx],
                e_actions[e_idx],
                rollout.feats[g_idx],
                rollout.actions[g_idx],
                task.action_count,
            )
        rollout.rewards = surrogate_rewards(
            reward_net, rollout, rollout.logp, task.action_count
        )
        if not np.all(np.isfinite(rollout.rewards)):
            raise TrainingDiverged(
                "surrogate rewards became non-finite", snap_f, Policy(snap_pi)
            )
        try:
            stats = ppo_update(policy, value_net, opt_pi, opt_v, rollout, pcfg_it, rng)
        except FloatingPointError as exc:
            raise TrainingDiverged(str(exc), snap_f, Policy(snap_pi)) from exc
        if not np.isfinite(loss_d):
            raise TrainingDiverged(
                f"discriminator loss became {loss_d}", snap_f, Policy(snap_pi)
            )
        if progress_every and (it + 1) % progress_every == 0:
            log.info(
                "update %d/%d: disc loss %.4f surrogate/step %.4f",
                it + 1,
                n_iters,
                loss_d,
                stats["reward_mean"],
            )
    return reward_net, policy
