"""Pessimistic offline actor-critic training loop.

Policy evaluation regresses every critic head onto a shared target built
from the minimum-valued head of the target network plus an entropy bonus:

    y = r + gamma * (1 - done) * (min_k Q_target^k(s', a') - alpha * log pi(a'|s'))

Policy improvement maximizes min_k Q(s, a') - alpha * log pi(a'|s)
+ beta * log pi(a|s), with the Q gradient routed only through the argmin
head per sample. The actor is updated lazily, once per `policy_delay`
critic updates, and the temperature alpha tracks a target entropy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import envs_data, policy as pol, rank_one_net as ron
from .numerics import AdamState, RngStream, adam_step

METRICS_HEADER = ("step", "critic_loss", "policy_loss", "alpha", "q_mean",
                  "q_min", "q_std", "bc_loglik", "eval_score")


class DivergenceError(RuntimeError):
    """Q-values blew up or went non-finite during training."""


@dataclass
class TrainerConfig:
    gamma: float = 0.99
    tau: float = 0.005
    k_heads: int = 10
    beta: float = 0.0
    target_entropy: float | None = None  # defaults to -dim(A)
    batch_size: int = 256
    total_steps: int = 50_000
    policy_delay: int = 2
    seed: int = 0
    lr: float = 3e-4
    critic_hidden: tuple = (256, 256, 256)
    policy_hidden: tuple = (256, 256, 256)
    log_interval: int = 1000
    eval_interval: int = 1000   # steps between env evaluations (one epoch)
    eval_episodes: int = 10
    adaptive_alpha: bool = True
    entropy_term: bool = True   # False pins alpha at exactly 0
    init_alpha: float = 0.2
    # Cap on the adaptive temperature. A strong likelihood term keeps the
    # policy near-deterministic, so mean log pi sits permanently above the
    # entropy target and the temperature would otherwise grow without bound
    # and eventually swamp both the targets and the policy gradient.
    alpha_max: float = 1.0
    divergence_guard: bool = True
    q_abort: float = 1e8
    bootstrap_subbatch: bool = False  # per-head sub-batches instead of repeats

    def validate(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if self.k_heads < 1:
            raise ValueError("k_heads must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        if self.batch_size < 1 or self.total_steps < 0:
            raise ValueError("invalid batch_size / total_steps")
        if self.alpha_max <= 0:
            raise ValueError("alpha_max must be > 0")


@dataclass
class TrainState:
    critic: ron.MimoQNetwork
    target_critic: ron.MimoQNetwork
    policy: pol.GaussianPolicy
    log_alpha: np.ndarray
    critic_adam: AdamState
    policy_adam: AdamState
    alpha_adam: AdamState
    step: int = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))


def init_train_state(config: TrainerConfig, dim_s: int, dim_a: int,
                     rng: RngStream) -> TrainState:
    critic_dims = [dim_s + dim_a, *config.critic_hidden, 1]
    critic = ron.init_network(critic_dims, config.k_heads, rng)
    target = critic.copy()
    actor = pol.init_policy(dim_s, dim_a, config.policy_hidden, rng)
    log_alpha = np.array([np.log(config.init_alpha)])
    return TrainState(
        critic=critic, target_critic=target, policy=actor, log_alpha=log_alpha,
        critic_adam=AdamState.for_params(critic.get_flat_params(), lr=config.lr),
        policy_adam=AdamState.for_params(actor.get_flat_params(), lr=config.lr),
        alpha_adam=AdamState.for_params(log_alpha, lr=config.lr))


def _tile_members(x: np.ndarray, k: int) -> np.ndarray:
    # Same minibatch for every member: (B, d) -> (B*K, d) in member blocks.
    return np.tile(x, (k, 1))


def _member_view(q: np.ndarray, k: int) -> np.ndarray:
    # (B*K, 1) member-blocked column -> (K, B)
    return q.reshape(k, -1)


def compute_bellman_target(batch, target_critic: ron.MimoQNetwork,
                           actor: pol.GaussianPolicy, alpha: float,
                           gamma: float, rng: RngStream) -> np.ndarray:
    """Per-transition regression target; no gradient flows back from it."""
    _, _, r, sp, done = batch
    a2, lp2 = pol.sample_action(actor, sp, rng)
    x = _tile_members(np.concatenate([sp, a2], axis=1), target_critic.k)
    q, _ = ron.forward_vectorized(target_critic, x, need_cache=False)
    q_min = _member_view(q, target_critic.k).min(axis=0)
    y = r + gamma * (1.0 - done) * (q_min - alpha * lp2)
    if not np.all(np.isfinite(y)):
        raise DivergenceError(
            f"non-finite Bellman target (min head {np.nanmin(q_min)}, "
            f"max {np.nanmax(q_min)})")
    return y


def critic_update(critic: ron.MimoQNetwork, batch, targets: np.ndarray,
                  adam: AdamState):
    """MSE of every head against the shared target; one Adam step.

    Returns (loss, per-head Q matrix of shape (K, B) before the update).
    """
    s, a, _, _, _ = batch
    x = _tile_members(np.concatenate([s, a], axis=1), critic.k)
    q, cache = ron.forward_vectorized(critic, x)
    diff = q - np.tile(targets, critic.k)[:, None]
    loss = float(np.mean(diff**2))
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite critic loss {loss}")
    grads = ron.backward(critic, cache, 2.0 * diff / diff.size)
    critic.set_flat_params(adam_step(critic.get_flat_params(), grads.flat(), adam))
    return loss, _member_view(q, critic.k)


def policy_update(actor: pol.GaussianPolicy, critic: ron.MimoQNetwork, batch,
                  alpha: float, beta: float, adam: AdamState, rng: RngStream):
    """Maximize min-head Q + entropy + dataset likelihood; one Adam step.

    The Q gradient reaches the policy only through each sample's argmin head;
    critic parameters are left untouched. Returns (loss, fresh log pi values).
    """
    s, a_data, _, _, _ = batch
    bsz = s.shape[0]
    noise = rng.standard_normal((bsz, actor.action_dim))
    a_new, lp_new, extras = pol.sample_action_with_noise(actor, s, noise)

    x = _tile_members(np.concatenate([s, a_new], axis=1), critic.k)
    q, cache = ron.forward_vectorized(critic, x)
    q_heads = _member_view(q, critic.k)
    k_min = q_heads.argmin(axis=0)
    q_min = q_heads[k_min, np.arange(bsz)]

    # d(-mean q_min)/d critic-input, only through the argmin head rows
    upstream = np.zeros_like(q)
    upstream[k_min * bsz + np.arange(bsz), 0] = -1.0 / bsz
    d_input = ron.backward(critic, cache, upstream).d_input
    g_action = d_input[k_min * bsz + np.arange(bsz), s.shape[1]:]

    da_mean, da_lstd = pol.sampled_action_head_grads(extras)
    dlp_mean, dlp_lstd = pol.sampled_logprob_head_grads(extras)
    d_mean = g_action * da_mean + (alpha / bsz) * dlp_mean
    d_lstd = g_action * da_lstd + (alpha / bsz) * dlp_lstd
    grad_flat = pol._backward_heads(actor, extras["cache"], d_mean, d_lstd)

    lp_data = np.zeros(bsz)
    if beta != 0.0:
        lp_data, data_extras = pol._log_prob_with_cache(actor, s, a_data)
        db_mean, db_lstd = pol.data_logprob_head_grads(data_extras)
        grad_flat += pol._backward_heads(
            actor, data_extras["cache"],
            (-beta / bsz) * db_mean, (-beta / bsz) * db_lstd)

    loss = float(np.mean(-q_min + alpha * lp_new - beta * lp_data))
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite policy loss {loss}")
    actor.set_flat_params(adam_step(actor.get_flat_params(), grad_flat, adam))
    return loss, lp_new


def alpha_update(log_alpha: np.ndarray, log_probs: np.ndarray,
                 target_entropy: float, adam: AdamState) -> np.ndarray:
    """SAC-style temperature step on J(alpha) = -alpha * mean(log pi + H*)."""
    grad = np.array([-np.exp(log_alpha[0]) * float(np.mean(log_probs) + target_entropy)])
    return adam_step(log_alpha, grad, adam)


def soft_update(target: ron.MimoQNetwork, online: ron.MimoQNetwork,
                tau: float) -> None:
    """target <- (1 - tau) * target + tau * online, elementwise in place."""
    for tl, ol in zip(target.layers, online.layers):
        for name in ("weight", "fast_in", "fast_out", "bias"):
            t_arr = getattr(tl, name)
            t_arr *= 1.0 - tau
            t_arr += tau * getattr(ol, name)


def evaluate(actor: pol.GaussianPolicy, env: envs_data.EnvSpec, episodes: int,
             rng: RngStream) -> dict:
    """Deterministic-action rollouts; raw mean return and normalized score."""
    returns = [
        envs_data.rollout_return(
            env, lambda s: pol.deterministic_action(actor, s), rng)
        for _ in range(episodes)
    ]
    raw = float(np.mean(returns))
    return {"raw_return": raw,
            "normalized_score": envs_data.normalized_score(env, raw)}


def _q_metrics(q_heads: np.ndarray):
    # q_heads: (K, B); mean Q, batch-mean of per-sample min and population std
    q_mean = float(q_heads.mean())
    q_min = float(q_heads.min(axis=0).mean())
    q_std = float(q_heads.std(axis=0).mean())
    return q_mean, q_min, q_std


def train(config: TrainerConfig, dataset: envs_data.OfflineDataset,
          eval_env: envs_data.EnvSpec | None = None,
          on_metrics=None):
    """Full training run; returns (TrainState, list of metric rows).

    Fully deterministic given config.seed. Metric rows follow
    METRICS_HEADER; eval_score is NaN when no eval env is given.
    """
    config.validate()
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    s_all, a_all, r_all, sp_all, d_all = dataset.arrays()
    dim_s, dim_a = s_all.shape[1], a_all.shape[1]
    target_entropy = (-float(dim_a) if config.target_entropy is None
                      else config.target_entropy)

    rng = RngStream(config.seed)
    eval_rng = rng.spawn()
    state = init_train_state(config, dim_s, dim_a, rng)

    metrics: list[dict] = []
    last_critic_loss = last_policy_loss = float("nan")
    last_q = (float("nan"),) * 3
    last_bc = float("nan")
    n = len(dataset)
    k = config.k_heads

    for step in range(config.total_steps):
        if config.bootstrap_subbatch:
            # member j regresses its own sub-batch idx[j*B:(j+1)*B]
            idx = rng.integers(0, n, config.batch_size * k)
        else:
            idx = rng.integers(0, n, config.batch_size)
        batch = (s_all[idx], a_all[idx], r_all[idx], sp_all[idx], d_all[idx])
        alpha = state.alpha if config.entropy_term else 0.0

        targets = compute_bellman_target(
            batch, state.target_critic, state.policy, alpha,
            config.gamma, rng)
        if config.bootstrap_subbatch:
            last_critic_loss, q_heads = _critic_update_blocked(
                state.critic, batch, targets, state.critic_adam, k)
        else:
            last_critic_loss, q_heads = critic_update(
                state.critic, batch, targets, state.critic_adam)
        last_q = _q_metrics(q_heads)

        if (step + 1) % config.policy_delay == 0:
            b = config.batch_size
            pb = tuple(part[:b] for part in batch)
            last_policy_loss, lp_new = policy_update(
                state.policy, state.critic, pb, alpha, config.beta,
                state.policy_adam, rng)
            if config.adaptive_alpha and config.entropy_term:
                state.log_alpha = alpha_update(
                    state.log_alpha, lp_new, target_entropy, state.alpha_adam)
                state.log_alpha[0] = min(state.log_alpha[0],
                                         np.log(config.alpha_max))

        soft_update(state.target_critic, state.critic, config.tau)
        state.step = step + 1

        if config.divergence_guard and np.abs(last_q[0]) > config.q_abort:
            raise DivergenceError(
                f"step {state.step}: |mean Q| = {abs(last_q[0]):.3g} exceeds "
                f"abort threshold {config.q_abort:.3g}")

        if (step + 1) % config.log_interval == 0 or step + 1 == config.total_steps:
            eval_score = float("nan")
            if eval_env is not None and (step + 1) % config.eval_interval == 0:
                eval_score = evaluate(state.policy, eval_env,
                                      config.eval_episodes,
                                      eval_rng)["normalized_score"]
            last_bc = float(np.mean(pol.log_prob(
                state.policy, batch[0][:config.batch_size],
                batch[1][:config.batch_size])))
            row = {"step": state.step, "critic_loss": last_critic_loss,
                   "policy_loss": last_policy_loss, "alpha": state.alpha,
                   "q_mean": last_q[0], "q_min": last_q[1], "q_std": last_q[2],
                   "bc_loglik": last_bc, "eval_score": eval_score}
            metrics.append(row)
            if on_metrics is not None:
                on_metrics(row)

    return state, metrics


def _critic_update_blocked(critic: ron.MimoQNetwork, batch,
                           targets: np.ndarray, adam: AdamState, k: int):
    """Critic step where the B*K rows are already member-blocked sub-batches."""
    s, a, _, _, _ = batch
    x = np.concatenate([s, a], axis=1)
    q, cache = ron.forward_vectorized(critic, x)
    diff = q - targets[:, None]
    loss = float(np.mean(diff**2))
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite critic loss {loss}")
    grads = ron.backward(critic, cache, 2.0 * diff / diff.size)
    critic.set_flat_params(adam_step(critic.get_flat_params(), grads.flat(), adam))
    return loss, _member_view(q, k)


def write_metrics_csv(path, metrics: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_HEADER)
        writer.writeheader()
        for row in metrics:
            writer.writerow(row)


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]
