"""Ablation sweeps: ensemble-size (K) pessimism and component on/off grid."""

from __future__ import annotations

import csv
from dataclasses import replace

import numpy as np

from . import envs_data, offline_rl, policy as pol, rank_one_net as ron
from .numerics import RngStream

K_SWEEP_HEADER = ("K", "avg_return", "avg_q")
COMPONENTS_HEADER = ("entropy", "likelihood", "avg_return", "avg_q")


def avg_min_head_q(state: offline_rl.TrainState,
                   dataset: envs_data.OfflineDataset,
                   n_states: int = 1000, seed: int = 0) -> float:
    """Mean over dataset states of the min-head Q at the policy's action."""
    rng = RngStream(seed)
    s_all = dataset.arrays()[0]
    idx = rng.integers(0, s_all.shape[0], min(n_states, s_all.shape[0]))
    s = s_all[idx]
    a = pol.deterministic_action(state.policy, s)
    x = np.tile(np.concatenate([s, a], axis=1), (state.critic.k, 1))
    q, _ = ron.forward_vectorized(state.critic, x, need_cache=False)
    return float(q.reshape(state.critic.k, -1).min(axis=0).mean())


def _run_cell(config: offline_rl.TrainerConfig,
              dataset: envs_data.OfflineDataset,
              env: envs_data.EnvSpec):
    state, _ = offline_rl.train(config, dataset)
    rng = RngStream(config.seed + 1)
    score = offline_rl.evaluate(state.policy, env, config.eval_episodes,
                                rng)["normalized_score"]
    return score, avg_min_head_q(state, dataset, seed=config.seed)


def run_k_sweep(base_config: offline_rl.TrainerConfig,
                dataset: envs_data.OfflineDataset,
                ks=(2, 5, 10, 15, 20), seeds=(0, 1, 2)) -> list[dict]:
    """Final score and min-head Q per K, averaged over seeds.

    The divergence guard is off here on purpose: extreme K values are
    allowed to blow up and have their Q magnitudes logged.
    """
    env = envs_data.get_env(dataset.env_id)
    rows = []
    for k in ks:
        scores, qs = [], []
        for seed in seeds:
            cfg = replace(base_config, k_heads=k, seed=seed,
                          divergence_guard=False)
            score, q = _run_cell(cfg, dataset, env)
            scores.append(score)
            qs.append(q)
        rows.append({"K": k, "avg_return": float(np.mean(scores)),
                     "avg_q": float(np.mean(qs))})
    return rows


def run_components(base_config: offline_rl.TrainerConfig,
                   dataset: envs_data.OfflineDataset) -> list[dict]:
    """2x2 grid {entropy on/off} x {likelihood on/off}.

    Entropy off pins alpha at 0; likelihood off sets beta to 0.
    """
    env = envs_data.get_env(dataset.env_id)
    beta_on = base_config.beta if base_config.beta > 0 else 1.0
    rows = []
    for entropy in (True, False):
        for likelihood in (True, False):
            cfg = replace(
                base_config,
                entropy_term=entropy,
                beta=beta_on if likelihood else 0.0)
            score, q = _run_cell(cfg, dataset, env)
            rows.append({"entropy": int(entropy), "likelihood": int(likelihood),
                         "avg_return": float(score), "avg_q": float(q)})
    return rows


def write_rows_csv(path, rows: list[dict], header) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
