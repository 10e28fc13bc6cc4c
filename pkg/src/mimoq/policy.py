"""Tanh-squashed diagonal-Gaussian actor with exact log-densities.

The trunk is a plain relu MLP (the rank-one structure applies to the critic
only). Mean and log-std heads sit on the trunk output; log-std is hard
clamped to [-5, 2]. Actions are tanh(u) for u ~ N(mean, diag(std^2)), so
every emitted action lies strictly inside (-1, 1).
"""

from __future__ import annotations

import math

import numpy as np

from . import container
from .numerics import RngStream, ShapeError

POLICY_MAGIC = b"R1PI"

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6   # inside the log-Jacobian term
ATANH_EPS = 1e-6    # dataset actions are shrunk to |a| <= 1 - ATANH_EPS

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class GaussianPolicy:
    def __init__(self, trunk: list[tuple[np.ndarray, np.ndarray]],
                 mean_head: tuple[np.ndarray, np.ndarray],
                 log_std_head: tuple[np.ndarray, np.ndarray]):
        self.trunk = trunk              # [(W, b)] with relu between layers
        self.mean_head = mean_head      # (W, b)
        self.log_std_head = log_std_head

    @property
    def state_dim(self) -> int:
        return self.trunk[0][0].shape[0]

    @property
    def action_dim(self) -> int:
        return self.mean_head[0].shape[1]

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.state_dim,) + tuple(w.shape[1] for w, _ in self.trunk) \
            + (self.action_dim,)

    def _param_arrays(self):
        for w, b in self.trunk:
            yield w
            yield b
        for w, b in (self.mean_head, self.log_std_head):
            yield w
            yield b

    def get_flat_params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._param_arrays()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        i = 0
        for arr in self._param_arrays():
            arr[...] = flat[i:i + arr.size].reshape(arr.shape)
            i += arr.size
        if i != flat.size:
            raise ShapeError(f"flat vector has {flat.size} entries, expected {i}")

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(
            [(w.copy(), b.copy()) for w, b in self.trunk],
            (self.mean_head[0].copy(), self.mean_head[1].copy()),
            (self.log_std_head[0].copy(), self.log_std_head[1].copy()))


def init_policy(state_dim: int, action_dim: int, hidden, rng: RngStream) -> GaussianPolicy:
    if state_dim < 1 or action_dim < 1 or not hidden:
        raise ValueError("invalid policy dimensions")

    def dense(m, n):
        bound = 1.0 / np.sqrt(m)
        return rng.uniform(-bound, bound, (m, n)), rng.uniform(-bound, bound, n)

    dims = [state_dim] + list(hidden)
    trunk = [dense(m, n) for m, n in zip(dims[:-1], dims[1:])]
    mean_head = dense(dims[-1], action_dim)
    log_std_head = dense(dims[-1], action_dim)
    return GaussianPolicy(trunk, mean_head, log_std_head)


def _forward_heads(policy: GaussianPolicy, states: np.ndarray):
    """Trunk + heads forward; returns (mean, log_std, cache)."""
    x = states
    trunk_cache = []
    for w, b in policy.trunk:
        z = x @ w + b
        h = np.maximum(z, 0.0)
        trunk_cache.append({"x": x, "z": z})
        x = h
    mean = x @ policy.mean_head[0] + policy.mean_head[1]
    log_std_raw = x @ policy.log_std_head[0] + policy.log_std_head[1]
    log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
    cache = {"trunk": trunk_cache, "h": x,
             "clamp_mask": (log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX)}
    return mean, log_std, cache


def _backward_heads(policy: GaussianPolicy, cache, d_mean: np.ndarray,
                    d_log_std: np.ndarray) -> np.ndarray:
    """Flat parameter gradient from gradients on the two head outputs."""
    d_log_std = d_log_std * cache["clamp_mask"]
    h = cache["h"]
    grads = {}
    grads[id(policy.mean_head[0])] = h.T @ d_mean
    grads[id(policy.mean_head[1])] = d_mean.sum(axis=0)
    grads[id(policy.log_std_head[0])] = h.T @ d_log_std
    grads[id(policy.log_std_head[1])] = d_log_std.sum(axis=0)
    d_h = d_mean @ policy.mean_head[0].T + d_log_std @ policy.log_std_head[0].T
    for (w, b), c in zip(reversed(policy.trunk), reversed(cache["trunk"])):
        d_z = d_h * (c["z"] > 0.0)
        grads[id(w)] = c["x"].T @ d_z
        grads[id(b)] = d_z.sum(axis=0)
        d_h = d_z @ w.T
    return np.concatenate([grads[id(a)].ravel() for a in policy._param_arrays()])


def _as_batch(states: np.ndarray, dim: int):
    states = np.asarray(states, dtype=float)
    squeeze = states.ndim == 1
    if squeeze:
        states = states[None, :]
    if states.shape[1] != dim:
        raise ShapeError(f"state dim {states.shape[1]} != {dim}")
    return states, squeeze


def sample_action_with_noise(policy: GaussianPolicy, states: np.ndarray,
                             noise: np.ndarray):
    """Reparameterized sample with caller-supplied standard-normal noise.

    Returns (action, log_prob, extras); extras carry everything needed to
    differentiate through the sample.
    """
    mean, log_std, cache = _forward_heads(policy, states)
    std = np.exp(log_std)
    u = mean + std * noise
    action = np.tanh(u)
    log_prob = (-0.5 * noise**2 - log_std - _HALF_LOG_2PI).sum(axis=1) \
        - np.log(1.0 - action**2 + SQUASH_EPS).sum(axis=1)
    extras = {"mean": mean, "log_std": log_std, "std": std, "u": u,
              "noise": noise, "action": action, "cache": cache}
    return action, log_prob, extras


def sample_action(policy: GaussianPolicy, states: np.ndarray, rng: RngStream):
    """Draw action ~ tanh(N(mean, std^2)) and its exact log-density."""
    states, squeeze = _as_batch(states, policy.state_dim)
    noise = rng.standard_normal((states.shape[0], policy.action_dim))
    action, log_prob, _ = sample_action_with_noise(policy, states, noise)
    if squeeze:
        return action[0], float(log_prob[0])
    return action, log_prob


def log_prob(policy: GaussianPolicy, states: np.ndarray, actions: np.ndarray):
    """Exact log-density of given actions under the squashed Gaussian."""
    states, squeeze = _as_batch(states, policy.state_dim)
    actions = np.asarray(actions, dtype=float)
    if squeeze:
        actions = actions[None, :]
    if np.any(np.abs(actions) > 1.0):
        raise ValueError("actions must lie in [-1, 1]")
    lp, _ = _log_prob_with_cache(policy, states, actions)
    return float(lp[0]) if squeeze else lp


def _log_prob_with_cache(policy: GaussianPolicy, states: np.ndarray,
                         actions: np.ndarray):
    a = np.clip(actions, -1.0 + ATANH_EPS, 1.0 - ATANH_EPS)
    u = np.arctanh(a)
    mean, log_std, cache = _forward_heads(policy, states)
    std = np.exp(log_std)
    z = (u - mean) / std
    lp = (-0.5 * z**2 - log_std - _HALF_LOG_2PI).sum(axis=1) \
        - np.log(1.0 - a**2 + SQUASH_EPS).sum(axis=1)
    extras = {"mean": mean, "log_std": log_std, "std": std, "z": z, "cache": cache}
    return lp, extras


def deterministic_action(policy: GaussianPolicy, states: np.ndarray) -> np.ndarray:
    """Evaluation-mode action tanh(mean)."""
    states, squeeze = _as_batch(states, policy.state_dim)
    mean, _, _ = _forward_heads(policy, states)
    action = np.tanh(mean)
    return action[0] if squeeze else action


# -- analytic gradient pieces, consumed by the training losses --------------

def sampled_logprob_head_grads(extras):
    """d log_prob / d (mean, log_std) for a reparameterized sample.

    The Gaussian term contributes only -1 on log_std (z stays fixed at the
    injected noise); the squash Jacobian flows through u.
    """
    t = extras["action"]
    jfac = 2.0 * t * (1.0 - t**2) / (1.0 - t**2 + SQUASH_EPS)
    d_mean = jfac
    d_log_std = -1.0 + (extras["u"] - extras["mean"]) * jfac
    return d_mean, d_log_std


def sampled_action_head_grads(extras):
    """d action / d (mean, log_std) for a reparameterized sample."""
    t = extras["action"]
    dt = 1.0 - t**2
    return dt, dt * (extras["u"] - extras["mean"])


def data_logprob_head_grads(extras):
    """d log_prob / d (mean, log_std) for a fixed (dataset) action."""
    z = extras["z"]
    return z / extras["std"], z**2 - 1.0


def save_policy(policy: GaussianPolicy, path) -> None:
    container.save_container(path, POLICY_MAGIC, policy.layer_dims, 1,
                             policy.get_flat_params())


def load_policy(path) -> GaussianPolicy:
    dims, _, flat = container.load_container(path, POLICY_MAGIC)
    if len(dims) < 3:
        raise container.ContainerError(f"{path}: bad policy dims {dims}")
    pol = init_policy(dims[0], dims[-1], dims[1:-1], RngStream(0))
    expected = pol.get_flat_params().size
    if flat.size != expected:
        raise container.ContainerError(
            f"{path}: {flat.size} parameters, expected {expected} for dims {dims}")
    pol.set_flat_params(flat)
    return pol
