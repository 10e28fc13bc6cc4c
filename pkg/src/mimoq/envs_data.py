"""Toy continuous-control environments, tiered behavior data, JSONL datasets.

Two fully-specified environments stand in for the usual benchmark suites:

* Reach1D: state (x, g) in [-1, 1]^2, x' = clip(x + 0.05 a), r = -|x' - g|,
  horizon 100. The expert a* = clip((g - x) / 0.05) is provably optimal.
* PendulumSwing: point pendulum, obs (cos th, sin th, thdot), dynamics
  thddot = -(3 g / (2 l)) sin th + 3 u / (m l^2) with g=10, m=l=1, dt=0.05,
  torque u = 2 a, |thdot| <= 8; r = -(wrap(th)^2 + 0.1 thdot^2 + 0.001 u^2),
  horizon 200, reset near the unstable th = pi configuration.

Datasets are JSON-Lines: one metadata object, then one transition per line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream

TIERS = ("random", "medium", "medium_replay", "medium_expert", "expert")

_GRAV = 10.0
_PEND_DT = 0.05
_PEND_MAX_SPEED = 8.0
_PEND_TORQUE = 2.0


class EnvError(ValueError):
    """Unknown environment id, tier, or malformed dataset."""


@dataclass(frozen=True)
class EnvSpec:
    id: str
    dim_s: int
    dim_a: int
    horizon: int
    score_random: float
    score_expert: float


def _wrap_angle(th: float) -> float:
    return (th + math.pi) % (2.0 * math.pi) - math.pi


# Frozen normalization constants: 1000-episode averages of the scripted
# random and expert policies, estimated with estimate_reference_scores
# (generation seed 20240817, see scripts/freeze_reference_scores.py).
REFERENCE_SCORE_SEED = 20240817
REFERENCE_SCORES = {
    "reach1d-v0": (-67.29627449680984, -6.175496531452686),
    "pendulum-v0": (-1240.8244002929996, -151.03478160858282),
}


def reference_scores(env_id: str):
    """(score_random, score_expert) normalization constants for an env."""
    base = base_env_id(env_id)
    if base not in REFERENCE_SCORES:
        raise EnvError(f"no reference scores for environment {env_id!r}")
    return REFERENCE_SCORES[base]


def base_env_id(env_id: str) -> str:
    """Strip an optional tier suffix: 'reach1d-medium-v0' -> 'reach1d-v0'."""
    parts = env_id.split("-")
    if len(parts) >= 3 and parts[-1].startswith("v"):
        maybe_tier = "-".join(parts[1:-1]).replace("-", "_")
        if maybe_tier in TIERS:
            return f"{parts[0]}-{parts[-1]}"
    return env_id


def split_env_id(env_id: str):
    """Returns (base_env_id, tier or None)."""
    base = base_env_id(env_id)
    if base == env_id:
        return base, None
    tier = env_id[len(base.split("-")[0]) + 1:-len(base.split("-")[-1]) - 1]
    return base, tier.replace("-", "_")


def get_env(env_id: str) -> EnvSpec:
    base = base_env_id(env_id)
    try:
        scores = REFERENCE_SCORES[base]
    except KeyError:
        raise EnvError(f"unknown environment {env_id!r}") from None
    if base == "reach1d-v0":
        return EnvSpec(base, 2, 1, 100, scores[0], scores[1])
    return EnvSpec(base, 3, 1, 200, scores[0], scores[1])


def env_reset(env: EnvSpec, rng: RngStream) -> np.ndarray:
    if env.id == "reach1d-v0":
        return np.array([rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)])
    th = math.pi + rng.uniform(-0.1, 0.1)
    thdot = rng.uniform(-0.1, 0.1)
    return np.array([math.cos(th), math.sin(th), thdot])


def env_step(env: EnvSpec, state: np.ndarray, action: np.ndarray, t: int | None = None):
    """One dynamics step; done fires when t+1 reaches the horizon."""
    action = np.asarray(action, dtype=float).reshape(-1)
    if action.size != env.dim_a or np.any(np.abs(action) > 1.0 + 1e-12):
        raise EnvError(f"action {action} out of range for {env.id}")
    a = float(np.clip(action[0], -1.0, 1.0))
    if env.id == "reach1d-v0":
        x, g = float(state[0]), float(state[1])
        x2 = float(np.clip(x + 0.05 * a, -1.0, 1.0))
        s2 = np.array([x2, g])
        r = -abs(x2 - g)
    else:
        th = math.atan2(float(state[1]), float(state[0]))
        thdot = float(state[2])
        u = _PEND_TORQUE * a
        thddot = -(3.0 * _GRAV / 2.0) * math.sin(th) + 3.0 * u
        thdot2 = float(np.clip(thdot + thddot * _PEND_DT, -_PEND_MAX_SPEED,
                               _PEND_MAX_SPEED))
        th2 = th + thdot2 * _PEND_DT
        r = -(_wrap_angle(th)**2 + 0.1 * thdot**2 + 0.001 * u**2)
        s2 = np.array([math.cos(th2), math.sin(th2), thdot2])
    done = t is not None and t + 1 >= env.horizon
    return s2, r, done


def _reach_expert(state) -> float:
    x, g = float(state[0]), float(state[1])
    return float(np.clip((g - x) / 0.05, -1.0, 1.0))


def _pendulum_expert(state) -> float:
    # PD swing-down toward the th=0 well; gains picked by grid search on the
    # mean 60-episode return. Pure energy dissipation stalls at the unstable
    # th=pi reset configuration, so no energy-shaping term is used.
    th = math.atan2(float(state[1]), float(state[0]))
    u = -4.0 * _wrap_angle(th) - 4.0 * float(state[2])
    return float(np.clip(u / _PEND_TORQUE, -1.0, 1.0))


def _expert_action(env: EnvSpec, state) -> float:
    return _reach_expert(state) if env.id == "reach1d-v0" else _pendulum_expert(state)


def scripted_policy(env_id: str, tier: str, state, rng: RngStream) -> np.ndarray:
    """Behavior-policy action for the given data tier."""
    env = get_env(env_id)
    if tier == "random":
        a = rng.uniform(-1.0, 1.0)
    elif tier == "expert":
        a = _expert_action(env, state)
    elif tier == "medium":
        if rng.uniform(0.0, 1.0) < 0.3:
            a = rng.uniform(-1.0, 1.0)
        else:
            a = _expert_action(env, state) + 0.3 * rng.standard_normal(1)[0]
    else:
        raise EnvError(f"unknown tier {tier!r}")
    return np.array([float(np.clip(a, -1.0, 1.0))])


def _snapshot_action(env: EnvSpec, state, quality: float, rng: RngStream) -> np.ndarray:
    # A partially-trained behavior policy: expert blended with random noise.
    a = quality * _expert_action(env, state) \
        + (1.0 - quality) * rng.uniform(-1.0, 1.0) \
        + (0.3 * (1.0 - quality) + 0.05) * rng.standard_normal(1)[0]
    return np.array([float(np.clip(a, -1.0, 1.0))])


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    sp: np.ndarray
    done: bool


@dataclass
class OfflineDataset:
    env_id: str
    tier: str
    seed: int
    transitions: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.transitions)

    def arrays(self):
        """Stacked (S, A, R, SP, DONE) arrays for the training loop."""
        s = np.stack([t.s for t in self.transitions])
        a = np.stack([t.a for t in self.transitions])
        r = np.array([t.r for t in self.transitions])
        sp = np.stack([t.sp for t in self.transitions])
        d = np.array([float(t.done) for t in self.transitions])
        return s, a, r, sp, d


def _rollout_transitions(env: EnvSpec, action_fn, n: int, rng: RngStream) -> list:
    out = []
    while len(out) < n:
        s = env_reset(env, rng)
        for t in range(env.horizon):
            a = action_fn(s)
            sp, r, done = env_step(env, s, a, t)
            out.append(Transition(s=s, a=a, r=r, sp=sp, done=done))
            if len(out) >= n:
                break
            s = sp
            if done:
                break
    return out


def generate_dataset(env_id: str, tier: str, n_transitions: int,
                     seed: int) -> OfflineDataset:
    """Roll out the tier's behavior policy for exactly n transitions."""
    if n_transitions < 1:
        raise ValueError("n_transitions must be >= 1")
    if tier not in TIERS:
        raise EnvError(f"unknown tier {tier!r}")
    env = get_env(env_id)
    rng = RngStream(seed)
    if tier == "medium_expert":
        half = n_transitions // 2
        trans = _rollout_transitions(
            env, lambda s: scripted_policy(env_id, "medium", s, rng), half, rng)
        trans += _rollout_transitions(
            env, lambda s: scripted_policy(env_id, "expert", s, rng),
            n_transitions - half, rng)
    elif tier == "medium_replay":
        # Approximates a replay buffer logged over an improving policy:
        # equal slices from snapshots at 25/50/75/100% of expert quality.
        qualities = (0.25, 0.5, 0.75, 1.0)
        per = n_transitions // len(qualities)
        trans = []
        for i, q in enumerate(qualities):
            want = per if i < len(qualities) - 1 else n_transitions - len(trans)
            trans += _rollout_transitions(
                env, lambda s, q=q: _snapshot_action(env, s, q, rng), want, rng)
    else:
        trans = _rollout_transitions(
            env, lambda s: scripted_policy(env_id, tier, s, rng),
            n_transitions, rng)
    return OfflineDataset(env_id=base_env_id(env_id), tier=tier, seed=seed,
                          transitions=trans)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_vec(v) -> str:
    return "[" + ",".join(_fmt(x) for x in v) + "]"


def save_dataset(dataset: OfflineDataset, path) -> None:
    env = get_env(dataset.env_id)
    meta = {"env_id": dataset.env_id, "tier": dataset.tier, "seed": dataset.seed,
            "n": len(dataset), "dim_s": env.dim_s, "dim_a": env.dim_a,
            "score_random": env.score_random, "score_expert": env.score_expert}
    with open(path, "w") as fh:
        fh.write(json.dumps(meta) + "\n")
        for t in dataset.transitions:
            fh.write('{"s":%s,"a":%s,"r":%s,"sp":%s,"d":%s}\n' % (
                _fmt_vec(t.s), _fmt_vec(t.a), _fmt(t.r), _fmt_vec(t.sp),
                "true" if t.done else "false"))


def load_dataset(path) -> OfflineDataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise EnvError(f"{path}: empty file")
    try:
        meta = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise EnvError(f"{path}: malformed metadata on line 1: {exc}") from None
    for key in ("env_id", "tier", "seed", "n", "dim_s", "dim_a"):
        if key not in meta:
            raise EnvError(f"{path}: metadata missing {key!r}")
    transitions = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            t = Transition(s=np.array(obj["s"], dtype=float),
                           a=np.array(obj["a"], dtype=float),
                           r=float(obj["r"]),
                           sp=np.array(obj["sp"], dtype=float),
                           done=bool(obj["d"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise EnvError(
                f"{path}: malformed transition on line {lineno} "
                f"(last good line {lineno - 1}): {exc}") from None
        if t.s.size != meta["dim_s"] or t.sp.size != meta["dim_s"] \
                or t.a.size != meta["dim_a"]:
            raise EnvError(
                f"{path}: line {lineno}: transition dims do not match metadata")
        transitions.append(t)
    if not transitions:
        raise EnvError(f"{path}: dataset has no transitions")
    if len(transitions) != meta["n"]:
        raise EnvError(
            f"{path}: metadata says {meta['n']} transitions, found "
            f"{len(transitions)} (last good line {len(transitions) + 1})")
    return OfflineDataset(env_id=meta["env_id"], tier=meta["tier"],
                          seed=meta["seed"], transitions=transitions)


def validate_dataset(dataset: OfflineDataset) -> None:
    """Invariant check: dims, action bounds, finite rewards, episode bounds."""
    env = get_env(dataset.env_id)
    if not dataset.transitions:
        raise EnvError("dataset is empty")
    for i, t in enumerate(dataset.transitions):
        if t.s.size != env.dim_s or t.sp.size != env.dim_s or t.a.size != env.dim_a:
            raise EnvError(f"transition {i}: dimension mismatch")
        if np.any(np.abs(t.a) > 1.0):
            raise EnvError(f"transition {i}: action out of [-1, 1]")
        if not np.isfinite(t.r):
            raise EnvError(f"transition {i}: non-finite reward")
        if i > 0 and dataset.transitions[i - 1].done:
            # after a terminal the next transition must start a new episode,
            # i.e. must not continue from the terminal next-state
            if np.array_equal(t.s, dataset.transitions[i - 1].sp):
                raise EnvError(f"transition {i}: episode continues past done")


def rollout_return(env: EnvSpec, action_fn, rng: RngStream) -> float:
    s = env_reset(env, rng)
    total = 0.0
    for t in range(env.horizon):
        a = action_fn(s)
        s, r, done = env_step(env, s, a, t)
        total += r
        if done:
            break
    return total


def estimate_reference_scores(env_id: str, episodes: int = 1000,
                              seed: int = REFERENCE_SCORE_SEED):
    """Monte-Carlo (score_random, score_expert) estimate for an env.

    This is the procedure that produced the frozen REFERENCE_SCORES.
    """
    env = get_env(env_id)
    rng = RngStream(seed)
    rnd = np.mean([
        rollout_return(env, lambda s: scripted_policy(env.id, "random", s, rng), rng)
        for _ in range(episodes)])
    exp = np.mean([
        rollout_return(env, lambda s: scripted_policy(env.id, "expert", s, rng), rng)
        for _ in range(episodes)])
    return float(rnd), float(exp)


def normalized_score(env: EnvSpec, raw: float) -> float:
    """100 * (raw - random) / (expert - random)."""
    span = env.score_expert - env.score_random
    if span <= 0:
        raise EnvError(f"{env.id}: degenerate normalization constants")
    return 100.0 * (raw - env.score_random) / span
