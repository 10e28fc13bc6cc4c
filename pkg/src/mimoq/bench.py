"""Wall-time and parameter-count comparison: MIMO net vs naive K ensemble.

The naive baseline materializes each member's dense weights (the exact same
realized function) as K separate plain MLPs and runs them one after another.
Timing uses the median over repeats after warmup, on equal effective batch:
the MIMO net sees B*K rows in one pass, the naive ensemble K passes of B.
"""

from __future__ import annotations

import csv
import time

import numpy as np

from . import rank_one_net as ron
from .numerics import RngStream

BENCH_HEADER = ("K", "mimo_params_rel_single", "naive_params_rel_single",
                "mimo_time_rel_single", "naive_time_rel_single",
                "mimo_time_rel_naive")


def materialize_naive_ensemble(net: ron.MimoQNetwork):
    """K dense nets [(W_k per layer, b_k per layer)] realized from the MIMO net."""
    members = []
    for k in range(net.k):
        members.append([
            (ron.realize_member_weight(lay, k), lay.bias[k], lay.activation)
            for lay in net.layers
        ])
    return members


def naive_forward(member, x: np.ndarray) -> np.ndarray:
    h = x
    for w, b, act in member:
        h = h @ w + b
        if act == "relu":
            h = np.maximum(h, 0.0)
    return h


def median_time(fn, repeats: int, warmup: int = 5) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def median_times_interleaved(fns, repeats: int, warmup: int = 5) -> list[float]:
    """Per-function median over interleaved runs.

    Round-robin ordering means slow background noise hits every candidate
    roughly equally, which makes the time *ratios* far more stable than
    timing each candidate in its own block.
    """
    for fn in fns:
        for _ in range(warmup):
            fn()
    times = [[] for _ in fns]
    for _ in range(repeats):
        for i, fn in enumerate(fns):
            t0 = time.perf_counter()
            fn()
            times[i].append(time.perf_counter() - t0)
    return [float(np.median(ts)) for ts in times]


def run_bench(k_list, layer_dims, batch: int = 256, repeats: int = 31,
              seed: int = 0) -> list[dict]:
    """One row per K with parameter and median-forward-time ratios."""
    rows = []
    for k in k_list:
        rng = RngStream(seed)
        net = ron.init_network(layer_dims, k, rng)
        members = materialize_naive_ensemble(net)
        single = members[0]
        counts = ron.param_count(net)

        x_single = rng.standard_normal((batch, net.input_dim))
        x_mimo = np.tile(x_single, (k, 1))

        t_mimo, t_naive, t_single = median_times_interleaved(
            (lambda: ron.forward_vectorized(net, x_mimo, need_cache=False),
             lambda: [naive_forward(m, x_single) for m in members],
             lambda: naive_forward(single, x_single)),
            repeats)

        rows.append({
            "K": k,
            "mimo_params_rel_single":
                counts["mimo_params"] / counts["single_net_params"],
            "naive_params_rel_single":
                counts["naive_equivalent_params"] / counts["single_net_params"],
            "mimo_time_rel_single": t_mimo / t_single,
            "naive_time_rel_single": t_naive / t_single,
            "mimo_time_rel_naive": t_mimo / t_naive,
        })
    return rows


def write_bench_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
