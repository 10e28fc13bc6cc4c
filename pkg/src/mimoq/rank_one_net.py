"""Rank-one MIMO Q network: a K-member ensemble in one set of matrices.

Each layer stores one shared weight W (m x n) plus, per member k, a pair of
fast-weight vectors v_k (length m) and s_k (length n) and a bias b_k. The
realized weight of member k is W * outer(v_k, s_k) elementwise, exactly.
The vectorized forward runs all members in one pass over a batch whose rows
are grouped in contiguous member blocks: member k owns rows [k*B, (k+1)*B).
"""

from __future__ import annotations

import numpy as np

from . import container
from .numerics import RngStream, ShapeError

CRITIC_MAGIC = b"R1MQ"

_ACTIVATIONS = ("relu", "identity")


class RankOneLayer:
    def __init__(self, weight: np.ndarray, fast_in: np.ndarray,
                 fast_out: np.ndarray, bias: np.ndarray, activation: str):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        m, n = weight.shape
        k = fast_in.shape[0]
        if fast_in.shape != (k, m) or fast_out.shape != (k, n) or bias.shape != (k, n):
            raise ShapeError("fast weights / bias do not match the shared weight")
        self.weight = weight        # (m, n)
        self.fast_in = fast_in      # (K, m), rows are v_k
        self.fast_out = fast_out    # (K, n), rows are s_k
        self.bias = bias            # (K, n), rows are b_k
        self.activation = activation

    @property
    def m(self) -> int:
        return self.weight.shape[0]

    @property
    def n(self) -> int:
        return self.weight.shape[1]

    @property
    def k(self) -> int:
        return self.fast_in.shape[0]


class MimoQNetwork:
    def __init__(self, layers: list[RankOneLayer]):
        if not layers:
            raise ValueError("network needs at least one layer")
        k = layers[0].k
        for a, b in zip(layers[:-1], layers[1:]):
            if a.n != b.m:
                raise ShapeError("consecutive layer dimensions do not chain")
            if b.k != k:
                raise ShapeError("all layers must share the same K")
        self.layers = layers
        self.k = k

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.layers[0].m,) + tuple(layer.n for layer in self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].m

    # -- flat parameter view (order: per layer W, v_1..v_K, s_1..s_K, b_1..b_K)

    def get_flat_params(self) -> np.ndarray:
        parts = []
        for lay in self.layers:
            parts += [lay.weight.ravel(), lay.fast_in.ravel(),
                      lay.fast_out.ravel(), lay.bias.ravel()]
        return np.concatenate(parts)

    def set_flat_params(self, flat: np.ndarray) -> None:
        i = 0
        for lay in self.layers:
            for arr in (lay.weight, lay.fast_in, lay.fast_out, lay.bias):
                arr[...] = flat[i:i + arr.size].reshape(arr.shape)
                i += arr.size
        if i != flat.size:
            raise ShapeError(f"flat vector has {flat.size} entries, expected {i}")

    def copy(self) -> "MimoQNetwork":
        return MimoQNetwork([
            RankOneLayer(l.weight.copy(), l.fast_in.copy(), l.fast_out.copy(),
                         l.bias.copy(), l.activation)
            for l in self.layers
        ])


class ForwardCache:
    """Per-layer activations saved by forward_vectorized for backward."""

    def __init__(self, net: MimoQNetwork, batch: int):
        self.net = net
        self.batch = batch
        self.layers: list[dict] = []


class GradBuffer:
    """Gradients shaped exactly like the network, plus input gradients."""

    def __init__(self, net: MimoQNetwork):
        self.layers = [
            {"weight": np.zeros_like(l.weight), "fast_in": np.zeros_like(l.fast_in),
             "fast_out": np.zeros_like(l.fast_out), "bias": np.zeros_like(l.bias)}
            for l in net.layers
        ]
        self.d_input: np.ndarray | None = None

    def flat(self) -> np.ndarray:
        parts = []
        for g in self.layers:
            parts += [g["weight"].ravel(), g["fast_in"].ravel(),
                      g["fast_out"].ravel(), g["bias"].ravel()]
        return np.concatenate(parts)


def init_network(layer_dims, k: int, rng: RngStream) -> MimoQNetwork:
    """Fresh network: W ~ U(-1/sqrt(m), 1/sqrt(m)), sign fast weights, zero bias.

    Hidden layers use relu; the final layer (output dim 1) is linear.
    """
    dims = list(layer_dims)
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"invalid layer dims {dims}")
    if dims[-1] != 1:
        raise ValueError(f"layer dims must end in 1, got {dims}")
    layers = []
    for i, (m, n) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / np.sqrt(m)
        weight = rng.uniform(-bound, bound, (m, n))
        fast_in = rng.random_sign((k, m))
        fast_out = rng.random_sign((k, n))
        bias = np.zeros((k, n))
        act = "identity" if i == len(dims) - 2 else "relu"
        layers.append(RankOneLayer(weight, fast_in, fast_out, bias, act))
    return MimoQNetwork(layers)


def realize_member_weight(layer: RankOneLayer, k: int) -> np.ndarray:
    """Member k's dense weight: W * outer(v_k, s_k)."""
    if not 0 <= k < layer.k:
        raise IndexError(f"member index {k} out of range for K={layer.k}")
    return layer.weight * np.outer(layer.fast_in[k], layer.fast_out[k])


def forward_vectorized(net: MimoQNetwork, inputs: np.ndarray,
                       need_cache: bool = True):
    """Single-pass forward for all members; returns (outputs, cache).

    `inputs` has B*K rows; rows [k*B, (k+1)*B) belong to member k. Row r of
    the output is exactly that member's dense forward on input row r. The
    per-member fast weights are applied by broadcasting over a (K, B, d)
    view, never materialized at batch width.

    With need_cache=False the cache is None and the per-layer intermediates
    are released as the pass goes, which lets the allocator recycle the big
    buffers; inference-only callers are noticeably faster that way.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != net.input_dim:
        raise ShapeError(
            f"expected (rows, {net.input_dim}) inputs, got {inputs.shape}")
    rows = inputs.shape[0]
    if rows % net.k != 0:
        raise ShapeError(f"{rows} rows not divisible by K={net.k}")
    batch = rows // net.k
    k = net.k
    cache = ForwardCache(net, batch) if need_cache else None
    x = inputs
    for i, lay in enumerate(net.layers):
        x3 = x.reshape(k, batch, lay.m)
        if cache is None and i > 0:
            # x is this pass's own buffer; scale it in place
            np.multiply(x3, lay.fast_in[:, None, :], out=x3)
            xv = x
        else:
            xv = (x3 * lay.fast_in[:, None, :]).reshape(rows, lay.m)
        pre_s = xv @ lay.weight
        # explicit out= keeps this to one allocation; the naive chained
        # expression costs an extra full-size temporary per layer
        pre_act3 = pre_s.reshape(k, batch, lay.n) * lay.fast_out[:, None, :]
        np.add(pre_act3, lay.bias[:, None, :], out=pre_act3)
        pre_act = pre_act3.reshape(rows, lay.n)
        if lay.activation == "relu":
            if cache is None:
                y = np.maximum(pre_act, 0.0, out=pre_act)
            else:
                y = np.maximum(pre_act, 0.0)
        else:
            y = pre_act
        if cache is not None:
            cache.layers.append(
                {"x": x, "xv": xv, "pre_s": pre_s, "pre_act": pre_act})
        x = y
    return x, cache


def naive_member_forward(net: MimoQNetwork, x: np.ndarray, k: int) -> float:
    """Ground-truth member forward via materialized dense weights.

    Used in tests and the benchmark as the independent oracle for the
    vectorized path.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != net.input_dim:
        raise ShapeError(f"input has {x.size} entries, expected {net.input_dim}")
    if not 0 <= k < net.k:
        raise IndexError(f"member index {k} out of range for K={net.k}")
    h = x
    for lay in net.layers:
        h = h @ realize_member_weight(lay, k) + lay.bias[k]
        if lay.activation == "relu":
            h = np.maximum(h, 0.0)
    return float(h[0])


def backward(net: MimoQNetwork, cache: ForwardCache,
             upstream: np.ndarray) -> GradBuffer:
    """Exact gradients of sum(upstream * output) for every parameter.

    Also fills GradBuffer.d_input with the gradient w.r.t. the input rows
    (needed to route policy gradients through the critic's action input).
    """
    if cache.net is not net:
        raise ValueError("cache does not belong to this network")
    if len(cache.layers) != len(net.layers):
        raise ValueError("stale cache: layer count mismatch")
    upstream = np.asarray(upstream, dtype=float)
    rows = cache.batch * net.k
    if upstream.shape != (rows, net.layers[-1].n):
        raise ShapeError(
            f"upstream shape {upstream.shape} != ({rows}, {net.layers[-1].n})")
    grads = GradBuffer(net)
    batch = cache.batch
    k = net.k
    d_out = upstream
    for lay, c, g in zip(reversed(net.layers), reversed(cache.layers),
                         reversed(grads.layers)):
        if lay.activation == "relu":
            d_pre = d_out * (c["pre_act"] > 0.0)
        else:
            d_pre = d_out
        d_pre3 = d_pre.reshape(k, batch, lay.n)
        g["bias"][...] = d_pre3.sum(axis=1)
        g["fast_out"][...] = (d_pre3 * c["pre_s"].reshape(k, batch, lay.n)).sum(axis=1)
        d_pre_s = (d_pre3 * lay.fast_out[:, None, :]).reshape(-1, lay.n)
        g["weight"][...] = c["xv"].T @ d_pre_s
        d_xv = d_pre_s @ lay.weight.T
        d_xv3 = d_xv.reshape(k, batch, lay.m)
        g["fast_in"][...] = (d_xv3 * c["x"].reshape(k, batch, lay.m)).sum(axis=1)
        d_out = (d_xv3 * lay.fast_in[:, None, :]).reshape(-1, lay.m)
    grads.d_input = d_out
    return grads


def param_count(net: MimoQNetwork) -> dict:
    """Parameter totals for the MIMO net vs naive and single dense nets."""
    k = net.k
    mimo = naive = single = 0
    for lay in net.layers:
        m, n = lay.m, lay.n
        mimo += m * n + k * (m + n) + k * n
        naive += k * (m * n + n)
        single += m * n + n
    return {"mimo_params": mimo, "naive_equivalent_params": naive,
            "single_net_params": single}


def save_network(net: MimoQNetwork, path) -> None:
    container.save_container(path, CRITIC_MAGIC, net.layer_dims, net.k,
                             net.get_flat_params())


def load_network(path) -> MimoQNetwork:
    dims, k, flat = container.load_container(path, CRITIC_MAGIC)
    net = init_network(dims, k, RngStream(0))
    expected = net.get_flat_params().size
    if flat.size != expected:
        raise container.ContainerError(
            f"{path}: {flat.size} parameters, expected {expected} for dims "
            f"{dims} K={k}")
    net.set_flat_params(flat)
    return net
