"""Layer zoo: MLPs, the strided conv encoder, graph attention layers and Sinkhorn."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, ShapeError
from . import autodiff as ad
from .autodiff import Tensor
from .params import ParameterSet

# conv encoder: (in, out, stride) per layer, 3x3 kernels
ENCODER_LAYERS = ((5, 16, 2), (16, 16, 1), (16, 32, 2), (32, 32, 1), (32, 32, 2))
FEATURE_CHANNELS = 32
FUSION_HIDDEN = (64, 64)
PHI_HIDDEN = 32


# --------------------------------------------------------------------------- #
# initialisation


def _he(rng, fan_in, shape, gain=1.0):
    return rng.normal(0.0, gain * np.sqrt(2.0 / fan_in), size=shape)


def init_linear(ps: ParameterSet, name: str, n_in: int, n_out: int, rng, gain=1.0):
    ps.add(f"{name}.w", _he(rng, n_in, (n_in, n_out), gain))
    ps.add(f"{name}.b", np.zeros(n_out))


def init_mlp(ps: ParameterSet, name: str, sizes, rng, final_gain=1.0):
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = final_gain if i == len(sizes) - 2 else 1.0
        init_linear(ps, f"{name}.{i}", a, b, rng, gain)


def init_conv_stack(ps: ParameterSet, name: str, layers, rng):
    for i, (cin, cout, _) in enumerate(layers):
        ps.add(f"{name}.{i}.w", _he(rng, cin * 9, (cout, cin, 3, 3)))
        ps.add(f"{name}.{i}.b", np.zeros(cout))


def init_gat_self(ps: ParameterSet, name: str, h: int, rng, hk: int = 32):
    for m in ("k", "q", "u"):
        ps.add(f"{name}.W{m}", rng.normal(0.0, 1.0 / np.sqrt(h), size=(hk, h)))
    init_mlp(ps, f"{name}.rho", (h + hk,) + FUSION_HIDDEN + (h,), rng, final_gain=0.1)


def init_gat_cross(ps: ParameterSet, name: str, h: int, rng, hk: int = 32):
    init_gat_self(ps, name, h, rng, hk)
    init_mlp(ps, f"{name}.phi", (2 * hk + 1, PHI_HIDDEN, 1), rng)


# --------------------------------------------------------------------------- #
# forward


def linear(x, ps: ParameterSet, name: str) -> Tensor:
    return ad.matmul(x, ps[f"{name}.w"]) + ps[f"{name}.b"]


def mlp(x, ps: ParameterSet, name: str, n_layers: int, final_act=None) -> Tensor:
    """Dense layers with ReLU between them; ``x`` is (..., n_in) with ndim >= 2."""
    x = ad.as_tensor(x)
    for i in range(n_layers):
        x = linear(x, ps, f"{name}.{i}")
        if i < n_layers - 1:
            x = ad.relu(x)
    if final_act is not None:
        x = final_act(x)
    return x


def conv_stack(x, ps: ParameterSet, name: str, layers) -> Tensor:
    """Conv layers (3x3, pad 1) with ReLU between them.  ``x`` is (C,H,W) or (B,C,H,W)."""
    for i, (_, _, stride) in enumerate(layers):
        x = ad.conv2d(x, ps[f"{name}.{i}.w"], ps[f"{name}.{i}.b"], stride=stride, padding=1)
        if i < len(layers) - 1:
            x = ad.relu(x)
    return x


def conv_encoder(stack, ps: ParameterSet, name: str = "enc") -> Tensor:
    """Map a (5,X,Y) (or batched) stack to an (X/8, Y/8, 32) channel-last feature map."""
    stack = ad.as_tensor(stack)
    if stack.ndim not in (3, 4) or stack.shape[-3] != 5:
        raise ShapeError(f"encoder expects 5-channel stacks, got {stack.shape}")
    h, w = stack.shape[-2:]
    if h % 8 or w % 8:
        raise ShapeError(f"stack dims {h}x{w} not divisible by 8")
    out = conv_stack(stack, ps, name, ENCODER_LAYERS)
    axes = (1, 2, 0) if out.ndim == 3 else (0, 2, 3, 1)
    return ad.transpose(out, axes)


def gat_self_layer(nodes, adjacency, ps: ParameterSet, name: str, return_attention: bool = False):
    """Dot-product graph attention over each node's neighbourhood plus residual fusion.

    ``adjacency[i, j]`` marks j as a neighbour of i.  Keys, queries and values
    are linear maps of the node features; attention logits are ``k_j . q_i``
    softmaxed over the neighbourhood; the aggregate is fused back through
    ``V + rho([V || aggregate])``.
    """
    nodes = ad.as_tensor(nodes)
    adjacency = np.asarray(adjacency, dtype=bool)
    n = nodes.shape[0]
    if adjacency.shape != (n, n):
        raise ShapeError(f"adjacency {adjacency.shape} for {n} nodes")
    K = ad.matmul(nodes, ad.transpose(ps[f"{name}.Wk"]))
    Q = ad.matmul(nodes, ad.transpose(ps[f"{name}.Wq"]))
    U = ad.matmul(nodes, ad.transpose(ps[f"{name}.Wu"]))
    logits = ad.matmul(Q, ad.transpose(K))
    att = ad.softmax(logits, axis=1, mask=adjacency)
    agg = ad.matmul(att, U)
    out = nodes + mlp(ad.concat([nodes, agg], axis=1), ps, f"{name}.rho", len(FUSION_HIDDEN) + 1)
    return (out, att) if return_attention else out


def cross_logits(nodes_a, nodes_b, dists, ps: ParameterSet, name: str) -> Tensor:
    """phi([k_j || q_i || d_ij]) for every (i in A, j in B), as an (N_a, N_b) tensor."""
    nodes_a, nodes_b = ad.as_tensor(nodes_a), ad.as_tensor(nodes_b)
    dists = ad.as_tensor(dists)
    na, nb = nodes_a.shape[0], nodes_b.shape[0]
    if dists.shape != (na, nb):
        raise ShapeError(f"distance table {dists.shape} for {na}x{nb} nodes")
    if not np.all(np.isfinite(dists.data)):
        raise NumericError("cross-graph distances must be finite")
    hk = ps[f"{name}.Wk"].shape[0]
    K = ad.matmul(nodes_b, ad.transpose(ps[f"{name}.Wk"]))  # (nb, hk)
    Q = ad.matmul(nodes_a, ad.transpose(ps[f"{name}.Wq"]))  # (na, hk)
    w1 = ps[f"{name}.phi.0.w"]  # rows: k block, q block, distance
    pre_k = ad.matmul(K, w1[:hk])
    pre_q = ad.matmul(Q, w1[hk : 2 * hk])
    pre_d = ad.reshape(dists, (na, nb, 1)) * ad.reshape(w1[2 * hk], (1, 1, -1))
    hidden = ad.relu(
        ad.reshape(pre_q, (na, 1, -1)) + ad.reshape(pre_k, (1, nb, -1)) + pre_d + ps[f"{name}.phi.0.b"]
    )
    out = ad.matmul(ad.reshape(hidden, (na * nb, -1)), ps[f"{name}.phi.1.w"]) + ps[f"{name}.phi.1.b"]
    return ad.reshape(out, (na, nb))


def gat_cross_layer(nodes_a, nodes_b, dists, ps: ParameterSet, name: str, return_logits: bool = False):
    """Update A-side nodes by attending over all B-side nodes with distance-aware scores."""
    logits = cross_logits(nodes_a, nodes_b, dists, ps, name)
    att = ad.softmax(logits, axis=1)
    U = ad.matmul(ad.as_tensor(nodes_b), ad.transpose(ps[f"{name}.Wu"]))
    agg = ad.matmul(att, U)
    nodes_a = ad.as_tensor(nodes_a)
    out = nodes_a + mlp(ad.concat([nodes_a, agg], axis=1), ps, f"{name}.rho", len(FUSION_HIDDEN) + 1)
    if return_logits:
        return out, att, logits
    return out


# log-weight of masked-out kernel entries; finite so gradients stay finite
MASKED_LOGIT = -1e9


def sinkhorn_log(affinity, temperature: float = 0.1, iters: int = 20, mask=None) -> Tensor:
    """Log of the Sinkhorn-normalised kernel exp(affinity / temperature).

    Each iteration normalises rows then columns; a final row normalisation
    closes the loop so every row is a distribution.  Entries where ``mask``
    is False are pinned to :data:`MASKED_LOGIT`; every row and column must
    keep at least one allowed entry.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    affinity = ad.as_tensor(affinity)
    if affinity.ndim != 2:
        raise ShapeError(f"affinity must be 2-d, got {affinity.shape}")
    if not np.all(np.isfinite(affinity.data)):
        raise NumericError("non-finite affinity")
    z = affinity / temperature
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != affinity.shape:
            raise ShapeError(f"mask {mask.shape} for affinity {affinity.shape}")
        if not (mask.any(axis=0).all() and mask.any(axis=1).all()):
            raise NumericError("every row and column needs an allowed entry")
        z = ad.where(mask, z, MASKED_LOGIT)
    for _ in range(iters):
        z = z - ad.logsumexp(z, axis=1, keepdims=True)
        z = z - ad.logsumexp(z, axis=0, keepdims=True)
    return z - ad.logsumexp(z, axis=1, keepdims=True)


def sinkhorn(affinity, temperature: float = 0.1, iters: int = 20, mask=None) -> Tensor:
    return ad.exp(sinkhorn_log(affinity, temperature, iters, mask))
