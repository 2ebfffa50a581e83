"""Learned gates that fuse projected modality features into node and edge embeddings.

Parameters live in a :class:`~mmkg.autodiff.ParameterSet` under the names
``gate.{node,edge}.{text,image}.{proj,w1,b1,w2,b2}`` and
``gate.{node,edge}.both``. Batches are row-major: ``x @ W`` with ``W`` of shape
``[in, out]``.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet
from .errors import ShapeError

MODALITIES = ("text", "image")
FEATURE_CONFIGS = ("none", "text", "image", "both")


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] (embedding tables)."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def glorot_init(rng: np.random.Generator, shape) -> np.ndarray:
    """Glorot/Xavier uniform for ``[in, out]`` weight matrices."""
    bound = np.sqrt(6.0 / (shape[0] + shape[-1]))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def modalities_for(features: str) -> tuple[str, ...]:
    if features not in FEATURE_CONFIGS:
        raise ValueError(f"unknown feature config {features!r}")
    return {"none": (), "text": ("text",), "image": ("image",), "both": MODALITIES}[features]


def init_gate_params(params: ParameterSet, side: str, features: str, width: int,
                     feat_dims: dict[str, int], rng: np.random.Generator, per_dim: bool = False) -> None:
    """Create projection, gate MLP and (for ``both``) combination weights.

    ``side`` is ``"node"`` (width = node embedding size) or ``"edge"`` (width =
    relation embedding size). The MLP's output layer starts at zero so every
    gate opens halfway (s = 0.5) before training.
    """
    out = width if per_dim else 1
    for mod in modalities_for(features):
        pre = f"gate.{side}.{mod}"
        params.add(f"{pre}.proj", glorot_init(rng, (feat_dims[mod], width)))
        params.add(f"{pre}.w1", glorot_init(rng, (2 * width, width)))
        params.add(f"{pre}.b1", np.zeros(width))
        params.add(f"{pre}.w2", np.zeros((width, out)))
        params.add(f"{pre}.b2", np.zeros(out))
    if features == "both":
        params.add(f"gate.{side}.both", glorot_init(rng, (2 * width, width)))


def gate_scalar(x, w1, b1, w2, b2) -> ad.Tensor:
    """One-hidden-layer ReLU MLP ending in a sigmoid; ``x`` is ``[B, in]``."""
    hidden = ad.relu(ad.as_tensor(x) @ w1 + b1)
    return ad.sigmoid(hidden @ w2 + b2)


def _mlp(p: ParameterSet, pre: str):
    return p[f"{pre}.w1"], p[f"{pre}.b1"], p[f"{pre}.w2"], p[f"{pre}.b2"]


def convex_gate(base, candidate, s) -> ad.Tensor:
    base, candidate = ad.as_tensor(base), ad.as_tensor(candidate)
    out = s * candidate + (1 - s) * base
    # rounding can leave the segment by an ulp; clamp the value, gradients pass through
    np.clip(out.value, np.minimum(base.value, candidate.value), np.maximum(base.value, candidate.value),
            out=out.value)
    return out


def node_gate(v, feat, which: str, p: ParameterSet, return_gate: bool = False):
    """Blend node embeddings ``v`` [B, d_n] with projected features ``feat`` [B, d_f]."""
    pre = f"gate.node.{which}"
    v = ad.as_tensor(v)
    projected = ad.as_tensor(feat) @ p[f"{pre}.proj"]
    if projected.shape[-1] != v.shape[-1]:
        raise ShapeError(f"projected {which} width {projected.shape[-1]} != embedding width {v.shape[-1]}")
    s = gate_scalar(ad.concat([v, projected], axis=-1), *_mlp(p, pre))
    out = convex_gate(v, projected, s)
    return (out, s, projected) if return_gate else out


def node_gate_combine(v_t, v_m, p: ParameterSet) -> ad.Tensor:
    return ad.concat([v_t, v_m], axis=-1) @ p["gate.node.both"]


def edge_gate(e, feat_i, feat_j, which: str, p: ParameterSet, return_gate: bool = False):
    """Blend relation embeddings ``e`` [B, d_r] with the mean of both endpoints' projected features."""
    pre = f"gate.edge.{which}"
    e = ad.as_tensor(e)
    w = p[f"{pre}.proj"]
    pair = (ad.as_tensor(feat_i) @ w + ad.as_tensor(feat_j) @ w) * 0.5
    if pair.shape[-1] != e.shape[-1]:
        raise ShapeError(f"projected {which} width {pair.shape[-1]} != relation width {e.shape[-1]}")
    s = gate_scalar(ad.concat([e, pair], axis=-1), *_mlp(p, pre))
    out = convex_gate(e, pair, s)
    return (out, s, pair) if return_gate else out


def edge_gate_combine(e_t, e_m, p: ParameterSet) -> ad.Tensor:
    return ad.concat([e_t, e_m], axis=-1) @ p["gate.edge.both"]


def gate_nodes(v, feats, features: str, p: ParameterSet) -> ad.Tensor:
    """Apply the node-gating path selected by ``features`` to every node."""
    if features == "none":
        return ad.as_tensor(v)
    outs = {mod: node_gate(v, getattr(feats, mod), mod, p) for mod in modalities_for(features)}
    if features == "both":
        return node_gate_combine(outs["text"], outs["image"], p)
    return outs[features]


def gate_edges(e, heads, tails, feats, features: str, p: ParameterSet) -> ad.Tensor:
    """Edge-gating path for per-triple relation embeddings ``e`` [B, d_r]."""
    if features == "none":
        return ad.as_tensor(e)
    outs = {mod: edge_gate(e, getattr(feats, mod)[heads], getattr(feats, mod)[tails], mod, p)
            for mod in modalities_for(features)}
    if features == "both":
        return edge_gate_combine(outs["text"], outs["image"], p)
    return outs[features]
