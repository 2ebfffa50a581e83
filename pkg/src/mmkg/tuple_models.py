"""TransE, DistMult and TuckER scoring.

Each scorer works on batches: rows of the argument matrices are scored
independently. Single vectors are accepted and give a scalar back.
Higher scores mean more plausible triples for every family.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ShapeError

FAMILIES = ("transe", "distmult", "tucker")


def _check_same(*vs):
    shapes = {v.shape[-1] for v in vs}
    if len(shapes) != 1:
        raise ShapeError(f"embedding widths differ: {[v.shape for v in vs]}")


def score_transe(head, rel, tail) -> ad.Tensor:
    """Negated L2 distance ``-||head + rel - tail||``."""
    head, rel, tail = ad.as_tensor(head), ad.as_tensor(rel), ad.as_tensor(tail)
    _check_same(head, rel, tail)
    diff = head + rel - tail
    return -ad.sqrt((diff * diff).sum(axis=-1))


def score_distmult(head, rel, tail) -> ad.Tensor:
    head, rel, tail = ad.as_tensor(head), ad.as_tensor(rel), ad.as_tensor(tail)
    _check_same(head, rel, tail)
    # head * tail first keeps the score bitwise symmetric in head and tail
    return (head * tail * rel).sum(axis=-1)


def score_tucker(core, head, rel, tail) -> ad.Tensor:
    """Trilinear contraction of the core ``[d_h, d_r, d_t]`` with head, relation, tail.

    Models always use ``d_h = d_t``; the contraction itself does not need it.
    """
    core, head, rel, tail = (ad.as_tensor(x) for x in (core, head, rel, tail))
    if core.ndim != 3:
        raise ShapeError(f"core must be 3-d, got shape {core.shape}")
    if head.shape[-1] != core.shape[0] or tail.shape[-1] != core.shape[2] or rel.shape[-1] != core.shape[1]:
        raise ShapeError(f"vector widths {head.shape[-1]}, {rel.shape[-1]}, {tail.shape[-1]} "
                         f"do not match core {core.shape}")
    single = head.ndim == 1
    if single:
        head, rel, tail = (x.reshape(1, -1) for x in (head, rel, tail))
    out = (tucker_project(core, head, rel) * tail).sum(axis=-1)
    return out.reshape(()) if single else out


def tucker_project(core, head, rel, dropout_rate=0.0, rng=None, train=False) -> ad.Tensor:
    """``core x1 head x2 rel`` for a batch, giving a ``[B, d_t]`` matrix to dot with tails."""
    core, head, rel = ad.as_tensor(core), ad.as_tensor(head), ad.as_tensor(rel)
    d_h, d_r, d_t = core.shape
    x = (head @ core.reshape(d_h, -1)).reshape(-1, d_r, d_t)
    x = (x * rel.reshape(-1, d_r, 1)).sum(axis=1)
    return ad.dropout(x, dropout_rate, rng, train)


def superdiagonal_core(d: int, value: float = 1.0) -> np.ndarray:
    core = np.zeros((d, d, d), dtype=np.float32)
    core[np.arange(d), np.arange(d), np.arange(d)] = value
    return core
