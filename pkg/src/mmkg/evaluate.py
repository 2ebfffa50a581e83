"""Ranked link-prediction evaluation (MRR, Hits@{1,3,10})."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ProtocolError
from .kg import KnowledgeGraph, sample_negatives

HITS_AT = (1, 3, 10)


def rank_from_scores(pos_score: float, cand_scores) -> int:
    """Pessimistic rank: ties with the positive count against it."""
    cand = np.asarray(cand_scores, dtype=np.float64)
    return 1 + int(np.count_nonzero(cand >= pos_score))


def rank_triple(scorer, positive, candidates, graph: KnowledgeGraph | None = None) -> int:
    """Rank of ``positive`` among ``candidates`` under ``scorer``.

    ``scorer`` maps an ``(n, 3)`` int array to ``n`` scores. When ``graph`` is
    given, any candidate that is a known triple is a protocol violation.
    """
    cands = np.asarray(candidates, dtype=np.int64).reshape(-1, 3)
    pos = np.asarray(positive, dtype=np.int64).reshape(1, 3)
    if graph is not None and len(cands) and graph.contains(cands[:, 0], cands[:, 1], cands[:, 2]).any():
        bad = cands[graph.contains(cands[:, 0], cands[:, 1], cands[:, 2])][0]
        raise ProtocolError(f"candidate {tuple(int(x) for x in bad)} is a known triple")
    scores = np.asarray(scorer(np.concatenate([pos, cands])), dtype=np.float64)
    return rank_from_scores(scores[0], scores[1:])


def compute_metrics(ranks) -> dict:
    """MRR and Hits@n as percentages."""
    r = np.asarray(ranks, dtype=np.float64)
    if r.size == 0:
        raise ValueError("no ranks to aggregate")
    if (r < 1).any():
        raise ValueError("ranks must be >= 1")
    out = {"mrr": 100.0 * float(np.mean(1.0 / r))}
    out["hits"] = {n: 100.0 * float(np.mean(r <= n)) for n in HITS_AT}
    return out


@dataclass
class EvalReport:
    split: str
    mode: dict
    mrr: float
    hits: dict
    ranks: list = field(repr=False)
    fingerprint: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hits"] = {str(k): v for k, v in self.hits.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["hits"] = {int(k): v for k, v in d["hits"].items()}
        return cls(**d)

    def table(self) -> str:
        head = f"{'split':<8}{'MRR':>8}{'Hits@1':>9}{'Hits@3':>9}{'Hits@10':>9}"
        row = f"{self.split:<8}{self.mrr:>8.1f}" + "".join(f"{self.hits[n]:>9.1f}" for n in HITS_AT)
        return head + "\n" + row


def _split_digest(g: KnowledgeGraph, split: str) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(g.triples(split), dtype="<i8").tobytes())
    h.update(f"{g.num_nodes}:{g.num_relations}".encode())
    return h.hexdigest()[:16]


def build_candidates(g: KnowledgeGraph, split: str, k: int, seed: int, mode: str = "tail") -> np.ndarray:
    """``(n, k, 3)`` corrupted triples for every positive in ``split``."""
    rng = np.random.default_rng(seed)
    triples = g.triples(split)
    out = np.zeros((len(triples), k, 3), dtype=np.int64)
    for i, t in enumerate(triples):
        batch = sample_negatives(g, t, k, mode, rng)
        if k:
            out[i] = [n.as_tuple() for n in batch.negatives]
    return out


class CandidateCache:
    """Frozen evaluation candidates, one ``.npz`` per (split, k, seed, mode).

    With ``directory=None`` the cache lives in memory only.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None
        self._mem: dict = {}

    def _path(self, split, k, seed, mode) -> Path | None:
        if self.directory is None:
            return None
        return self.directory / f"candidates_{split}_k{k}_s{seed}_{mode}.npz"

    def get(self, g: KnowledgeGraph, split: str, k: int, seed: int, mode: str = "tail") -> np.ndarray:
        key = (split, k, seed, mode)
        digest = _split_digest(g, split)
        hit = self._mem.get(key)
        if hit is not None:
            if hit[0] != digest:
                raise ProtocolError(f"cached candidates for {key} were built for a different graph")
            return hit[1]
        path = self._path(*key)
        if path is not None and path.exists():
            with np.load(path) as z:
                meta = json.loads(str(z["meta"]))
                cands = z["candidates"]
            expected = {"split": split, "k": k, "seed": seed, "mode": mode, "digest": digest}
            if meta != expected:
                raise ProtocolError(f"candidate cache {path} does not match request: {meta} vs {expected}")
        else:
            cands = build_candidates(g, split, k, seed, mode)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                meta = {"split": split, "k": k, "seed": seed, "mode": mode, "digest": digest}
                with open(path, "wb") as fh:
                    np.savez(fh, candidates=cands, meta=np.array(json.dumps(meta, sort_keys=True)))
        self._mem[key] = (digest, cands)
        return cands


def _scores_k(model, states, positives, cands, chunk=20000) -> np.ndarray:
    n, k = cands.shape[:2]
    allt = np.concatenate([positives[:, None, :], cands], axis=1).reshape(-1, 3)
    out = np.empty(len(allt), dtype=np.float64)
    for s in range(0, len(allt), chunk):
        part = allt[s:s + chunk]
        out[s:s + chunk] = model.score(states, part[:, 0], part[:, 1], part[:, 2]).value
    return out.reshape(n, k + 1)


def _ranks_all(model, g, states, positives, side: str, chunk=20000) -> np.ndarray:
    n_nodes = g.num_nodes
    ranks = np.empty(len(positives), dtype=np.int64)
    per = max(1, chunk // n_nodes)
    nodes = np.arange(n_nodes)
    for s in range(0, len(positives), per):
        pos = positives[s:s + per]
        b = len(pos)
        h = np.repeat(pos[:, 0], n_nodes)
        r = np.repeat(pos[:, 1], n_nodes)
        t = np.repeat(pos[:, 2], n_nodes)
        if side == "tail":
            t = np.tile(nodes, b)
        else:
            h = np.tile(nodes, b)
        scores = model.score(states, h, r, t).value.astype(np.float64).reshape(b, n_nodes)
        pos_scores = model.score(states, pos[:, 0], pos[:, 1], pos[:, 2]).value.astype(np.float64)
        known = g.contains(h, r, t).reshape(b, n_nodes)
        better = (scores >= pos_scores[:, None]) & ~known
        ranks[s:s + b] = 1 + better.sum(axis=1)
    return ranks


def evaluate(model, g: KnowledgeGraph, split: str, neg="100", seed: int = 0, mode: str = "tail",
             cache: CandidateCache | None = None) -> EvalReport:
    """Rank every triple of ``split`` and aggregate.

    ``neg`` is a candidate count or ``"all"`` (filtered, every corruption not in
    the graph). In the ``"all"`` setting with ``mode="both"`` each triple
    contributes a head rank and a tail rank.
    """
    positives = g.triples(split)
    if len(positives) == 0:
        raise ValueError(f"split {split!r} is empty")
    with ad.no_grad():
        states = model.node_states(train=False)
        if str(neg) == "all":
            sides = ("tail", "head") if mode == "both" else (mode,)
            ranks = np.concatenate([_ranks_all(model, g, states, positives, s) for s in sides])
            mode_info = {"kind": "all_negatives", "corrupt": mode}
        else:
            k = int(neg)
            cache = cache if cache is not None else CandidateCache()
            cands = cache.get(g, split, k, seed, mode)
            if cands.shape[:2] != (len(positives), k):
                raise ProtocolError(f"candidate set shape {cands.shape} does not fit {len(positives)} x {k}")
            flat = cands.reshape(-1, 3)
            if len(flat) and g.contains(flat[:, 0], flat[:, 1], flat[:, 2]).any():
                raise ProtocolError("candidate set contains known triples")
            scores = _scores_k(model, states, positives, cands)
            ranks = 1 + (scores[:, 1:] >= scores[:, :1]).sum(axis=1)
            mode_info = {"kind": "k_corrupted", "k": k, "seed": seed, "corrupt": mode}
    m = compute_metrics(ranks)
    fp = getattr(model, "fingerprint", None)
    digest = hashlib.sha256(json.dumps(fp(), sort_keys=True).encode()).hexdigest()[:16] if fp else ""
    return EvalReport(split, mode_info, m["mrr"], m["hits"], [int(x) for x in ranks], digest)
