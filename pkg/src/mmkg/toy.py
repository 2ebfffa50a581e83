"""Synthetic graphs with known structure, used by tests and demos."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .features import FeatureStore
from .kg import KnowledgeGraph


def _split(triples: np.ndarray, rng, fractions=(0.8, 0.1, 0.1)):
    perm = rng.permutation(len(triples))
    n_tr = int(round(fractions[0] * len(triples)))
    n_va = int(round(fractions[1] * len(triples)))
    t = triples[perm]
    return t[:n_tr], t[n_tr:n_tr + n_va], t[n_tr + n_va:]


PATH_LINKS = ((0, 0, 1), (1, 1, 2), (2, 0, 3))


def cluster_kg(links=PATH_LINKS, num_clusters: int = 4, cluster_size: int = 5, seed: int = 0,
               fractions=(0.8, 0.1, 0.1)) -> KnowledgeGraph:
    """Complete bipartite blocks between clusters, one block per ``(cluster_a, relation, cluster_b)``.

    Every block is added in both directions, so relations are symmetric and a
    DistMult head can separate true tails from corruptions. The default is a
    path of four clusters, ``0 -r0- 1 -r1- 2 -r0- 3``: relation type decides which
    neighbor cluster is a valid tail, and every cluster has a distinct two-hop
    neighborhood.
    """
    rng = np.random.default_rng(seed)
    members = np.arange(num_clusters * cluster_size).reshape(num_clusters, cluster_size)
    num_relations = 1 + max(r for _, r, _ in links)
    rows = []
    for a, r, b in links:
        for x, y in ((a, b), (b, a)):
            for h in members[x]:
                for t in members[y]:
                    rows.append((h, r, t))
    triples = np.unique(np.array(rows, dtype=np.int64), axis=0)
    train, valid, test = _split(triples, rng, fractions)
    return KnowledgeGraph.from_arrays(num_clusters * cluster_size, num_relations, train, valid, test)


def _partner(c: int, r: int, num_clusters: int) -> int:
    # pairs clusters (0,1),(2,3),... for r=0 and (1,2),(3,4),... for r=1, etc.
    shift = r % 2
    c2 = (c - shift) % num_clusters
    return ((c2 ^ 1) + shift) % num_clusters


def feature_kg(num_nodes: int = 240, num_clusters: int = 8, num_relations: int = 2, degree: int = 1,
               feat_dim: int = 16, noise: float = 0.1, seed: int = 0) -> tuple[KnowledgeGraph, FeatureStore]:
    """Sparse graph whose links are decided by a latent cluster that only the features reveal.

    Each node draws ``degree`` partners per relation from the paired cluster;
    text features are a noisy random code of the cluster.
    """
    rng = np.random.default_rng(seed)
    cluster = rng.integers(0, num_clusters, size=num_nodes)
    by_cluster = [np.nonzero(cluster == c)[0] for c in range(num_clusters)]
    rows = set()
    for r in range(num_relations):
        for h in range(num_nodes):
            pool = by_cluster[_partner(cluster[h], r, num_clusters)]
            for t in rng.choice(pool, size=min(degree, len(pool)), replace=False):
                rows.add((h, r, int(t)))
                rows.add((int(t), r, h))
    triples = np.array(sorted(rows), dtype=np.int64)
    train, valid, test = _split(triples, rng, (0.7, 0.15, 0.15))
    code = rng.normal(size=(num_clusters, feat_dim)).astype(np.float32)
    text = code[cluster] + noise * rng.normal(size=(num_nodes, feat_dim)).astype(np.float32)
    image = rng.normal(size=(num_nodes, feat_dim)).astype(np.float32)
    g = KnowledgeGraph.from_arrays(num_nodes, num_relations, train, valid, test)
    return g, FeatureStore(text=text, image=image)


def write_tsv_splits(g: KnowledgeGraph, directory) -> dict:
    """Write ``train.tsv``/``valid.tsv``/``test.tsv`` with string labels."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = {}
    for split in ("train", "valid", "test"):
        path = d / f"{split}.tsv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for h, r, t in g.triples(split):
                fh.write(f"{g.nodes.label(h)}\t{g.relations.label(r)}\t{g.nodes.label(t)}\n")
        out[split] = str(path)
    return out
