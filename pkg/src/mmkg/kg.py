"""Knowledge-graph storage: symbol tables, split triples, neighborhoods, corruption."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ExhaustionError, KGIndexError, ParseError

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
MODES = ("tail", "head", "both")


class SymbolTable:
    """Bijection between string labels and contiguous integer ids."""

    def __init__(self, labels=()):
        self._labels: list[str] = []
        self._index: dict[str, int] = {}
        for label in labels:
            self.intern(label)

    def intern(self, label: str) -> int:
        idx = self._index.get(label)
        if idx is None:
            idx = len(self._labels)
            self._index[label] = idx
            self._labels.append(label)
        return idx

    def id(self, label: str) -> int:
        return self._index[label]

    def label(self, idx: int) -> str:
        return self._labels[idx]

    @property
    def labels(self) -> list[str]:
        return list(self._labels)

    def __len__(self):
        return len(self._labels)

    def __contains__(self, label):
        return label in self._index


@dataclass(frozen=True)
class Triple:
    head: int
    rel: int
    tail: int

    def as_tuple(self):
        return (self.head, self.rel, self.tail)


@dataclass
class CorruptionBatch:
    positive: Triple
    negatives: list[Triple]
    mode: str


@dataclass
class LoadResult:
    split: str
    num_triples: int
    num_duplicates: int
    num_nodes: int
    num_relations: int


@dataclass
class KnowledgeGraph:
    """Triples per split over shared node/relation vocabularies.

    Triples are stored as ``int64`` arrays of shape ``(n, 3)`` (head, rel, tail).
    Neighborhoods come from the train split only and ignore edge direction.
    """

    nodes: SymbolTable = field(default_factory=SymbolTable)
    relations: SymbolTable = field(default_factory=SymbolTable)
    splits: dict = field(default_factory=lambda: {s: np.zeros((0, 3), dtype=np.int64) for s in SPLITS})
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_arrays(cls, num_nodes: int, num_relations: int, train, valid=(), test=(),
                    node_labels=None, relation_labels=None) -> "KnowledgeGraph":
        g = cls(SymbolTable(node_labels or [f"n{i}" for i in range(num_nodes)]),
                SymbolTable(relation_labels or [f"r{i}" for i in range(num_relations)]))
        for name, arr in zip(SPLITS, (train, valid, test)):
            arr = np.asarray(arr, dtype=np.int64).reshape(-1, 3)
            if len(arr) and (arr[:, [0, 2]].max() >= num_nodes or arr[:, 1].max() >= num_relations
                             or arr.min() < 0):
                raise KGIndexError(f"{name} split references ids outside the vocabularies")
            g.splits[name] = _dedupe(arr)[0]
        return g

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def triples(self, split: str) -> np.ndarray:
        return self.splits[split]

    def _invalidate(self):
        self._cache.clear()

    # ------------------------------------------------------------ membership
    def _key(self, h, r, t):
        n, m = self.num_nodes, self.num_relations
        return (np.asarray(h, dtype=np.int64) * m + np.asarray(r, dtype=np.int64)) * n + np.asarray(t, dtype=np.int64)

    @property
    def known_keys(self) -> np.ndarray:
        """Sorted encoded keys of every triple in any split."""
        if "keys" not in self._cache:
            allt = np.concatenate([self.splits[s] for s in SPLITS])
            self._cache["keys"] = np.unique(self._key(allt[:, 0], allt[:, 1], allt[:, 2]))
        return self._cache["keys"]

    def contains(self, h, r, t):
        """Vectorized membership test against the union of all splits."""
        keys = self.known_keys
        q = self._key(h, r, t)
        if len(keys) == 0:
            return np.zeros(np.shape(q), dtype=bool)
        pos = np.searchsorted(keys, q)
        pos = np.minimum(pos, len(keys) - 1)
        return keys[pos] == q

    def __contains__(self, triple) -> bool:
        h, r, t = triple.as_tuple() if isinstance(triple, Triple) else triple
        return bool(self.contains(h, r, t))

    def known_tails(self, h: int, r: int) -> np.ndarray:
        idx = self._cache.get("tails")
        if idx is None:
            idx = self._cache["tails"] = _group(np.concatenate([self.splits[s] for s in SPLITS]), (0, 1), 2)
        return idx.get((h, r), _EMPTY)

    def known_heads(self, r: int, t: int) -> np.ndarray:
        idx = self._cache.get("heads")
        if idx is None:
            idx = self._cache["heads"] = _group(np.concatenate([self.splits[s] for s in SPLITS]), (1, 2), 0)
        return idx.get((r, t), _EMPTY)

    # ------------------------------------------------------------ structure
    def adjacency(self, self_loops: bool = False) -> sp.csr_matrix:
        """Undirected 0/1 adjacency over train triples."""
        key = ("adj", self_loops)
        if key not in self._cache:
            tr = self.splits["train"]
            n = self.num_nodes
            rows = np.concatenate([tr[:, 0], tr[:, 2]])
            cols = np.concatenate([tr[:, 2], tr[:, 0]])
            a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
            a.data[:] = 1.0
            if self_loops:
                a = a.tolil()
                a.setdiag(1.0)
                a = a.tocsr()
            a.sort_indices()
            self._cache[key] = a
        return self._cache[key]

    def edge_index(self, self_loops: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """(target, source) pairs, one per (i, j in N_i), sorted by target then source."""
        a = self.adjacency(self_loops).tocoo()
        order = np.lexsort((a.col, a.row))
        return a.row[order].astype(np.int64), a.col[order].astype(np.int64)

    def degree(self, self_loops: bool = False) -> np.ndarray:
        return np.diff(self.adjacency(self_loops).indptr)


_EMPTY = np.zeros(0, dtype=np.int64)


def _group(triples: np.ndarray, key_cols, val_col) -> dict:
    out: dict = {}
    for row in triples:
        out.setdefault((int(row[key_cols[0]]), int(row[key_cols[1]])), []).append(int(row[val_col]))
    return {k: np.unique(np.array(v, dtype=np.int64)) for k, v in out.items()}


def _dedupe(arr: np.ndarray) -> tuple[np.ndarray, int]:
    if len(arr) == 0:
        return arr.reshape(0, 3), 0
    _, first = np.unique(arr, axis=0, return_index=True)
    first.sort()
    return arr[first], len(arr) - len(first)


def load_triples(path, split: str, graph: KnowledgeGraph | None = None) -> tuple[KnowledgeGraph, LoadResult]:
    """Read a head<TAB>relation<TAB>tail file into ``graph`` (created if absent).

    Labels are interned in order of first appearance. Returns the graph and a
    summary with the duplicate count.
    """
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    graph = graph if graph is not None else KnowledgeGraph()
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
            h, r, t = fields
            if not r:
                raise ParseError(f"{path}:{lineno}: empty relation label")
            if not h or not t:
                raise ParseError(f"{path}:{lineno}: empty node label")
            rows.append((graph.nodes.intern(h), graph.relations.intern(r), graph.nodes.intern(t)))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    merged = np.concatenate([graph.splits[split], arr])
    merged, dups = _dedupe(merged)
    if dups:
        logger.warning("%s: dropped %d duplicate triples", path, dups)
    graph.splits[split] = merged
    graph._invalidate()
    return graph, LoadResult(split, len(merged), dups, graph.num_nodes, graph.num_relations)


def load_graph(train, valid=None, test=None) -> KnowledgeGraph:
    """Load the three split files into one graph with shared vocabularies."""
    g = KnowledgeGraph()
    for split, path in zip(SPLITS, (train, valid, test)):
        if path is not None:
            load_triples(Path(path), split, g)
    return g


def neighborhood(g: KnowledgeGraph, i: int) -> list[int]:
    """Ascending ids of nodes sharing a train edge with ``i`` in either direction."""
    if not 0 <= i < g.num_nodes:
        raise KGIndexError(f"node id {i} out of range [0, {g.num_nodes})")
    a = g.adjacency()
    return [int(j) for j in a.indices[a.indptr[i]:a.indptr[i + 1]]]


def _draw_distinct(rng, n: int, excluded: np.ndarray, k: int, what: str) -> np.ndarray:
    valid = n - len(excluded)
    if valid < k:
        raise ExhaustionError(f"only {valid} valid {what} corruptions exist, {k} requested")
    if k == 0:
        return _EMPTY
    if k * 2 > valid:
        pool = np.setdiff1d(np.arange(n, dtype=np.int64), excluded, assume_unique=True)
        return rng.choice(pool, size=k, replace=False)
    # rejection sampling against the known set
    banned = set(excluded.tolist())
    picked: list[int] = []
    seen: set[int] = set()
    while len(picked) < k:
        for c in rng.integers(0, n, size=2 * (k - len(picked)) + 4).tolist():
            if c in banned or c in seen:
                continue
            seen.add(c)
            picked.append(c)
            if len(picked) == k:
                break
    return np.array(picked, dtype=np.int64)


def sample_negatives(g: KnowledgeGraph, t, k: int, mode: str = "tail",
                     rng: np.random.Generator | int | None = None) -> CorruptionBatch:
    """Draw ``k`` distinct corruptions of ``t`` that are absent from every split.

    ``mode="both"`` alternates tail, head, tail, ... per sample.
    """
    if mode not in MODES:
        raise ValueError(f"unknown corruption mode {mode!r}")
    if k < 0:
        raise ValueError("k must be >= 0")
    t = t if isinstance(t, Triple) else Triple(*map(int, t))
    rng = np.random.default_rng(rng)
    n_tail = k if mode == "tail" else 0 if mode == "head" else (k + 1) // 2
    n_head = k - n_tail
    try:
        tails = _draw_distinct(rng, g.num_nodes, g.known_tails(t.head, t.rel), n_tail, "tail")
        heads = _draw_distinct(rng, g.num_nodes, g.known_heads(t.rel, t.tail), n_head, "head")
    except ExhaustionError as exc:
        raise ExhaustionError(f"cannot corrupt {t.as_tuple()}: {exc}") from None
    negs: list[Triple] = []
    ti = hi = 0
    for s in range(k):
        use_tail = mode == "tail" or (mode == "both" and s % 2 == 0)
        if use_tail:
            negs.append(Triple(t.head, t.rel, int(tails[ti])))
            ti += 1
        else:
            negs.append(Triple(int(heads[hi]), t.rel, t.tail))
            hi += 1
    return CorruptionBatch(t, negs, mode)


def sample_negatives_batch(g: KnowledgeGraph, triples: np.ndarray, k: int, mode: str,
                           rng: np.random.Generator) -> np.ndarray:
    """Training-time corruption for many positives at once.

    Returns an ``(n, k, 3)`` array. Candidates are drawn uniformly and any that
    land in the graph are redrawn; duplicates within a row are allowed.
    """
    triples = np.asarray(triples, dtype=np.int64)
    n = len(triples)
    out = np.repeat(triples[:, None, :], k, axis=1)
    if mode == "tail":
        col = np.full((n, k), 2)
    elif mode == "head":
        col = np.zeros((n, k), dtype=np.int64)
    else:
        col = np.where(np.arange(k) % 2 == 0, 2, 0)[None, :].repeat(n, axis=0)
    pending = np.ones((n, k), dtype=bool)
    for _ in range(100):
        idx = np.nonzero(pending)
        if len(idx[0]) == 0:
            break
        out[idx[0], idx[1], col[idx]] = rng.integers(0, g.num_nodes, size=len(idx[0]))
        sub = out[idx]
        bad = g.contains(sub[:, 0], sub[:, 1], sub[:, 2])
        pending[:] = False
        pending[idx[0][bad], idx[1][bad]] = True
    if pending.any():
        rows = np.unique(np.nonzero(pending)[0])
        raise ExhaustionError(f"could not corrupt {tuple(triples[rows[0]])} after 100 redraws")
    return out
