"""Immutable undirected graphs: loading, splits, subgraphs, perturbation.

A :class:`Graph` stores sorted neighbor lists plus a dense node-feature
matrix and never changes after construction, so it can be shared freely
across concurrent pipeline stages.  All randomized operations take an
explicit seed and derive their stream through :mod:`graphmia.rng`.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .rng import substream

log = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Malformed edge or feature file."""


class NodeRangeError(ValueError):
    """An edge or node set references a node id outside the graph."""


class DegenerateSplitError(ValueError):
    """A requested split would leave some part empty."""


@dataclass(frozen=True)
class Graph:
    """Undirected graph with per-node sorted neighbor arrays.

    Neighbor arrays are int64 and strictly increasing; the feature matrix is
    float64 with one row per node.  Both are marked read-only.  Use
    :meth:`from_edges` rather than the raw constructor so the invariants
    (symmetry, no self-loops, no duplicates) are enforced.
    """

    neighbors: tuple[np.ndarray, ...]
    features: np.ndarray
    domain_id: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.neighbors)

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self.neighbors) // 2

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def degree(self, node: int) -> int:
        return len(self.neighbors[int(node)])

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors[int(u)]
        i = np.searchsorted(row, v)
        return i < len(row) and row[i] == v

    @cached_property
    def edge_array(self) -> np.ndarray:
        """(num_edges, 2) int64 array of edges with u < v, lexicographic."""
        pairs = [
            (u, int(v))
            for u in range(self.num_nodes)
            for v in self.neighbors[u]
            if u < v
        ]
        arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        arr.flags.writeable = False
        return arr

    @cached_property
    def gcn_matrix(self) -> sp.csr_matrix:
        """Symmetric-normalized adjacency with self-loops, (D+I)^-1/2 (A+I) (D+I)^-1/2."""
        n = self.num_nodes
        deg = np.array([len(a) for a in self.neighbors], dtype=np.float64) + 1.0
        inv_sqrt = 1.0 / np.sqrt(deg)
        rows = [np.arange(n, dtype=np.int64)]
        cols = [np.arange(n, dtype=np.int64)]
        for u in range(n):
            if len(self.neighbors[u]):
                rows.append(np.full(len(self.neighbors[u]), u, dtype=np.int64))
                cols.append(self.neighbors[u])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        vals = inv_sqrt[r] * inv_sqrt[c]
        return sp.csr_matrix((vals, (r, c)), shape=(n, n))

    @classmethod
    def from_edges(
        cls,
        num_nodes: int,
        edges: np.ndarray | list[tuple[int, int]],
        features: np.ndarray,
        domain_id: int = 0,
        dedup: bool = False,
    ) -> "Graph":
        """Build a graph from an edge list.

        With ``dedup`` the list may contain self-loops, duplicates and both
        orientations; they are dropped silently (loaders report the counts).
        Without it any violation raises.
        """
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != num_nodes:
            raise GraphFormatError(
                f"feature matrix has {features.shape[0] if features.ndim == 2 else '?'} rows, "
                f"expected {num_nodes}"
            )
        seen: set[tuple[int, int]] = set()
        for u, v in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
            u, v = int(u), int(v)
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise NodeRangeError(f"edge ({u}, {v}) references node >= {num_nodes}")
            if u == v:
                if dedup:
                    continue
                raise GraphFormatError(f"self-loop at node {u}")
            key = (u, v) if u < v else (v, u)
            if key in seen:
                if dedup:
                    continue
                raise GraphFormatError(f"duplicate edge {key}")
            seen.add(key)
        adj: list[list[int]] = [[] for _ in range(num_nodes)]
        for u, v in seen:
            adj[u].append(v)
            adj[v].append(u)
        neighbors = tuple(np.array(sorted(a), dtype=np.int64) for a in adj)
        for a in neighbors:
            a.flags.writeable = False
        features = features.copy()
        features.flags.writeable = False
        return cls(neighbors=neighbors, features=features, domain_id=int(domain_id))

    def with_features(self, features: np.ndarray) -> "Graph":
        """Same structure, replaced feature matrix (used by augmentations)."""
        features = np.ascontiguousarray(features, dtype=np.float64).copy()
        if features.shape[0] != self.num_nodes:
            raise GraphFormatError("replacement features have wrong row count")
        features.flags.writeable = False
        return Graph(neighbors=self.neighbors, features=features, domain_id=self.domain_id)


def graph_fingerprint(graph: Graph) -> str:
    """SHA-256 over structure and features; equal graphs hash equal."""
    h = hashlib.sha256()
    h.update(f"n={graph.num_nodes};d={graph.feature_dim};dom={graph.domain_id};".encode())
    h.update(graph.edge_array.tobytes())
    h.update(np.ascontiguousarray(graph.features).tobytes())
    return h.hexdigest()


def load_graph(edge_path: str | Path, feature_path: str | Path, domain_id: int = 0) -> Graph:
    """Load a graph from an edge file and a feature file.

    Edge file: one ``u<TAB>v`` pair per line, 0-based decimal ids, lines
    starting with ``#`` ignored.  Feature file: header line ``n d`` followed
    by n lines of d space-separated reals.  Self-loops and duplicate edges
    are dropped with a logged count.
    """
    feature_path = Path(feature_path)
    edge_path = Path(edge_path)

    with feature_path.open("r", encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{feature_path}:1: expected header 'n d', got {header!r}")
        try:
            num_nodes, dim = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise GraphFormatError(f"{feature_path}:1: non-integer header: {header!r}") from exc
        features = np.empty((num_nodes, dim), dtype=np.float64)
        for i in range(num_nodes):
            line = fh.readline()
            if not line:
                raise GraphFormatError(
                    f"{feature_path}: expected {num_nodes} feature rows, file ended at row {i}"
                )
            row = line.split()
            if len(row) != dim:
                raise GraphFormatError(
                    f"{feature_path}:{i + 2}: expected {dim} values, got {len(row)}"
                )
            try:
                features[i] = [float(x) for x in row]
            except ValueError as exc:
                raise GraphFormatError(f"{feature_path}:{i + 2}: non-numeric value") from exc

    edges: list[tuple[int, int]] = []
    dropped_self = 0
    dropped_dup = 0
    seen: set[tuple[int, int]] = set()
    with edge_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{edge_path}:{lineno}: expected 'u<TAB>v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise GraphFormatError(f"{edge_path}:{lineno}: non-integer node id") from exc
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise NodeRangeError(
                    f"{edge_path}:{lineno}: edge ({u}, {v}) references node >= {num_nodes}"
                )
            if u == v:
                dropped_self += 1
                continue
            key = (u, v) if u < v else (v, u)
            if key in seen:
                dropped_dup += 1
                continue
            seen.add(key)
            edges.append(key)
    if dropped_self or dropped_dup:
        log.warning(
            "%s: dropped %d self-loop(s) and %d duplicate edge(s)",
            edge_path, dropped_self, dropped_dup,
        )
    return Graph.from_edges(num_nodes, edges, features, domain_id=domain_id)


def split_half(graph: Graph, seed: int) -> tuple[frozenset[int], frozenset[int]]:
    """Random half/half node split; first part gets the extra node for odd n."""
    n = graph.num_nodes
    if n < 2:
        raise DegenerateSplitError(f"cannot halve a graph with {n} node(s)")
    perm = substream(seed, "split-half").permutation(n)
    k = math.ceil(n / 2)
    return frozenset(int(i) for i in perm[:k]), frozenset(int(i) for i in perm[k:])


@dataclass(frozen=True)
class GraphPartition:
    """Disjoint unlearn / shadow-train / shadow-test node sets covering a graph."""

    unlearn_nodes: frozenset[int]
    shadow_train_nodes: frozenset[int]
    shadow_test_nodes: frozenset[int]
    seed: int

    def __post_init__(self) -> None:
        parts = (self.unlearn_nodes, self.shadow_train_nodes, self.shadow_test_nodes)
        if any(len(p) == 0 for p in parts):
            raise DegenerateSplitError("every partition part must be non-empty")
        total = len(self.unlearn_nodes) + len(self.shadow_train_nodes) + len(self.shadow_test_nodes)
        if len(self.unlearn_nodes | self.shadow_train_nodes | self.shadow_test_nodes) != total:
            raise DegenerateSplitError("partition parts overlap")


def partition_shadow(graph: Graph, unlearn_fraction: float, seed: int) -> GraphPartition:
    """Split a shadow graph into unlearn / train / test node sets.

    ``round(unlearn_fraction * n)`` nodes go to the unlearn set; the
    remainder is halved (train receives the extra node for odd remainders).
    """
    if not 0.0 < unlearn_fraction < 1.0:
        raise ValueError("unlearn_fraction must lie in (0, 1)")
    n = graph.num_nodes
    n_unlearn = int(round(unlearn_fraction * n))
    rest = n - n_unlearn
    n_train = math.ceil(rest / 2)
    n_test = rest - n_train
    if min(n_unlearn, n_train, n_test) < 1:
        raise DegenerateSplitError(
            f"fraction {unlearn_fraction} on {n} nodes yields sizes "
            f"({n_unlearn}, {n_train}, {n_test})"
        )
    perm = substream(seed, "partition-shadow").permutation(n)
    return GraphPartition(
        unlearn_nodes=frozenset(int(i) for i in perm[:n_unlearn]),
        shadow_train_nodes=frozenset(int(i) for i in perm[n_unlearn:n_unlearn + n_train]),
        shadow_test_nodes=frozenset(int(i) for i in perm[n_unlearn + n_train:]),
        seed=int(seed),
    )


def induced_subgraph(graph: Graph, nodes) -> Graph:
    """Subgraph over ``nodes``, relabeled 0..k-1 by ascending original id."""
    order = sorted(int(v) for v in nodes)
    if order and (order[0] < 0 or order[-1] >= graph.num_nodes):
        raise NodeRangeError("node set references ids outside the graph")
    if len(set(order)) != len(order):
        raise ValueError("node set contains duplicates")
    relabel = {v: i for i, v in enumerate(order)}
    edges = [
        (relabel[u], relabel[int(v)])
        for u in order
        for v in graph.neighbors[u]
        if u < v and int(v) in relabel
    ]
    features = graph.features[np.array(order, dtype=np.int64)] if order else \
        graph.features[:0]
    return Graph.from_edges(len(order), edges, features, domain_id=graph.domain_id)


def perturb_edges(graph: Graph, budget_fraction: float, seed: int) -> Graph:
    """Apply ``round(budget_fraction * num_edges)`` random edge edits.

    Each action flips a fair coin between deleting a uniformly random
    existing edge and inserting a uniformly random absent one (never a
    self-loop or duplicate).  Actions see the current, already-edited edge
    set.  An impossible action (deleting from an edgeless graph, inserting
    into a complete one) consumes its slot without changing anything.
    """
    if not 0.0 <= budget_fraction <= 1.0:
        raise ValueError("budget_fraction must lie in [0, 1]")
    n = graph.num_nodes
    n_actions = int(round(budget_fraction * graph.num_edges))
    edge_list: list[tuple[int, int]] = [tuple(e) for e in graph.edge_array.tolist()]
    edge_index = {e: i for i, e in enumerate(edge_list)}
    max_edges = n * (n - 1) // 2
    rng = substream(seed, "perturb-edges")
    for _ in range(n_actions):
        delete = rng.random() < 0.5
        if delete and not edge_list:
            continue
        if not delete and len(edge_list) == max_edges:
            continue
        if delete:
            i = int(rng.integers(len(edge_list)))
            last = edge_list[-1]
            removed = edge_list[i]
            edge_list[i] = last
            edge_index[last] = i
            edge_list.pop()
            del edge_index[removed]
        else:
            while True:
                u = int(rng.integers(n))
                v = int(rng.integers(n))
                if u == v:
                    continue
                key = (u, v) if u < v else (v, u)
                if key not in edge_index:
                    break
            edge_index[key] = len(edge_list)
            edge_list.append(key)
    return Graph.from_edges(n, edge_list, graph.features, domain_id=graph.domain_id)
