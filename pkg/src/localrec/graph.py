"""Bipartite interaction networks and their category-enriched one-mode projections.

Three bipartite graphs are built from raw data: user-item (weights = interaction
counts), item-category (binary membership), and user-category (derived, weight =
total interactions a user has with items of that category).  A one-mode
projection over users (or items) links two nodes whenever they share both a
neighbor in the primary graph and a neighbor in the category graph; the edge
weight is the product of the two common-neighbor counts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DatasetEmpty, ParseError

log = logging.getLogger(__name__)

USER = "user"
ITEM = "item"
CATEGORY = "category"


class IdMap:
    """Bijective map between external ids and dense 0-based indices.

    Indices are assigned in first-seen order and are stable for the lifetime
    of a dataset load.
    """

    def __init__(self, namespace: str):
        self.namespace = namespace
        self._index = {}
        self._external = []

    def add(self, external) -> int:
        idx = self._index.get(external)
        if idx is None:
            idx = len(self._external)
            self._index[external] = idx
            self._external.append(external)
        return idx

    def index(self, external) -> int:
        return self._index[external]

    def external(self, index: int):
        return self._external[index]

    def __len__(self) -> int:
        return len(self._external)

    def __contains__(self, external) -> bool:
        return external in self._index

    def externals(self) -> list:
        return list(self._external)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for idx, ext in enumerate(self._external):
                fh.write(f"{idx}\t{ext}\n")

    @classmethod
    def load(cls, path, namespace: str) -> "IdMap":
        m = cls(namespace)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError("expected 'index<TAB>external_id'", lineno)
                if int(parts[0]) != len(m._external):
                    raise ParseError("id map indices must be dense and ordered", lineno)
                m.add(parts[1])
        return m


@dataclass
class BipartiteGraph:
    """Weighted edges between two disjoint node namespaces.

    Stored as parallel arrays over distinct (left, right) pairs;
    all weights are strictly positive.
    """

    left_namespace: str
    right_namespace: str
    n_left: int
    n_right: int
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        if self.left_namespace == self.right_namespace:
            raise ValueError("bipartite namespaces must be distinct")
        if np.any(self.weight <= 0):
            raise ValueError("bipartite edge weights must be positive")

    @property
    def n_edges(self) -> int:
        return len(self.left)

    @classmethod
    def from_pairs(cls, left_namespace, right_namespace, n_left, n_right, pairs,
                   weights=None) -> "BipartiteGraph":
        """Build from (left, right) index pairs, aggregating duplicates by sum.

        Without explicit weights each occurrence counts 1, so duplicated pairs
        aggregate to their multiplicity.
        """
        pairs = np.asarray(pairs, dtype=np.int64)
        if pairs.size == 0:
            return cls(left_namespace, right_namespace, n_left, n_right,
                       np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64))
        if weights is None:
            weights = np.ones(len(pairs), dtype=np.float64)
        mat = sp.coo_matrix((weights, (pairs[:, 0], pairs[:, 1])),
                            shape=(n_left, n_right)).tocsr()
        mat.sum_duplicates()
        coo = mat.tocoo()
        return cls(left_namespace, right_namespace, n_left, n_right,
                   coo.row.astype(np.int64), coo.col.astype(np.int64),
                   coo.data.astype(np.float64))

    def matrix(self) -> sp.csr_matrix:
        """Weighted sparse matrix, left nodes as rows."""
        return sp.csr_matrix((self.weight, (self.left, self.right)),
                             shape=(self.n_left, self.n_right))

    def binary_matrix(self) -> sp.csr_matrix:
        """Unweighted adjacency: a neighbor is a neighbor regardless of weight."""
        data = np.ones(len(self.left), dtype=np.int64)
        return sp.csr_matrix((data, (self.left, self.right)),
                             shape=(self.n_left, self.n_right))

    def oriented(self, namespace: str) -> sp.csr_matrix:
        """Binary adjacency with `namespace` as the row side."""
        if namespace == self.left_namespace:
            return self.binary_matrix()
        if namespace == self.right_namespace:
            return self.binary_matrix().T.tocsr()
        raise ValueError(f"graph has no namespace {namespace!r}")


@dataclass
class ProjectionGraph:
    """One-mode projection with common-neighbor counts and enriched weights.

    Edges stored with i < j (undirected).  ck counts common neighbors in the
    primary bipartite graph, ca in the category graph, and w = ck * ca; an
    edge exists iff w > 0.
    """

    namespace: str
    n_nodes: int
    i: np.ndarray
    j: np.ndarray
    ck: np.ndarray
    ca: np.ndarray
    w: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.i)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        np.add.at(deg, self.i, 1)
        np.add.at(deg, self.j, 1)
        return deg

    def isolated_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.degrees() == 0)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric weighted adjacency (weights w), neighbor lists sorted."""
        rows = np.concatenate([self.i, self.j])
        cols = np.concatenate([self.j, self.i])
        data = np.concatenate([self.w, self.w])
        adj = sp.csr_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        adj.sort_indices()
        return adj

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# nodes {self.n_nodes} namespace {self.namespace}\n")
            for i, j, ck, ca, w in zip(self.i, self.j, self.ck, self.ca, self.w):
                fh.write(f"{i}\t{j}\t{ck}\t{ca}\t{w:.17g}\n")

    @classmethod
    def load(cls, path) -> "ProjectionGraph":
        i, j, ck, ca, w = [], [], [], [], []
        n_nodes = 0
        namespace = USER
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#"):
                    parts = line[1:].split()
                    if len(parts) >= 4 and parts[0] == "nodes":
                        n_nodes = int(parts[1])
                        namespace = parts[3]
                    continue
                parts = line.split("\t")
                if len(parts) != 5:
                    raise ParseError("expected 'i<TAB>j<TAB>ck<TAB>ca<TAB>w'", lineno)
                i.append(int(parts[0]))
                j.append(int(parts[1]))
                ck.append(int(parts[2]))
                ca.append(int(parts[3]))
                w.append(float(parts[4]))
        return cls(namespace, n_nodes,
                   np.asarray(i, np.int64), np.asarray(j, np.int64),
                   np.asarray(ck, np.int64), np.asarray(ca, np.int64),
                   np.asarray(w, np.float64))


def build_user_item(interactions) -> tuple[BipartiteGraph, IdMap, IdMap]:
    """Aggregate raw interaction records into the user-item bipartite graph.

    `interactions` is an iterable of (user, item[, rating[, timestamp]])
    records with arbitrary hashable ids.  One edge is emitted per distinct
    (user, item) pair; its weight is the number of records for that pair.
    """
    users = IdMap(USER)
    items = IdMap(ITEM)
    pairs = []
    for lineno, rec in enumerate(interactions, start=1):
        try:
            u, v = rec[0], rec[1]
        except (TypeError, IndexError) as exc:
            raise ParseError(f"malformed interaction record {rec!r}", lineno) from exc
        pairs.append((users.add(u), items.add(v)))
    if not pairs:
        raise DatasetEmpty("no interactions supplied")
    graph = BipartiteGraph.from_pairs(USER, ITEM, len(users), len(items), pairs)
    return graph, users, items


def build_item_category(item_category_pairs, items: IdMap) -> tuple[BipartiteGraph, IdMap]:
    """Binary item-category memberships, keyed to an existing item map.

    Pairs whose item never occurs in the interaction data are dropped (they
    cannot influence any projection).  Duplicate (item, category) rows
    collapse to a single membership edge.
    """
    categories = IdMap(CATEGORY)
    pairs = []
    for item, cat in item_category_pairs:
        if item not in items:
            continue
        pairs.append((items.index(item), categories.add(cat)))
    graph = BipartiteGraph.from_pairs(ITEM, CATEGORY, len(items), max(len(categories), 1),
                                      pairs)
    # membership is binary even if a pair was listed twice
    graph.weight = np.minimum(graph.weight, 1.0)
    return graph, categories


def build_user_category(user_item: BipartiteGraph,
                        item_category: BipartiteGraph) -> BipartiteGraph:
    """Derive the user-category graph from the two basic bipartite graphs.

    weight(u, c) = sum over items v of weight(u, v) * [v belongs to c]:
    the total number of times the user interacted with items of category c.
    Items without any category are logged and contribute nothing.
    """
    if user_item.right_namespace != item_category.left_namespace:
        raise ValueError("user-item and item-category graphs must share the item side")
    ui = user_item.matrix()
    ic = item_category.binary_matrix()
    categorized = np.asarray(ic.sum(axis=1)).ravel() > 0
    touched = np.unique(user_item.right)
    missing = touched[~categorized[touched]]
    if missing.size:
        log.warning("%d interacted item(s) have no category; they add no "
                    "category-side signal", missing.size)
    uc = (ui @ ic).tocoo()
    mask = uc.data > 0
    return BipartiteGraph(USER, CATEGORY, user_item.n_left, item_category.n_right,
                          uc.row[mask].astype(np.int64), uc.col[mask].astype(np.int64),
                          uc.data[mask].astype(np.float64))


def project(primary: BipartiteGraph, category: BipartiteGraph, side: str,
            enrich: bool = True, uncategorized_ca_floor: int = 0) -> ProjectionGraph:
    """One-mode projection of `primary` onto `side`, enriched by `category`.

    For every node pair (i, j) on `side`, ck = number of common neighbors in
    the primary graph and ca = number of common neighbors in the category
    graph; the edge weight is w = ck * ca and the edge exists iff w > 0.
    Common-neighbor counting is set-based: edge multiplicities are ignored.

    With enrich=False the category factor is fixed at 1 for every pair with
    ck > 0, which recovers the plain interaction-only projection.  A nonzero
    `uncategorized_ca_floor` substitutes for ca when a sharing pair has no
    common category, so such pairs are not dropped.
    """
    a = primary.oriented(side)
    n = a.shape[0]
    ck_mat = (a @ a.T).tocsr()
    ck_mat.setdiag(0)
    ck_mat.eliminate_zeros()
    coo = sp.triu(ck_mat, k=1).tocoo()
    ii, jj, ck = coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.astype(np.int64)

    if not enrich:
        ca = np.ones_like(ck)
    elif len(ii) == 0:
        ca = np.zeros_like(ck)
    else:
        c = category.oriented(side)
        if c.shape[0] != n:
            raise ValueError("category graph does not cover the projection side")
        # look up ca only on pairs that already share a primary neighbor
        ca = np.asarray((c[ii].multiply(c[jj])).sum(axis=1)).ravel().astype(np.int64)
        if uncategorized_ca_floor > 0:
            ca = np.maximum(ca, uncategorized_ca_floor)

    w = (ck * ca).astype(np.float64)
    keep = w > 0
    return ProjectionGraph(side, n, ii[keep], jj[keep], ck[keep], ca[keep], w[keep])
