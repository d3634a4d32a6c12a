"""Biased second-order random walks over a projection graph.

The step rule: having moved t -> v, the unnormalized probability of
continuing to a neighbor x of v is w(v, x) * alpha, where alpha = 1/return_p
if x == t, alpha = 1 if x is also a neighbor of t, and alpha = 1/in_out_q
otherwise.  The first step out of a start node is plain weight-proportional.

With return_p == in_out_q == 1 the rule collapses to a first-order weighted
walk, which is sampled straight from per-node alias tables.  Otherwise
per-directed-edge alias tables give O(1) steps when they fit the configured
memory budget; above the budget each step falls back to an O(deg) scan with
a neighbor-marking scratch array.

Walks are reproducible at any worker count: every start node owns an
independent RNG stream derived from (seed, node).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .graph import ProjectionGraph


@dataclass
class WalkConfig:
    return_p: float = 1.0
    in_out_q: float = 1.0
    walk_length: int = 80
    walks_per_node: int = 10
    seed: int = 0
    # max total entries across per-edge alias tables before the scan fallback
    alias_edge_budget: int = 20_000_000

    def validate(self):
        if self.return_p <= 0 or self.in_out_q <= 0:
            raise ValueError("return_p and in_out_q must be positive")
        if self.walk_length < 1 or self.walks_per_node < 1:
            raise ValueError("walk_length and walks_per_node must be >= 1")


class WalkCorpus:
    """Ragged list of walks stored as one flat token array plus offsets."""

    def __init__(self, tokens: np.ndarray, offsets: np.ndarray):
        self.tokens = np.asarray(tokens, dtype=np.int32)
        self.offsets = np.asarray(offsets, dtype=np.int64)

    @property
    def n_walks(self) -> int:
        return len(self.offsets) - 1

    def __len__(self) -> int:
        return self.n_walks

    def __iter__(self):
        for w in range(self.n_walks):
            yield self.tokens[self.offsets[w]:self.offsets[w + 1]]

    def __getitem__(self, w):
        return self.tokens[self.offsets[w]:self.offsets[w + 1]]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for walk in self:
                fh.write(" ".join(str(int(t)) for t in walk))
                fh.write("\n")

    @classmethod
    def load(cls, path) -> "WalkCorpus":
        tokens, offsets = [], [0]
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                tokens.extend(int(p) for p in parts)
                offsets.append(len(tokens))
        return cls(np.asarray(tokens, np.int32), np.asarray(offsets, np.int64))


@njit(cache=True)
def _alias_fill(weights, prob, alias):
    """Vose alias construction for one discrete distribution (in place)."""
    k = len(weights)
    total = 0.0
    for i in range(k):
        total += weights[i]
    small = np.empty(k, np.int64)
    large = np.empty(k, np.int64)
    ns = 0
    nl = 0
    for i in range(k):
        prob[i] = weights[i] * k / total
        if prob[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        l = large[nl - 1]
        alias[s] = l
        prob[l] -= 1.0 - prob[s]
        if prob[l] < 1.0:
            nl -= 1
            small[ns] = l
            ns += 1
    while nl > 0:
        nl -= 1
        prob[large[nl]] = 1.0
        alias[large[nl]] = large[nl]
    while ns > 0:
        ns -= 1
        prob[small[ns]] = 1.0
        alias[small[ns]] = small[ns]


@njit(cache=True)
def _build_node_alias(indptr, weights):
    """Alias tables for the first-order step, aligned to the CSR layout."""
    nnz = len(weights)
    prob = np.empty(nnz, np.float64)
    alias = np.zeros(nnz, np.int64)
    for v in range(len(indptr) - 1):
        lo, hi = indptr[v], indptr[v + 1]
        if hi > lo:
            _alias_fill(weights[lo:hi], prob[lo:hi], alias[lo:hi])
    return prob, alias


@njit(cache=True)
def _edge_table_size(indptr, indices):
    total = np.int64(0)
    for e in range(len(indices)):
        v = indices[e]
        total += indptr[v + 1] - indptr[v]
    return total


@njit(cache=True)
def _build_edge_alias(indptr, indices, weights, return_p, in_out_q, scratch):
    """Alias tables for every directed edge (t -> v) over the neighbors of v."""
    n = len(indptr) - 1
    nnz = len(indices)
    offsets = np.zeros(nnz + 1, np.int64)
    for e in range(nnz):
        v = indices[e]
        offsets[e + 1] = offsets[e] + (indptr[v + 1] - indptr[v])
    prob = np.empty(offsets[nnz], np.float64)
    alias = np.zeros(offsets[nnz], np.int64)
    biased = np.empty(np.max(indptr[1:] - indptr[:-1]) if n else 0, np.float64)
    for t in range(n):
        for x in range(indptr[t], indptr[t + 1]):
            scratch[indices[x]] = True
        for e in range(indptr[t], indptr[t + 1]):
            v = indices[e]
            lo, hi = indptr[v], indptr[v + 1]
            for s in range(hi - lo):
                x = indices[lo + s]
                w = weights[lo + s]
                if x == t:
                    biased[s] = w / return_p
                elif scratch[x]:
                    biased[s] = w
                else:
                    biased[s] = w / in_out_q
            o = offsets[e]
            _alias_fill(biased[:hi - lo], prob[o:o + hi - lo], alias[o:o + hi - lo])
        for x in range(indptr[t], indptr[t + 1]):
            scratch[indices[x]] = False
    return prob, alias, offsets


@njit(cache=True, nogil=True, inline="always")
def _alias_draw(prob, alias, base, k, rng):
    u = rng.random() * k
    slot = int(u)
    if u - slot < prob[base + slot]:
        return slot
    return alias[base + slot]


@njit(cache=True, nogil=True)
def _walk_first_order(indptr, indices, nprob, nalias, start, length, rng, out):
    out[0] = start
    cur = start
    for step in range(1, length):
        lo = indptr[cur]
        deg = indptr[cur + 1] - lo
        if deg == 0:
            return step
        slot = _alias_draw(nprob, nalias, lo, deg, rng)
        cur = indices[lo + slot]
        out[step] = cur
    return length


@njit(cache=True, nogil=True)
def _walk_edge_alias(indptr, indices, nprob, nalias, eprob, ealias, eoffsets,
                     start, length, rng, out):
    out[0] = start
    lo = indptr[start]
    deg = indptr[start + 1] - lo
    if deg == 0 or length == 1:
        return 1
    edge = lo + _alias_draw(nprob, nalias, lo, deg, rng)
    out[1] = indices[edge]
    for step in range(2, length):
        v = indices[edge]
        lo = indptr[v]
        deg = indptr[v + 1] - lo
        if deg == 0:
            return step
        slot = _alias_draw(eprob, ealias, eoffsets[edge], deg, rng)
        edge = lo + slot
        out[step] = indices[edge]
    return length


@njit(cache=True, nogil=True)
def _walk_scan(indptr, indices, weights, nprob, nalias, return_p, in_out_q,
               start, length, rng, scratch, biased, out):
    out[0] = start
    lo = indptr[start]
    deg = indptr[start + 1] - lo
    if deg == 0 or length == 1:
        return 1
    slot = _alias_draw(nprob, nalias, lo, deg, rng)
    prev = start
    cur = indices[lo + slot]
    out[1] = cur
    for step in range(2, length):
        lo = indptr[cur]
        deg = indptr[cur + 1] - lo
        if deg == 0:
            return step
        for x in range(indptr[prev], indptr[prev + 1]):
            scratch[indices[x]] = True
        total = 0.0
        for s in range(deg):
            x = indices[lo + s]
            w = weights[lo + s]
            if x == prev:
                w = w / return_p
            elif not scratch[x]:
                w = w / in_out_q
            total += w
            biased[s] = total
        for x in range(indptr[prev], indptr[prev + 1]):
            scratch[indices[x]] = False
        r = rng.random() * total
        nxt = deg - 1
        for s in range(deg):
            if r < biased[s]:
                nxt = s
                break
        prev = cur
        cur = indices[lo + nxt]
        out[step] = cur
    return length


class WalkSampler:
    """Prepares sampling tables for a projection graph once, walks many times."""

    def __init__(self, graph: ProjectionGraph, cfg: WalkConfig):
        cfg.validate()
        self.cfg = cfg
        adj = graph.adjacency()
        self.indptr = adj.indptr.astype(np.int64)
        self.indices = adj.indices.astype(np.int64)
        self.weights = adj.data.astype(np.float64)
        self.n_nodes = graph.n_nodes
        self.nprob, self.nalias = _build_node_alias(self.indptr, self.weights)
        self.first_order = cfg.return_p == 1.0 and cfg.in_out_q == 1.0
        self.edge_tables = None
        if not self.first_order:
            size = _edge_table_size(self.indptr, self.indices)
            if size <= cfg.alias_edge_budget:
                scratch = np.zeros(self.n_nodes, np.bool_)
                self.edge_tables = _build_edge_alias(
                    self.indptr, self.indices, self.weights,
                    cfg.return_p, cfg.in_out_q, scratch)

    def _node_rng(self, node: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([self.cfg.seed & 0xFFFFFFFFFFFFFFFF, 11, node])))

    def walks_from(self, node: int) -> list[np.ndarray]:
        """All walks_per_node walks starting at `node` (empty if isolated)."""
        cfg = self.cfg
        if self.indptr[node + 1] == self.indptr[node]:
            return []
        rng = self._node_rng(node)
        out = np.empty(cfg.walk_length, np.int32)
        walks = []
        if self.first_order:
            for _ in range(cfg.walks_per_node):
                ln = _walk_first_order(self.indptr, self.indices, self.nprob,
                                       self.nalias, node, cfg.walk_length, rng, out)
                walks.append(out[:ln].copy())
        elif self.edge_tables is not None:
            eprob, ealias, eoffsets = self.edge_tables
            for _ in range(cfg.walks_per_node):
                ln = _walk_edge_alias(self.indptr, self.indices, self.nprob,
                                      self.nalias, eprob, ealias, eoffsets,
                                      node, cfg.walk_length, rng, out)
                walks.append(out[:ln].copy())
        else:
            scratch = np.zeros(self.n_nodes, np.bool_)
            biased = np.empty(self.n_nodes, np.float64)
            for _ in range(cfg.walks_per_node):
                ln = _walk_scan(self.indptr, self.indices, self.weights,
                                self.nprob, self.nalias, cfg.return_p,
                                cfg.in_out_q, node, cfg.walk_length, rng,
                                scratch, biased, out)
                walks.append(out[:ln].copy())
        return walks


def generate_walks(graph: ProjectionGraph, cfg: WalkConfig, threads: int = 1) -> WalkCorpus:
    """walks_per_node walks from every non-isolated node, in node order.

    The output is identical for any `threads` value because each start node
    draws from its own seeded stream.
    """
    sampler = WalkSampler(graph, cfg)
    nodes = range(graph.n_nodes)
    if threads <= 1:
        per_node = [sampler.walks_from(v) for v in nodes]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_node = list(pool.map(sampler.walks_from, nodes))
    tokens = []
    offsets = [0]
    for walks in per_node:
        for w in walks:
            tokens.append(w)
            offsets.append(offsets[-1] + len(w))
    flat = np.concatenate(tokens) if tokens else np.empty(0, np.int32)
    return WalkCorpus(flat, np.asarray(offsets, np.int64))


def exact_step_distribution(graph: ProjectionGraph, prev: int, cur: int,
                            return_p: float, in_out_q: float) -> dict[int, float]:
    """Closed-form next-step distribution from state (prev -> cur).

    Direct evaluation of the step rule; used to validate samplers.
    """
    adj = graph.adjacency()
    nbrs_prev = set(adj.indices[adj.indptr[prev]:adj.indptr[prev + 1]].tolist())
    lo, hi = adj.indptr[cur], adj.indptr[cur + 1]
    probs = {}
    for pos in range(lo, hi):
        x = int(adj.indices[pos])
        w = float(adj.data[pos])
        if x == prev:
            w /= return_p
        elif x not in nbrs_prev:
            w /= in_out_q
        probs[x] = w
    total = sum(probs.values())
    return {x: w / total for x, w in probs.items()}
