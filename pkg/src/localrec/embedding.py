"""Skip-gram with negative sampling over walk corpora.

For a (center, context) pair with negative samples k_1..k_K the loss is

    L = -log sigma(u_c . v_o) - sum_k log sigma(-u_c . v_k)

where u are rows of the input table and v rows of the output table.  One
pair update applies a single SGD step to u_c, v_o and the v_k, evaluating
every gradient at the pre-update values.  Negatives are drawn from the
unigram distribution of walk tokens raised to the 3/4 power.  The learning
rate decays linearly with pair count to a floor of 1e-4 of its start value.

The returned embedding is the input table.  Runs are deterministic for
threads == 1; threads > 1 trades exact reproducibility for lock-free
parallel updates on the shared tables.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EmptyCorpus
from .walks import WalkCorpus, _alias_fill

LR_FLOOR_FRACTION = 1e-4


@dataclass
class TrainConfig:
    dim: int = 100
    window: int = 10
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0

    def validate(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


class EmbeddingMatrix:
    """Dense node embeddings with word2vec-style text persistence."""

    def __init__(self, vectors: np.ndarray):
        self.vectors = np.asarray(vectors, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __getitem__(self, node):
        return self.vectors[node]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("%d %d\n" % self.vectors.shape)
            for idx in range(self.n_nodes):
                row = " ".join("%.17g" % x for x in self.vectors[idx])
                fh.write("%d %s\n" % (idx, row))

    @classmethod
    def load(cls, path) -> "EmbeddingMatrix":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            n, d = int(header[0]), int(header[1])
            vectors = np.zeros((n, d), np.float64)
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                vectors[int(parts[0])] = [float(x) for x in parts[1:]]
        return cls(vectors)


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sgns_loss(center: np.ndarray, context: np.ndarray, negatives: np.ndarray) -> float:
    """Loss of one training example, for gradient checking."""
    pos = float(_sigmoid(np.atleast_1d(center @ context))[0])
    loss = -np.log(pos)
    if len(negatives):
        neg = _sigmoid(-(negatives @ center))
        loss -= float(np.log(neg).sum())
    return float(loss)


def sgns_gradients(center, context, negatives):
    """Analytic gradients of sgns_loss wrt (center, context, negatives)."""
    g_pos = float(_sigmoid(np.atleast_1d(center @ context))[0]) - 1.0
    g_center = g_pos * context
    g_context = g_pos * center
    g_negs = np.zeros_like(negatives)
    if len(negatives):
        s = _sigmoid(negatives @ center)
        g_center = g_center + s @ negatives
        g_negs = s[:, None] * center[None, :]
    return g_center, g_context, g_negs


@njit(cache=True, nogil=True, inline="always")
def _sigmoid_scalar(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def _apply_pair(win, wout, center, context, negs, lr, grad):
    """One in-place SGD step; gradients use pre-update vectors throughout."""
    dim = win.shape[1]
    for d in range(dim):
        grad[d] = 0.0
    dot = 0.0
    for d in range(dim):
        dot += win[center, d] * wout[context, d]
    g = (_sigmoid_scalar(dot) - 1.0) * lr
    for d in range(dim):
        grad[d] += g * wout[context, d]
        wout[context, d] -= g * win[center, d]
    for k in range(len(negs)):
        neg = negs[k]
        dot = 0.0
        for d in range(dim):
            dot += win[center, d] * wout[neg, d]
        g = _sigmoid_scalar(dot) * lr
        for d in range(dim):
            grad[d] += g * wout[neg, d]
            wout[neg, d] -= g * win[center, d]
    for d in range(dim):
        win[center, d] -= grad[d]


def sgns_pair_step(win, wout, center, context, negatives, lr):
    """Public single-step entry point; same kernel the trainer runs."""
    negs = np.asarray(negatives, dtype=np.int64)
    grad = np.zeros(win.shape[1], np.float64)
    _apply_pair(win, wout, int(center), int(context), negs, float(lr), grad)


@njit(cache=True, nogil=True)
def _train_span(tokens, offsets, walk_lo, walk_hi, win, wout, window,
                n_negatives, nprob, nalias, nids, lr0, lr_floor,
                pairs_done, pairs_total, rng):
    grad = np.zeros(win.shape[1], np.float64)
    negs = np.empty(n_negatives, np.int64)
    k_noise = len(nids)
    t = pairs_done
    for w in range(walk_lo, walk_hi):
        s, e = offsets[w], offsets[w + 1]
        for ci in range(s, e):
            center = tokens[ci]
            lo = ci - window
            if lo < s:
                lo = s
            hi = ci + window + 1
            if hi > e:
                hi = e
            for xi in range(lo, hi):
                if xi == ci:
                    continue
                context = tokens[xi]
                lr = lr0 * (1.0 - t / pairs_total)
                if lr < lr_floor:
                    lr = lr_floor
                m = 0
                for _ in range(n_negatives):
                    u = rng.random() * k_noise
                    slot = int(u)
                    if u - slot >= nprob[slot]:
                        slot = nalias[slot]
                    cand = nids[slot]
                    if cand == context:
                        continue
                    negs[m] = cand
                    m += 1
                _apply_pair(win, wout, center, context, negs[:m], lr, grad)
                t += 1
    return t


def _pair_counts(corpus: WalkCorpus, window: int) -> np.ndarray:
    """Number of (center, context) pairs contributed by each walk."""
    lengths = np.diff(corpus.offsets)
    counts = np.zeros(len(lengths), np.int64)
    for i, n in enumerate(lengths):
        if n < 2:
            continue
        pos = np.arange(n)
        left = np.minimum(pos, window)
        right = np.minimum(n - 1 - pos, window)
        counts[i] = int((left + right).sum())
    return counts


def _noise_table(tokens: np.ndarray, n_nodes: int):
    counts = np.bincount(tokens, minlength=n_nodes).astype(np.float64)
    ids = np.flatnonzero(counts > 0).astype(np.int64)
    weights = counts[ids] ** 0.75
    prob = np.empty(len(ids), np.float64)
    alias = np.zeros(len(ids), np.int64)
    _alias_fill(weights, prob, alias)
    return prob, alias, ids


def train_embeddings(corpus: WalkCorpus, n_nodes: int, cfg: TrainConfig,
                     threads: int = 1) -> EmbeddingMatrix:
    """Train node embeddings from a walk corpus.

    Nodes absent from the corpus keep zero vectors.  Raises EmptyCorpus when
    no training pair exists (no walk of length >= 2).
    """
    cfg.validate()
    per_walk = _pair_counts(corpus, cfg.window)
    walk_pair_offsets = np.concatenate([[0], np.cumsum(per_walk)])
    pairs_per_epoch = int(walk_pair_offsets[-1])
    if pairs_per_epoch == 0:
        raise EmptyCorpus("walk corpus contains no context pairs")

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & 0xFFFFFFFFFFFFFFFF, 23]))
    nprob, nalias, nids = _noise_table(corpus.tokens, n_nodes)
    win = np.zeros((n_nodes, cfg.dim), np.float64)
    win[nids] = (rng.random((len(nids), cfg.dim)) - 0.5) / cfg.dim
    wout = np.zeros((n_nodes, cfg.dim), np.float64)

    pairs_total = float(pairs_per_epoch) * cfg.epochs
    lr_floor = cfg.learning_rate * LR_FLOOR_FRACTION
    n_walks = corpus.n_walks

    if threads <= 1:
        span_rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([cfg.seed & 0xFFFFFFFFFFFFFFFF, 29, 0])))
        done = 0
        for _ in range(cfg.epochs):
            done = _train_span(corpus.tokens, corpus.offsets, 0, n_walks,
                               win, wout, cfg.window, cfg.negatives,
                               nprob, nalias, nids, cfg.learning_rate,
                               lr_floor, done, pairs_total, span_rng)
    else:
        bounds = np.linspace(0, n_walks, threads + 1).astype(np.int64)
        for epoch in range(cfg.epochs):
            base = epoch * pairs_per_epoch
            jobs = []
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for s in range(threads):
                    lo, hi = int(bounds[s]), int(bounds[s + 1])
                    if lo == hi:
                        continue
                    span_rng = np.random.Generator(np.random.PCG64(
                        np.random.SeedSequence([cfg.seed & 0xFFFFFFFFFFFFFFFF,
                                                29, epoch, s + 1])))
                    jobs.append(pool.submit(
                        _train_span, corpus.tokens, corpus.offsets, lo, hi,
                        win, wout, cfg.window, cfg.negatives, nprob, nalias,
                        nids, cfg.learning_rate, lr_floor,
                        base + int(walk_pair_offsets[lo]), pairs_total,
                        span_rng))
                for j in jobs:
                    j.result()
    return EmbeddingMatrix(win)
