"""Top-N recommendation: four base scorers plus a two-phase local scheme.

Phase one matches each user cluster to its preferred item clusters via the
cluster-level interaction counts; phase two runs a classic recommender
inside the (user cluster x matched items) block.  Lists shorter than N are
padded from the next-ranked item clusters by popularity.

Bases: user-based CF (cosine over mean-centered rows), item-based CF
(cosine over mean-centered columns, raw-rating weighting), weighted NMF
(multiplicative updates on observed entries only), and global popularity.
Implicit datasets skip mean-centering and treat every interaction as 1.

All rankings break score ties by ascending item index; items a user
already interacted with in training are never recommended back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .clustering import ClusterModel, kmeans
from .errors import InvalidK

NMF_EPS = 1e-12


@dataclass
class RatingMatrix:
    """Interaction block over a subset of users and items.

    `users` and `items` hold the global indices (ascending) behind the
    local rows/columns of `ratings`.
    """
    users: np.ndarray
    items: np.ndarray
    ratings: sp.csr_matrix
    implicit: bool = False

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)


def build_rating_matrix(user_idx, item_idx, values, users, items,
                        implicit: bool = False) -> RatingMatrix:
    """Restrict interactions to the given user/item subsets.

    Duplicate (user, item) pairs keep the last value seen.
    """
    users = np.asarray(sorted(set(np.asarray(users, np.int64).tolist())), np.int64)
    items = np.asarray(sorted(set(np.asarray(items, np.int64).tolist())), np.int64)
    user_idx = np.asarray(user_idx, np.int64)
    item_idx = np.asarray(item_idx, np.int64)
    values = np.ones(len(user_idx), np.float64) if implicit \
        else np.asarray(values, np.float64)

    upos = np.searchsorted(users, user_idx)
    upos_ok = (upos < len(users))
    upos_ok &= users[np.minimum(upos, len(users) - 1)] == user_idx
    ipos = np.searchsorted(items, item_idx)
    ipos_ok = (ipos < len(items))
    ipos_ok &= items[np.minimum(ipos, len(items) - 1)] == item_idx
    keep = upos_ok & ipos_ok

    u_local = upos[keep]
    i_local = ipos[keep]
    vals = values[keep]
    if len(u_local):
        key = u_local * np.int64(len(items)) + i_local
        perm = np.lexsort((np.arange(len(key)), key))
        k_sorted = key[perm]
        last = np.flatnonzero(np.r_[k_sorted[1:] != k_sorted[:-1], True])
        sel = perm[last]
        u_local, i_local, vals = u_local[sel], i_local[sel], vals[sel]
    mat = sp.csr_matrix((vals, (u_local, i_local)),
                        shape=(len(users), len(items)))
    return RatingMatrix(users=users, items=items, ratings=mat, implicit=implicit)


def item_popularity(block: RatingMatrix) -> np.ndarray:
    """Interaction count per local item column."""
    return np.asarray((block.ratings != 0).sum(axis=0)).ravel().astype(np.float64)


def _centered_rows(block: RatingMatrix):
    """(dense ratings, mask, centered) with per-user means over observed."""
    x = block.ratings.toarray()
    mask = (block.ratings != 0).toarray()
    if block.implicit:
        return x, mask, mask.astype(np.float64)
    counts = mask.sum(axis=1)
    sums = x.sum(axis=1)
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return x, mask, (x - means[:, None]) * mask


def score_ubcf(block: RatingMatrix, neighborhood_size: int = 25):
    """User-based CF scores plus the mask of users needing a fallback.

    Neighbors are the top positively-similar users; scores are their
    centered ratings weighted by similarity, normalized by the summed
    similarity of the neighborhood.
    """
    _, mask, centered = _centered_rows(block)
    n_u, n_i = centered.shape
    norms = np.sqrt((centered ** 2).sum(axis=1))
    safe = np.where(norms > 0, norms, 1.0)
    unit = centered / safe[:, None]
    sims = unit @ unit.T
    np.fill_diagonal(sims, 0.0)

    scores = np.zeros((n_u, n_i), np.float64)
    fallback = np.zeros(n_u, bool)
    rated = mask.any(axis=1)
    for u in range(n_u):
        if not rated[u]:
            fallback[u] = True
            continue
        order = np.argsort(-sims[u], kind="stable")[:neighborhood_size]
        sel = order[sims[u, order] > 0]
        if len(sel) == 0:
            fallback[u] = True
            continue
        w = sims[u, sel]
        scores[u] = (w @ centered[sel]) / w.sum()
    return scores, fallback


def score_ibcf(block: RatingMatrix, neighborhood_size: int = 30):
    """Item-based CF: each candidate is scored from the user's raw ratings
    of its most similar items (cosine over mean-centered columns)."""
    x, mask, _ = _centered_rows(block)
    if block.implicit:
        raw = mask.astype(np.float64)
        centered_cols = raw
    else:
        raw = x
        counts = mask.sum(axis=0)
        sums = x.sum(axis=0)
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        centered_cols = (x - means[None, :]) * mask
    norms = np.sqrt((centered_cols ** 2).sum(axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    unit = centered_cols / safe[None, :]
    sims = unit.T @ unit
    np.fill_diagonal(sims, 0.0)

    n_i = block.n_items
    rows, cols, vals = [], [], []
    for j in range(n_i):
        order = np.argsort(-sims[j], kind="stable")[:neighborhood_size]
        sel = order[sims[j, order] > 0]
        rows.append(np.full(len(sel), j, np.int64))
        cols.append(sel)
        vals.append(sims[j, sel])
    if rows:
        k_mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_i, n_i)).tocsr()
    else:
        k_mat = sp.csr_matrix((n_i, n_i))
    scores = raw @ k_mat.T.toarray()
    fallback = ~mask.any(axis=1)
    return scores, fallback


def weighted_nmf(ratings: sp.csr_matrix, rank: int, max_iter: int = 200,
                 seed: int = 0):
    """Multiplicative-update NMF fitted on observed entries only.

    Returns (W, H, objective history); the squared error over the observed
    mask is non-increasing across iterations.
    """
    n_u, n_i = ratings.shape
    if rank < 1 or rank > min(n_u, n_i):
        raise InvalidK("nmf rank %d not in [1, %d]" % (rank, min(n_u, n_i)))
    r = ratings.tocsr().astype(np.float64)
    rows = np.repeat(np.arange(n_u), np.diff(r.indptr))
    cols = r.indices
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 41]))
    w = 0.1 + 0.9 * rng.random((n_u, rank))
    h = 0.1 + 0.9 * rng.random((rank, n_i))

    def predict_obs():
        return np.einsum("ij,ij->i", w[rows], h[:, cols].T)

    history = []
    for _ in range(max_iter):
        pred = sp.csr_matrix((predict_obs(), cols.copy(), r.indptr.copy()),
                             shape=r.shape)
        w *= np.asarray(r @ h.T) / (np.asarray(pred @ h.T) + NMF_EPS)
        pred = sp.csr_matrix((predict_obs(), cols.copy(), r.indptr.copy()),
                             shape=r.shape)
        h *= np.asarray(w.T @ r) / (np.asarray(w.T @ pred) + NMF_EPS)
        history.append(float(((r.data - predict_obs()) ** 2).sum()))
    return w, h, history


def score_nmf(block: RatingMatrix, rank: int = 40, max_iter: int = 200,
              seed: int = 0):
    ratings = (block.ratings != 0).astype(np.float64) if block.implicit \
        else block.ratings
    eff_rank = min(rank, block.n_users, block.n_items)
    w, h, _ = weighted_nmf(ratings.tocsr(), eff_rank, max_iter=max_iter, seed=seed)
    fallback = ~np.asarray((block.ratings != 0).sum(axis=1)).ravel().astype(bool)
    return w @ h, fallback


def score_popular(block: RatingMatrix):
    pop = item_popularity(block)
    scores = np.tile(pop, (block.n_users, 1))
    return scores, np.zeros(block.n_users, bool)


_BASES = {"ubcf": score_ubcf, "ibcf": score_ibcf, "nmf": score_nmf,
          "popular": score_popular}


@dataclass
class BaseParams:
    ubcf_neighbors: int = 25
    ibcf_neighbors: int = 30
    nmf_rank: int = 40
    nmf_iters: int = 200
    seed: int = 0


def _block_scores(block: RatingMatrix, base: str, params: BaseParams):
    if base == "ubcf":
        return score_ubcf(block, params.ubcf_neighbors)
    if base == "ibcf":
        return score_ibcf(block, params.ibcf_neighbors)
    if base == "nmf":
        return score_nmf(block, params.nmf_rank, params.nmf_iters, params.seed)
    if base == "popular":
        return score_popular(block)
    raise ValueError("unknown base recommender %r" % base)


def rank_block(block: RatingMatrix, base: str, n: int,
               params: BaseParams | None = None) -> dict[int, list]:
    """Top-n per user of the block, keyed by global user index.

    Users without usable signal for the base are ranked by in-block
    popularity instead.  Seen items are excluded.  Ties break by ascending
    item index (local column order equals global order).
    """
    params = params or BaseParams()
    if block.n_items == 0:
        return {int(u): [] for u in block.users}
    scores, fallback = _block_scores(block, base, params)
    if fallback.any():
        pop = item_popularity(block)
        scores[fallback] = pop[None, :]
    seen = (block.ratings != 0).toarray()
    scores = np.where(seen, -np.inf, scores)
    out = {}
    for u_local, u_global in enumerate(block.users):
        row = scores[u_local]
        order = np.argsort(-row, kind="stable")[:n]
        order = order[np.isfinite(row[order])]
        out[int(u_global)] = [(int(block.items[j]), float(row[j])) for j in order]
    return out


@dataclass
class ClusterBipartite:
    """Interaction counts aggregated to (user cluster, item cluster) cells."""
    weights: np.ndarray

    @classmethod
    def build(cls, user_assign: np.ndarray, item_assign: np.ndarray,
              user_idx: np.ndarray, item_idx: np.ndarray,
              k_user: int, k_item: int) -> "ClusterBipartite":
        weights = np.zeros((k_user, k_item), np.float64)
        np.add.at(weights, (user_assign[user_idx], item_assign[item_idx]), 1.0)
        return cls(weights=weights)


def match_item_clusters(cb: ClusterBipartite, user_cluster: int) -> np.ndarray:
    """Item clusters this user cluster gravitates to.

    Two-way 1-d k-means on the weight row, seeded at its min and max, keeps
    the higher-mean class.  Degenerate rows: all-zero rows take the single
    globally most-interacted item cluster; constant nonzero rows take every
    cluster.
    """
    row = cb.weights[user_cluster]
    k_item = len(row)
    if k_item == 1:
        return np.array([0], np.int64)
    if not row.any():
        totals = cb.weights.sum(axis=0)
        return np.array([int(np.argmax(totals))], np.int64)
    if row.max() == row.min():
        return np.arange(k_item, dtype=np.int64)
    init = np.array([[row.min()], [row.max()]], np.float64)
    km = kmeans(row.reshape(-1, 1), 2, init_centroids=init)
    means = np.array([row[km.assignments == c].mean() for c in (0, 1)])
    keep = int(np.argmax(means))
    return np.flatnonzero(km.assignments == keep).astype(np.int64)


def _pad_recommendations(recs: list, n: int, user_cluster: int,
                         cb: ClusterBipartite, item_assign: np.ndarray,
                         popularity: np.ndarray, seen_items: set,
                         skip_clusters: set) -> list:
    """Extend below-n lists from the next-ranked item clusters.

    Clusters are taken by descending cluster weight (ties by id); items
    inside each by descending global popularity (ties by id).  Padded items
    get score 0.
    """
    if len(recs) >= n:
        return recs
    have = {item for item, _ in recs}
    w_row = cb.weights[user_cluster]
    order = np.lexsort((np.arange(len(w_row)), -w_row))
    for ic in order:
        if int(ic) in skip_clusters:
            continue
        items = np.flatnonzero(item_assign == ic)
        if len(items) == 0:
            continue
        iorder = np.lexsort((items, -popularity[items]))
        for j in items[iorder]:
            j = int(j)
            if j in have or j in seen_items:
                continue
            recs.append((j, 0.0))
            have.add(j)
            if len(recs) >= n:
                return recs
    return recs


def two_phase(user_idx: np.ndarray, item_idx: np.ndarray, values: np.ndarray,
              user_model: ClusterModel, item_model: ClusterModel,
              n_users: int, n_items: int, base: str = "ubcf", n: int = 10,
              implicit: bool = False,
              params: BaseParams | None = None) -> dict[int, list]:
    """Cluster-then-recommend top-n lists for every user.

    Users in the cold cluster receive the global popularity list.  Everyone
    else is scored inside the block formed by their user cluster and its
    matched item clusters, padded to n from remaining clusters when needed.
    """
    params = params or BaseParams()
    user_idx = np.asarray(user_idx, np.int64)
    item_idx = np.asarray(item_idx, np.int64)
    values = np.asarray(values, np.float64)
    cb = ClusterBipartite.build(user_model.assignments, item_model.assignments,
                                user_idx, item_idx, user_model.k, item_model.k)
    global_pop = np.zeros(n_items, np.float64)
    seen_pairs = sp.csr_matrix(
        (np.ones(len(user_idx)), (user_idx, item_idx)),
        shape=(n_users, n_items))
    global_pop = np.asarray((seen_pairs != 0).sum(axis=0)).ravel().astype(np.float64)

    def seen_of(u: int) -> set:
        return set(seen_pairs.indices[seen_pairs.indptr[u]:seen_pairs.indptr[u + 1]].tolist())

    out: dict[int, list] = {}
    pop_order = np.lexsort((np.arange(n_items), -global_pop))
    for uc in range(user_model.k):
        members = user_model.members(uc)
        if len(members) == 0:
            continue
        if user_model.cold_cluster is not None and uc == user_model.cold_cluster:
            for u in members:
                seen = seen_of(int(u))
                recs = []
                for j in pop_order:
                    if int(j) in seen:
                        continue
                    recs.append((int(j), float(global_pop[j])))
                    if len(recs) >= n:
                        break
                out[int(u)] = recs
            continue
        matched = match_item_clusters(cb, uc)
        matched_set = set(int(c) for c in matched)
        cand = np.flatnonzero(np.isin(item_model.assignments, matched))
        block = build_rating_matrix(user_idx, item_idx, values,
                                    users=members, items=cand,
                                    implicit=implicit)
        ranked = rank_block(block, base, n, params)
        for u in members:
            recs = ranked.get(int(u), [])
            if len(recs) < n:
                recs = _pad_recommendations(
                    recs, n, uc, cb, item_model.assignments, global_pop,
                    seen_of(int(u)), matched_set)
            out[int(u)] = recs
    return out


def recommend_global(user_idx, item_idx, values, n_users: int, n_items: int,
                     base: str = "ubcf", n: int = 10, implicit: bool = False,
                     params: BaseParams | None = None) -> dict[int, list]:
    """Plain single-block recommender over all users and items."""
    block = build_rating_matrix(user_idx, item_idx, values,
                                users=np.arange(n_users),
                                items=np.arange(n_items), implicit=implicit)
    return rank_block(block, base, n, params or BaseParams())


def save_recommendations(path, recs: dict[int, list],
                         user_external=None, item_external=None) -> None:
    """CSV rows user_id,rank,item_id,score ordered by user then rank."""
    umap = user_external or (lambda x: x)
    imap = item_external or (lambda x: x)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("user_id,rank,item_id,score\n")
        for u in sorted(recs):
            for rank, (item, score) in enumerate(recs[u], start=1):
                fh.write("%s,%d,%s,%.17g\n" % (umap(u), rank, imap(item), score))


def load_recommendations(path) -> dict[str, list]:
    out: dict[str, list] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        assert header.strip() == "user_id,rank,item_id,score"
        for line in fh:
            if not line.strip():
                continue
            user, rank, item, score = line.rstrip("\n").split(",")
            out.setdefault(user, []).append((int(rank), item, float(score)))
    for user in out:
        out[user].sort()
    return {u: [(item, score) for _, item, score in rows]
            for u, rows in out.items()}
