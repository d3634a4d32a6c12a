"""k-fold splitting and top-N ranking metrics.

The split is input-order independent: interactions are canonicalized by
(user id, item id) and each user's items are dealt round-robin into folds
starting at a per-user seeded offset, so every user keeps at least one
training interaction in every fold.  Users with a single interaction never
enter a test fold.

Metrics average per-user precision, recall, hit rate and average
reciprocal hit rank over the users with a non-empty test set.  ARHR sums
1/rank over all hits, so it can exceed 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTestSet


@dataclass
class FoldPlan:
    """Fold label per interaction, aligned with the input arrays.

    Label -1 marks interactions that stay in training for every fold.
    """
    labels: np.ndarray
    k: int

    def train_mask(self, fold: int) -> np.ndarray:
        return self.labels != fold

    def test_mask(self, fold: int) -> np.ndarray:
        return self.labels == fold


def split_interactions(user_ids, item_ids, k: int = 5, seed: int = 0) -> FoldPlan:
    if k < 2:
        raise ValueError("k must be >= 2")
    user_ids = np.asarray(user_ids, dtype=object)
    item_ids = np.asarray(item_ids, dtype=object)
    n = len(user_ids)
    labels = np.full(n, -1, np.int64)
    order = np.lexsort((item_ids, user_ids))
    uniq_users = np.unique(user_ids)
    rank_of = {u: r for r, u in enumerate(uniq_users)}
    start = 0
    while start < n:
        end = start
        u = user_ids[order[start]]
        while end < n and user_ids[order[end]] == u:
            end += 1
        m = end - start
        if m >= 2:
            rng = np.random.default_rng(
                np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 53, rank_of[u]]))
            offset = int(rng.integers(k))
            for j in range(m):
                labels[order[start + j]] = (offset + j) % k
        start = end
    return FoldPlan(labels=labels, k=k)


@dataclass
class MetricsReport:
    n: int
    precision: float
    recall: float
    hit_rate: float
    arhr: float
    n_users: int

    def to_dict(self) -> dict:
        return {"n": self.n, "precision": self.precision, "recall": self.recall,
                "hit_rate": self.hit_rate, "arhr": self.arhr,
                "n_users": self.n_users}


def score_top_n(recommendations: dict, test_items: dict, n: int) -> MetricsReport:
    """Score ranked lists against held-out items at cutoff n.

    Only users with test items are averaged; a missing or empty
    recommendation list scores zero for that user.
    """
    users = [u for u, items in test_items.items() if items]
    if not users:
        raise EmptyTestSet("no user has held-out items")
    precision = recall = hit_rate = arhr = 0.0
    for u in users:
        held = test_items[u]
        ranked = recommendations.get(u, [])[:n]
        hits = 0
        rr = 0.0
        for rank, entry in enumerate(ranked, start=1):
            item = entry[0] if isinstance(entry, tuple) else entry
            if item in held:
                hits += 1
                rr += 1.0 / rank
        precision += hits / n
        recall += hits / len(held)
        hit_rate += 1.0 if hits else 0.0
        arhr += rr
    m = len(users)
    return MetricsReport(n=n, precision=precision / m, recall=recall / m,
                         hit_rate=hit_rate / m, arhr=arhr / m, n_users=m)


def summarize_folds(reports: list) -> dict:
    """Mean and population std of each metric across folds, per cutoff."""
    out = {}
    by_n: dict[int, list] = {}
    for rep in reports:
        by_n.setdefault(rep.n, []).append(rep)
    for n, reps in sorted(by_n.items()):
        entry = {}
        for metric in ("precision", "recall", "hit_rate", "arhr"):
            vals = np.array([getattr(r, metric) for r in reps], np.float64)
            entry[metric] = float(vals.mean())
            entry[metric + "_std"] = float(vals.std())
        entry["folds"] = len(reps)
        out[n] = entry
    return out
