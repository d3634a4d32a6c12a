"""Dataset adapters: MovieLens-100K layout, generic delimited files, and a
deterministic synthetic generator in the same layout.

The synthetic catalog plants latent taste groups: each group owns a
disjoint slice of the genre list and its users draw almost all of their
interactions from the group's own items.  A small flagless blockbuster
core sits outside every group; nearly everyone has seen those items and
almost nobody liked them, which is what keeps raw co-rating counts from
giving the groups away.  Counts are exact (every user >= 20 interactions,
every item >= 1), so the generated tree satisfies the same manifest as the
original dataset.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetEmpty, IngestMismatch, ParseError

GENRES_100K = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]


@dataclass
class RawDataset:
    user_ids: list
    item_ids: list
    ratings: np.ndarray
    item_categories: dict = field(default_factory=dict)

    @property
    def n_interactions(self) -> int:
        return len(self.user_ids)

    @property
    def n_users(self) -> int:
        return len(set(self.user_ids))

    @property
    def n_items(self) -> int:
        return len(set(self.item_ids))

    def category_pairs(self) -> list:
        pairs = []
        for item, cats in self.item_categories.items():
            for c in cats:
                pairs.append((item, c))
        return pairs


def load_movielens(directory) -> RawDataset:
    """Read the u.data / u.item pair of a MovieLens-100K style tree."""
    data_path = os.path.join(directory, "u.data")
    item_path = os.path.join(directory, "u.item")
    users, items, ratings = [], [], []
    with open(data_path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 3:
                raise ParseError("expected at least 3 tab-separated fields",
                                 lineno)
            try:
                rating = float(parts[2])
            except ValueError:
                raise ParseError("rating %r is not numeric" % parts[2], lineno)
            users.append(parts[0])
            items.append(parts[1])
            ratings.append(rating)
    if not users:
        raise DatasetEmpty("u.data holds no interactions")

    categories: dict = {}
    if os.path.exists(item_path):
        with open(item_path, encoding="latin-1") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("|")
                if len(parts) < 5 + len(GENRES_100K):
                    raise ParseError(
                        "expected %d pipe-separated fields" %
                        (5 + len(GENRES_100K)), lineno)
                flags = parts[5:5 + len(GENRES_100K)]
                try:
                    cats = [GENRES_100K[g] for g, f in enumerate(flags)
                            if int(f) == 1]
                except ValueError:
                    raise ParseError("genre flags must be 0/1", lineno)
                categories[parts[0]] = cats
    return RawDataset(user_ids=users, item_ids=items,
                      ratings=np.asarray(ratings, np.float64),
                      item_categories=categories)


def _sniff_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def load_interactions_table(path) -> RawDataset:
    """Generic user,item,rating rows (comma or tab), optional header."""
    users, items, ratings = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            delim = _sniff_delimiter(line)
            parts = [p.strip() for p in line.rstrip("\n").split(delim)]
            if len(parts) < 3:
                raise ParseError("expected at least 3 columns", lineno)
            try:
                rating = float(parts[2])
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise ParseError("rating %r is not numeric" % parts[2], lineno)
            users.append(parts[0])
            items.append(parts[1])
            ratings.append(rating)
    if not users:
        raise DatasetEmpty("%s holds no interactions" % path)
    return RawDataset(user_ids=users, item_ids=items,
                      ratings=np.asarray(ratings, np.float64))


def load_categories_table(path) -> dict:
    """item,category rows; repeated items accumulate categories."""
    out: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            delim = _sniff_delimiter(line)
            parts = [p.strip() for p in line.rstrip("\n").split(delim)]
            if len(parts) < 2:
                raise ParseError("expected item,category columns", lineno)
            out.setdefault(parts[0], [])
            if parts[1] and parts[1] not in out[parts[0]]:
                out[parts[0]].append(parts[1])
    return out


def verify_counts(raw: RawDataset, users: int | None = None,
                  items: int | None = None,
                  interactions: int | None = None) -> None:
    problems = []
    if users is not None and raw.n_users != users:
        problems.append("users: expected %d, got %d" % (users, raw.n_users))
    if items is not None and raw.n_items != items:
        problems.append("items: expected %d, got %d" % (items, raw.n_items))
    if interactions is not None and raw.n_interactions != interactions:
        problems.append("interactions: expected %d, got %d"
                        % (interactions, raw.n_interactions))
    if problems:
        raise IngestMismatch("; ".join(problems))


def generate_synthetic_movielens(out_dir, n_users: int = 943,
                                 n_items: int = 1682,
                                 n_interactions: int = 100000,
                                 n_groups: int = 4, seed: int = 7) -> None:
    """Write a u.data / u.item tree with planted taste-group structure.

    Items split into a flagless blockbuster core plus per-group pools whose
    flags come only from the group's own genre slice.  Users stay inside
    their group's pool except for the core, which they watch widely and
    rate poorly, so group membership never shows up in the rating values a
    user shares with the other groups.
    """
    if n_interactions < 20 * n_users:
        raise ValueError("need at least 20 interactions per user")
    if n_interactions > n_users * n_items:
        raise ValueError("more interactions than unique (user, item) pairs")
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 61]))

    # partition the 18 named genres (index 0 = "unknown" stays out) into groups
    genre_ids = np.arange(1, len(GENRES_100K))
    rng.shuffle(genre_ids)
    group_genres = [genre_ids[g::n_groups] for g in range(n_groups)]

    # the first few items form the flagless widely-watched core
    n_core = max(2, int(round(0.014 * n_items)))
    item_group = np.full(n_items, -1, np.int64)
    item_group[n_core:] = np.arange(n_items - n_core) % n_groups
    item_flags = np.zeros((n_items, len(GENRES_100K)), np.int64)
    for i in range(n_core, n_items):
        own = group_genres[item_group[i]]
        k = min(len(own), int(rng.integers(3, 5)))
        item_flags[i, rng.choice(own, size=k, replace=False)] = 1

    core_weight = 1.0 / (np.arange(n_core) + 1.0) ** 0.5
    core_weight = core_weight / core_weight.sum()
    group_pool = [np.flatnonzero(item_group == g) for g in range(n_groups)]
    quality = np.full(n_items, 3.7)

    user_group = rng.integers(0, n_groups, size=n_users)
    cap = min(200, n_items)
    raw_deg = rng.lognormal(mean=np.log(n_interactions / n_users * 0.92),
                            sigma=0.45, size=n_users)
    degrees = np.clip(np.round(raw_deg).astype(np.int64), 20, cap)
    diff = n_interactions - int(degrees.sum())
    step = 1 if diff > 0 else -1
    u = 0
    while diff != 0:
        cand = u % n_users
        if 20 <= degrees[cand] + step <= cap:
            degrees[cand] += step
            diff -= step
        u += 1

    def rate(mean, sd):
        return int(np.clip(np.round(mean + rng.normal(0, sd)), 1, 5))

    users_out, items_out, ratings_out = [], [], []
    item_seen_count = np.zeros(n_items, np.int64)
    user_items: list = []
    for u in range(n_users):
        g = user_group[u]
        deg = int(degrees[u])
        own_pool = group_pool[g]
        core = min(n_core, max(1, int(round(0.15 * deg))))
        own = deg - core
        spill = 0
        if own > len(own_pool):  # tiny catalogs: overflow past the own pool
            spill = own - len(own_pool)
            own = len(own_pool)
        chosen = []
        for i in rng.choice(own_pool, size=own, replace=False):
            chosen.append((int(i), rate(quality[i], 0.35)))
        for i in rng.choice(n_core, size=core, replace=False, p=core_weight):
            chosen.append((int(i), rate(2.0, 1.3)))
        if spill:
            outside = np.flatnonzero((item_group != g) & (item_group >= 0))
            for i in rng.choice(outside, size=spill, replace=False):
                chosen.append((int(i), rate(3.0, 1.0)))
        user_items.append({i for i, _ in chosen})
        item_seen_count[[i for i, _ in chosen]] += 1
        for i, r in chosen:
            users_out.append(u)
            items_out.append(i)
            ratings_out.append(r)

    # give orphaned items one interaction by swapping out a well-covered
    # item; prefer a user from the orphan's own group
    missing = np.flatnonzero(item_seen_count == 0)
    rows_by_pair = {(users_out[r], items_out[r]): r
                    for r in range(len(users_out))}
    for i in missing:
        placed = False
        for same_group_only in (True, False):
            for u in rng.permutation(n_users):
                g = item_group[i]
                if same_group_only and g >= 0 and user_group[u] != g:
                    continue
                if int(i) in user_items[u]:
                    continue
                swappable = [j for j in user_items[u]
                             if item_seen_count[j] >= 2
                             and (not same_group_only or item_group[j] == g)]
                if not swappable:
                    continue
                j = max(swappable, key=lambda x: (item_seen_count[x], x))
                row = rows_by_pair.pop((u, j))
                user_items[u].discard(j)
                user_items[u].add(int(i))
                item_seen_count[j] -= 1
                item_seen_count[i] += 1
                items_out[row] = int(i)
                rows_by_pair[(u, int(i))] = row
                placed = True
                break
            if placed:
                break
        if not placed:
            raise RuntimeError("could not place item %d" % i)

    os.makedirs(out_dir, exist_ok=True)
    order = rng.permutation(len(users_out))
    base_ts = 874000000
    with open(os.path.join(out_dir, "u.data"), "w", encoding="latin-1") as fh:
        for r in order:
            ts = base_ts + int(rng.integers(0, 20000000))
            fh.write("%d\t%d\t%d\t%d\n" % (users_out[r] + 1, items_out[r] + 1,
                                           ratings_out[r], ts))
    with open(os.path.join(out_dir, "u.item"), "w", encoding="latin-1") as fh:
        for i in range(n_items):
            year = 1990 + (i % 9)
            flags = "|".join(str(f) for f in item_flags[i])
            fh.write("%d|Synthetic Movie %04d (%d)|01-Jan-%d|||%s\n"
                     % (i + 1, i + 1, year, year, flags))
    with open(os.path.join(out_dir, "u.genre"), "w", encoding="latin-1") as fh:
        for g, name in enumerate(GENRES_100K):
            fh.write("%s|%d\n" % (name, g))
