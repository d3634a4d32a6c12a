"""End-to-end orchestration: ingest, project, embed, cluster, recommend,
evaluate, with per-stage caching.

Stage keys chain: every key hashes the stage parameters plus the keys of
its parents, so upstream changes invalidate downstream artifacts without
hashing their bytes.  Ingested interactions are deduplicated (last value
wins) and canonically ordered by (user id, item id), which makes every
derived index, walk and split independent of the input file's row order.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass

import numpy as np

from . import graph as g
from .cache import StageCache, file_digest, stage_key
from .clustering import ClusterModel, cluster_vectors, save_center_diagnostics
from .config import n_values
from .datasets import (RawDataset, load_categories_table,
                       load_interactions_table, load_movielens, verify_counts)
from .embedding import EmbeddingMatrix, TrainConfig, train_embeddings
from .errors import LocalRecError, StageError
from .evaluation import score_top_n, split_interactions, summarize_folds
from .recommend import (BaseParams, load_recommendations, recommend_global,
                        save_recommendations, two_phase)
from .walks import WalkConfig, generate_walks


def derive_seed(seed: int, *tags) -> int:
    """Stable per-stage seed stream from a root seed and string tags."""
    crc = zlib.crc32("|".join(str(t) for t in tags).encode("utf-8"))
    return (int(seed) * 2654435761 + crc) & 0x7FFFFFFF


@dataclass
class IngestResult:
    raw: RawDataset
    users: g.IdMap
    items: g.IdMap
    categories: g.IdMap
    user_item: g.BipartiteGraph
    item_cat: g.BipartiteGraph
    u_idx: np.ndarray
    i_idx: np.ndarray
    values: np.ndarray
    user_ext: list
    item_ext: list
    dataset_key: str

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)


def _stage(name: str, fn):
    try:
        return fn()
    except LocalRecError:
        raise
    except Exception as exc:  # keep the stage name in the failure
        raise StageError(name, exc) from exc


def ingest(cfg: dict) -> IngestResult:
    path = cfg["dataset.path"]
    if not path:
        raise LocalRecError("dataset.path is not set")
    if cfg["dataset.format"] == "movielens":
        raw = load_movielens(path)
        digest = file_digest(os.path.join(path, "u.data"))
        item_file = os.path.join(path, "u.item")
        cat_digest = file_digest(item_file) if os.path.exists(item_file) else ""
    else:
        raw = load_interactions_table(path)
        digest = file_digest(path)
        cat_digest = ""
        if cfg["dataset.categories"]:
            raw.item_categories = load_categories_table(cfg["dataset.categories"])
            cat_digest = file_digest(cfg["dataset.categories"])

    expected = [cfg["dataset.expected_users"] or None,
                cfg["dataset.expected_items"] or None,
                cfg["dataset.expected_interactions"] or None]
    verify_counts(raw, *expected)

    # dedupe keep-last, then canonical (user, item) order
    seen: dict = {}
    for pos in range(raw.n_interactions):
        seen[(raw.user_ids[pos], raw.item_ids[pos])] = pos
    order = sorted(seen, key=lambda k: (str(k[0]), str(k[1])))
    user_ext = [u for u, _ in order]
    item_ext = [i for _, i in order]
    values = np.array([raw.ratings[seen[k]] for k in order], np.float64)

    user_item, users, items = g.build_user_item(zip(user_ext, item_ext))
    cat_pairs = sorted(raw.category_pairs(), key=lambda p: (str(p[0]), str(p[1])))
    item_cat, categories = g.build_item_category(cat_pairs, items)

    u_idx = np.array([users.index(u) for u in user_ext], np.int64)
    i_idx = np.array([items.index(i) for i in item_ext], np.int64)
    key = stage_key("ingest", {
        "digest": digest, "categories": cat_digest,
        "format": cfg["dataset.format"], "implicit": cfg["dataset.implicit"]})
    return IngestResult(raw=raw, users=users, items=items, categories=categories,
                        user_item=user_item, item_cat=item_cat,
                        u_idx=u_idx, i_idx=i_idx, values=values,
                        user_ext=user_ext, item_ext=item_ext, dataset_key=key)


def _cached(cache: StageCache, stage: str, key: str, name: str,
            compute, save, load):
    hit = cache.lookup(stage, key, name)
    if hit is not None:
        return load(hit)
    obj = compute()
    cache.store(stage, key, name, lambda p: save(obj, p))
    return obj


def _auto(v):
    return None if not v else v


@dataclass
class SideArtifacts:
    projection: g.ProjectionGraph
    embedding: EmbeddingMatrix
    clusters: ClusterModel
    keys: dict
    detection: object = None  # CenterDetection when computed this run


def train_side(ing: IngestResult, train_graph: g.BipartiteGraph,
               category: g.BipartiteGraph, side: str, cfg: dict,
               cache: StageCache, tag: str) -> SideArtifacts:
    proj_key = stage_key("project", {
        "side": side, "tag": tag, "enrich": cfg["projection.enrich"],
        "floor": cfg["projection.uncategorized_ca_floor"]},
        [ing.dataset_key])
    proj = _cached(cache, "project", proj_key, "projection.tsv",
                   lambda: _stage("project", lambda: g.project(
                       train_graph, category, side,
                       enrich=cfg["projection.enrich"],
                       uncategorized_ca_floor=cfg["projection.uncategorized_ca_floor"])),
                   lambda obj, p: obj.save(p), g.ProjectionGraph.load)

    walk_cfg = WalkConfig(return_p=cfg["walks.return_p"],
                          in_out_q=cfg["walks.in_out_q"],
                          walk_length=cfg["walks.length"],
                          walks_per_node=cfg["walks.per_node"],
                          seed=derive_seed(cfg["seed"], tag, side, "walks"))
    train_cfg = TrainConfig(dim=cfg["embedding.dim"],
                            window=cfg["embedding.window"],
                            negatives=cfg["embedding.negatives"],
                            epochs=cfg["embedding.epochs"],
                            learning_rate=cfg["embedding.learning_rate"],
                            seed=derive_seed(cfg["seed"], tag, side, "sgns"))
    emb_key = stage_key("embed", {
        "walks": vars(walk_cfg), "train": vars(train_cfg),
        "threads": cfg["threads"]}, [proj_key])

    def compute_embedding():
        corpus = _stage("walk", lambda: generate_walks(
            proj, walk_cfg, threads=cfg["threads"]))
        return _stage("embed", lambda: train_embeddings(
            corpus, proj.n_nodes, train_cfg, threads=cfg["threads"]))

    emb = _cached(cache, "embed", emb_key, "embedding.txt",
                  compute_embedding, lambda obj, p: obj.save(p),
                  EmbeddingMatrix.load)

    cluster_key = stage_key("cluster", {
        "p": cfg["clustering.p"], "theta": cfg["clustering.theta"],
        "k_neighbors": cfg["clustering.k_neighbors"],
        "seed": derive_seed(cfg["seed"], tag, side, "cluster")}, [emb_key])

    detection_box = []

    def compute_clusters():
        model, detection = _stage("cluster", lambda: cluster_vectors(
            emb.vectors, p=_auto(cfg["clustering.p"]),
            theta=_auto(cfg["clustering.theta"]),
            k_neighbors=_auto(cfg["clustering.k_neighbors"]),
            seed=derive_seed(cfg["seed"], tag, side, "cluster")))
        detection_box.append(detection)
        return model

    clusters = _cached(cache, "cluster", cluster_key, "clusters.tsv",
                       compute_clusters, lambda obj, p: obj.save(p),
                       ClusterModel.load)
    return SideArtifacts(projection=proj, embedding=emb, clusters=clusters,
                         keys={"project": proj_key, "embed": emb_key,
                               "cluster": cluster_key},
                         detection=detection_box[0] if detection_box else None)


def train_components(ing: IngestResult, train_mask: np.ndarray, cfg: dict,
                     cache: StageCache, tag: str):
    u_idx = ing.u_idx[train_mask]
    i_idx = ing.i_idx[train_mask]
    pairs = np.column_stack([u_idx, i_idx])
    train_graph = g.BipartiteGraph.from_pairs(
        g.USER, g.ITEM, ing.n_users, ing.n_items, pairs)
    user_cat = _stage("project", lambda: g.build_user_category(
        train_graph, ing.item_cat))
    user_side = train_side(ing, train_graph, user_cat, g.USER, cfg, cache, tag)
    item_side = train_side(ing, train_graph, ing.item_cat, g.ITEM, cfg, cache, tag)
    return user_side, item_side


def _base_params(cfg: dict, tag: str) -> BaseParams:
    return BaseParams(ubcf_neighbors=cfg["recommend.ubcf_neighbors"],
                      ibcf_neighbors=cfg["recommend.ibcf_neighbors"],
                      nmf_rank=cfg["recommend.nmf_rank"],
                      nmf_iters=cfg["recommend.nmf_iters"],
                      seed=derive_seed(cfg["seed"], tag, "base"))


def _recs_to_internal(loaded: dict) -> dict:
    return {int(u): [(int(i), s) for i, s in rows] for u, rows in loaded.items()}


def recommend_for_training(ing: IngestResult, train_mask: np.ndarray,
                           cfg: dict, cache: StageCache, tag: str, n: int):
    """Top-n lists (internal ids) for every user, per the configured model."""
    u_idx = ing.u_idx[train_mask]
    i_idx = ing.i_idx[train_mask]
    values = ing.values[train_mask]
    params = _base_params(cfg, tag)
    rec_payload = {"tag": tag, "model": cfg["model"], "n": n,
                   "base": cfg["recommend.base"],
                   "implicit": cfg["dataset.implicit"],
                   "params": vars(params)}

    if cfg["model"] == "original":
        key = stage_key("recommend", rec_payload, [ing.dataset_key])
        return _cached(
            cache, "recommend", key, "recommendations.csv",
            lambda: _stage("recommend", lambda: recommend_global(
                u_idx, i_idx, values, ing.n_users, ing.n_items,
                base=cfg["recommend.base"], n=n,
                implicit=cfg["dataset.implicit"], params=params)),
            lambda obj, p: save_recommendations(p, obj),
            lambda p: _recs_to_internal(load_recommendations(p)))

    user_side, item_side = train_components(ing, train_mask, cfg, cache, tag)
    key = stage_key("recommend", rec_payload,
                    [user_side.keys["cluster"], item_side.keys["cluster"]])
    return _cached(
        cache, "recommend", key, "recommendations.csv",
        lambda: _stage("recommend", lambda: two_phase(
            u_idx, i_idx, values, user_side.clusters, item_side.clusters,
            ing.n_users, ing.n_items, base=cfg["recommend.base"], n=n,
            implicit=cfg["dataset.implicit"], params=params)),
        lambda obj, p: save_recommendations(p, obj),
        lambda p: _recs_to_internal(load_recommendations(p)))


def evaluate_cv(cfg: dict, cache: StageCache | None = None) -> dict:
    """k-fold cross-validated ranking metrics for the configured model."""
    cache = cache or StageCache(cfg.get("cache_dir") or None)
    ing = ingest(cfg)
    folds = cfg["eval.folds"]
    plan = split_interactions(ing.user_ext, ing.item_ext, k=folds,
                              seed=derive_seed(cfg["seed"], "split"))
    cutoffs = n_values(cfg)
    n_max = max(cutoffs)
    per_fold = []
    reports = []
    for fold in range(folds):
        train_mask = plan.train_mask(fold)
        test_mask = plan.test_mask(fold)
        recs = recommend_for_training(ing, train_mask, cfg, cache,
                                      tag="fold%d" % fold, n=n_max)
        test: dict = {}
        for u, i in zip(ing.u_idx[test_mask], ing.i_idx[test_mask]):
            test.setdefault(int(u), set()).add(int(i))
        for n in cutoffs:
            rep = _stage("evaluate", lambda: score_top_n(recs, test, n))
            reports.append(rep)
            entry = rep.to_dict()
            entry["fold"] = fold
            per_fold.append(entry)
    return {"model": cfg["model"], "base": cfg["recommend.base"],
            "folds": folds, "seed": cfg["seed"],
            "cutoffs": {str(n): v for n, v in summarize_folds(reports).items()},
            "per_fold": per_fold}


def run_full(cfg: dict, out_dir, cache: StageCache | None = None) -> dict:
    """Train on the complete dataset and write every artifact to out_dir."""
    cache = cache or StageCache(cfg.get("cache_dir") or None)
    os.makedirs(out_dir, exist_ok=True)
    ing = ingest(cfg)
    mask = np.ones(len(ing.u_idx), bool)
    paths = {}

    ing.users.save(os.path.join(out_dir, "users.tsv"))
    ing.items.save(os.path.join(out_dir, "items.tsv"))
    paths["users"] = os.path.join(out_dir, "users.tsv")
    paths["items"] = os.path.join(out_dir, "items.tsv")

    if cfg["model"] == "clustered":
        user_side, item_side = train_components(ing, mask, cfg, cache, "full")
        for side, art in (("user", user_side), ("item", item_side)):
            pp = os.path.join(out_dir, "%s_projection.tsv" % side)
            art.projection.save(pp)
            paths["%s_projection" % side] = pp
            ep = os.path.join(out_dir, "%s_embedding.txt" % side)
            art.embedding.save(ep)
            paths["%s_embedding" % side] = ep
            cp = os.path.join(out_dir, "%s_clusters.tsv" % side)
            art.clusters.save(cp)
            paths["%s_clusters" % side] = cp
            if art.detection is not None:
                dp = os.path.join(out_dir, "%s_density.csv" % side)
                save_center_diagnostics(dp, art.detection)
                paths["%s_density" % side] = dp

    recs = recommend_for_training(ing, mask, cfg, cache, "full",
                                  n=cfg["recommend.n"])
    rp = os.path.join(out_dir, "recommendations.csv")
    save_recommendations(rp, recs, user_external=ing.users.external,
                         item_external=ing.items.external)
    paths["recommendations"] = rp
    return paths


def write_report_json(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_csv(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("model,fold,n,precision,recall,hit_rate,arhr,n_users\n")
        for row in report["per_fold"]:
            fh.write("%s,%d,%d,%.17g,%.17g,%.17g,%.17g,%d\n" % (
                report["model"], row["fold"], row["n"], row["precision"],
                row["recall"], row["hit_rate"], row["arhr"], row["n_users"]))


def format_report_table(report: dict) -> str:
    """Aligned text table of fold means (std) per cutoff."""
    lines = ["model=%s base=%s folds=%d seed=%s"
             % (report["model"], report["base"], report["folds"], report["seed"]),
             "%-6s %-20s %-20s %-20s %-20s"
             % ("N", "precision", "recall", "hit_rate", "arhr")]
    for n, entry in sorted(report["cutoffs"].items(), key=lambda kv: int(kv[0])):
        cells = ["%.4f (%.4f)" % (entry[m], entry[m + "_std"])
                 for m in ("precision", "recall", "hit_rate", "arhr")]
        lines.append("%-6s %-20s %-20s %-20s %-20s" % (n, *cells))
    return "\n".join(lines)
