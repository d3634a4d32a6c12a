import numpy as np
import pytest

from localrec.clustering import ClusterModel
from localrec.errors import InvalidK
from localrec.recommend import (BaseParams, ClusterBipartite,
                                build_rating_matrix, item_popularity,
                                load_recommendations, match_item_clusters,
                                rank_block, recommend_global,
                                save_recommendations, score_ibcf, score_nmf,
                                score_popular, score_ubcf, two_phase,
                                weighted_nmf)

from .oracles import reference_ibcf_scores, reference_ubcf_scores


def rand_ratings(rng, n_users, n_items, density=0.35):
    """Random explicit ratings as aligned index arrays plus a dict view."""
    u_idx, i_idx, vals = [], [], []
    ratings = {}
    for u in range(n_users):
        k = max(1, int(rng.binomial(n_items, density)))
        for i in rng.choice(n_items, size=k, replace=False):
            r = float(rng.integers(1, 6))
            u_idx.append(u)
            i_idx.append(int(i))
            vals.append(r)
            ratings[(u, int(i))] = r
    return (np.array(u_idx), np.array(i_idx), np.array(vals)), ratings


def full_block(triples, n_users, n_items, implicit=False):
    u, i, v = triples
    return build_rating_matrix(u, i, v, users=np.arange(n_users),
                               items=np.arange(n_items), implicit=implicit)


class TestBuildRatingMatrix:
    def test_restricts_to_subsets(self):
        u = np.array([0, 1, 2, 3])
        i = np.array([5, 6, 7, 8])
        v = np.array([1.0, 2.0, 3.0, 4.0])
        block = build_rating_matrix(u, i, v, users=[1, 3], items=[6, 8])
        assert block.users.tolist() == [1, 3]
        assert block.items.tolist() == [6, 8]
        assert block.ratings.toarray().tolist() == [[2.0, 0.0], [0.0, 4.0]]

    def test_duplicates_keep_last(self):
        u = np.array([0, 0, 0])
        i = np.array([1, 1, 1])
        v = np.array([2.0, 3.0, 5.0])
        block = build_rating_matrix(u, i, v, users=[0], items=[1])
        assert block.ratings.toarray().tolist() == [[5.0]]

    def test_implicit_overrides_values(self):
        u = np.array([0, 1])
        i = np.array([0, 1])
        v = np.array([4.0, 2.0])
        block = build_rating_matrix(u, i, v, users=[0, 1], items=[0, 1],
                                    implicit=True)
        assert block.ratings.toarray().tolist() == [[1.0, 0.0], [0.0, 1.0]]


class TestUBCF:
    @pytest.mark.parametrize("seed,implicit", [(0, False), (1, False),
                                               (2, False), (3, True), (4, True)])
    def test_matches_reference(self, seed, implicit):
        rng = np.random.default_rng(60 + seed)
        triples, ratings = rand_ratings(rng, 10, 12)
        block = full_block(triples, 10, 12, implicit=implicit)
        scores, fallback = score_ubcf(block, neighborhood_size=4)
        ref_scores, ref_fallback = reference_ubcf_scores(ratings, implicit, 4)
        assert set(np.flatnonzero(fallback).tolist()) == ref_fallback
        for u in range(10):
            if fallback[u]:
                continue
            expect = [ref_scores.get((u, i), 0.0) for i in range(12)]
            assert np.allclose(scores[u], expect, atol=1e-12)

    def test_perfect_neighbor_prediction(self):
        # user 0 mirrors user 1 on shared items; the prediction for the
        # unshared item equals user 1's centered rating exactly
        u = np.array([0, 0, 1, 1, 1])
        i = np.array([0, 1, 0, 1, 2])
        v = np.array([5.0, 1.0, 5.0, 1.0, 5.0])
        block = build_rating_matrix(u, i, v, users=[0, 1], items=[0, 1, 2])
        scores, fallback = score_ubcf(block)
        assert not fallback.any()
        assert scores[0, 2] == pytest.approx(5.0 - 11.0 / 3.0)

    def test_orthogonal_users_fall_back_to_popularity(self):
        # disjoint single-item users have zero-norm overlap: no neighborhood
        u = np.array([0, 1, 2, 2])
        i = np.array([0, 1, 2, 3])
        v = np.array([5.0, 4.0, 3.0, 2.0])
        block = build_rating_matrix(u, i, v, users=[0, 1, 2], items=[0, 1, 2, 3])
        scores, fallback = score_ubcf(block)
        assert fallback.all()
        recs = rank_block(block, "ubcf", 2)
        # everything unseen ranks by in-block popularity, ties by item id
        assert recs[0] == [(1, 1.0), (2, 1.0)]


class TestIBCF:
    @pytest.mark.parametrize("seed,implicit", [(0, False), (1, False),
                                               (2, True)])
    def test_matches_reference(self, seed, implicit):
        rng = np.random.default_rng(70 + seed)
        triples, ratings = rand_ratings(rng, 9, 11)
        block = full_block(triples, 9, 11, implicit=implicit)
        scores, fallback = score_ibcf(block, neighborhood_size=5)
        ref_scores, ref_fallback = reference_ibcf_scores(ratings, implicit, 5)
        assert set(np.flatnonzero(fallback).tolist()) == ref_fallback
        for u in range(9):
            # items nobody rated are absent from the oracle: zero score
            expect = [ref_scores.get((u, i), 0.0) for i in range(11)]
            assert np.allclose(scores[u], expect, atol=1e-10)

    def test_seen_items_never_recommended(self):
        rng = np.random.default_rng(75)
        triples, _ = rand_ratings(rng, 8, 10, density=0.5)
        block = full_block(triples, 8, 10)
        recs = rank_block(block, "ibcf", 10)
        seen = {(int(u), int(i)) for u, i in zip(triples[0], triples[1])}
        for u, rows in recs.items():
            for item, _ in rows:
                assert (u, item) not in seen


class TestNMF:
    def test_objective_monotone(self):
        for seed in range(3):
            rng = np.random.default_rng(80 + seed)
            triples, _ = rand_ratings(rng, 12, 15)
            block = full_block(triples, 12, 15)
            _, _, hist = weighted_nmf(block.ratings, rank=4, max_iter=60,
                                      seed=seed)
            assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))

    def test_recovers_planted_rank_one(self):
        rng = np.random.default_rng(85)
        w_true = 1.0 + rng.random(12)
        h_true = 1.0 + rng.random(15)
        full = np.outer(w_true, h_true)
        mask = rng.random((12, 15)) < 0.6
        u, i = np.nonzero(mask)
        block = build_rating_matrix(u, i, full[mask], users=np.arange(12),
                                    items=np.arange(15))
        w, h, _ = weighted_nmf(block.ratings, rank=1, max_iter=400, seed=85)
        pred = w @ h
        rmse = np.sqrt(((pred[mask] - full[mask]) ** 2).mean())
        assert rmse < 1e-3

    def test_rank_clamped_to_block(self):
        u = np.array([0, 1, 2])
        i = np.array([0, 1, 2])
        v = np.array([3.0, 4.0, 5.0])
        block = build_rating_matrix(u, i, v, users=[0, 1, 2], items=[0, 1, 2])
        scores, fallback = score_nmf(block, rank=40, max_iter=30)
        assert scores.shape == (3, 3)
        assert np.isfinite(scores).all()

    def test_invalid_rank(self):
        import scipy.sparse as sp
        mat = sp.csr_matrix(np.ones((3, 4)))
        with pytest.raises(InvalidK):
            weighted_nmf(mat, rank=0)
        with pytest.raises(InvalidK):
            weighted_nmf(mat, rank=5)


class TestPopular:
    def test_count_ordering_with_ties(self):
        u = np.array([0, 1, 2, 0, 1, 0])
        i = np.array([2, 2, 2, 1, 1, 3])
        v = np.ones(6)
        block = build_rating_matrix(u, i, v, users=[0, 1, 2], items=[0, 1, 2, 3])
        assert item_popularity(block).tolist() == [0.0, 2.0, 3.0, 1.0]
        scores, fallback = score_popular(block)
        assert not fallback.any()
        recs = rank_block(block, "popular", 4)
        # user 2 saw only item 2; ties (item 0 vs nothing) break by id
        assert [item for item, _ in recs[2]] == [1, 3, 0]


class TestMatchItemClusters:
    def test_dominant_clusters_kept(self):
        cb = ClusterBipartite(weights=np.array([[50.0, 48.0, 2.0, 1.0]]))
        assert match_item_clusters(cb, 0).tolist() == [0, 1]

    def test_single_item_cluster(self):
        cb = ClusterBipartite(weights=np.array([[7.0]]))
        assert match_item_clusters(cb, 0).tolist() == [0]

    def test_zero_row_takes_global_favorite(self):
        cb = ClusterBipartite(weights=np.array([[0.0, 0.0, 0.0],
                                                [1.0, 5.0, 2.0]]))
        assert match_item_clusters(cb, 0).tolist() == [1]

    def test_constant_row_takes_everything(self):
        cb = ClusterBipartite(weights=np.array([[3.0, 3.0, 3.0]]))
        assert match_item_clusters(cb, 0).tolist() == [0, 1, 2]

    def test_build_counts(self):
        user_assign = np.array([0, 0, 1])
        item_assign = np.array([0, 1])
        u_idx = np.array([0, 1, 2, 2])
        i_idx = np.array([0, 1, 0, 1])
        cb = ClusterBipartite.build(user_assign, item_assign, u_idx, i_idx, 2, 2)
        assert cb.weights.tolist() == [[1.0, 1.0], [1.0, 1.0]]


def models_for(user_assign, k_user, item_assign, k_item,
               user_cold=None, item_cold=None):
    return (ClusterModel(assignments=np.asarray(user_assign, np.int64),
                         k=k_user, cold_cluster=user_cold),
            ClusterModel(assignments=np.asarray(item_assign, np.int64),
                         k=k_item, cold_cluster=item_cold))


class TestTwoPhase:
    def test_trivial_clustering_equals_global(self):
        rng = np.random.default_rng(90)
        triples, _ = rand_ratings(rng, 8, 12, density=0.4)
        u, i, v = triples
        user_model, item_model = models_for([0] * 8, 1, [0] * 12, 1)
        local = two_phase(u, i, v, user_model, item_model, 8, 12,
                          base="ubcf", n=5)
        glob = recommend_global(u, i, v, 8, 12, base="ubcf", n=5)
        assert local == glob

    def test_block_structure_respected(self):
        # users 0-2 interact only with items 0-3, users 3-5 only with 4-7;
        # within-block recommendations must come from the matched cluster
        u_idx, i_idx, vals = [], [], []
        for u in range(3):
            for i in range(4):
                if (u + i) % 2 == 0:
                    continue
                u_idx.append(u)
                i_idx.append(i)
                vals.append(float(1 + (u + i) % 5))
        for u in range(3, 6):
            for i in range(4, 8):
                if (u + i) % 2 == 0:
                    continue
                u_idx.append(u)
                i_idx.append(i)
                vals.append(float(1 + (u + i) % 5))
        user_model, item_model = models_for([0, 0, 0, 1, 1, 1], 2,
                                            [0, 0, 0, 0, 1, 1, 1, 1], 2)
        recs = two_phase(np.array(u_idx), np.array(i_idx), np.array(vals),
                         user_model, item_model, 6, 8, base="popular", n=2)
        for u in range(3):
            assert all(item < 4 for item, _ in recs[u])
        for u in range(3, 6):
            assert all(item >= 4 for item, _ in recs[u])

    def test_cold_users_get_global_popularity(self):
        u = np.array([0, 0, 1, 1, 1])
        i = np.array([0, 1, 0, 1, 2])
        v = np.ones(5)
        user_model, item_model = models_for([0, 0, 1], 2, [0, 0, 0, 0], 1,
                                            user_cold=1)
        recs = two_phase(u, i, v, user_model, item_model, 3, 4, n=3)
        # user 2 is cold and has seen nothing: top global counts, ties by id
        assert recs[2] == [(0, 2.0), (1, 2.0), (2, 1.0)]

    def test_padding_fills_from_other_clusters(self):
        # user cluster 0 strongly prefers item cluster 0 ({0,1}), but two
        # items cannot fill n=4: the rest arrive from cluster 1 by global
        # popularity with score 0
        u_idx = [0, 0, 1, 1, 2, 2, 2]
        i_idx = [0, 1, 0, 1, 2, 3, 4]
        vals = [5.0, 4.0, 4.0, 5.0, 3.0, 3.0, 3.0]
        user_model, item_model = models_for([0, 0, 1], 2,
                                            [0, 0, 1, 1, 1], 2)
        recs = two_phase(np.array(u_idx), np.array(i_idx), np.array(vals),
                         user_model, item_model, 3, 5, base="popular", n=4)
        lists = {u: [item for item, _ in recs[u]] for u in recs}
        # users 0 and 1 saw both matched items: all four slots are padding
        assert lists[0] == [2, 3, 4]
        assert {item: s for item, s in recs[0]} == {2: 0.0, 3: 0.0, 4: 0.0}

    def test_every_user_covered_and_lists_full(self):
        rng = np.random.default_rng(95)
        triples, _ = rand_ratings(rng, 12, 20, density=0.3)
        u, i, v = triples
        user_model, item_model = models_for(
            rng.integers(0, 3, size=12), 3, rng.integers(0, 4, size=20), 4)
        recs = two_phase(u, i, v, user_model, item_model, 12, 20, n=6)
        assert set(recs) == set(range(12))
        seen = {}
        for uu, ii in zip(u, i):
            seen.setdefault(int(uu), set()).add(int(ii))
        for uu, rows in recs.items():
            items = [item for item, _ in rows]
            assert len(items) == 6
            assert len(set(items)) == 6
            assert not (set(items) & seen.get(uu, set()))


class TestPersistence:
    def test_round_trip_with_external_ids(self, tmp_path):
        recs = {0: [(2, 1.5), (0, 0.5)], 3: [(1, 2.25)]}
        path = tmp_path / "recs.csv"
        save_recommendations(path, recs,
                             user_external=lambda u: "u%d" % u,
                             item_external=lambda i: "i%d" % i)
        back = load_recommendations(path)
        assert back == {"u0": [("i2", 1.5), ("i0", 0.5)],
                        "u3": [("i1", 2.25)]}

    def test_round_trip_plain(self, tmp_path):
        recs = {1: [(4, 0.125)]}
        path = tmp_path / "recs.csv"
        save_recommendations(path, recs)
        back = load_recommendations(path)
        assert back == {"1": [("4", 0.125)]}
