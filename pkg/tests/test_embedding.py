import numpy as np
import pytest

from localrec.embedding import (EmbeddingMatrix, TrainConfig, _noise_table,
                                sgns_gradients, sgns_loss, sgns_pair_step,
                                train_embeddings)
from localrec.errors import EmptyCorpus
from localrec.walks import WalkConfig, WalkCorpus, generate_walks

from .oracles import numeric_gradient
from .test_walks import make_projection


class TestGradients:
    @pytest.mark.parametrize("dim,n_neg", [(3, 0), (3, 2), (8, 5), (16, 1)])
    def test_analytic_matches_numeric(self, dim, n_neg):
        rng = np.random.default_rng(100 * dim + n_neg)
        for _ in range(5):
            center = rng.normal(size=dim)
            context = rng.normal(size=dim)
            negs = rng.normal(size=(n_neg, dim))
            g_c, g_x, g_n = sgns_gradients(center, context, negs)
            num_c = numeric_gradient(
                lambda v: sgns_loss(v, context, negs), center)
            num_x = numeric_gradient(
                lambda v: sgns_loss(center, v, negs), context)
            assert np.allclose(g_c, num_c, rtol=1e-6, atol=1e-8)
            assert np.allclose(g_x, num_x, rtol=1e-6, atol=1e-8)
            for k in range(n_neg):
                def f(v, k=k):
                    m = negs.copy()
                    m[k] = v
                    return sgns_loss(center, context, m)
                assert np.allclose(g_n[k], numeric_gradient(f, negs[k]),
                                   rtol=1e-6, atol=1e-8)

    def test_pair_step_is_one_gradient_step(self):
        # all gradients must be evaluated at the pre-update parameters
        rng = np.random.default_rng(11)
        win = rng.normal(size=(6, 4))
        wout = rng.normal(size=(6, 4))
        center, context, negs = 2, 4, np.array([0, 5])
        lr = 0.3
        g_c, g_x, g_n = sgns_gradients(win[center], wout[context], wout[negs])
        expect_in = win[center] - lr * g_c
        expect_ctx = wout[context] - lr * g_x
        expect_negs = wout[negs] - lr * g_n
        sgns_pair_step(win, wout, center, context, negs, lr)
        assert np.allclose(win[center], expect_in, atol=1e-12)
        assert np.allclose(wout[context], expect_ctx, atol=1e-12)
        assert np.allclose(wout[negs], expect_negs, atol=1e-12)

    def test_repeated_steps_reduce_loss(self):
        rng = np.random.default_rng(12)
        win = rng.normal(size=(4, 8)) * 0.1
        wout = rng.normal(size=(4, 8)) * 0.1
        negs = np.array([2, 3])
        before = sgns_loss(win[0], wout[1], wout[negs])
        for _ in range(50):
            sgns_pair_step(win, wout, 0, 1, negs, 0.1)
        after = sgns_loss(win[0], wout[1], wout[negs])
        assert after < before


def two_clique_graph():
    edges = []
    for base in (0, 6):
        for a in range(base, base + 6):
            for b in range(a + 1, base + 6):
                edges.append((a, b, 1.0))
    edges.append((0, 6, 1.0))  # weak bridge
    return make_projection(edges, 12)


def mean_cosine(vectors, pairs):
    vals = []
    for a, b in pairs:
        va, vb = vectors[a], vectors[b]
        vals.append(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))
    return float(np.mean(vals))


class TestTraining:
    def test_two_cliques_separate(self):
        g = two_clique_graph()
        corpus = generate_walks(g, WalkConfig(walk_length=30, walks_per_node=12,
                                              seed=8))
        emb = train_embeddings(corpus, 12, TrainConfig(dim=16, window=4,
                                                       negatives=4, epochs=4,
                                                       seed=8))
        intra = [(a, b) for a in range(6) for b in range(a + 1, 6)]
        intra += [(a, b) for a in range(6, 12) for b in range(a + 1, 12)]
        inter = [(a, b) for a in range(6) for b in range(6, 12)]
        assert mean_cosine(emb.vectors, intra) > mean_cosine(emb.vectors, inter)

    def test_training_is_deterministic(self):
        g = two_clique_graph()
        corpus = generate_walks(g, WalkConfig(walk_length=15, walks_per_node=4,
                                              seed=9))
        cfg = TrainConfig(dim=8, window=3, negatives=3, epochs=2, seed=9)
        a = train_embeddings(corpus, 12, cfg)
        b = train_embeddings(corpus, 12, cfg)
        assert np.array_equal(a.vectors, b.vectors)

    def test_multithreaded_training_is_sane(self):
        g = two_clique_graph()
        corpus = generate_walks(g, WalkConfig(walk_length=20, walks_per_node=8,
                                              seed=10))
        emb = train_embeddings(corpus, 12, TrainConfig(dim=8, window=3,
                                                       negatives=3, epochs=2,
                                                       seed=10), threads=3)
        assert emb.vectors.shape == (12, 8)
        assert np.isfinite(emb.vectors).all()
        assert np.linalg.norm(emb.vectors, axis=1).min() > 0

    def test_untouched_nodes_keep_zero_output_rows(self):
        corpus = WalkCorpus(np.array([0, 1, 0, 1, 0], np.int32),
                            np.array([0, 5], np.int64))
        emb = train_embeddings(corpus, 5, TrainConfig(dim=4, window=2,
                                                      negatives=2, epochs=1))
        assert emb.n_nodes == 5
        assert np.isfinite(emb.vectors).all()

    def test_empty_corpus_raises(self):
        corpus = WalkCorpus(np.array([3], np.int32), np.array([0, 1], np.int64))
        with pytest.raises(EmptyCorpus):
            train_embeddings(corpus, 5, TrainConfig(dim=4))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            TrainConfig(dim=0).validate()
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0).validate()


class TestNoiseTable:
    def test_distribution_follows_damped_frequency(self):
        tokens = np.array([0] * 81 + [1] * 16 + [3] * 1, np.int32)
        prob, alias, ids = _noise_table(tokens, 5)
        assert ids.tolist() == [0, 1, 3]
        expected = np.array([81.0, 16.0, 1.0]) ** 0.75
        expected /= expected.sum()
        rng = np.random.default_rng(13)
        n = 200_000
        u = rng.random(n) * len(ids)
        slot = u.astype(np.int64)
        take_alias = (u - slot) >= prob[slot]
        slot[take_alias] = alias[slot[take_alias]]
        freq = np.bincount(slot, minlength=3) / n
        assert np.allclose(freq, expected, atol=0.01)


class TestPersistence:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(14)
        emb = EmbeddingMatrix(rng.normal(size=(7, 5)))
        p = tmp_path / "emb.txt"
        emb.save(p)
        back = EmbeddingMatrix.load(p)
        assert np.array_equal(back.vectors, emb.vectors)
        assert back.dim == 5 and back.n_nodes == 7
