import numpy as np
import pytest

from polysense import _kernels as K
from polysense.corpus import Token, build_vocabulary, encode_corpus, filter_pair
from polysense.inference import (
    NumericsError,
    build_english_context,
    build_foreign_context,
    learning_rate,
    log_sigmoid_score,
    renormalize,
    sense_gradient_step,
    sense_update,
    skip_gram_update,
    train,
)
from polysense.model import TrainConfig, models_equal

from conftest import make_pair, make_tiny_model as tiny_model
from oracles import finite_difference_gradients, negsamp_objective


class TestLearningRate:
    def test_schedule_endpoints(self):
        assert learning_rate(0, 1000, 0.025) == pytest.approx(0.025)
        assert learning_rate(500, 1000, 0.025) == pytest.approx(0.0125)
        assert learning_rate(1000, 1000, 0.025) == pytest.approx(2.5e-6)

    def test_floor(self):
        assert learning_rate(9999, 10000, 0.025) >= 0.025 * 1e-4

    def test_bounds(self):
        with pytest.raises(ValueError):
            learning_rate(-1, 10, 0.025)
        with pytest.raises(ValueError):
            learning_rate(11, 10, 0.025)


class TestLogSigmoidScore:
    def test_zero_dot(self):
        m = tiny_model()
        tok = Token("x", "fr")  # fresh ctx vectors are zero
        vec = np.ones(m.dim)
        assert log_sigmoid_score(m, vec, tok) == pytest.approx(-np.log(2.0), abs=1e-12)

    def test_saturation_at_clamp(self):
        m = tiny_model(dim=4)
        y = m.vocab.en_id("a")
        m.ctx_en[y] = [1000.0, 0, 0, 0]
        vec = np.array([1.0, 0, 0, 0])
        # clamped at dot=30: -log1p(exp(-30))
        assert log_sigmoid_score(m, vec, Token("a", "en")) == pytest.approx(-9.357622968839299e-14, rel=1e-3)

    def test_antisymmetry_identity(self, rng):
        m = tiny_model(dim=6)
        y = m.vocab.en_id("b")
        for _ in range(50):
            m.ctx_en[y] = rng.standard_normal(6)
            vec = rng.standard_normal(6)
            t = float(m.ctx_en[y] @ vec)
            if abs(t) > 29:
                continue
            diff = log_sigmoid_score(m, vec, Token("b", "en")) - log_sigmoid_score(m, -vec, Token("b", "en"))
            assert diff == pytest.approx(t, abs=1e-9)


class TestRenormalize:
    def test_equal_scores_uniform(self):
        out = renormalize(np.zeros(5) + 3.7)
        assert np.allclose(out, 0.2)

    def test_saturated_one_hot(self):
        out = renormalize(np.array([0.0, -1000.0, -1000.0]))
        assert out[0] == pytest.approx(1.0)

    def test_shift_invariance(self, rng):
        scores = rng.standard_normal(10)
        a = renormalize(scores)
        b = renormalize(scores + 123.456)
        assert np.allclose(a, b, atol=1e-12)

    def test_sums_to_one(self, rng):
        for _ in range(100):
            out = renormalize(rng.standard_normal(rng.integers(1, 20)) * 50)
            assert abs(out.sum() - 1.0) <= 1e-9


class TestSenseUpdate:
    def test_zero_context_vector_adds_log_half(self):
        m = tiny_model()
        scores = np.zeros(m.max_senses)
        sense_update(scores, m, "a", Token("x", "fr"))  # ctx_fg is zero-initialized
        assert np.allclose(scores, -np.log(2.0))

    def test_equal_sense_vectors_leave_posterior_unchanged(self, rng):
        m = tiny_model(dim=6)
        w = m.vocab.en_id("a")
        m.sense_vecs[w] = np.tile(rng.standard_normal(6), (m.max_senses, 1))
        y = m.vocab.en_id("b")
        m.ctx_en[y] = rng.standard_normal(6)
        scores = rng.standard_normal(m.max_senses)
        before = renormalize(scores)
        sense_update(scores, m, "a", Token("b", "en"))
        assert np.allclose(renormalize(scores), before, atol=1e-12)

    def test_two_sense_toy_posterior(self):
        # dots +2 and -2, equal priors: softmax([logsig(2), logsig(-2)]) = [sig(2), sig(-2)]
        m = tiny_model(t_max=2, dim=2)
        w = m.vocab.en_id("a")
        y = m.vocab.en_id("b")
        m.sense_vecs[w] = np.array([[2.0, 0.0], [-2.0, 0.0]])
        m.ctx_en[y] = np.array([1.0, 0.0])
        scores = np.zeros(2)
        sense_update(scores, m, "a", Token("b", "en"))
        post = renormalize(scores)
        assert post[0] == pytest.approx(0.8807970779778824, abs=1e-12)
        assert post[1] == pytest.approx(0.1192029220221176, abs=1e-12)


def ctx_pair():
    # en: e0 e1 e2 e3 e4 e5, fg: f0 f1 f2 f3; alignment 2->1, 5->3
    return make_pair("e0 e1 e2 e3 e4 e5", "f0 f1 f2 f3", [(2, 1), (5, 3)])


class TestBuildEnglishContext:
    def test_aligned_uses_window_plus_foreign_word(self):
        pair = ctx_pair()
        cfg = TrainConfig(window=2, cross_window=0)
        ctx = build_english_context(pair, 2, cfg)
        assert [t.surface for t in ctx] == ["e0", "e1", "e3", "e4", "f1"]

    def test_unaligned_widens_english_window(self):
        pair = ctx_pair()
        cfg = TrainConfig(window=2, cross_window=0)
        ctx = build_english_context(pair, 3, cfg)  # position 3 is unaligned
        assert [t.surface for t in ctx] == ["e0", "e1", "e2", "e4", "e5"]

    def test_mono_variant_widens_window(self):
        pair = ctx_pair()
        cfg = TrainConfig(window=4, variant="mono")
        ctx = build_english_context(pair, 2, cfg)
        # window+1 = 5 per side, like a five-word monolingual context
        assert [t.surface for t in ctx] == ["e0", "e1", "e3", "e4", "e5"]
        assert all(t.lang == "en" for t in ctx)

    def test_cross_window_adds_foreign_neighborhood(self):
        pair = ctx_pair()
        cfg = TrainConfig(window=1, cross_window=1)
        ctx = build_english_context(pair, 2, cfg)
        assert [t.surface for t in ctx] == ["e1", "e3", "f0", "f2", "f1"]

    def test_budget_bound(self, rng):
        cfg = TrainConfig(window=4, cross_window=0)
        pair = ctx_pair()
        for i in range(6):
            ctx = build_english_context(pair, i, cfg)
            crosslingual = i in pair.a_ef
            limit = 2 * 4 + 1 if crosslingual else 2 * 5
            assert len(ctx) <= limit


class TestBuildForeignContext:
    def test_full_includes_aligned_english_word(self):
        pair = ctx_pair()
        cfg = TrainConfig(window=1, cross_window=0)
        ctx = build_foreign_context(pair, 1, cfg)
        assert [t.surface for t in ctx] == ["f0", "f2", "e2"]

    def test_one_sided_keeps_foreign_only(self):
        pair = ctx_pair()
        cfg = TrainConfig(window=1, cross_window=2, variant="one-sided")
        ctx = build_foreign_context(pair, 1, cfg)
        assert [t.surface for t in ctx] == ["f0", "f2"]

    def test_full_cross_window_adds_english_neighbors(self):
        pair = ctx_pair()
        cfg = TrainConfig(window=1, cross_window=1)
        ctx = build_foreign_context(pair, 3, cfg)
        assert [t.surface for t in ctx] == ["f2", "e4", "e5"]


class TestKernelContextsMatchPython:
    @pytest.mark.parametrize("variant", ["full", "one-sided", "mono"])
    def test_random_corpora(self, rng, variant):
        cfg = TrainConfig(window=2, cross_window=1 if variant != "mono" else 0, variant=variant)
        words_en = [f"w{i}" for i in range(8)]
        words_fg = [f"v{i}" for i in range(8)]
        pairs = []
        for _ in range(40):
            ne, nf = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            links = {}
            for i in range(ne):
                if rng.random() < 0.6:
                    links[i] = int(rng.integers(nf))
            pairs.append(
                make_pair(
                    " ".join(words_en[rng.integers(8)] for _ in range(ne)),
                    " ".join(words_fg[rng.integers(8)] for _ in range(nf)),
                    links,
                )
            )
        vocab = build_vocabulary(pairs, min_count=1)
        enc = encode_corpus(pairs, vocab)
        ids = np.empty(64, dtype=np.int64)
        langs = np.empty(64, dtype=np.int8)
        for s, pair in enumerate(pairs):
            filt = filter_pair(pair, vocab)  # min_count=1: identical, but keeps the same route
            for i in range(len(filt.en)):
                n = K._collect_en_context(
                    s, enc.en_offsets[s] + i, enc.en_tokens, enc.en_offsets,
                    enc.fg_tokens, enc.fg_offsets, enc.align_ef,
                    cfg.window, cfg.cross_window, cfg.variant_code, ids, langs)
                got = [(int(ids[c]), int(langs[c])) for c in range(n)]
                want = [
                    (vocab.token_id(t), 0 if t.lang == "en" else 1)
                    for t in build_english_context(filt, i, cfg)
                ]
                assert got == want
            for j in range(len(filt.fg)):
                n = K._collect_fg_context(
                    s, enc.fg_offsets[s] + j, enc.en_tokens, enc.en_offsets,
                    enc.fg_tokens, enc.fg_offsets, enc.align_fe,
                    cfg.window, cfg.cross_window, cfg.variant_code, ids, langs)
                got = [(int(ids[c]), int(langs[c])) for c in range(n)]
                want = [
                    (vocab.token_id(t), 0 if t.lang == "en" else 1)
                    for t in build_foreign_context(filt, j, cfg)
                ]
                assert got == want


class TestGradientSteps:
    def test_one_hot_senses_touch_single_row(self, rng):
        m = tiny_model(dim=6)
        w = m.vocab.en_id("a")
        m.ctx_en[:] = rng.standard_normal(m.ctx_en.shape)
        before = m.sense_vecs[w].copy()
        senses = np.zeros(m.max_senses)
        senses[3] = 1.0
        negs = np.array([0, 1], dtype=np.int64)
        sense_gradient_step(m, "a", senses, Token("b", "en"), negs, lr=0.1)
        changed = [k for k in range(m.max_senses) if not np.array_equal(before[k], m.sense_vecs[w, k])]
        assert changed == [3]

    def test_zero_lr_no_change(self, rng):
        m = tiny_model(dim=6)
        m.ctx_en[:] = rng.standard_normal(m.ctx_en.shape)
        snap = m.sense_vecs.copy(), m.ctx_en.copy()
        sense_gradient_step(m, "a", np.ones(10) / 10, Token("b", "en"),
                            np.array([0], dtype=np.int64), lr=0.0)
        assert np.array_equal(snap[0], m.sense_vecs) and np.array_equal(snap[1], m.ctx_en)

    def test_matches_finite_differences(self, rng):
        for _ in range(10):
            m = tiny_model(dim=5)
            w = m.vocab.en_id("a")
            m.sense_vecs[w] = rng.standard_normal((10, 5)) * 0.3
            m.ctx_en[:] = rng.standard_normal(m.ctx_en.shape) * 0.3
            senses = rng.random(10)
            y = Token("b", "en")
            negs = rng.integers(0, 4, size=5).astype(np.int64)
            yid = m.vocab.en_id("b")
            ids = np.concatenate([[yid], negs])
            labels = np.array([1.0] + [0.0] * 5)
            langs = np.zeros(6, dtype=np.int8)

            centers0 = m.sense_vecs[w].copy()
            ctx0 = m.ctx_en.copy()

            def objective():
                return negsamp_objective(centers0, senses, m.config.sense_threshold,
                                         ctx0, m.ctx_fg, ids, labels, langs)

            fd_centers, fd_ctx = finite_difference_gradients(objective, [centers0, ctx0])
            sense_gradient_step(m, "a", senses, y, negs, lr=1.0)
            g_centers = m.sense_vecs[w] - centers0
            g_ctx = m.ctx_en - ctx0
            assert np.linalg.norm(g_centers - fd_centers) <= 1e-4 * max(np.linalg.norm(fd_centers), 1e-12)
            assert np.linalg.norm(g_ctx - fd_ctx) <= 1e-4 * max(np.linalg.norm(fd_ctx), 1e-12)

    def test_skip_gram_update_touches_one_input_row(self, rng):
        m = tiny_model(dim=6)
        m.ctx_fg[:] = rng.standard_normal(m.ctx_fg.shape)
        x = m.vocab.fg_id("x", "fr")
        other = m.vocab.fg_id("y", "fr")
        before = m.fg_vecs.copy()
        skip_gram_update(m, Token("x", "fr"), Token("y", "fr"),
                         np.array([x], dtype=np.int64), lr=0.05)
        assert not np.array_equal(m.fg_vecs[x], before[x])
        assert np.array_equal(m.fg_vecs[other], before[other])


def small_corpus(n_pairs=60, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_pairs):
        ne, nf = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        links = {i: int(rng.integers(nf)) for i in range(ne) if rng.random() < 0.7}
        pairs.append(
            make_pair(
                " ".join(f"w{rng.integers(6)}" for _ in range(ne)),
                " ".join(f"v{rng.integers(6)}" for _ in range(nf)),
                links,
            )
        )
    return pairs


def quick_cfg(**kw):
    base = dict(dim=16, max_senses=4, iterations=2, min_count=1, seed=9)
    base.update(kw)
    return TrainConfig(**base)


class TestTrain:
    def test_deterministic_same_seed(self):
        pairs = small_corpus()
        m1 = train(pairs, quick_cfg())
        m2 = train(pairs, quick_cfg())
        assert models_equal(m1, m2)

    def test_different_seed_differs(self):
        pairs = small_corpus()
        m1 = train(pairs, quick_cfg())
        m2 = train(pairs, quick_cfg(seed=10))
        assert not np.array_equal(m1.sense_vecs, m2.sense_vecs)

    def test_stick_counts_sum_to_processed_occurrences(self):
        pairs = small_corpus()
        cfg = quick_cfg(iterations=3)
        m = train(pairs, cfg)
        vocab = m.vocab
        for w in range(vocab.n_en_words):
            occurrences = 3 * vocab.en_counts[w]
            assert m.stick_counts[w].sum() == pytest.approx(
                occurrences, abs=1e-6 * max(occurrences, 1)
            )

    def test_stick_counts_nondecreasing_across_epochs(self, tmp_path):
        pairs = small_corpus()
        m1 = train(pairs, quick_cfg(iterations=2), epochs=1)
        snap = m1.stick_counts.copy()
        train(pairs, start_model=m1)
        assert np.all(m1.stick_counts >= snap - 1e-12)

    def test_posterior_normalization_throughout_training(self):
        pairs = small_corpus()
        m = train(pairs, quick_cfg())
        assert m.train_stats.max_posterior_error <= 1e-9

    def test_mono_variant_never_touches_foreign_state(self):
        from polysense.model import init_model

        pairs = small_corpus()
        cfg = quick_cfg(variant="mono")
        vocab = build_vocabulary(pairs, min_count=1)
        fresh = init_model(vocab, cfg)
        m = train(pairs, cfg)
        assert np.array_equal(m.fg_vecs, fresh.fg_vecs)
        assert np.array_equal(m.ctx_fg, fresh.ctx_fg)

    def test_senses_below_threshold_keep_initial_rows(self):
        from polysense.model import init_model

        pairs = small_corpus(n_pairs=120)
        cfg = quick_cfg(iterations=2, max_senses=6)
        vocab = build_vocabulary(pairs, min_count=1)
        fresh = init_model(vocab, cfg)
        m = train(pairs, cfg)
        eps = cfg.sense_threshold
        never_active = m.train_stats.max_posteriors <= eps
        assert never_active.any(), "expected at least one never-active sense in this setup"
        for w, k in zip(*np.nonzero(never_active)):
            assert np.array_equal(m.sense_vecs[w, k], fresh.sense_vecs[w, k])

    def test_checkpoint_resume_bitwise_equal(self, tmp_path):
        from polysense.model import load_model, save_model

        pairs = small_corpus()
        cfg = quick_cfg(iterations=3)
        continuous = train(pairs, cfg)

        part = train(pairs, cfg, epochs=1)
        save_model(part, tmp_path / "ckpt.psns")
        resumed = train(pairs, start_model=load_model(tmp_path / "ckpt.psns"))
        assert resumed.epochs_done == 3
        assert models_equal(continuous, resumed)

    def test_epoch_split_equals_continuous(self):
        pairs = small_corpus()
        cfg = quick_cfg(iterations=2)
        continuous = train(pairs, cfg)
        split = train(pairs, cfg, epochs=1)
        train(pairs, start_model=split)
        assert models_equal(continuous, split)

    def test_nan_abort_with_diagnostics(self):
        from polysense.model import init_model

        pairs = small_corpus()
        cfg = quick_cfg()
        vocab = build_vocabulary(pairs, min_count=1)
        poisoned = init_model(vocab, cfg)
        poisoned.sense_vecs[0, 0, 0] = np.nan
        with pytest.raises(NumericsError, match="sense_vecs"):
            train(pairs, start_model=poisoned)

    def test_resume_rejects_conflicting_config(self):
        pairs = small_corpus()
        m = train(pairs, quick_cfg(), epochs=1)
        with pytest.raises(ValueError, match="resume"):
            train(pairs, quick_cfg(seed=10), start_model=m)

    def test_tokens_processed_accounting(self):
        pairs = small_corpus()
        cfg = quick_cfg(iterations=2)
        m = train(pairs, cfg)
        vocab = m.vocab
        assert m.tokens_processed == 2 * (vocab.n_e + vocab.n_f)
        assert m.schedule_total == 2 * (vocab.n_e + vocab.n_f)

    def test_parallel_mode_runs_and_is_finite(self):
        pairs = small_corpus(n_pairs=100)
        m = train(pairs, quick_cfg(threads=2))
        assert np.isfinite(m.sense_vecs).all()
        assert m.epochs_done == 2

    def test_subsample_reduces_tokens(self):
        pairs = small_corpus(n_pairs=100)
        m_full = train(pairs, quick_cfg(iterations=1))
        m_sub = train(pairs, quick_cfg(iterations=1, subsample=1e-3))
        assert m_sub.tokens_processed < m_full.tokens_processed
