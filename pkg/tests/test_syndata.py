import numpy as np
import pytest

from cerberus.corpus import CorpusStore, partition_timesteps, save_corpus
from cerberus.errors import ConfigError, DataError
from cerberus.matrices import build_adjacency
from cerberus.syndata import (
    DriftEvent,
    SynthConfig,
    background_tokens,
    generate,
)


def small_cfg(**kw):
    base = dict(
        G=3,
        users_per_community=6,
        T=3,
        threads_per_window=3,
        posts_per_thread=4,
        tokens_per_post=6,
        crossover=0.1,
        shared_words=8,
        signature_words=3,
        signature_boost=10.0,
        seed=0,
    )
    base.update(kw)
    return SynthConfig(**base)


def theta_sets(posts, windowing):
    """threads touched per user per window, straight from the raw posts"""
    buckets = partition_timesteps(CorpusStore(list(posts)), windowing)
    out = []
    for bucket in buckets:
        threads = {}
        for p in bucket:
            threads.setdefault(p.user_id, set()).add(p.thread_id)
        out.append(threads)
    return out


class TestConfig:
    def test_roundtrip_dict(self):
        cfg = small_cfg(
            drift_events=[DriftEvent("word_adoption", 2, {"community": "c1", "word": "shared_w0", "boost": 5.0})]
        )
        again = SynthConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown synth config keys"):
            SynthConfig.from_dict({"G": 2, "bogus": 1})

    def test_zero_threads_infeasible(self):
        with pytest.raises(ConfigError, match="zero threads"):
            small_cfg(threads_per_window=0).validate()

    def test_bad_drift_kind(self):
        cfg = small_cfg(drift_events=[DriftEvent("teleport", 1, {})])
        with pytest.raises(ConfigError, match="unknown drift kind"):
            cfg.validate()

    def test_t_star_out_of_range(self):
        ev = DriftEvent("word_adoption", 9, {"community": "c1", "word": "w", "boost": 2})
        with pytest.raises(ConfigError, match="t_star"):
            small_cfg(drift_events=[ev]).validate()

    def test_missing_event_param(self):
        ev = DriftEvent("splinter", 2, {"community": "c1"})
        with pytest.raises(ConfigError, match="missing parameter"):
            small_cfg(drift_events=[ev]).validate()

    def test_crossover_bounds(self):
        with pytest.raises(ConfigError, match="crossover"):
            small_cfg(crossover=1.5).validate()


class TestGenerate:
    def test_deterministic(self, tmp_path):
        r1 = generate(small_cfg())
        r2 = generate(small_cfg())
        assert r1.posts == r2.posts
        assert r1.labels == r2.labels
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_corpus(r1.posts, p1)
        save_corpus(r2.posts, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_different_seed_differs(self):
        assert generate(small_cfg(seed=1)).posts != generate(small_cfg(seed=2)).posts

    def test_volume_and_labels(self):
        cfg = small_cfg()
        res = generate(cfg)
        # G communities x threads x posts_per_thread posts per window
        assert len(res.posts) == cfg.T * cfg.G * cfg.threads_per_window * cfg.posts_per_thread
        users = {u for c in cfg.communities() for u in cfg.users_of(c)}
        assert set(res.home) == users
        for user in users:
            for t in range(1, cfg.T + 1):
                assert res.labels[(user, t)] == {res.home[user][t - 1]}

    def test_single_community_single_label(self):
        res = generate(small_cfg(G=1))
        assert {next(iter(s)) for s in res.labels.values()} == {"c1"}
        assert all(p.community == "c1" for p in res.posts)

    def test_zero_crossover_is_block_structured(self):
        cfg = small_cfg(crossover=0.0)
        res = generate(cfg)
        roster = sorted(res.home)
        buckets = partition_timesteps(CorpusStore(res.posts), cfg.windowing())
        for bucket in buckets:
            dense = build_adjacency(bucket, roster, roster).to_dense()
            for i, ui in enumerate(roster):
                for j, uj in enumerate(roster):
                    if res.home[ui][0] != res.home[uj][0]:
                        assert dense[i, j] == 0.0

    def test_signatures_exclusive_without_drift(self):
        cfg = small_cfg(crossover=0.0)
        res = generate(cfg)
        for post in res.posts:
            comm = res.home[post.user_id][0]
            for tok in post.tokens:
                if tok.startswith("sig_"):
                    assert tok.startswith(f"sig_{comm}_")

    def test_shared_signature_lists_make_content_ambiguous(self):
        words = ["blend_a", "blend_b"]
        cfg = small_cfg(signature_lists={"c2": words, "c3": words})
        res = generate(cfg)
        by_comm = {"c2": set(), "c3": set()}
        for post in res.posts:
            comm = res.home[post.user_id][0]
            if comm in by_comm:
                by_comm[comm].update(t for t in post.tokens if t.startswith("blend"))
        assert by_comm["c2"] == by_comm["c3"] == set(words)

    def test_category_override(self):
        cfg = small_cfg(category_of={"c1": "catA", "c2": "catA", "c3": "catB"})
        res = generate(cfg)
        for post in res.posts:
            expect = {"c1": "catA", "c2": "catA", "c3": "catB"}[post.community]
            assert post.category == expect

    def test_background_is_uniform(self):
        res = generate(small_cfg())
        bg = background_tokens(res.vocab)
        assert bg == res.vocab
        assert len(set(bg)) == len(bg)


class TestDrift:
    def test_word_adoption_raises_frequency(self):
        ev = DriftEvent("word_adoption", 3, {"community": "c2", "word": "shared_w0", "boost": 12.0})
        cfg = small_cfg(T=4, drift_events=[ev], seed=3)
        res = generate(cfg)
        assert res.drift_log[0]["kind"] == "word_adoption"
        c2_users = set(cfg.users_of("c2"))
        pre, post = [0, 0], [0, 0]  # [word count, total tokens]
        for p in res.posts:
            if p.user_id not in c2_users:
                continue
            t = p.timestamp // 100 + 1
            slot = pre if t < 3 else post
            slot[0] += sum(tok == "shared_w0" for tok in p.tokens)
            slot[1] += len(p.tokens)
        assert post[0] / post[1] > pre[0] / pre[1]

    def test_migration_moves_labels_and_threads(self):
        ev = DriftEvent("user_migration", 2, {"from_community": "c1", "to_community": "c2", "n_users": 3})
        cfg = small_cfg(T=3, drift_events=[ev], seed=4)
        res = generate(cfg)
        movers = res.drift_log[0]["users"]
        assert len(movers) == 3
        for user in movers:
            assert res.home[user] == ["c1", "c2", "c2"]
        # post-move posts land mostly in c2 threads
        landed = [p.community for p in res.posts if p.user_id in movers and p.timestamp >= 100]
        assert landed.count("c2") / len(landed) > 0.5

    def test_splinter_membership_and_lexicon(self):
        lexicon = ["shared_w0", "shared_w1"]
        ev = DriftEvent("splinter", 3, {"community": "c1", "n_users": 3, "lexicon": lexicon, "factor": 4.0})
        cfg = small_cfg(T=5, posts_per_thread=8, drift_events=[ev], seed=5)
        res = generate(cfg)
        assert "c1_splinter" in res.groups
        movers = set(res.drift_log[0]["users"])

        def lex_freq(users, lo_t):
            count = total = 0
            for p in res.posts:
                if p.user_id in users and p.timestamp // 100 + 1 >= lo_t:
                    count += sum(tok in lexicon for tok in p.tokens)
                    total += len(p.tokens)
            return count / total

        parents = set(cfg.users_of("c1")) - movers
        # planted contrast: splinter users use the lexicon more than the
        # parent community by at least the configured factor
        assert lex_freq(movers, 3) > 4.0 * lex_freq(parents, 3)

    def test_splinter_lexicon_must_exist_in_parent(self):
        ev = DriftEvent("splinter", 2, {"community": "c1", "n_users": 2, "lexicon": ["made_up"], "factor": 3.0})
        with pytest.raises(DataError, match="absent from parent"):
            generate(small_cfg(drift_events=[ev]))

    def test_splinter_infeasible_mass(self):
        lexicon = [f"shared_w{i}" for i in range(8)]
        ev = DriftEvent("splinter", 2, {"community": "c1", "n_users": 2, "lexicon": lexicon, "factor": 12.0})
        with pytest.raises(DataError, match="infeasible splinter"):
            generate(small_cfg(drift_events=[ev]))

    def test_migration_unknown_community(self):
        ev = DriftEvent("user_migration", 2, {"from_community": "c9", "to_community": "c1", "n_users": 1})
        with pytest.raises(ConfigError, match="unknown community"):
            generate(small_cfg(drift_events=[ev]))


class TestMonteCarlo:
    def test_cross_block_mass_matches_analytic_expectation(self):
        # 30-user communities write 60 posts per window (2 per user), so the
        # probability a user touches a given thread of community h is
        # q(h) = 1 - (1 - p(h)/R)^2 exactly, and E|theta_u ∩ theta_v| sums
        # R * q * q' over the three thread groups.
        G, users, R, ppt, eps = 3, 30, 6, 10, 0.1
        n_p = R * ppt // users
        assert R * ppt % users == 0  # exact posts-per-user keeps the formula exact

        def q(p_comm):
            return 1.0 - (1.0 - p_comm / R) ** n_p

        q_own, q_for = q(1 - eps), q(eps / (G - 1))
        e_same = R * (q_own**2 + (G - 1) * q_for**2)
        e_cross = R * (2 * q_own * q_for + (G - 2) * q_for**2)
        same_pairs = G * users * (users - 1) // 2
        cross_pairs = (G * users) * (G * users - 1) // 2 - same_pairs
        expect = (cross_pairs * e_cross) / (cross_pairs * e_cross + same_pairs * e_same)

        ratios = []
        for seed in range(20):
            cfg = SynthConfig(
                G=G, users_per_community=users, T=6, threads_per_window=R,
                posts_per_thread=ppt, tokens_per_post=2, crossover=eps,
                shared_words=4, signature_words=2, seed=seed,
            )
            res = generate(cfg)
            cross = total = 0.0
            for window in theta_sets(res.posts, cfg.windowing()):
                users_here = sorted(window)
                for a in range(len(users_here)):
                    for b in range(a + 1, len(users_here)):
                        ua, ub = users_here[a], users_here[b]
                        inter = len(window[ua] & window[ub])
                        total += inter
                        if res.home[ua][0] != res.home[ub][0]:
                            cross += inter
            ratios.append(cross / total)

        mean = np.mean(ratios)
        se = np.std(ratios, ddof=1) / np.sqrt(len(ratios))
        assert abs(mean - expect) <= 3 * se, (mean, expect, se)
