import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import perturb, tiny_model
from poiretriever.contrastive import (TrainConfig, TrainingInstance, build_instances,
                                      contrastive_batch_loss, mine_hard_negatives, nll_loss,
                                      nll_rows, sample_negatives, train)
from poiretriever.corpus import PoiCollection, Question
from poiretriever.errors import ConfigError
from poiretriever.nn import Adam, grad_check

scores = st.floats(-20, 20)


class TestNll:
    def test_equal_scores_is_ln2(self):
        assert abs(nll_loss(0.0, [0.0]) - math.log(2.0)) < 1e-12

    @pytest.mark.parametrize("pos,negs,expected", [
        (1.0, [0.0], 0.31326168751822283),
        (10.0, [0.0, 0.0, 0.0], 0.00013619051493825363),
    ])
    def test_examples(self, pos, negs, expected):
        # Oracle values: ln(1 + e^-1) and ln(1 + 3 e^-10) evaluated at 30 digits.
        assert nll_loss(pos, negs) == pytest.approx(expected, abs=1e-9)

    def test_empty_negatives(self):
        with pytest.raises(ValueError):
            nll_loss(1.0, [])

    @given(scores, st.lists(scores, min_size=1, max_size=6), st.floats(-50, 50))
    def test_shift_invariance(self, pos, negs, c):
        shifted = nll_loss(pos + c, [n + c for n in negs])
        assert shifted == pytest.approx(nll_loss(pos, negs), abs=1e-9)

    @given(scores, st.lists(scores, min_size=1, max_size=6), st.floats(0.01, 5))
    def test_monotone(self, pos, negs, delta):
        base = nll_loss(pos, negs)
        assert nll_loss(pos + delta, negs) <= base
        assert nll_loss(pos, [negs[0] + delta] + negs[1:]) >= base

    def test_no_overflow(self):
        assert math.isfinite(nll_loss(1000.0, [-1000.0, 999.0]))

    def test_rows_agree_with_scalar(self, rng):
        s = rng.normal(size=(4, 6)) * 5
        loss, grad = nll_rows(s)
        for i in range(4):
            assert loss[i] == pytest.approx(nll_loss(s[i, 0], s[i, 1:]), abs=1e-12)
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


class TestConfig:
    def test_mix_must_sum(self):
        with pytest.raises(ConfigError):
            TrainConfig(phase2_mix={"medium": 2, "hard": 12})

    def test_phase_bound(self):
        with pytest.raises(ConfigError):
            TrainConfig(total_epochs=3, phase1_epochs=4)


class TestInstances:
    def test_one_per_answer(self, small_corpus):
        pois, questions = small_corpus
        inst = build_instances(questions, pois)
        assert len(inst) == sum(len(q.answer_ids) for q in questions)
        assert all(i.positive in i.question.answer_ids for i in inst)

    def test_unresolvable(self, small_corpus):
        pois, questions = small_corpus
        q = questions[0]
        bad = Question(q.id, q.text, q.city, ("missing",), q.tagged_locations)
        with pytest.raises(ValueError, match=q.id):
            build_instances([bad], pois)

    def test_tiers_and_backfill(self, small_corpus, rng):
        pois, questions = small_corpus
        for skel in build_instances(questions, pois):
            pos = pois[skel.positive]
            hard = [p for p in pois.ids if p not in skel.question.answer_ids][:5]
            filled = sample_negatives(skel, pois, {"easy": 2, "medium": 3, "hard": 4},
                                      {skel.question.id: hard}, rng)
            ids = [pid for pid, _ in filled.negatives]
            assert len(ids) == len(set(ids)) == 9
            assert not set(ids) & set(skel.question.answer_ids)
            for pid, tier in filled.negatives:
                if tier == "medium":
                    assert (pois[pid].city, pois[pid].poi_type) == (pos.city, pos.poi_type)
                if tier == "hard":
                    assert pid in hard

    def test_empty_hard_pool_backfills_medium(self, small_corpus, rng):
        pois, questions = small_corpus
        skel = build_instances(questions, pois)[0]
        filled = sample_negatives(skel, pois, {"medium": 1, "hard": 2}, {}, rng)
        assert [t for _, t in filled.negatives] == ["medium"] * len(filled.negatives) or \
            {t for _, t in filled.negatives} <= {"medium", "easy"}
        assert len(filled.negatives) == 3

    def test_insufficient_pool(self, small_corpus, rng):
        pois, questions = small_corpus
        skel = build_instances(questions, pois)[0]
        with pytest.raises(ValueError):
            sample_negatives(skel, pois, {"easy": len(pois)}, None, rng)


class TestMining:
    def test_pools_match_brute_force(self, small_corpus):
        pois, questions = small_corpus
        sub = PoiCollection(list(pois)[:5])
        qs = [Question("q0", questions[0].text, questions[0].city, (sub.ids[0],), ())]
        model = tiny_model(pois, seed=3)
        pools = mine_hard_negatives(model, qs, sub, k=3)
        qv, _ = model.encode_questions(model.question_inputs(qs))
        pv, _ = model.encode_pois(model.poi_inputs(sub.pois))
        s = pv @ qv[0]
        order = sorted(range(5), key=lambda i: (-s[i], sub.pois[i].id))
        expected = [sub.pois[i].id for i in order if sub.pois[i].id != sub.ids[0]][:3]
        assert pools["q0"] == expected

    def test_pools_exclude_answers(self, small_corpus):
        pois, questions = small_corpus
        pools = mine_hard_negatives(tiny_model(pois), questions, pois, k=7)
        for q in questions:
            assert len(pools[q.id]) <= 7
            assert not set(pools[q.id]) & set(q.answer_ids)


class TestTraining:
    def test_full_model_gradient(self, small_corpus):
        pois, questions = small_corpus
        for seed in range(2):
            model = tiny_model(pois, seed=seed)
            perturb(model.parameters(), np.random.default_rng(seed), 0.3)
            q_in = model.question_inputs(questions[:2])
            p_in = model.poi_inputs(list(pois)[:6])

            def loss():
                return contrastive_batch_loss(model, q_in, p_in, [0, 1], [[0, 1, 2], [3, 4, 5]])

            # The POI-side fusion bias shifts every candidate score equally, so its true gradient
            # is zero and central differences at 1e-4 return one ulp of loss / 2e-4 (~1.1e-12).
            # A 1e-3 step keeps that roundoff below the checker's 1e-8 floor.
            assert grad_check(loss, model.parameters(), epsilon=1e-3) < 1e-4

    def test_single_batch_overfit(self, small_corpus):
        pois, questions = small_corpus
        model = tiny_model(pois, seed=1)
        q_in = model.question_inputs(questions[:1])
        p_in = model.poi_inputs(list(pois)[:4])
        opt = Adam(model.parameters())
        for _ in range(200):
            loss = contrastive_batch_loss(model, q_in, p_in, [0], [[0, 1, 2, 3]])
            opt.step(1e-2)
        assert contrastive_batch_loss(model, q_in, p_in, [0], [[0, 1, 2, 3]], backward=False) < 0.01

    def test_phase_boundary_and_determinism(self, small_corpus):
        pois, questions = small_corpus
        cfg = TrainConfig(total_epochs=3, phase1_epochs=2, n_negatives=5,
                          phase1_mix={"easy": 3, "medium": 2}, phase2_mix={"medium": 1, "hard": 4},
                          base_lr=1e-2, mining_k=10, seed=4)
        a = train(tiny_model(pois), pois, questions, cfg, track_accuracy=False)
        b = train(tiny_model(pois), pois, questions, cfg, track_accuracy=False)
        assert [c["hard"] for c in a.tier_counts[:2]] == [0, 0]
        assert a.tier_counts[2]["hard"] > 0
        assert [r.phase for r in a.trace] == [1, 1, 2]
        assert a.model.to_bytes() == b.model.to_bytes()

    def test_freeze_location(self, small_corpus):
        pois, questions = small_corpus
        model = tiny_model(pois)
        before = [p.values.copy() for p in model.location_parameters()]
        cfg = TrainConfig(total_epochs=1, phase1_epochs=1, n_negatives=3,
                          phase1_mix={"easy": 3}, phase2_mix={"hard": 3}, base_lr=1e-2,
                          freeze_location=True)
        train(model, pois, questions, cfg, track_accuracy=False)
        assert all((a == p.values).all() for a, p in zip(before, model.location_parameters()))
