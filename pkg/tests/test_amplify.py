from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphmia.amplify import (
    SimilarityVector,
    UnlearnConfig,
    distill_loss_and_grads,
    draw_sample_plan,
    fine_tune_augment,
    plan_view_graphs,
    similarity_profile,
    teacher_scores,
    unlearn,
    _PairIndex,
)
from graphmia.graph import Graph
from graphmia.rng import derive_seed
from graphmia.synth import sbm_graph
from graphmia.victim import (
    CONTRASTIVE,
    LINK_PREDICTION,
    SSLObjective,
    ssl_loss_and_grads,
)

from conftest import finite_diff_grads, max_rel_error, tiny_model


def cycle_graph(n: int = 6, feature_dim: int = 3) -> Graph:
    feats = np.tile(np.array([1.0, 2.0, -1.0]), (n, 1))[:, :feature_dim]
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)], feats)


class TestSimilarityVector:
    def test_lengths_and_order(self):
        sv = SimilarityVector(node=3, pos_sims=[0.1, 0.2], neg_sims=[-0.5, 0.0, 0.9])
        assert (sv.num_positive, sv.num_negative) == (2, 3)
        np.testing.assert_array_equal(sv.values(), [0.1, 0.2, -0.5, 0.0, 0.9])

    def test_bounded_validation(self):
        with pytest.raises(ValueError):
            SimilarityVector(node=0, pos_sims=[1.5], neg_sims=[0.0])
        SimilarityVector(node=0, pos_sims=[1.5], neg_sims=[0.0], bounded=False)


class TestSamplePlan:
    def test_deterministic_and_reusable(self, linkpred_objective):
        g = sbm_graph(20, 4, 4.0, seed=2)
        a = draw_sample_plan(g, range(20), linkpred_objective, 3, 3, seed=5)
        b = draw_sample_plan(g, range(20), linkpred_objective, 3, 3, seed=5)
        assert a.nodes == b.nodes
        for v in a.nodes:
            assert a.sample_ids(v) == b.sample_ids(v)

    def test_skips_isolated_linkpred(self, linkpred_objective):
        g = Graph.from_edges(5, [(0, 1), (1, 2)], np.ones((5, 2)))
        plan = draw_sample_plan(g, range(5), linkpred_objective, 2, 1, seed=1)
        assert set(plan.skipped) == {3, 4}
        assert set(plan.nodes) == {0, 1, 2}

    def test_contrastive_shared_views(self, contrastive_objective):
        g = sbm_graph(12, 4, 4.0, seed=3)
        plan = draw_sample_plan(g, range(12), contrastive_objective, 2, 2, seed=9)
        assert len(plan.view_seeds) == 2
        for v in plan.nodes:
            assert [r[2] for r in plan.positive_refs[v]] == list(plan.view_seeds)


class TestSimilarityProfile:
    def test_constant_embeddings_all_ones(self, linkpred_objective):
        g = cycle_graph(6)
        model = tiny_model(g, linkpred_objective, seed=1, emb_dim=8)
        from graphmia.victim import embed

        h = embed(model, g, g.domain_id)
        assert np.linalg.norm(h[0]) > 0  # guard against a dead-ReLU init
        plan = draw_sample_plan(g, range(6), linkpred_objective, 2, 3, seed=4)
        prof = similarity_profile(model, g, g.domain_id, plan)
        # regular graph with identical features -> identical nonzero rows
        for sv in prof.values():
            np.testing.assert_allclose(sv.values(), np.ones(5), atol=1e-12)

    def test_vector_length(self, linkpred_objective, small_sbm):
        model = tiny_model(small_sbm, linkpred_objective)
        plan = draw_sample_plan(small_sbm, range(10), linkpred_objective, 2, 3, seed=4)
        prof = similarity_profile(model, small_sbm, small_sbm.domain_id, plan)
        for sv in prof.values():
            assert len(sv.values()) == 5

    def test_matches_independent_cosine_oracle(self, linkpred_objective, small_sbm):
        model = tiny_model(small_sbm, linkpred_objective)
        plan = draw_sample_plan(small_sbm, range(8), linkpred_objective, 2, 2, seed=6)
        prof = similarity_profile(model, small_sbm, small_sbm.domain_id, plan)
        from graphmia.victim import embed

        h = embed(model, small_sbm, small_sbm.domain_id)
        for v in plan.nodes:
            refs = list(plan.positive_refs[v]) + list(plan.negative_refs[v])
            for entry, (_, j) in zip(prof[v].values(), refs):
                # plain-python recomputation
                dot = sum(float(a) * float(b) for a, b in zip(h[v], h[j]))
                na = math.sqrt(sum(float(a) ** 2 for a in h[v]))
                nb = math.sqrt(sum(float(b) ** 2 for b in h[j]))
                assert entry == pytest.approx(dot / (na * nb), abs=1e-12)

    def test_same_plan_two_models_same_samples(self, linkpred_objective, small_sbm):
        plan = draw_sample_plan(small_sbm, range(10), linkpred_objective, 2, 2, seed=8)
        m1 = tiny_model(small_sbm, linkpred_objective, seed=1)
        m2 = tiny_model(small_sbm, linkpred_objective, seed=2)
        p1 = similarity_profile(m1, small_sbm, small_sbm.domain_id, plan)
        p2 = similarity_profile(m2, small_sbm, small_sbm.domain_id, plan)
        assert set(p1) == set(p2)  # identical node coverage, identical sample ids via plan


class TestTeacherScores:
    def _pair(self):
        a = SimilarityVector(node=1, pos_sims=[0.9, 0.1], neg_sims=[-0.2])
        b = SimilarityVector(node=1, pos_sims=[0.5, 0.3], neg_sims=[0.4])
        return a, b

    def test_lambda_zero_is_target(self):
        a, b = self._pair()
        t = teacher_scores(a, b, 0.0)
        np.testing.assert_array_equal(t.values(), a.values())

    def test_lambda_one_is_augment(self):
        a, b = self._pair()
        t = teacher_scores(a, b, 1.0)
        np.testing.assert_array_equal(t.values(), b.values())

    def test_lambda_above_one_unclamped(self):
        a = SimilarityVector(node=0, pos_sims=[0.9], neg_sims=[0.0])
        b = SimilarityVector(node=0, pos_sims=[-0.9], neg_sims=[0.0])
        t = teacher_scores(a, b, 2.0)
        assert t.pos_sims[0] == pytest.approx(-2.7)
        assert not t.bounded

    @given(
        lam1=st.floats(0, 3), lam2=st.floats(0, 3),
        pos=st.lists(st.floats(-1, 1), min_size=2, max_size=2),
    )
    @settings(max_examples=50, deadline=None)
    def test_linear_in_lambda(self, lam1, lam2, pos):
        a = SimilarityVector(node=0, pos_sims=pos, neg_sims=[0.3])
        b = SimilarityVector(node=0, pos_sims=[0.1, -0.4], neg_sims=[-0.8])
        lhs = (teacher_scores(a, b, lam1).values()
               + teacher_scores(a, b, lam2).values()
               - teacher_scores(a, b, 0.0).values())
        rhs = teacher_scores(a, b, lam1 + lam2).values()
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_shape_mismatch(self):
        a = SimilarityVector(node=0, pos_sims=[0.1], neg_sims=[0.2])
        b = SimilarityVector(node=1, pos_sims=[0.1], neg_sims=[0.2])
        with pytest.raises(Exception):
            teacher_scores(a, b, 1.0)


class TestFineTuneAugment:
    def test_zero_epochs_identity(self, small_sbm, linkpred_objective):
        model = tiny_model(small_sbm, linkpred_objective)
        cfg = UnlearnConfig(augment_epochs=0)
        out = fine_tune_augment(model, small_sbm, cfg, seed=3)
        for k in model.params.names:
            np.testing.assert_array_equal(out.params.tensors[k], model.params.tensors[k])

    def test_loss_improves_and_target_untouched(self, linkpred_objective):
        g = sbm_graph(30, 5, 6.0, seed=4)
        model = tiny_model(g, linkpred_objective, emb_dim=8)
        snapshot = model.params.copy()
        out = fine_tune_augment(model, g, UnlearnConfig(augment_epochs=5, lr_augment=1e-2), seed=3)
        before, _ = ssl_loss_and_grads(model, g, g.domain_id, seed=77)
        after, _ = ssl_loss_and_grads(out, g, g.domain_id, seed=77)
        assert after < before
        for k in snapshot.names:
            np.testing.assert_array_equal(model.params.tensors[k], snapshot.tensors[k])


class TestDistillGradients:
    @pytest.mark.parametrize("kind", [LINK_PREDICTION, CONTRASTIVE])
    def test_gradient_matches_finite_differences(self, kind):
        g = sbm_graph(8, 3, 3.0, seed=6)
        obj = SSLObjective(kind, negatives_per_positive=2)
        model = tiny_model(g, obj, emb_dim=4)
        plan = draw_sample_plan(g, range(g.num_nodes), obj, 2, 2, seed=3)
        views = plan_view_graphs(g, obj, plan)
        idx = _PairIndex.from_plan(plan)
        rng = np.random.default_rng(0)
        teachers = rng.uniform(-1, 1, size=(len(plan.nodes), 4))

        def loss_fn():
            return distill_loss_and_grads(model, g, g.domain_id, plan, teachers, idx, views)[0]

        _, grads = distill_loss_and_grads(model, g, g.domain_id, plan, teachers, idx, views)
        numeric = finite_diff_grads(loss_fn, model.params)
        assert max_rel_error(grads, numeric) < 1e-4


class TestUnlearn:
    def test_lambda_zero_fixed_point(self, linkpred_objective):
        g = sbm_graph(25, 5, 5.0, seed=8)
        model = tiny_model(g, linkpred_objective, emb_dim=8)
        result = unlearn(model, g, UnlearnConfig(lam=0.0, distill_epochs=10), seed=2)
        drift = max(
            float(np.max(np.abs(result.model.params.tensors[k] - model.params.tensors[k])))
            for k in model.params.names
        )
        assert drift < 1e-9
        assert result.final_loss < 1e-18

    def test_lambda_one_moves_toward_augment(self, linkpred_objective):
        g = sbm_graph(30, 5, 6.0, seed=9)
        model = tiny_model(g, linkpred_objective, emb_dim=8)
        result = unlearn(
            model, g,
            UnlearnConfig(lam=1.0, augment_epochs=5, distill_epochs=40, lr_distill=3e-3),
            seed=4,
        )
        assert result.final_loss < result.initial_loss

    def test_distill_loss_final_not_above_initial(self, contrastive_objective):
        g = sbm_graph(20, 4, 5.0, seed=10)
        model = tiny_model(g, contrastive_objective, emb_dim=6)
        result = unlearn(
            model, g, UnlearnConfig(lam=1.0, augment_epochs=3, distill_epochs=30), seed=5
        )
        assert result.final_loss <= result.history[0]

    def test_never_mutates_target(self, linkpred_objective):
        g = sbm_graph(20, 4, 5.0, seed=11)
        model = tiny_model(g, linkpred_objective, emb_dim=6)
        snapshot = model.params.copy()
        unlearn(model, g, UnlearnConfig(distill_epochs=5), seed=6)
        for k in snapshot.names:
            np.testing.assert_array_equal(model.params.tensors[k], snapshot.tensors[k])

    def test_profiles_share_sample_identities(self, linkpred_objective):
        g = sbm_graph(20, 4, 5.0, seed=12)
        model = tiny_model(g, linkpred_objective, emb_dim=6)
        result = unlearn(model, g, UnlearnConfig(distill_epochs=1), seed=7)
        replay = draw_sample_plan(
            g, range(g.num_nodes), linkpred_objective,
            result.plan.num_positive, result.plan.num_negative,
            seed=derive_seed(7, "unlearn-plan"),
        )
        assert result.plan.nodes == replay.nodes
        for v in replay.nodes:
            assert result.plan.sample_ids(v) == replay.sample_ids(v)
