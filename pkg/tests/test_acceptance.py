"""Acceptance suite: one test per release criterion.

Criteria 3-5 share a single 5-seed pipeline run on the synthetic two-domain
SBM fixture (~300 nodes per domain, deliberately overfit 500-epoch
link-prediction victim).  A terminal-summary hook in conftest prints one
pass/fail line per criterion.
"""

from __future__ import annotations

import itertools
import time
from fractions import Fraction

import numpy as np
import pytest

from graphmia.amplify import (
    UnlearnConfig,
    draw_sample_plan,
    fine_tune_augment,
    plan_view_graphs,
    similarity_profile,
    teacher_scores,
    unlearn,
    distill_loss_and_grads,
    _PairIndex,
)
from graphmia.attack import AttackTrainConfig
from graphmia.baselines import BaselineSpec, pairwise_similarity_features, parameter_change_features
from graphmia.config import ExperimentConfig, SyntheticSpec
from graphmia.experiment import run_experiment, runtime_scaling_check
from graphmia.metrics import accuracy_f1
from graphmia.nn import MLP, cross_entropy
from graphmia.shadow import FisherDiag, ShadowConfig, estimate_fisher, ewc_penalty, incremental_finetune
from graphmia.synth import sbm_graph
from graphmia.victim import (
    CONTRASTIVE,
    LINK_PREDICTION,
    SSLObjective,
    contrastive_loss,
    fine_tune,
    linkpred_loss,
)

from conftest import finite_diff_grads, max_rel_error, tiny_model

pytestmark = pytest.mark.acceptance


def acceptance_config() -> ExperimentConfig:
    return ExperimentConfig(
        lr_pretrain=3e-3,
        repetitions=5,
        seed=7,
        synthetic=SyntheticSpec(
            domains=2, nodes_per_domain=300, feature_dim=16, avg_degree=10,
            feature_shift=0.5, feature_noise=2.0,
        ),
    )


@pytest.fixture(scope="module")
def fixture_runs():
    """One 5-seed run of the full pipeline, ablations, and Embed-MIA."""
    t0 = time.perf_counter()
    result = run_experiment(
        acceptance_config(),
        attacks=("similarity", "embed-mia"),
        variants=("full", "wo-ul", "wo-il"),
    )
    elapsed = time.perf_counter() - t0
    assert not result.failures, result.failures
    by_key: dict[tuple[str, str], list] = {}
    for rec in result.records:
        by_key.setdefault((rec.report.attack, rec.variant), []).append(rec)
    return by_key, elapsed


class TestCriterion1GradientIntegrity:
    def test_criterion_1_gradient_integrity(self):
        t0 = time.perf_counter()
        worst = 0.0
        for seed in (0, 1):
            g = sbm_graph(10, 6, 3.0, seed=seed)
            for kind, loss_fn in (
                (LINK_PREDICTION, linkpred_loss),
                (CONTRASTIVE, contrastive_loss),
            ):
                model = tiny_model(g, SSLObjective(kind, negatives_per_positive=3),
                                   seed=seed + 2, emb_dim=8)
                _, grads = loss_fn(model, g, g.domain_id, seed=31)
                numeric = finite_diff_grads(
                    lambda m=model, k=loss_fn: k(m, g, g.domain_id, seed=31)[0], model.params
                )
                worst = max(worst, max_rel_error(grads, numeric))

            # distillation MSE through the student's embeddings
            obj = SSLObjective(LINK_PREDICTION)
            model = tiny_model(g, obj, seed=seed + 5, emb_dim=8)
            plan = draw_sample_plan(g, range(g.num_nodes), obj, 2, 2, seed=7)
            views = plan_view_graphs(g, obj, plan)
            idx = _PairIndex.from_plan(plan)
            teachers = np.random.default_rng(seed).uniform(-1, 1, (len(plan.nodes), 4))
            _, grads = distill_loss_and_grads(model, g, g.domain_id, plan, teachers, idx, views)
            numeric = finite_diff_grads(
                lambda: distill_loss_and_grads(model, g, g.domain_id, plan, teachers, idx, views)[0],
                model.params,
            )
            worst = max(worst, max_rel_error(grads, numeric))

            # cross-entropy through the attack MLP
            rng = np.random.default_rng(seed)
            mlp = MLP.init(6, 8, 2, seed=seed)
            x = rng.normal(size=(9, 6))
            y = rng.integers(0, 2, size=9)
            logits, cache = mlp.forward(x)
            _, dlogits = cross_entropy(logits, y)
            analytic = mlp.backward(cache, dlogits)
            numeric = finite_diff_grads(
                lambda: cross_entropy(mlp.forward(x)[0], y)[0], mlp.params
            )
            worst = max(worst, max_rel_error(analytic, numeric))

            # EWC quadratic penalty
            model = tiny_model(g, obj, seed=seed + 9, emb_dim=8)
            params = model.params
            anchor = params.copy()
            for t in anchor.tensors.values():
                t += rng.normal(scale=0.2, size=t.shape)
            fisher = FisherDiag(
                {k: rng.uniform(0, 2, size=t.shape) for k, t in params.items()}, sample_count=1
            )
            _, grads = ewc_penalty(params, anchor, fisher, alpha=0.6)
            numeric = finite_diff_grads(
                lambda: ewc_penalty(params, anchor, fisher, 0.6)[0], params
            )
            worst = max(worst, max_rel_error(grads, numeric))

        elapsed = time.perf_counter() - t0
        assert worst < 1e-4, f"worst relative gradient error {worst:.2e}"
        assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"


class TestCriterion2AlgebraicFixedPoints:
    def test_criterion_2_algebraic_fixed_points(self):
        g = sbm_graph(30, 6, 6.0, seed=3)
        obj = SSLObjective(LINK_PREDICTION)
        model = tiny_model(g, obj, seed=4, emb_dim=8)

        # lambda = 0: unlearning is a no-op on the parameters
        result = unlearn(model, g, UnlearnConfig(lam=0.0, distill_epochs=8), seed=5)
        drift = max(
            float(np.max(np.abs(result.model.params.tensors[k] - model.params.tensors[k])))
            for k in model.params.names
        )
        assert drift < 1e-9

        # lambda = 1: teacher equals the augment scores exactly
        augment = fine_tune_augment(model, g, UnlearnConfig(augment_epochs=3), seed=6)
        plan = draw_sample_plan(g, range(g.num_nodes), obj, 3, 3, seed=8)
        s_t = similarity_profile(model, g, g.domain_id, plan)
        s_a = similarity_profile(augment, g, g.domain_id, plan)
        for v in plan.nodes:
            teacher = teacher_scores(s_t[v], s_a[v], 1.0)
            np.testing.assert_array_equal(teacher.values(), s_a[v].values())

        # alpha = 0: shadow fine-tuning is bit-identical to plain fine-tuning
        fisher = estimate_fisher(model, g, obj, seed=9)
        anchored, _ = incremental_finetune(
            model, g, fisher, ShadowConfig(alpha=0.0, epochs=10, lr=1e-3), seed=10
        )
        plain, _ = fine_tune(model, g, g.domain_id, epochs=10, lr=1e-3, seed=10)
        for k in anchored.params.names:
            np.testing.assert_array_equal(anchored.params.tensors[k], plain.params.tensors[k])

        # zero augment epochs: augment model equals the target
        frozen = fine_tune_augment(model, g, UnlearnConfig(augment_epochs=0), seed=11)
        for k in model.params.names:
            np.testing.assert_array_equal(frozen.params.tensors[k], model.params.tensors[k])


class TestCriterion3Amplification:
    def test_criterion_3_amplification_gap(self, fixture_runs):
        by_key, elapsed = fixture_runs
        full = by_key[("similarity", "full")]
        assert len(full) == 5
        wins = sum(1 for rec in full if rec.extras["shadow_gap"] > rec.extras["target_gap"])
        assert wins >= 4, (
            f"amplified gap exceeded the target's in only {wins}/5 seeds: "
            + str([(round(r.extras['shadow_gap'], 4), round(r.extras['target_gap'], 4))
                   for r in full])
        )
        assert elapsed < 300.0, f"fixture run took {elapsed:.0f}s"


class TestCriterion4EndToEnd:
    def test_criterion_4_attack_effectiveness(self, fixture_runs):
        by_key, elapsed = fixture_runs
        sim = [r.report.acc for r in by_key[("similarity", "full")]]
        emb = [r.report.acc for r in by_key[("embed-mia", "full")]]
        assert len(sim) == len(emb) == 5
        # identical split/seed pairing
        sim_fp = sorted(r.split_fingerprint for r in by_key[("similarity", "full")])
        emb_fp = sorted(r.split_fingerprint for r in by_key[("embed-mia", "full")])
        assert sim_fp == emb_fp
        mean_sim = float(np.mean(sim))
        mean_emb = float(np.mean(emb))
        assert mean_sim >= 0.60, f"similarity attack mean accuracy {mean_sim:.3f}"
        assert mean_sim > mean_emb, f"{mean_sim:.3f} vs embed-mia {mean_emb:.3f}"
        assert elapsed < 900.0, f"fixture run took {elapsed:.0f}s"


class TestCriterion5AblationOrdering:
    def test_criterion_5_ablation_ordering(self, fixture_runs):
        by_key, _ = fixture_runs
        accs = {
            variant: np.array([r.report.acc for r in by_key[("similarity", variant)]])
            for variant in ("full", "wo-ul", "wo-il")
        }
        mean_full = float(accs["full"].mean())
        std_full = float(accs["full"].std(ddof=1))
        for variant in ("wo-ul", "wo-il"):
            mean_v = float(accs[variant].mean())
            std_v = float(accs[variant].std(ddof=1))
            tolerance = max(std_full, std_v)
            assert mean_full >= mean_v - tolerance, (
                f"full {mean_full:.3f} below {variant} {mean_v:.3f} by more than "
                f"one std ({tolerance:.3f})"
            )


class TestCriterion6MetricOracle:
    def test_criterion_6_metric_oracle(self):
        n = 8
        for truth_bits in itertools.product([0, 1], repeat=n):
            truth = {i: t for i, t in enumerate(truth_bits)}
            for pred_bits in itertools.product([0, 1], repeat=n):
                preds = {i: p for i, p in enumerate(pred_bits)}
                rep = accuracy_f1(preds, truth)
                tp = sum(p and t for p, t in zip(pred_bits, truth_bits))
                fp = sum(p and not t for p, t in zip(pred_bits, truth_bits))
                tn = sum((not p) and (not t) for p, t in zip(pred_bits, truth_bits))
                fn = n - tp - fp - tn
                assert (rep.tp, rep.fp, rep.tn, rep.fn) == (tp, fp, tn, fn)
                assert rep.acc == (tp + tn) / n
                denom = 2 * tp + fp + fn
                assert rep.f1 == (float(Fraction(2 * tp, denom)) if denom else 0.0)


class TestCriterion7BaselineShapes:
    def test_criterion_7_baseline_shapes(self):
        g = sbm_graph(60, 6, 8.0, seed=13)
        model = tiny_model(g, SSLObjective(LINK_PREDICTION), seed=1, emb_dim=8)

        feats = pairwise_similarity_features(model, g, range(3), 10, 0.0015, seed=2)
        assert feats.shape[1] == 45  # C(10, 2)

        spec = BaselineSpec(kind="ge-mia")
        assert spec.reference_members == 20 and spec.reference_nonmembers == 20

        spec = BaselineSpec(kind="gpia")
        assert spec.finetune_epochs == 10
        _, change, _ = parameter_change_features(
            model, g, [0], epochs=spec.finetune_epochs, lr=1e-3, seed=3
        )
        assert change.shape == (1, len(model.params.names))

        assert AttackTrainConfig().hidden_dim == 256


class TestCriterion8ComplexityScaling:
    def test_criterion_8_linear_scaling(self):
        cfg = ExperimentConfig(
            epochs_pretrain=60, epochs_augment=3, epochs_unlearn=20, epochs_shadow=40,
            epochs_attack=100, repetitions=1, seed=3, m_samples=5, emb_dim=64,
            synthetic=SyntheticSpec(domains=2, nodes_per_domain=500, feature_dim=16,
                                    avg_degree=10),
        )
        report = runtime_scaling_check([500, 1000, 2000, 4000], cfg)
        assert 0.8 <= report.slope <= 1.4, (
            f"log-log slope {report.slope:.3f}, times {report.seconds}"
        )
        ratios = [b / a for a, b in zip(report.seconds, report.seconds[1:])]
        assert all(1.5 <= r <= 3.0 for r in ratios), (
            f"doubling n should roughly double wall time, got ratios {ratios}"
        )


class TestCriterion9Determinism:
    def test_criterion_9_byte_identical_reports(self, tmp_path):
        cfg = ExperimentConfig(
            epochs_pretrain=40, epochs_augment=2, epochs_unlearn=5, epochs_shadow=10,
            epochs_attack=40, repetitions=2, seed=11, m_samples=3, emb_dim=16,
            hidden_dim=64,
            synthetic=SyntheticSpec(domains=2, nodes_per_domain=120, feature_dim=8,
                                    avg_degree=12),
        )
        dirs = (tmp_path / "a", tmp_path / "b")
        for d in dirs:
            run_experiment(cfg, attacks=("similarity", "glo-mia"),
                           variants=("full",), out_dir=d)
        names = sorted(p.name for p in dirs[0].glob("report_*.json"))
        assert len(names) == 4  # 2 seeds x 2 attacks
        for name in names:
            a = (dirs[0] / name).read_bytes()
            b = (dirs[1] / name).read_bytes()
            assert a == b, f"report {name} differs between identical runs"
