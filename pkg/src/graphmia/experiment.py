"""End-to-end experiment orchestration.

One seed drives one complete audit: split every domain graph in half,
pre-train the victim on the member halves, carve the attack domain's
non-member half into unlearn / shadow-train / shadow-test, run the
amplify -> incremental-shadow -> similarity-attack pipeline (plus any
requested baselines and ablation variants), and score predictions against
the true membership labels.  Failures are contained per seed.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .amplify import UnlearnConfig, draw_sample_plan, similarity_profile, unlearn
from .attack import (
    AttackTrainConfig,
    build_attack_dataset,
    infer_membership,
    train_attack_model,
)
from .baselines import BaselineSpec, ShadowSplit, embed_mia, ge_mia, glo_mia, gpia, grad_mia, nlo_mia
from .config import ExperimentConfig, config_hash
from .graph import Graph, GraphPartition, induced_subgraph, load_graph, partition_shadow, split_half
from .metrics import MetricsReport, accuracy_f1
from .rng import derive_seed, substream
from .shadow import ShadowConfig, estimate_fisher, incremental_finetune
from .synth import sbm_graph
from .victim import SSLObjective, TrainConfig, VictimModel, fine_tune, pretrain_multidomain

PRIMARY_ATTACK = "similarity"
VARIANT_FULL = "full"
VARIANT_WO_UL = "wo-ul"
VARIANT_WO_IL = "wo-il"
VARIANTS = (VARIANT_FULL, VARIANT_WO_UL, VARIANT_WO_IL)
BASELINE_KINDS = ("embed-mia", "grad-mia", "nlo-mia", "glo-mia", "ge-mia", "gpia")


@dataclass
class DomainData:
    graph: Graph
    member_nodes: frozenset[int]
    nonmember_nodes: frozenset[int]
    member_graph: Graph
    nonmember_graph: Graph

    @property
    def member_ids(self) -> list[int]:
        return sorted(self.member_nodes)

    @property
    def nonmember_ids(self) -> list[int]:
        return sorted(self.nonmember_nodes)


@dataclass
class AttackContext:
    """Everything one seed's attacks share: model, splits, and subgraphs."""

    seed: int
    objective: SSLObjective
    target: VictimModel
    domains: list[DomainData]
    attack_domain: DomainData
    partition: GraphPartition
    unlearn_graph: Graph
    shadow_train_graph: Graph
    shadow_test_graph: Graph
    split_fingerprint: str


@dataclass
class RunRecord:
    report: MetricsReport
    variant: str
    config_hash: str
    split_fingerprint: str
    extras: dict = field(default_factory=dict)

    def report_dict(self) -> dict:
        d = self.report.to_dict()
        d["variant"] = self.variant
        d["config_hash"] = self.config_hash
        return d


@dataclass
class SeedFailure:
    seed: int
    stage: str
    error: str


@dataclass
class ExperimentResult:
    records: list[RunRecord]
    failures: list[SeedFailure]
    config_hash: str
    wall_time_s: float

    def reports(self) -> list[MetricsReport]:
        return [r.report for r in self.records]

    def summary(self) -> dict:
        groups: dict[str, list[MetricsReport]] = {}
        for rec in self.records:
            groups.setdefault(f"{rec.report.attack}/{rec.variant}", []).append(rec.report)
        out = {}
        for key, reps in sorted(groups.items()):
            accs = np.array([r.acc for r in reps])
            f1s = np.array([r.f1 for r in reps])
            out[key] = {
                "runs": len(reps),
                "acc_mean": float(accs.mean()),
                "acc_std": float(accs.std(ddof=1)) if len(reps) > 1 else 0.0,
                "f1_mean": float(f1s.mean()),
                "f1_std": float(f1s.std(ddof=1)) if len(reps) > 1 else 0.0,
            }
        return {
            "config_hash": self.config_hash,
            "attacks": out,
            "failures": [f"seed {f.seed} @ {f.stage}: {f.error}" for f in self.failures],
            "wall_time_s": self.wall_time_s,
        }


def _objective_from(cfg: ExperimentConfig) -> SSLObjective:
    return SSLObjective(
        kind=cfg.objective,
        temperature=cfg.temperature,
        negatives_per_positive=cfg.negatives_per_positive,
    )


def load_domains(cfg: ExperimentConfig, seed: int) -> list[Graph]:
    if cfg.synthetic is not None:
        spec = cfg.synthetic
        return [
            sbm_graph(
                spec.nodes_per_domain,
                spec.feature_dim,
                spec.avg_degree,
                seed=derive_seed(seed, "domain-graph", d),
                domain_id=d,
                feature_shift=spec.feature_shift,
                feature_noise=spec.feature_noise,
            )
            for d in range(spec.domains)
        ]
    return [
        load_graph(files["edges"], files["features"], domain_id=dom)
        for dom, files in sorted(cfg.dataset.items())
    ]


def prepare_domains(cfg: ExperimentConfig, seed: int) -> list[DomainData]:
    domains = []
    for graph in load_domains(cfg, seed):
        members, nonmembers = split_half(graph, derive_seed(seed, "half", graph.domain_id))
        domains.append(DomainData(
            graph=graph,
            member_nodes=members,
            nonmember_nodes=nonmembers,
            member_graph=induced_subgraph(graph, members),
            nonmember_graph=induced_subgraph(graph, nonmembers),
        ))
    return domains


def _split_fingerprint(domains: list[DomainData], partition: GraphPartition) -> str:
    h = hashlib.sha256()
    for d in domains:
        h.update(repr((d.graph.domain_id, d.member_ids)).encode())
    h.update(repr(sorted(partition.unlearn_nodes)).encode())
    h.update(repr(sorted(partition.shadow_train_nodes)).encode())
    h.update(repr(sorted(partition.shadow_test_nodes)).encode())
    return h.hexdigest()[:16]


def build_context(cfg: ExperimentConfig, seed: int) -> AttackContext:
    objective = _objective_from(cfg)
    domains = prepare_domains(cfg, seed)
    by_id = {d.graph.domain_id: d for d in domains}
    if cfg.attack_domain not in by_id:
        raise ValueError(f"attack domain {cfg.attack_domain} not among the loaded domains")
    target = pretrain_multidomain(
        [d.graph for d in domains],
        [d.member_nodes for d in domains],
        objective,
        TrainConfig(epochs=cfg.epochs_pretrain, lr=cfg.lr_pretrain,
                    layers=cfg.layers, emb_dim=cfg.emb_dim),
        seed=derive_seed(seed, "pretrain"),
    )
    attack_domain = by_id[cfg.attack_domain]
    shadow_graph = attack_domain.nonmember_graph
    partition = partition_shadow(shadow_graph, cfg.unlearn_fraction, derive_seed(seed, "partition"))
    return AttackContext(
        seed=seed,
        objective=objective,
        target=target,
        domains=domains,
        attack_domain=attack_domain,
        partition=partition,
        unlearn_graph=induced_subgraph(shadow_graph, partition.unlearn_nodes),
        shadow_train_graph=induced_subgraph(shadow_graph, partition.shadow_train_nodes),
        shadow_test_graph=induced_subgraph(shadow_graph, partition.shadow_test_nodes),
        split_fingerprint=_split_fingerprint(domains, partition),
    )


def _eval_nodes(ctx: AttackContext, cfg: ExperimentConfig) -> tuple[list[int], list[int]]:
    """Local node ids to query in the member and non-member subgraphs."""
    members = list(range(ctx.attack_domain.member_graph.num_nodes))
    nonmembers = list(range(ctx.attack_domain.nonmember_graph.num_nodes))
    if cfg.m_queries is not None:
        rng = substream(ctx.seed, "query-cap")
        if cfg.m_queries < len(members):
            members = sorted(int(v) for v in rng.choice(len(members), cfg.m_queries, replace=False))
        if cfg.m_queries < len(nonmembers):
            nonmembers = sorted(int(v) for v in rng.choice(len(nonmembers), cfg.m_queries, replace=False))
    return members, nonmembers


def _score(
    ctx: AttackContext,
    cfg: ExperimentConfig,
    member_preds: dict[int, tuple[int, float]],
    nonmember_preds: dict[int, tuple[int, float]],
    attack: str,
) -> MetricsReport:
    """Map local predictions back to original node ids and score them."""
    member_ids = ctx.attack_domain.member_ids
    nonmember_ids = ctx.attack_domain.nonmember_ids
    predictions: dict[int, int] = {}
    truth: dict[int, int] = {}
    for local, (label, _) in member_preds.items():
        predictions[member_ids[local]] = label
        truth[member_ids[local]] = 1
    for local, (label, _) in nonmember_preds.items():
        predictions[nonmember_ids[local]] = label
        truth[nonmember_ids[local]] = 0
    return accuracy_f1(predictions, truth, attack=attack, seed=ctx.seed)


def similarity_margin_gap(
    model: VictimModel,
    ctx: AttackContext,
    num_samples: int,
    seed: int,
) -> float:
    """Membership-signal gap between shadow-train and shadow-test nodes.

    Per node the signal is its similarity margin, mean(positive sims) -
    mean(negative sims): how much closer the node sits to its positives
    than to random negatives, which is exactly what self-supervised
    training pushes up for nodes it trained on.  Sample plans are shared
    across models so gaps of different models are comparable.
    """
    margins = []
    for tag, graph in (("train", ctx.shadow_train_graph), ("test", ctx.shadow_test_graph)):
        plan = draw_sample_plan(
            graph, range(graph.num_nodes), model.objective,
            num_samples, num_samples, derive_seed(seed, "gap", tag),
        )
        profile = similarity_profile(model, graph, graph.domain_id, plan)
        margins.append(float(np.mean([
            sv.pos_sims.mean() - sv.neg_sims.mean() for sv in profile.values()
        ])))
    return margins[0] - margins[1]


@dataclass
class ShadowBuild:
    model: VictimModel
    variant: str
    distill_initial: float | None = None
    distill_final: float | None = None


def build_shadow_model(ctx: AttackContext, cfg: ExperimentConfig, variant: str) -> ShadowBuild:
    """The three shadow constructions: full, no-unlearning, no-incremental."""
    seed = ctx.seed
    if variant == VARIANT_WO_IL:
        # scratch shadow keeps the target's architecture (white-box attacker),
        # only its parameters start from random init
        fresh = VictimModel.init(
            {d: w.shape[0] for d, w in ctx.target.projectors.items()},
            ctx.objective,
            TrainConfig(epochs=0, lr=cfg.lr_shadow, layers=cfg.layers, emb_dim=cfg.emb_dim),
            seed=derive_seed(seed, "scratch-shadow"),
        )
        model, _ = fine_tune(
            fresh, ctx.shadow_train_graph, ctx.shadow_train_graph.domain_id,
            epochs=cfg.epochs_shadow, lr=cfg.lr_shadow,
            seed=derive_seed(seed, "shadow-ft"),
        )
        return ShadowBuild(model=model, variant=variant)

    distill_initial = distill_final = None
    if variant == VARIANT_FULL:
        result = unlearn(
            ctx.target,
            ctx.unlearn_graph,
            UnlearnConfig(
                lam=cfg.lam,
                augment_epochs=cfg.epochs_augment,
                distill_epochs=cfg.epochs_unlearn,
                lr_augment=cfg.lr_augment,
                lr_distill=cfg.lr_unlearn,
                num_positive=cfg.m_samples,
                num_negative=cfg.m_samples,
            ),
            seed=derive_seed(seed, "unlearn"),
        )
        base = result.model
        distill_initial = result.initial_loss
        distill_final = result.final_loss
    elif variant == VARIANT_WO_UL:
        base = ctx.target
    else:
        raise ValueError(f"unknown variant {variant!r}")

    fisher = estimate_fisher(
        base, ctx.shadow_train_graph, ctx.objective, seed=derive_seed(seed, "fisher")
    )
    model, _ = incremental_finetune(
        base,
        ctx.shadow_train_graph,
        fisher,
        ShadowConfig(alpha=cfg.resolved_alpha(), epochs=cfg.epochs_shadow, lr=cfg.lr_shadow),
        seed=derive_seed(seed, "shadow-ft"),
    )
    return ShadowBuild(
        model=model, variant=variant,
        distill_initial=distill_initial, distill_final=distill_final,
    )


def run_similarity_attack(ctx: AttackContext, cfg: ExperimentConfig, variant: str) -> RunRecord:
    seed = ctx.seed
    build = build_shadow_model(ctx, cfg, variant)
    dataset = build_attack_dataset(
        build.model,
        ctx.shadow_train_graph, range(ctx.shadow_train_graph.num_nodes),
        ctx.shadow_test_graph, range(ctx.shadow_test_graph.num_nodes),
        cfg.m_samples,
        seed=derive_seed(seed, "attack-dataset"),
    )
    attack_model = train_attack_model(
        dataset,
        AttackTrainConfig(epochs=cfg.epochs_attack, lr=cfg.lr_attack, hidden_dim=cfg.hidden_dim),
        seed=derive_seed(seed, "attack-train"),
    )
    members, nonmembers = _eval_nodes(ctx, cfg)
    member_preds = infer_membership(
        attack_model, ctx.target, ctx.attack_domain.member_graph, members,
        cfg.m_samples, seed=derive_seed(seed, "infer-members"),
    )
    nonmember_preds = infer_membership(
        attack_model, ctx.target, ctx.attack_domain.nonmember_graph, nonmembers,
        cfg.m_samples, seed=derive_seed(seed, "infer-nonmembers"),
    )
    report = _score(ctx, cfg, member_preds, nonmember_preds, PRIMARY_ATTACK)
    extras = {
        "attack_train_accuracy": attack_model.train_accuracy,
        "skipped_train": dataset.skipped_train,
        "skipped_test": dataset.skipped_test,
        "shadow_gap": similarity_margin_gap(
            build.model, ctx, cfg.m_samples, derive_seed(seed, "gap-probe")
        ),
        "target_gap": similarity_margin_gap(
            ctx.target, ctx, cfg.m_samples, derive_seed(seed, "gap-probe")
        ),
    }
    if build.distill_initial is not None:
        extras["distill_initial"] = build.distill_initial
        extras["distill_final"] = build.distill_final
    return RunRecord(
        report=report, variant=variant, config_hash=config_hash(cfg),
        split_fingerprint=ctx.split_fingerprint, extras=extras,
    )


def run_baseline(ctx: AttackContext, cfg: ExperimentConfig, kind: str) -> RunRecord:
    """Baselines attack the same splits with a scratch-trained shadow model."""
    seed = ctx.seed
    spec = BaselineSpec(
        kind=kind,
        attack=AttackTrainConfig(epochs=cfg.epochs_attack, lr=cfg.lr_attack,
                                 hidden_dim=cfg.hidden_dim),
    )
    split = ShadowSplit(train_graph=ctx.shadow_train_graph, test_graph=ctx.shadow_test_graph)
    shadow = build_shadow_model(ctx, cfg, VARIANT_WO_IL).model
    members, nonmembers = _eval_nodes(ctx, cfg)
    mg = ctx.attack_domain.member_graph
    ng = ctx.attack_domain.nonmember_graph
    bseed = derive_seed(seed, "baseline", kind)

    if kind == "ge-mia":
        mrng = substream(seed, "ge-refs")
        ref_m = sorted(int(v) for v in mrng.choice(
            mg.num_nodes, min(spec.reference_members, mg.num_nodes), replace=False))
        ref_n = sorted(int(v) for v in mrng.choice(
            ng.num_nodes, min(spec.reference_nonmembers, ng.num_nodes), replace=False))
        member_preds = ge_mia(ctx.target, mg, ref_m, ng, ref_n, mg, members)
        nonmember_preds = ge_mia(ctx.target, mg, ref_m, ng, ref_n, ng, nonmembers)
    else:
        fn = {
            "embed-mia": embed_mia,
            "grad-mia": grad_mia,
            "nlo-mia": nlo_mia,
            "glo-mia": glo_mia,
            "gpia": gpia,
        }[kind]
        member_preds = fn(shadow, split, ctx.target, mg, members, spec, bseed)
        nonmember_preds = fn(shadow, split, ctx.target, ng, nonmembers, spec, bseed)
    report = _score(ctx, cfg, member_preds, nonmember_preds, kind)
    return RunRecord(
        report=report, variant=VARIANT_FULL, config_hash=config_hash(cfg),
        split_fingerprint=ctx.split_fingerprint, extras={},
    )


def write_report(record: RunRecord, out_dir: Path) -> Path:
    name = f"report_{record.report.attack}_{record.variant}_seed{record.report.seed}.json"
    path = out_dir / name
    path.write_text(
        json.dumps(record.report_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return path


def write_amplification_record(record: RunRecord, cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Text key-value record of what the amplification stage did."""
    ex = record.extras
    lines = [
        f"lambda = {cfg.lam!r}",
        f"augment_epochs = {cfg.epochs_augment}",
        f"distill_epochs = {cfg.epochs_unlearn}",
        f"distill_loss_initial = {ex['distill_initial']!r}",
        f"distill_loss_final = {ex['distill_final']!r}",
        f"similarity_gap_before = {ex['target_gap']!r}",
        f"similarity_gap_after = {ex['shadow_gap']!r}",
    ]
    path = out_dir / f"amplify_seed{record.report.seed}.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def run_experiment(
    cfg: ExperimentConfig,
    attacks: tuple[str, ...] = (PRIMARY_ATTACK,),
    variants: tuple[str, ...] = (VARIANT_FULL,),
    out_dir: str | Path | None = None,
) -> ExperimentResult:
    """Run every requested attack for every seed and persist reports.

    ``attacks`` may mix the primary similarity attack and baseline kinds;
    ``variants`` applies to the primary attack only.  A failing stage
    aborts that seed's remaining work but other seeds continue.
    """
    cfg.validate()
    for a in attacks:
        if a != PRIMARY_ATTACK and a not in BASELINE_KINDS:
            raise ValueError(f"unknown attack {a!r}")
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    t0 = time.perf_counter()
    records: list[RunRecord] = []
    failures: list[SeedFailure] = []
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds():
        stage = "context"
        try:
            ctx = build_context(cfg, seed)
            for attack in attacks:
                if attack == PRIMARY_ATTACK:
                    for variant in variants:
                        stage = f"{attack}/{variant}"
                        records.append(run_similarity_attack(ctx, cfg, variant))
                else:
                    stage = attack
                    records.append(run_baseline(ctx, cfg, attack))
        except Exception as exc:  # noqa: BLE001 - contained per seed by design
            failures.append(SeedFailure(seed=seed, stage=stage, error=f"{type(exc).__name__}: {exc}"))
            continue
    result = ExperimentResult(
        records=records,
        failures=failures,
        config_hash=config_hash(cfg),
        wall_time_s=time.perf_counter() - t0,
    )
    if out_path is not None:
        for record in records:
            write_report(record, out_path)
            if "distill_initial" in record.extras:
                write_amplification_record(record, cfg, out_path)
        (out_path / "summary.json").write_text(
            json.dumps(result.summary(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    return result


@dataclass
class ScalingReport:
    sizes: list[int]
    seconds: list[float]
    slope: float

    def to_dict(self) -> dict:
        return {"sizes": self.sizes, "seconds": self.seconds, "slope": self.slope}


def time_attack_pipeline(cfg: ExperimentConfig, seed: int) -> float:
    """Wall time of the attack given a pre-trained target (pre-training and
    graph generation excluded)."""
    ctx = build_context(cfg, seed)
    t0 = time.perf_counter()
    run_similarity_attack(ctx, cfg, VARIANT_FULL)
    return time.perf_counter() - t0


def runtime_scaling_check(sizes: list[int], cfg: ExperimentConfig) -> ScalingReport:
    """Fit the log-log slope of attack wall time against graph size.

    Every size reuses the same config with only ``nodes_per_domain``
    replaced; degree, dims and epochs stay fixed so the slope isolates the
    dependence on n.
    """
    if not sizes or any(int(n) <= 0 for n in sizes):
        raise ValueError("sizes must be positive node counts")
    if len(sizes) < 2:
        raise ValueError("need at least two sizes to fit a slope")
    if cfg.synthetic is None:
        raise ValueError("scaling check requires a synthetic config")
    seconds: list[float] = []
    # warm-up run so allocator/cache effects do not bias the smallest size
    warm = _with_nodes(cfg, int(sizes[0]))
    time_attack_pipeline(warm, warm.seed)
    for n in sizes:
        sized = _with_nodes(cfg, int(n))
        seconds.append(time_attack_pipeline(sized, sized.seed))
    slope = float(np.polyfit(np.log(np.array(sizes, float)), np.log(np.array(seconds)), 1)[0])
    return ScalingReport(sizes=[int(n) for n in sizes], seconds=seconds, slope=slope)


def _with_nodes(cfg: ExperimentConfig, nodes: int) -> ExperimentConfig:
    import copy

    out = copy.deepcopy(cfg)
    out.synthetic.nodes_per_domain = nodes
    return out
