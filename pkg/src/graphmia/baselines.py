"""Six comparison attacks sharing the graph and model infrastructure.

Every baseline consumes the same shadow split and seeds as the primary
similarity attack within one experiment, so comparisons are paired.  All
return the same prediction schema: node -> (label, membership score).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackTrainConfig, classify, fit_mlp_classifier
from .graph import Graph, perturb_edges
from .nn import AdamState, adam_step, cosine_rows, NumericError
from .rng import derive_seed
from .victim import VictimModel, embed, per_node_ssl_loss

KINDS = ("embed-mia", "grad-mia", "nlo-mia", "glo-mia", "ge-mia", "gpia")


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    k_perturb: int = 10
    edge_fraction: float = 0.0015
    reference_members: int = 20
    reference_nonmembers: int = 20
    finetune_epochs: int = 10
    finetune_lr: float = 1e-3
    attack: AttackTrainConfig = field(default_factory=AttackTrainConfig)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.k_perturb < 2:
            raise ValueError("need at least two perturbed views")
        if not 0.0 <= self.edge_fraction <= 1.0:
            raise ValueError("edge_fraction must lie in [0, 1]")
        if self.reference_members < 1 or self.reference_nonmembers < 1:
            raise ValueError("reference counts must be positive")
        if self.finetune_epochs < 0:
            raise ValueError("finetune_epochs must be >= 0")


@dataclass
class ShadowSplit:
    """Materialized shadow train/test subgraphs; all their nodes are used."""

    train_graph: Graph
    test_graph: Graph


def _mlp_attack(
    train_x: np.ndarray,
    train_y: np.ndarray,
    query_nodes: list[int],
    query_x: np.ndarray,
    config: AttackTrainConfig,
    seed: int,
) -> dict[int, tuple[int, float]]:
    mlp = fit_mlp_classifier(train_x, train_y, config, seed)
    labels, scores = classify(mlp, query_x)
    return {v: (int(l), float(s)) for v, l, s in zip(query_nodes, labels, scores)}


def _shadow_features(extract, shadow_model: VictimModel, split: ShadowSplit):
    """Stack label-1 train and label-0 test features for one extractor."""
    x_tr = extract(shadow_model, split.train_graph, range(split.train_graph.num_nodes))
    x_te = extract(shadow_model, split.test_graph, range(split.test_graph.num_nodes))
    x = np.concatenate([x_tr, x_te])
    y = np.concatenate([np.ones(len(x_tr), dtype=np.int64), np.zeros(len(x_te), dtype=np.int64)])
    return x, y


# ---------------------------------------------------------------------------
# Embed-MIA: raw output embeddings as features


def embed_mia(
    shadow_model: VictimModel,
    split: ShadowSplit,
    target_model: VictimModel,
    query_graph: Graph,
    query_nodes,
    spec: BaselineSpec,
    seed: int,
) -> dict[int, tuple[int, float]]:
    def extract(model, graph, nodes):
        h = embed(model, graph, graph.domain_id)
        return h[np.fromiter((int(v) for v in nodes), dtype=np.int64)]

    x, y = _shadow_features(extract, shadow_model, split)
    order = sorted(int(v) for v in query_nodes)
    qx = extract(target_model, query_graph, order)
    return _mlp_attack(x, y, order, qx, spec.attack, derive_seed(seed, "embed-mia"))


# ---------------------------------------------------------------------------
# Grad-MIA: gradient of the node's SSL loss w.r.t. its input feature row


def input_gradient_features(
    model: VictimModel, graph: Graph, nodes, seed: int
) -> np.ndarray:
    rows = []
    for node in nodes:
        _, _, dx = per_node_ssl_loss(
            model, graph, graph.domain_id, int(node),
            seed=derive_seed(seed, "grad-feature", int(node)),
            want_feature_grad=True,
        )
        if not np.all(np.isfinite(dx)):
            raise NumericError(f"non-finite input gradient at node {node}")
        rows.append(dx[int(node)])
    return np.stack(rows)


def grad_mia(
    shadow_model: VictimModel,
    split: ShadowSplit,
    target_model: VictimModel,
    query_graph: Graph,
    query_nodes,
    spec: BaselineSpec,
    seed: int,
) -> dict[int, tuple[int, float]]:
    def extract(model, graph, nodes):
        return input_gradient_features(model, graph, list(nodes), derive_seed(seed, "grad-mia"))

    x, y = _shadow_features(extract, shadow_model, split)
    order = sorted(int(v) for v in query_nodes)
    qx = extract(target_model, query_graph, order)
    return _mlp_attack(x, y, order, qx, spec.attack, derive_seed(seed, "grad-mia"))


# ---------------------------------------------------------------------------
# NLO-MIA / GLO-MIA: robustness under structural perturbation


def perturbed_views(graph: Graph, k: int, edge_fraction: float, seed: int) -> list[Graph]:
    """The k perturbed copies both robustness baselines share."""
    return [
        perturb_edges(graph, edge_fraction, derive_seed(seed, "perturb-view", i))
        for i in range(k)
    ]


def pairwise_similarity_features(
    model: VictimModel, graph: Graph, nodes, k: int, edge_fraction: float, seed: int
) -> np.ndarray:
    """C(k, 2) pairwise cosine similarities of each node across k views."""
    views = perturbed_views(graph, k, edge_fraction, seed)
    idx = np.fromiter((int(v) for v in nodes), dtype=np.int64)
    embs = [embed(model, g, graph.domain_id)[idx] for g in views]
    cols = [cosine_rows(embs[a], embs[b]) for a, b in itertools.combinations(range(k), 2)]
    return np.stack(cols, axis=1)


def nlo_mia(
    shadow_model: VictimModel,
    split: ShadowSplit,
    target_model: VictimModel,
    query_graph: Graph,
    query_nodes,
    spec: BaselineSpec,
    seed: int,
) -> dict[int, tuple[int, float]]:
    def extract(model, graph, nodes):
        return pairwise_similarity_features(
            model, graph, nodes, spec.k_perturb, spec.edge_fraction,
            derive_seed(seed, "nlo-views"),
        )

    x, y = _shadow_features(extract, shadow_model, split)
    order = sorted(int(v) for v in query_nodes)
    qx = extract(target_model, query_graph, order)
    return _mlp_attack(x, y, order, qx, spec.attack, derive_seed(seed, "nlo-mia"))


def best_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """Grid search over observed scores for the accuracy-maximizing
    member-iff-score>=threshold rule; ties pick the smallest threshold."""
    best_t = float("inf")
    best_acc = -1.0
    for t in sorted(set(float(s) for s in scores)):
        acc = float((((scores >= t).astype(np.int64)) == labels).mean())
        if acc > best_acc:
            best_acc = acc
            best_t = t
    return best_t


def glo_mia(
    shadow_model: VictimModel,
    split: ShadowSplit,
    target_model: VictimModel,
    query_graph: Graph,
    query_nodes,
    spec: BaselineSpec,
    seed: int,
) -> dict[int, tuple[int, float]]:
    """Same perturbations as NLO-MIA, but thresholding the mean similarity."""

    def extract(model, graph, nodes):
        feats = pairwise_similarity_features(
            model, graph, nodes, spec.k_perturb, spec.edge_fraction,
            derive_seed(seed, "nlo-views"),
        )
        return feats.mean(axis=1, keepdims=True)

    x, y = _shadow_features(extract, shadow_model, split)
    threshold = best_threshold(x[:, 0], y)
    order = sorted(int(v) for v in query_nodes)
    q = extract(target_model, query_graph, order)[:, 0]
    return {v: (int(s >= threshold), float(s)) for v, s in zip(order, q)}


# ---------------------------------------------------------------------------
# GE-MIA: nearest reference centroid under cosine distance


def ge_mia(
    target_model: VictimModel,
    member_graph: Graph,
    member_refs,
    nonmember_graph: Graph,
    nonmember_refs,
    query_graph: Graph,
    query_nodes,
) -> dict[int, tuple[int, float]]:
    """Predict by the nearer of the member/non-member reference centroids;
    exactly equidistant queries go to non-member."""
    h_mem = embed(target_model, member_graph, member_graph.domain_id)
    h_non = embed(target_model, nonmember_graph, nonmember_graph.domain_id)
    c_mem = h_mem[np.fromiter((int(v) for v in member_refs), dtype=np.int64)].mean(axis=0)
    c_non = h_non[np.fromiter((int(v) for v in nonmember_refs), dtype=np.int64)].mean(axis=0)
    order = sorted(int(v) for v in query_nodes)
    hq = embed(target_model, query_graph, query_graph.domain_id)[np.array(order, dtype=np.int64)]
    sim_mem = cosine_rows(hq, np.broadcast_to(c_mem, hq.shape))
    sim_non = cosine_rows(hq, np.broadcast_to(c_non, hq.shape))
    margin = sim_mem - sim_non  # cosine distance difference, sign-flipped
    return {v: (int(m > 0), float(m)) for v, m in zip(order, margin)}


# ---------------------------------------------------------------------------
# GPIA: per-node fine-tuning parameter change


def parameter_change_features(
    model: VictimModel, graph: Graph, nodes, epochs: int, lr: float, seed: int
) -> tuple[list[int], np.ndarray, int]:
    """Per-layer L2 norms of the parameter change after fine-tuning a fresh
    copy of the model on each node's own SSL loss.  Returns the surviving
    node order, the feature matrix, and the diverged-node count."""
    kept: list[int] = []
    rows: list[np.ndarray] = []
    diverged = 0
    base = model.params
    for node in nodes:
        node = int(node)
        tuned = model.copy()
        params = tuned.params
        state = AdamState.init(params, lr=lr)
        try:
            for epoch in range(epochs):
                loss, grads, _ = per_node_ssl_loss(
                    tuned, graph, graph.domain_id, node,
                    seed=derive_seed(seed, "gpia", node, epoch),
                )
                if not np.isfinite(loss):
                    raise NumericError(f"per-node fine-tune diverged at node {node}")
                adam_step(state, params, grads)
        except NumericError:
            diverged += 1
            continue
        delta = np.array([
            np.linalg.norm(params.tensors[k] - base.tensors[k]) for k in base.names
        ])
        kept.append(node)
        rows.append(delta)
    return kept, np.stack(rows) if rows else np.zeros((0, len(base.names))), diverged


def gpia(
    shadow_model: VictimModel,
    split: ShadowSplit,
    target_model: VictimModel,
    query_graph: Graph,
    query_nodes,
    spec: BaselineSpec,
    seed: int,
) -> dict[int, tuple[int, float]]:
    def extract(model, graph, nodes):
        _, feats, _ = parameter_change_features(
            model, graph, nodes, spec.finetune_epochs, spec.finetune_lr,
            derive_seed(seed, "gpia-shadow"),
        )
        return feats

    x, y = _shadow_features(extract, shadow_model, split)
    order, qx, _ = parameter_change_features(
        target_model, query_graph, sorted(int(v) for v in query_nodes),
        spec.finetune_epochs, spec.finetune_lr, derive_seed(seed, "gpia-target"),
    )
    return _mlp_attack(x, y, order, qx, spec.attack, derive_seed(seed, "gpia"))
