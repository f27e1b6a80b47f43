"""Similarity-based membership inference.

Attack features are a node's cosine similarities to m positive and m
negative samples.  The labeled dataset comes from the shadow model (shadow
train nodes are members, shadow test nodes are not); a two-layer MLP is
trained on it and applied to features queried from the real target model.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .amplify import SimilarityVector, draw_sample_plan, similarity_profile
from .graph import Graph
from .nn import MLP, AdamState, ShapeError, adam_step, cross_entropy, mlp_forward
from .rng import derive_seed
from .victim import VictimModel


class DataQualityError(ValueError):
    """Too many nodes had to be skipped while building a dataset."""


@dataclass(frozen=True)
class AttackExample:
    feature: SimilarityVector
    label: int
    source_node: int
    source_split: str  # "shadow-train" | "shadow-test"

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


@dataclass
class AttackDataset:
    examples: list[AttackExample]
    num_samples: int  # m: positives per node (= negatives per node)
    skipped_train: int = 0
    skipped_test: int = 0

    @property
    def feature_dim(self) -> int:
        return 2 * self.num_samples

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([ex.feature.values() for ex in self.examples])
        y = np.array([ex.label for ex in self.examples], dtype=np.int64)
        return x, y


@dataclass
class AttackModel:
    mlp: MLP
    num_samples: int
    train_accuracy: float = 0.0
    epochs: int = 0

    @property
    def feature_dim(self) -> int:
        return self.mlp.w1.shape[0]


def _profile_split(
    model: VictimModel, graph: Graph, nodes, num_samples: int, seed: int
) -> tuple[dict[int, SimilarityVector], int]:
    plan = draw_sample_plan(
        graph, nodes, model.objective, num_samples, num_samples, seed
    )
    return similarity_profile(model, graph, graph.domain_id, plan), len(plan.skipped)


def build_attack_dataset(
    shadow_model: VictimModel,
    shadow_train: Graph,
    shadow_train_nodes,
    shadow_test: Graph,
    shadow_test_nodes,
    num_samples: int,
    seed: int,
) -> AttackDataset:
    """Label-1 features for shadow-train nodes, label-0 for shadow-test.

    Nodes without a valid positive sample are skipped and counted; more
    than half skipped on either side is treated as a data-quality failure.
    """
    if num_samples < 1:
        raise ValueError("need at least one positive/negative sample per node")
    profiles_tr, skipped_tr = _profile_split(
        shadow_model, shadow_train, shadow_train_nodes, num_samples,
        derive_seed(seed, "attack-train"),
    )
    profiles_te, skipped_te = _profile_split(
        shadow_model, shadow_test, shadow_test_nodes, num_samples,
        derive_seed(seed, "attack-test"),
    )
    for skipped, total, side in (
        (skipped_tr, len(list(shadow_train_nodes)), "train"),
        (skipped_te, len(list(shadow_test_nodes)), "test"),
    ):
        if total and skipped / total > 0.5:
            raise DataQualityError(f"more than half of the shadow-{side} nodes were skipped")
    examples = [
        AttackExample(feature=sv, label=1, source_node=node, source_split="shadow-train")
        for node, sv in profiles_tr.items()
    ] + [
        AttackExample(feature=sv, label=0, source_node=node, source_split="shadow-test")
        for node, sv in profiles_te.items()
    ]
    if not examples:
        raise DataQualityError("attack dataset is empty")
    return AttackDataset(
        examples=examples,
        num_samples=num_samples,
        skipped_train=skipped_tr,
        skipped_test=skipped_te,
    )


@dataclass(frozen=True)
class AttackTrainConfig:
    epochs: int = 300
    lr: float = 1e-3
    hidden_dim: int = 256


def fit_mlp_classifier(
    x: np.ndarray, y: np.ndarray, config: AttackTrainConfig, seed: int
) -> MLP:
    """Full-batch Adam + cross-entropy fit of a two-layer binary classifier."""
    if len(set(np.asarray(y).tolist())) < 2:
        raise ValueError("training data must contain both labels")
    mlp = MLP.init(x.shape[1], config.hidden_dim, 2, seed=derive_seed(seed, "attack-mlp"))
    params = mlp.params
    state = AdamState.init(params, lr=config.lr)
    for _ in range(config.epochs):
        logits, cache = mlp.forward(x)
        _, dlogits = cross_entropy(logits, y)
        grads = mlp.backward(cache, dlogits)
        adam_step(state, params, grads)
    return mlp


def classify(mlp: MLP, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(labels, membership scores) for a feature matrix.

    Exact logit ties break toward non-member; the score is the softmax
    probability of the member class, always strictly inside (0, 1).
    """
    features = np.atleast_2d(features)
    logits = mlp_forward(mlp, features)
    labels = (logits[:, 1] > logits[:, 0]).astype(np.int64)
    shift = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shift)
    scores = exp[:, 1] / exp.sum(axis=1)
    return labels, scores


def train_attack_model(
    dataset: AttackDataset, config: AttackTrainConfig, seed: int
) -> AttackModel:
    """Train the two-layer attack MLP on a labeled similarity dataset."""
    x, y = dataset.matrix()
    mlp = fit_mlp_classifier(x, y, config, seed)
    logits, _ = mlp.forward(x)
    acc = float((logits.argmax(axis=1) == y).mean())
    return AttackModel(mlp=mlp, num_samples=dataset.num_samples,
                       train_accuracy=acc, epochs=config.epochs)


def predict_from_features(
    attack_model: AttackModel, features: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    features = np.atleast_2d(features)
    if features.shape[1] != attack_model.feature_dim:
        raise ShapeError(
            f"attack model expects features of length {attack_model.feature_dim}, "
            f"got {features.shape[1]}"
        )
    return classify(attack_model.mlp, features)


def infer_membership(
    attack_model: AttackModel,
    target_model: VictimModel,
    graph: Graph,
    nodes,
    num_samples: int,
    seed: int,
) -> dict[int, tuple[int, float]]:
    """Query the target model and classify each node's similarity vector.

    Returns node -> (predicted label, membership score).  Nodes whose
    features cannot be built (isolated under link prediction) are absent
    from the result.
    """
    if 2 * num_samples != attack_model.feature_dim:
        raise ShapeError("num_samples does not match the attack model input width")
    profiles, _ = _profile_split(target_model, graph, nodes, num_samples, seed)
    if not profiles:
        return {}
    order = sorted(profiles)
    feats = np.stack([profiles[v].values() for v in order])
    labels, scores = predict_from_features(attack_model, feats)
    return {v: (int(l), float(s)) for v, l, s in zip(order, labels, scores)}


def export_attack_dataset(dataset: AttackDataset, path: str | Path) -> None:
    """Text table ``node,label,s1..s2m`` with 9 significant digits."""
    path = Path(path)
    width = dataset.feature_dim
    header = "node,label," + ",".join(f"s{i + 1}" for i in range(width))
    lines = [header]
    for ex in dataset.examples:
        vals = ",".join(f"{v:.9g}" for v in ex.feature.values())
        lines.append(f"{ex.source_node},{ex.label},{vals}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
