"""Multi-domain self-supervised pre-training and the victim model.

The victim is deliberately simplified: one linear projector per domain
mapping raw features into a shared space, followed by a shared GCN
encoder, trained with either a contrastive (InfoNCE over augmented views)
or a link-prediction objective.  It exposes exactly the surfaces the
attack pipeline needs: embed, fine-tune, and positive/negative sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, induced_subgraph
from .nn import (
    GCNEncoder,
    NumericError,
    ParamSet,
    ShapeError,
    AdamState,
    adam_step,
    bce_with_logits,
    cosine_rows,
    cosine_rows_backward,
    glorot,
    info_nce,
)
from .rng import derive_seed, substream

CONTRASTIVE = "contrastive"
LINK_PREDICTION = "link_prediction"


class MissingProjectorError(KeyError):
    pass


class NoPositiveError(ValueError):
    """A link-prediction positive was requested for an isolated node."""


@dataclass(frozen=True)
class SSLObjective:
    kind: str
    temperature: float = 0.5
    negatives_per_positive: int = 5
    edge_drop_rate: float = 0.2
    feature_mask_rate: float = 0.2

    def __post_init__(self) -> None:
        if self.kind not in (CONTRASTIVE, LINK_PREDICTION):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.negatives_per_positive < 1:
            raise ValueError("need at least one negative per positive")


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    layers: int = 2
    emb_dim: int = 64

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.layers < 1 or self.emb_dim < 1:
            raise ValueError("invalid training configuration")


@dataclass
class ForwardCache:
    a_hat: object
    x: np.ndarray
    h0: np.ndarray
    layers: list
    domain_id: int


@dataclass
class VictimModel:
    """Per-domain projectors plus a shared GCN encoder."""

    projectors: dict[int, np.ndarray]
    encoder: GCNEncoder
    objective: SSLObjective
    trained_epochs: int = 0
    fallback_domain: int | None = None

    @classmethod
    def init(
        cls,
        domain_dims: dict[int, int],
        objective: SSLObjective,
        config: TrainConfig,
        seed: int,
    ) -> "VictimModel":
        if not domain_dims:
            raise ValueError("need at least one domain")
        projectors = {
            d: glorot(dim, config.emb_dim, substream(seed, "proj-init", d))
            for d, dim in sorted(domain_dims.items())
        }
        dims = [config.emb_dim] * (config.layers + 1)
        encoder = GCNEncoder.init(dims, seed=derive_seed(seed, "encoder-init"))
        return cls(projectors=projectors, encoder=encoder, objective=objective)

    @property
    def params(self) -> ParamSet:
        tensors: dict[str, np.ndarray] = {}
        for d in sorted(self.projectors):
            tensors[f"proj.{d}"] = self.projectors[d]
        tensors.update(dict(self.encoder.param_items()))
        return ParamSet(tensors)

    def copy(self) -> "VictimModel":
        return VictimModel(
            projectors={d: w.copy() for d, w in self.projectors.items()},
            encoder=GCNEncoder(weights=[w.copy() for w in self.encoder.weights]),
            objective=self.objective,
            trained_epochs=self.trained_epochs,
            fallback_domain=self.fallback_domain,
        )

    def _projector_domain(self, domain_id: int) -> int:
        if domain_id in self.projectors:
            return domain_id
        if self.fallback_domain is not None and self.fallback_domain in self.projectors:
            return self.fallback_domain
        raise MissingProjectorError(
            f"no projector for domain {domain_id} and no fallback configured"
        )

    def forward(self, graph: Graph, domain_id: int) -> tuple[np.ndarray, ForwardCache]:
        dom = self._projector_domain(domain_id)
        w = self.projectors[dom]
        x = graph.features
        if x.shape[1] != w.shape[0]:
            raise ShapeError(
                f"domain {domain_id} features have dim {x.shape[1]}, projector expects {w.shape[0]}"
            )
        h0 = x @ w
        a_hat = graph.gcn_matrix
        h, layers = self.encoder.forward(a_hat, h0)
        return h, ForwardCache(a_hat=a_hat, x=x, h0=h0, layers=layers, domain_id=dom)

    def backward(
        self, cache: ForwardCache, d_out: np.ndarray, want_feature_grad: bool = False
    ) -> tuple[ParamSet, np.ndarray | None]:
        """Parameter gradients (aligned with ``self.params``) for upstream d_out."""
        layer_grads, dh0 = self.encoder.backward(cache.a_hat, cache.layers, d_out)
        grads = self.params.zeros_like()
        grads.tensors[f"proj.{cache.domain_id}"] += cache.x.T @ dh0
        for i, g in enumerate(layer_grads):
            grads.tensors[f"gcn.{i}"] += g
        dx = dh0 @ self.projectors[cache.domain_id].T if want_feature_grad else None
        return grads, dx


def embed(model: VictimModel, graph: Graph, domain_id: int) -> np.ndarray:
    """Node embeddings of ``graph`` under ``model`` (pure, no caching)."""
    h, _ = model.forward(graph, domain_id)
    return h


# ---------------------------------------------------------------------------
# augmentation and positive/negative sampling


def _augment_draws(graph: Graph, objective: SSLObjective, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = substream(seed, "augment")
    keep_edges = rng.random(graph.num_edges) >= objective.edge_drop_rate
    drop_cols = rng.random(graph.feature_dim) < objective.feature_mask_rate
    return keep_edges, drop_cols


def augment_graph(graph: Graph, objective: SSLObjective, seed: int) -> Graph:
    """Stochastic view: edge dropout plus feature-column masking."""
    keep_edges, drop_cols = _augment_draws(graph, objective, seed)
    masked = graph.features.copy()
    masked[:, drop_cols] = 0.0
    return Graph.from_edges(
        graph.num_nodes, graph.edge_array[keep_edges], masked, domain_id=graph.domain_id
    )


def view_seed(seed: int, view_index: int) -> int:
    """Augmentation seed of the shared view ``view_index`` under ``seed``."""
    return derive_seed(seed, "view", view_index)


def _sample_distinct(rng: np.random.Generator, n: int, exclude: set[int], count: int) -> list[int]:
    """Uniform sample of ``count`` nodes outside ``exclude``; falls back to
    replacement only when the eligible pool is smaller than ``count``."""
    pool_size = n - len(exclude)
    if pool_size <= 0:
        raise ValueError("no eligible nodes to sample")
    if pool_size <= max(4 * count, 16):
        pool = np.array(sorted(set(range(n)) - exclude), dtype=np.int64)
        picked = rng.choice(pool, size=count, replace=pool_size < count)
        return [int(v) for v in picked]
    chosen: list[int] = []
    taken = set(exclude)
    while len(chosen) < count:
        v = int(rng.integers(n))
        if v in taken:
            continue
        taken.add(v)
        chosen.append(v)
    return chosen


def make_positive_negative(
    graph: Graph,
    node: int,
    objective: SSLObjective,
    num_positive: int,
    num_negative: int,
    seed: int,
) -> tuple[list[tuple], list[tuple]]:
    """Sample references for a node's similarity vector.

    Positive references are ``("view", index, aug_seed)`` under the
    contrastive objective (the node itself in a shared augmented view) and
    ``("node", neighbor)`` under link prediction (with replacement when the
    degree is below the request).  Negatives are always ``("node", id)``:
    uniformly random distinct non-self (contrastive) or non-neighbor
    (link prediction) nodes in the unaugmented graph.

    Sampling depends only on (graph, node, seed), never on a model, so the
    same plan can be replayed against different models.
    """
    node = int(node)
    n = graph.num_nodes
    if n < num_negative + 1:
        raise ValueError(f"graph too small for {num_negative} negatives")
    if objective.kind == CONTRASTIVE:
        positives = [("view", p, view_seed(seed, p)) for p in range(num_positive)]
        rng = substream(seed, "neg", node)
        negatives = [("node", v) for v in _sample_distinct(rng, n, {node}, num_negative)]
        return positives, negatives
    nbrs = graph.neighbors[node]
    if len(nbrs) == 0:
        raise NoPositiveError(f"node {node} is isolated; no link-prediction positive exists")
    prng = substream(seed, "pos", node)
    picked = prng.choice(nbrs, size=num_positive, replace=len(nbrs) < num_positive)
    positives = [("node", int(v)) for v in picked]
    nrng = substream(seed, "neg", node)
    exclude = {node, *(int(v) for v in nbrs)}
    negatives = [("node", v) for v in _sample_distinct(nrng, n, exclude, num_negative)]
    return positives, negatives


# ---------------------------------------------------------------------------
# self-supervised losses with parameter gradients


def _sample_negative_pairs(
    graph: Graph, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform non-edges (u, v), u != v; rejection-sampled."""
    n = graph.num_nodes
    us = np.empty(count, dtype=np.int64)
    vs = np.empty(count, dtype=np.int64)
    got = 0
    while got < count:
        u = int(rng.integers(n))
        v = int(rng.integers(n))
        if u == v or graph.has_edge(u, v):
            continue
        us[got] = u
        vs[got] = v
        got += 1
    return us, vs


def linkpred_loss(
    model: VictimModel, graph: Graph, domain_id: int, seed: int
) -> tuple[float, ParamSet]:
    """BCE on sigmoid(h_u . h_v) over all edges plus matched random non-edges."""
    edges = graph.edge_array
    if len(edges) == 0:
        return 0.0, model.params.zeros_like()
    rng = substream(seed, "linkpred-negatives")
    neg_u, neg_v = _sample_negative_pairs(graph, len(edges), rng)
    us = np.concatenate([edges[:, 0], neg_u])
    vs = np.concatenate([edges[:, 1], neg_v])
    labels = np.concatenate([np.ones(len(edges)), np.zeros(len(edges))])

    h, cache = model.forward(graph, domain_id)
    scores = np.einsum("ij,ij->i", h[us], h[vs])
    loss, dscores = bce_with_logits(scores, labels)
    dh = np.zeros_like(h)
    np.add.at(dh, us, dscores[:, None] * h[vs])
    np.add.at(dh, vs, dscores[:, None] * h[us])
    grads, _ = model.backward(cache, dh)
    return loss, grads


def contrastive_loss(
    model: VictimModel, graph: Graph, domain_id: int, seed: int
) -> tuple[float, ParamSet]:
    """InfoNCE: every node against itself in one augmented view and K
    uniform in-graph negatives."""
    n = graph.num_nodes
    obj = model.objective
    k = obj.negatives_per_positive
    view = augment_graph(graph, obj, derive_seed(seed, "loss-view"))
    h, cache = model.forward(graph, domain_id)
    hv, cache_v = model.forward(view, domain_id)

    rng = substream(seed, "contrastive-negatives")
    raw = rng.integers(0, n - 1, size=(n, k))
    anchors = np.arange(n)[:, None]
    neg_idx = raw + (raw >= anchors)

    pos_sim = cosine_rows(h, hv)
    flat_neg = neg_idx.ravel()
    rep_anchor = np.repeat(np.arange(n), k)
    neg_sim = cosine_rows(h[rep_anchor], h[flat_neg]).reshape(n, k)

    loss, dpos, dneg = info_nce(pos_sim, neg_sim, obj.temperature)

    dh = np.zeros_like(h)
    dhv = np.zeros_like(hv)
    da, db = cosine_rows_backward(h, hv, dpos)
    dh += da
    dhv += db
    da, db = cosine_rows_backward(h[rep_anchor], h[flat_neg], dneg.ravel())
    np.add.at(dh, rep_anchor, da)
    np.add.at(dh, flat_neg, db)

    grads, _ = model.backward(cache, dh)
    grads_v, _ = model.backward(cache_v, dhv)
    grads.add_(grads_v)
    return loss, grads


def ssl_loss_and_grads(
    model: VictimModel, graph: Graph, domain_id: int, seed: int
) -> tuple[float, ParamSet]:
    if model.objective.kind == LINK_PREDICTION:
        return linkpred_loss(model, graph, domain_id, seed)
    return contrastive_loss(model, graph, domain_id, seed)


def per_node_ssl_loss(
    model: VictimModel,
    graph: Graph,
    domain_id: int,
    node: int,
    seed: int,
    want_feature_grad: bool = False,
) -> tuple[float, ParamSet, np.ndarray | None]:
    """One node's contribution to the SSL loss, with parameter gradients.

    Link prediction: the node's incident edges plus the same number of
    random non-edges from it.  Contrastive: the node's anchor term against
    one augmented view and K negatives.  Isolated link-prediction nodes
    contribute zero loss and zero gradients.
    """
    node = int(node)
    h, cache = model.forward(graph, domain_id)
    obj = model.objective
    if obj.kind == LINK_PREDICTION:
        nbrs = graph.neighbors[node]
        if len(nbrs) == 0:
            zero = model.params.zeros_like()
            return 0.0, zero, (np.zeros_like(graph.features) if want_feature_grad else None)
        rng = substream(seed, "node-negatives", node)
        exclude = {node, *(int(v) for v in nbrs)}
        negs = np.array(_sample_distinct(rng, graph.num_nodes, exclude, len(nbrs)))
        others = np.concatenate([nbrs, negs])
        labels = np.concatenate([np.ones(len(nbrs)), np.zeros(len(negs))])
        scores = h[others] @ h[node]
        loss, dscores = bce_with_logits(scores, labels)
        dh = np.zeros_like(h)
        np.add.at(dh, others, dscores[:, None] * h[node][None, :])
        dh[node] += dscores @ h[others]
        grads, dx = model.backward(cache, dh, want_feature_grad=want_feature_grad)
        return loss, grads, dx

    aug_seed = derive_seed(seed, "node-view", node)
    view = augment_graph(graph, obj, aug_seed)
    hv, cache_v = model.forward(view, domain_id)
    rng = substream(seed, "node-negatives", node)
    negs = np.array(_sample_distinct(rng, graph.num_nodes, {node}, obj.negatives_per_positive))
    pos_sim = cosine_rows(h[[node]], hv[[node]])
    neg_sim = cosine_rows(np.repeat(h[[node]], len(negs), axis=0), h[negs])[None, :]
    loss, dpos, dneg = info_nce(pos_sim, neg_sim, obj.temperature)
    dh = np.zeros_like(h)
    dhv = np.zeros_like(hv)
    da, db = cosine_rows_backward(h[[node]], hv[[node]], dpos)
    dh[node] += da[0]
    dhv[node] += db[0]
    da, db = cosine_rows_backward(np.repeat(h[[node]], len(negs), axis=0), h[negs], dneg[0])
    dh[node] += da.sum(axis=0)
    np.add.at(dh, negs, db)
    grads, dx = model.backward(cache, dh, want_feature_grad=want_feature_grad)
    grads_v, dx_v = model.backward(cache_v, dhv, want_feature_grad=want_feature_grad)
    grads.add_(grads_v)
    if want_feature_grad:
        # masked columns of the view contribute nothing to the raw-feature grad
        _, drop_cols = _augment_draws(graph, obj, aug_seed)
        dx = dx + dx_v * (~drop_cols)[None, :]
    return loss, grads, dx


# ---------------------------------------------------------------------------
# training loops


def fine_tune(
    model: VictimModel,
    graph: Graph,
    domain_id: int,
    epochs: int,
    lr: float,
    seed: int,
    penalty_grads=None,
) -> tuple[VictimModel, list[float]]:
    """Plain SSL fine-tuning of a copy of ``model`` on one graph.

    ``penalty_grads``, when given, is called with the live ParamSet and must
    return (penalty_value, penalty_gradient ParamSet); used by the
    incremental shadow construction.  Returns the tuned copy and the
    per-epoch total losses.
    """
    tuned = model.copy()
    params = tuned.params
    state = AdamState.init(params, lr=lr)
    history: list[float] = []
    for epoch in range(epochs):
        loss, grads = ssl_loss_and_grads(tuned, graph, domain_id, derive_seed(seed, "epoch", epoch))
        if penalty_grads is not None:
            pval, pgrad = penalty_grads(params)
            loss += pval
            grads.add_(pgrad)
        if not np.isfinite(loss):
            raise NumericError(f"fine-tune diverged at epoch {epoch}")
        adam_step(state, params, grads)
        history.append(loss)
    tuned.trained_epochs += epochs
    return tuned, history


def pretrain_multidomain(
    graphs: list[Graph],
    member_node_sets: list[frozenset[int]],
    objective: SSLObjective,
    config: TrainConfig,
    seed: int,
) -> VictimModel:
    """Jointly train projectors and the shared encoder across domains.

    Each epoch walks the domains in ascending domain-id order and applies
    one Adam step per domain.  The loss only ever sees the member-induced
    subgraph of each domain, so member nodes are exactly the pre-training
    data the attack later targets.  Sampling streams are keyed by domain
    id, not list position.
    """
    if not graphs:
        raise ValueError("need at least one domain graph")
    if len(graphs) != len(member_node_sets):
        raise ValueError("one member set per graph required")
    if len({g.domain_id for g in graphs}) != len(graphs):
        raise ValueError("domain ids must be unique")
    for g, members in zip(graphs, member_node_sets):
        if not members:
            raise ValueError(f"domain {g.domain_id} has an empty member set")

    domain_dims = {g.domain_id: g.feature_dim for g in graphs}
    model = VictimModel.init(domain_dims, objective, config, seed=derive_seed(seed, "init"))
    params = model.params
    state = AdamState.init(params, lr=config.lr)

    by_domain = sorted(zip(graphs, member_node_sets), key=lambda pair: pair[0].domain_id)
    train_graphs = [(g.domain_id, induced_subgraph(g, members)) for g, members in by_domain]

    for epoch in range(config.epochs):
        for domain_id, graph in train_graphs:
            loss, grads = ssl_loss_and_grads(
                model, graph, domain_id, derive_seed(seed, "pretrain", domain_id, epoch)
            )
            if not np.isfinite(loss):
                raise NumericError(f"pre-training diverged at epoch {epoch}, domain {domain_id}")
            adam_step(state, params, grads)
    model.trained_epochs = config.epochs
    return model
