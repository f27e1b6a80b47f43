"""Minimal numeric engine: named parameters, GCN, MLP, losses, Adam.

Everything is float64 and every trainable operation has a hand-written
backward pass returning exact analytic gradients; there is no general
autodiff.  Forward passes cache exactly what their backward needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import substream


class ShapeError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# parameters


@dataclass
class ParamSet:
    """Ordered, named 2-D float64 matrices with order-stable flattening."""

    tensors: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        for name, t in self.tensors.items():
            if t.ndim != 2 or t.dtype != np.float64:
                raise ShapeError(f"parameter {name!r} must be a 2-D float64 matrix")

    @property
    def names(self) -> list[str]:
        return list(self.tensors)

    @property
    def total_len(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def items(self):
        return self.tensors.items()

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> "ParamSet":
        return ParamSet({k: np.zeros_like(v) for k, v in self.tensors.items()})

    def flat(self) -> np.ndarray:
        if not self.tensors:
            return np.zeros(0)
        return np.concatenate([t.ravel() for t in self.tensors.values()])

    def add_(self, other: "ParamSet", scale: float = 1.0) -> "ParamSet":
        """In-place self += scale * other; shapes must align."""
        for k, t in self.tensors.items():
            o = other.tensors[k]
            if o.shape != t.shape:
                raise ShapeError(f"shape mismatch for {k!r}: {t.shape} vs {o.shape}")
            t += scale * o
        return self

    def assert_finite(self, where: str = "") -> None:
        for k, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise NumericError(f"non-finite values in {k!r} {where}".strip())


def glorot(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


# ---------------------------------------------------------------------------
# GCN encoder


@dataclass
class GCNEncoder:
    """Stack of symmetric-normalized aggregation + linear layers.

    ReLU between layers, linear output so embeddings are signed.  Weights
    are named ``gcn.{l}`` and shared into the owning model's ParamSet.
    """

    weights: list[np.ndarray]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @classmethod
    def init(cls, dims: list[int], seed: int) -> "GCNEncoder":
        if len(dims) < 2:
            raise ShapeError("encoder needs at least one layer (two dims)")
        rng = substream(seed, "gcn-init")
        weights = [glorot(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
        return cls(weights=weights)

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        return [(f"gcn.{i}", w) for i, w in enumerate(self.weights)]

    def forward(self, a_hat, h0: np.ndarray) -> tuple[np.ndarray, list]:
        """Returns final embeddings and the per-layer cache for backward."""
        if h0.shape[1] != self.input_dim:
            raise ShapeError(f"encoder input dim {self.input_dim}, got {h0.shape[1]}")
        if h0.shape[0] != a_hat.shape[0]:
            raise ShapeError("feature rows do not match graph node count")
        cache = []
        h = h0
        for i, w in enumerate(self.weights):
            m = a_hat @ h
            z = m @ w
            cache.append((m, z))
            h = np.maximum(z, 0.0) if i < len(self.weights) - 1 else z
        if not np.all(np.isfinite(h)):
            raise NumericError("non-finite encoder output")
        return h, cache

    def backward(self, a_hat, cache: list, d_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients (per-layer weight grads, d_input) for upstream d_out."""
        grads: list[np.ndarray] = [np.empty(0)] * len(self.weights)
        dh = d_out
        for i in range(len(self.weights) - 1, -1, -1):
            m, z = cache[i]
            dz = dh if i == len(self.weights) - 1 else dh * (z > 0.0)
            grads[i] = m.T @ dz
            dm = dz @ self.weights[i].T
            dh = a_hat @ dm
        return grads, dh


def gcn_forward(encoder: GCNEncoder, graph, features: np.ndarray) -> np.ndarray:
    """Embeddings of ``features`` under ``encoder`` on ``graph``."""
    h, _ = encoder.forward(graph.gcn_matrix, np.asarray(features, dtype=np.float64))
    return h


# ---------------------------------------------------------------------------
# two-layer MLP


@dataclass
class MLP:
    """in -> hidden (ReLU) -> out, with biases."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, in_dim: int, hidden_dim: int, out_dim: int, seed: int) -> "MLP":
        rng = substream(seed, "mlp-init")
        return cls(
            w1=glorot(in_dim, hidden_dim, rng),
            b1=np.zeros((1, hidden_dim)),
            w2=glorot(hidden_dim, out_dim, rng),
            b2=np.zeros((1, out_dim)),
        )

    @property
    def params(self) -> ParamSet:
        return ParamSet({"mlp.w1": self.w1, "mlp.b1": self.b1,
                         "mlp.w2": self.w2, "mlp.b2": self.b2})

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.w1.shape[0]:
            raise ShapeError(f"MLP expects input dim {self.w1.shape[0]}, got {x.shape[1]}")
        z1 = x @ self.w1 + self.b1
        h1 = np.maximum(z1, 0.0)
        logits = h1 @ self.w2 + self.b2
        return logits, (x, z1, h1)

    def backward(self, cache: tuple, dlogits: np.ndarray) -> ParamSet:
        x, z1, h1 = cache
        dw2 = h1.T @ dlogits
        db2 = dlogits.sum(axis=0, keepdims=True)
        dh1 = dlogits @ self.w2.T
        dz1 = dh1 * (z1 > 0.0)
        dw1 = x.T @ dz1
        db1 = dz1.sum(axis=0, keepdims=True)
        return ParamSet({"mlp.w1": dw1, "mlp.b1": db1, "mlp.w2": dw2, "mlp.b2": db2})


def mlp_forward(mlp: MLP, x: np.ndarray) -> np.ndarray:
    logits, _ = mlp.forward(x)
    return logits[0] if np.asarray(x).ndim == 1 else logits


# ---------------------------------------------------------------------------
# similarity


def cosine_sim(a: np.ndarray, b: np.ndarray) -> tuple[float, bool]:
    """Cosine of two vectors; returns (value, degenerate_flag).

    A zero vector makes the cosine undefined; by convention the value is
    0.0 and the flag is set instead of raising, because perturbation
    pipelines can legitimately produce zero embeddings.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError("cosine_sim needs equal-length vectors")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0, True
    return float(a @ b) / (na * nb), False


def cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine between two equally-shaped matrices (0 where degenerate)."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = na * nb
    dots = np.einsum("ij,ij->i", a, b)
    out = np.zeros(len(a))
    ok = denom > 0.0
    out[ok] = dots[ok] / denom[ok]
    return out


def cosine_rows_backward(
    a: np.ndarray, b: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """d(upstream . cos_rows(a, b)) w.r.t. a and b; zero rows get zero grad."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ok = (na > 0.0) & (nb > 0.0)
    da = np.zeros_like(a)
    db = np.zeros_like(b)
    if not np.any(ok):
        return da, db
    ai, bi = a[ok], b[ok]
    nai = na[ok][:, None]
    nbi = nb[ok][:, None]
    cos = np.einsum("ij,ij->i", ai, bi)[:, None] / (nai * nbi)
    g = upstream[ok][:, None]
    da[ok] = g * (bi / (nai * nbi) - cos * ai / (nai * nai))
    db[ok] = g * (ai / (nai * nbi) - cos * bi / (nbi * nbi))
    return da, db


# ---------------------------------------------------------------------------
# losses (each returns loss and gradient w.r.t. its direct inputs)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy; gradient w.r.t. logits."""
    logits = np.atleast_2d(logits)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if logits.shape[0] != labels.shape[0]:
        raise ShapeError("logit rows and labels disagree")
    with np.errstate(invalid="ignore"):
        m = logits.max(axis=1, keepdims=True)
        exp = np.exp(logits - m)
        z = exp.sum(axis=1, keepdims=True)
        log_probs = (logits - m) - np.log(z)
    n = logits.shape[0]
    loss = -float(log_probs[np.arange(n), labels].mean())
    dlogits = exp / z
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    if not np.isfinite(loss):
        raise NumericError("non-finite cross-entropy")
    return loss, dlogits


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def bce_with_logits(scores: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on sigmoid(scores); gradient w.r.t. scores."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels disagree")
    softplus = np.maximum(scores, 0.0) + np.log1p(np.exp(-np.abs(scores)))
    loss = float((softplus - labels * scores).mean())
    dscores = (sigmoid(scores) - labels) / len(scores)
    if not np.isfinite(loss):
        raise NumericError("non-finite link-prediction loss")
    return loss, dscores


def info_nce(
    pos_sim: np.ndarray, neg_sims: np.ndarray, temperature: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean InfoNCE over anchors.

    ``pos_sim`` is (n,), ``neg_sims`` is (n, K); similarities are divided by
    ``temperature`` and the positive competes against the K negatives.
    Returns (loss, d_pos_sim, d_neg_sims).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    pos = np.asarray(pos_sim, dtype=np.float64).ravel()
    negs = np.atleast_2d(np.asarray(neg_sims, dtype=np.float64))
    if negs.shape[0] != pos.shape[0]:
        raise ShapeError("anchor counts disagree between positives and negatives")
    z = np.concatenate([pos[:, None], negs], axis=1) / temperature
    m = z.max(axis=1, keepdims=True)
    exp = np.exp(z - m)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = (z - m) - np.log(denom)
    n = pos.shape[0]
    loss = -float(log_probs[:, 0].mean())
    dz = exp / denom
    dz[:, 0] -= 1.0
    dz /= n * temperature
    if not np.isfinite(loss):
        raise NumericError("non-finite contrastive loss")
    return loss, dz[:, 0], dz[:, 1:]


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Bias-corrected Adam moments aligned with a ParamSet."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, params: ParamSet, lr: float = 1e-3) -> "AdamState":
        return cls(
            lr=lr,
            m={k: np.zeros_like(t) for k, t in params.items()},
            v={k: np.zeros_like(t) for k, t in params.items()},
        )


def adam_step(state: AdamState, params: ParamSet, grads: ParamSet) -> None:
    """One in-place Adam update of ``params`` (and ``state``)."""
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for k, t in params.items():
        g = grads.tensors[k]
        if g.shape != t.shape:
            raise ShapeError(f"gradient shape mismatch for {k!r}")
        m = state.m[k]
        v = state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        t -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
