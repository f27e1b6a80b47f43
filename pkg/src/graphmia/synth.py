"""Self-contained synthetic graphs: two-block stochastic block models.

Each domain is one SBM draw with its own block feature means, so all
pipeline and acceptance tests run without downloading datasets.
"""

from __future__ import annotations

import numpy as np

from .graph import Graph
from .rng import derive_seed, substream


def sbm_graph(
    num_nodes: int,
    feature_dim: int,
    avg_degree: float,
    seed: int,
    domain_id: int = 0,
    intra_weight: float = 0.8,
    feature_shift: float = 1.0,
    feature_noise: float = 1.0,
) -> Graph:
    """Two-block SBM with block-dependent Gaussian features.

    ``intra_weight`` is the fraction of a node's expected degree spent on
    same-block neighbors.  Block means are drawn per (seed, domain, block)
    and scaled by ``feature_shift``; node features add isotropic noise.
    """
    if num_nodes < 4:
        raise ValueError("SBM fixture needs at least 4 nodes")
    if avg_degree <= 0:
        raise ValueError("avg_degree must be positive")
    b0 = num_nodes // 2
    b1 = num_nodes - b0
    blocks = (np.arange(num_nodes) >= b0).astype(np.int64)
    p_in = min(1.0, intra_weight * avg_degree / max(b0 - 1, 1))
    p_out = min(1.0, (1.0 - intra_weight) * avg_degree / max(b1, 1))

    rng = substream(seed, "sbm-edges", domain_id)
    edges: list[tuple[int, int]] = []
    for lo, hi, p in ((0, b0, p_in), (b0, num_nodes, p_in)):
        size = hi - lo
        iu, ju = np.triu_indices(size, k=1)
        total = len(iu)
        count = int(rng.binomial(total, p))
        if count:
            pick = rng.choice(total, size=count, replace=False)
            edges.extend(zip((iu[pick] + lo).tolist(), (ju[pick] + lo).tolist()))
    total_cross = b0 * b1
    count = int(rng.binomial(total_cross, p_out))
    if count:
        pick = rng.choice(total_cross, size=count, replace=False)
        edges.extend(zip((pick // b1).tolist(), (pick % b1 + b0).tolist()))

    frng = substream(seed, "sbm-features", domain_id)
    means = frng.normal(0.0, feature_shift, size=(2, feature_dim))
    features = means[blocks] + feature_noise * frng.normal(size=(num_nodes, feature_dim))
    return Graph.from_edges(num_nodes, edges, features, domain_id=domain_id)


def synthetic_domains(
    num_domains: int,
    nodes_per_domain: int,
    feature_dim: int,
    avg_degree: float,
    seed: int,
    feature_shift: float = 1.0,
    feature_noise: float = 1.0,
) -> list[Graph]:
    """One SBM graph per domain, domain ids 0..num_domains-1."""
    return [
        sbm_graph(
            nodes_per_domain,
            feature_dim,
            avg_degree,
            seed=derive_seed(seed, "domain", d),
            domain_id=d,
            feature_shift=feature_shift,
            feature_noise=feature_noise,
        )
        for d in range(num_domains)
    ]
