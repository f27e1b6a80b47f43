from __future__ import annotations

import re

import numpy as np
import pytest

_CRITERION_RESULTS: dict[int, tuple[str, str]] = {}
_CRITERION_PATTERN = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    match = _CRITERION_PATTERN.search(report.nodeid)
    if not match or report.when != "call":
        return
    num = int(match.group(1))
    name = match.group(2)
    _CRITERION_RESULTS[num] = (name, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(_CRITERION_RESULTS):
        name, outcome = _CRITERION_RESULTS[num]
        terminalreporter.write_line(f"criterion {num} ({name.replace('_', ' ')}): {outcome}")

from graphmia.graph import Graph
from graphmia.nn import ParamSet
from graphmia.synth import sbm_graph
from graphmia.victim import (
    LINK_PREDICTION,
    CONTRASTIVE,
    SSLObjective,
    TrainConfig,
    VictimModel,
)


def triangle_graph(extra_nodes: int = 0, feature_dim: int = 2) -> Graph:
    n = 3 + extra_nodes
    features = np.arange(n * feature_dim, dtype=float).reshape(n, feature_dim) + 1.0
    return Graph.from_edges(n, [(0, 1), (1, 2), (0, 2)], features)


def path_graph(n: int = 4, feature_dim: int = 2) -> Graph:
    features = np.arange(n * feature_dim, dtype=float).reshape(n, feature_dim) + 1.0
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)], features)


@pytest.fixture
def small_sbm() -> Graph:
    return sbm_graph(40, 6, 6.0, seed=17)


@pytest.fixture
def linkpred_objective() -> SSLObjective:
    return SSLObjective(LINK_PREDICTION)


@pytest.fixture
def contrastive_objective() -> SSLObjective:
    return SSLObjective(CONTRASTIVE, negatives_per_positive=3)


def tiny_model(graph: Graph, objective: SSLObjective, seed: int = 5, emb_dim: int = 6) -> VictimModel:
    return VictimModel.init(
        {graph.domain_id: graph.feature_dim},
        objective,
        TrainConfig(epochs=0, emb_dim=emb_dim, layers=2),
        seed=seed,
    )


def finite_diff_grads(loss_fn, params: ParamSet, step: float = 1e-5) -> ParamSet:
    """Central finite differences of a scalar loss over every parameter."""
    out = params.zeros_like()
    for name, tensor in params.items():
        grad = out.tensors[name]
        it = np.nditer(tensor, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + step
            up = loss_fn()
            tensor[idx] = orig - step
            down = loss_fn()
            tensor[idx] = orig
            grad[idx] = (up - down) / (2.0 * step)
            it.iternext()
    return out


def max_rel_error(analytic: ParamSet, numeric: ParamSet, floor: float = 1e-3) -> float:
    """Worst-case |a - f| / max(|a|, |f|, floor) over all entries.

    The floor keeps near-zero gradients (where central differences are
    pure roundoff) from dominating; genuine sign/scale bugs still show up
    at O(1) relative error.
    """
    worst = 0.0
    for name in analytic.names:
        a = analytic.tensors[name]
        f = numeric.tensors[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst
