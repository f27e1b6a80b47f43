"""Principal component analysis via power iteration with deflation.

Deliberately self-contained (no library eigensolver) so the projection
used by the separability diagnostics can itself be validated against an
independent solver in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_TOL = 1e-10
_MAX_ITER = 10_000


@dataclass
class PCAResult:
    projection: np.ndarray        # (n, k_effective)
    explained_ratios: np.ndarray  # (k_effective,)
    components: np.ndarray        # (d, k_effective), orthonormal columns
    mean: np.ndarray
    rank_deficient: bool          # fewer informative components than requested


def _power_iterate(cov: np.ndarray, start: np.ndarray) -> tuple[np.ndarray, float]:
    v = start / np.linalg.norm(start)
    last = v
    for _ in range(_MAX_ITER):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm <= _TOL:
            return v, 0.0
        v = w / norm
        if min(np.linalg.norm(v - last), np.linalg.norm(v + last)) < _TOL:
            break
        last = v
    return v, float(v @ cov @ v)


def pca_project(embeddings: np.ndarray, k: int = 2) -> PCAResult:
    """Project rows onto the top-k principal directions.

    Columns are centered; the covariance uses the 1/(n-1) convention.  Each
    eigenvector's first nonzero component is made positive so projections
    are reproducible.  If the data has rank below k the remaining
    directions are dropped and ``rank_deficient`` is set.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("embeddings must be a matrix")
    n, d = x.shape
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k must be in [1, {min(n, d)}]")
    if n < 2:
        raise ValueError("need at least two rows")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / (n - 1)
    trace = float(np.trace(cov))

    components: list[np.ndarray] = []
    eigvals: list[float] = []
    deflated = cov.copy()
    for j in range(k):
        # deterministic start: a fixed direction plus a component-indexed tilt
        start = np.ones(d) + np.linspace(0.0, 1.0, d) * (j + 1)
        v, lam = _power_iterate(deflated, start)
        if lam <= _TOL * max(trace, 1.0):
            break
        nz = np.nonzero(np.abs(v) > 1e-12)[0]
        if len(nz) and v[nz[0]] < 0:
            v = -v
        components.append(v)
        eigvals.append(lam)
        deflated = deflated - lam * np.outer(v, v)

    comp = np.stack(components, axis=1) if components else np.zeros((d, 0))
    ratios = (np.array(eigvals) / trace) if trace > 0 else np.zeros(len(eigvals))
    return PCAResult(
        projection=xc @ comp,
        explained_ratios=ratios,
        components=comp,
        mean=mean,
        rank_deficient=len(components) < k,
    )
