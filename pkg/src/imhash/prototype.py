"""Randomized prototype estimator of a weighted embedding average, and its empirical checks.

The estimator draws ``floor(m * C_j + 1)`` indices from each cluster ``j``
with probability ``alpha_i / C_j`` and averages them with weight
``C_j / l_j``. It is unbiased, uses at most ``2m`` draws and has variance
at most ``eps^2 / m`` for a covering radius ``eps``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .base import KMeansConfig, kmeans_fit


@dataclass(frozen=True)
class CoverClustering:
    labels: np.ndarray
    centers: np.ndarray
    epsilon: float

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.labels == j)


def cover_clusters(Y, m: int, seed: int = 0) -> CoverClustering:
    """K-means in embedding space; epsilon is the largest point-to-center distance."""
    Y = np.asarray(Y, dtype=np.float64)
    res = kmeans_fit(Y, KMeansConfig(m=m, seed=seed))
    eps = float(np.sqrt(res.sq_dist.max()))
    return CoverClustering(res.labels, res.centers, eps)


@dataclass(frozen=True)
class PrototypeDraw:
    ell: np.ndarray
    indices: List[np.ndarray]
    estimate: np.ndarray


def _cluster_weights(alpha: np.ndarray, cov: CoverClustering) -> np.ndarray:
    return np.bincount(cov.labels, weights=alpha, minlength=cov.m)


def draw_counts(alpha, cov: CoverClustering) -> np.ndarray:
    C = _cluster_weights(np.asarray(alpha, dtype=np.float64), cov)
    ell = np.where(C > 0, np.floor(cov.m * C + 1.0), 0).astype(np.int64)
    total = int(ell.sum())
    if total > 2 * cov.m:
        raise AssertionError(f"draw count {total} exceeds 2m = {2 * cov.m}")
    return ell


def _check_alpha(alpha: np.ndarray, n: int):
    if alpha.shape != (n,):
        raise ValueError(f"alpha must have length {n}, got shape {alpha.shape}")
    if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-12:
        raise ValueError(f"alpha must be non-negative and sum to 1 (sum={alpha.sum():.17g})")


def prototype_estimate(alpha, Y, cov: CoverClustering, seed=0) -> PrototypeDraw:
    alpha = np.asarray(alpha, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    _check_alpha(alpha, Y.shape[0])
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    C = _cluster_weights(alpha, cov)
    ell = draw_counts(alpha, cov)
    est = np.zeros(Y.shape[1])
    drawn = []
    for j in range(cov.m):
        if ell[j] == 0:
            drawn.append(np.empty(0, dtype=np.int64))
            continue
        idx = cov.members(j)
        u = rng.choice(idx, size=ell[j], p=alpha[idx] / C[j])
        drawn.append(u)
        est += C[j] / ell[j] * Y[u].sum(axis=0)
    return PrototypeDraw(ell, drawn, est)


def prototype_estimates(alpha, Y, cov: CoverClustering, trials: int, seed=0) -> np.ndarray:
    """``trials`` independent estimates at once, shape (trials, r)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    _check_alpha(alpha, Y.shape[0])
    rng = np.random.default_rng(seed)
    C = _cluster_weights(alpha, cov)
    ell = draw_counts(alpha, cov)
    out = np.zeros((trials, Y.shape[1]))
    for j in range(cov.m):
        if ell[j] == 0:
            continue
        idx = cov.members(j)
        u = rng.choice(idx, size=(trials, ell[j]), p=alpha[idx] / C[j])
        out += C[j] / ell[j] * Y[u].sum(axis=1)
    return out


@dataclass(frozen=True)
class Instance:
    Y: np.ndarray
    alpha: np.ndarray
    m: int


def make_instance(n: int = 500, m: int = 20, r: int = 8, seed: int = 0) -> Instance:
    """Clustered embedding points and Gaussian-kernel weights of a random query."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=4.0, size=(m, r))
    Y = centers[rng.integers(m, size=n)] + rng.normal(size=(n, r))
    q = Y[rng.integers(n)] + rng.normal(size=r)
    d2 = ((Y - q) ** 2).sum(axis=1)
    w = np.exp(-(d2 - d2.min()) / np.median(d2))
    return Instance(Y, w / w.sum(), m)


@dataclass
class EstimatorCheckRow:
    instance: int
    n: int
    m: int
    epsilon: float
    bound: float
    emp_var: float
    max_bias_z: float
    total_draws: int
    tail: List[tuple]
    var_ok: bool
    bias_ok: bool
    tail_ok: bool


def validate_estimator(instances: Sequence[Instance], trials: int = 100_000, seed: int = 0,
                    tail_multiples: Sequence[float] = (1.5, 2.0, 3.0)) -> List[EstimatorCheckRow]:
    """Monte-Carlo bias, variance and tail checks of the prototype estimator.

    Variance is flagged when it exceeds ``eps^2/m * (1 + 5/sqrt(trials))``;
    bias when any coordinate's mean error is beyond 4 standard errors; the
    tail frequency at ``t`` is compared with ``eps^2 / (m t^2)``.
    """
    if trials < 1000:
        raise ValueError(f"trials must be >= 1000, got {trials}")
    rows = []
    for i, inst in enumerate(instances):
        cov = cover_clusters(inst.Y, inst.m, seed=seed + i)
        exact = inst.alpha @ inst.Y
        est = prototype_estimates(inst.alpha, inst.Y, cov, trials, seed=seed + 1000 + i)
        err = est - exact
        sq = (err ** 2).sum(axis=1)
        emp_var = float(sq.mean())
        bound = cov.epsilon ** 2 / cov.m
        se = err.std(axis=0, ddof=1) / np.sqrt(trials)
        bias = np.abs(err.mean(axis=0))
        # errors at rounding level are not bias; degenerate cases have se == 0
        scale = max(1.0, float(np.abs(inst.Y).max()))
        bias[bias <= 1e-12 * scale] = 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(bias == 0, 0.0, np.where(se > 0, bias / se, np.inf))
        tail = []
        tail_ok = True
        norms = np.sqrt(sq)
        for c in tail_multiples:
            t = c * np.sqrt(bound) if bound > 0 else c
            freq = float(np.mean(norms >= t))
            limit = bound / t ** 2
            tail.append((float(t), freq, limit))
            tail_ok &= freq <= limit * (1 + 5 / np.sqrt(trials)) or bound == 0 and freq == 0
        rows.append(EstimatorCheckRow(
            instance=i, n=inst.Y.shape[0], m=cov.m, epsilon=cov.epsilon, bound=bound,
            emp_var=emp_var, max_bias_z=float(z.max()),
            total_draws=int(draw_counts(inst.alpha, cov).sum()),
            tail=tail,
            var_ok=emp_var <= bound * (1 + 5 / np.sqrt(trials)) + (1e-12 * scale) ** 2,
            bias_ok=bool(z.max() <= 4.0),
            tail_ok=bool(tail_ok),
        ))
    return rows


def format_report(rows: Sequence[EstimatorCheckRow]) -> str:
    head = "#instance\tn\tm\tepsilon\tbound\temp_var\tmax_bias_z\ttotal_draws\tvar_ok\tbias_ok\ttail_ok"
    lines = [head]
    for r in rows:
        lines.append(
            f"{r.instance}\t{r.n}\t{r.m}\t{r.epsilon:.6g}\t{r.bound:.6g}\t{r.emp_var:.6g}\t"
            f"{r.max_bias_z:.4f}\t{r.total_draws}\t{int(r.var_ok)}\t{int(r.bias_ok)}\t{int(r.tail_ok)}"
        )
    return "\n".join(lines) + "\n"


def default_instances(count: int = 5, n: int = 500, m: int = 20, r: int = 8, seed: int = 0,
                      ) -> List[Instance]:
    return [make_instance(n, m, r, seed + i) for i in range(count)]
