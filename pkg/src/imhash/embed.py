"""Base-set embedding backends: LE on B, relaxed LE, exact t-SNE and PCA."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .affinity import AffinityMatrices, base_affinity
from .base import sq_dist_matrix
from .errors import NumericError
from .types import BaseSet, Embedding

log = logging.getLogger(__name__)

TRIVIAL_CORR = 0.99
P_FLOOR = 1e-12


@dataclass(frozen=True)
class SymEigenResult:
    values: np.ndarray
    vectors: np.ndarray


def _eig_scale(A: np.ndarray) -> float:
    return max(1.0, float(np.abs(A).max()) * A.shape[0])


def smallest_eigenvectors(A, q: int, drop_trivial: bool = False) -> SymEigenResult:
    """The ``q`` smallest eigenpairs of a symmetric matrix, ascending.

    With ``drop_trivial`` the constant direction is removed from the
    near-null space (eigenvalues below ``1e-8 * scale``) before selecting.
    When that space is degenerate it is first re-based so that one basis
    vector is exactly the normalized all-ones vector. Eigenvalue ties are
    ordered by the index of each vector's dominant coordinate, and signs are
    fixed so that coordinate is positive.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    m = A.shape[0]
    asym = float(np.abs(A - A.T).max()) if m else 0.0
    if asym > 1e-10 * max(1.0, float(np.abs(A).max())):
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    limit = m - 1 if drop_trivial else m
    if not 1 <= q <= limit:
        raise ValueError(f"q must lie in [1, {limit}], got {q}")

    S = 0.5 * (A + A.T)
    scale = _eig_scale(S)
    vals, vecs = np.linalg.eigh(S)

    if drop_trivial:
        near = np.flatnonzero(np.abs(vals) < 1e-8 * scale)
        if near.size:
            Z = vecs[:, near]
            coef = Z.T @ np.full(m, 1.0 / np.sqrt(m))
            if np.linalg.norm(coef) > TRIVIAL_CORR:
                if near.size > 1:
                    H, _ = np.linalg.qr(np.column_stack([coef, np.eye(near.size)]))
                    Z = Z @ H[:, : near.size]
                    vecs = vecs.copy()
                    vecs[:, near] = Z
                    vals = vals.copy()
                    vals[near] = np.einsum("ij,ij->j", Z, S @ Z)
            corr = np.abs(vecs.sum(axis=0)) / np.sqrt(m)
            drop = near[corr[near] > TRIVIAL_CORR]
            keep = np.setdiff1d(np.arange(m), drop)
            vals, vecs = vals[keep], vecs[:, keep]
        if vals.size < q:
            raise ValueError(f"only {vals.size} non-trivial eigenpairs available, {q} requested")

    o = np.argsort(vals, kind="stable")
    vals, vecs = vals[o], vecs[:, o]
    dominant = np.abs(vecs).argmax(axis=0)
    tie_tol = 1e-10 * scale
    groups = np.concatenate(([0], np.cumsum(np.diff(vals) > tie_tol)))
    order = np.lexsort((dominant, groups))
    vals, vecs = vals[order][:q], vecs[:, order][:, :q]
    signs = np.sign(vecs[np.abs(vecs).argmax(axis=0), np.arange(q)])
    signs[signs == 0] = 1.0
    vecs = vecs * signs

    resid = np.linalg.norm(S @ vecs - vecs * vals, axis=0)
    if resid.size and resid.max() > 1e-8 * scale:
        raise NumericError(f"eigen residual {resid.max():.3g} exceeds tolerance")
    return SymEigenResult(vals, vecs)


def laplacian(W: np.ndarray) -> np.ndarray:
    return np.diag(W.sum(axis=1)) - W


def embed_le_base(W_B, r: int) -> Embedding:
    """Laplacian eigenmaps on the base graph; unit-variance, centered columns."""
    W_B = np.asarray(W_B, dtype=np.float64)
    m = W_B.shape[0]
    if not 1 <= r <= m - 1:
        raise ValueError(f"r must lie in [1, {m - 1}], got {r}")
    res = smallest_eigenvectors(laplacian(W_B), r, drop_trivial=True)
    Y = res.vectors - res.vectors.mean(axis=0)
    std = Y.std(axis=0)
    std[std == 0] = 1.0
    return Embedding.centered_from(Y / std)


def embed_le_relaxed(aff: AffinityMatrices, lam: float = 2.0, r: int = 32) -> Embedding:
    """Smallest non-trivial eigenvectors of M + lam * sym(T), scaled so Y^T Y = m I."""
    m = aff.m
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if not 1 <= r <= m - 1:
        raise ValueError(f"r must lie in [1, {m - 1}], got {r}")
    T = aff.T()
    A = aff.M() + lam * 0.5 * (T + T.T)
    res = smallest_eigenvectors(A, r, drop_trivial=True)
    return Embedding.centered_from(np.sqrt(m) * res.vectors)


# ---------------------------------------------------------------- t-SNE


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iters: int = 1000
    learning_rate: float = 100.0
    initial_momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch_iter: int = 250
    exaggeration: float = 4.0
    exaggeration_iters: int = 100
    min_gain: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.perplexity < 2:
            raise ValueError(f"perplexity must be >= 2, got {self.perplexity}")
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")


@dataclass
class TsneState:
    iteration: int = 0
    update: Optional[np.ndarray] = None
    gains: Optional[np.ndarray] = None
    kl_history: list = field(default_factory=list)


def _conditional_rows(D: np.ndarray, beta: np.ndarray):
    """Row-wise Gibbs distributions exp(-beta * D) with the diagonal excluded."""
    E = np.exp(-D * beta[:, None])
    np.fill_diagonal(E, 0.0)
    s = E.sum(axis=1)
    P = E / s[:, None]
    H = np.log(s) + beta * (D * P).sum(axis=1)
    return P, H


def tsne_conditional(B, perplexity: float = 30.0, tol: float = 1e-5, max_steps: int = 50):
    """Row-conditional affinities p_{j|i} with per-row precisions bisected to a perplexity.

    Returns ``(P_cond, beta)`` where row ``i`` has entropy ``log(perplexity)``
    within ``tol`` nats unless the row is degenerate.
    """
    X = B.centers if isinstance(B, BaseSet) else np.asarray(B, dtype=np.float64)
    m = X.shape[0]
    if m < 3:
        raise ValueError(f"t-SNE needs at least 3 points, got {m}")
    D = sq_dist_matrix(X, X)
    np.fill_diagonal(D, np.inf)
    # shifting each row by its smallest distance leaves the distribution unchanged
    D = D - D.min(axis=1, keepdims=True)
    np.fill_diagonal(D, 0.0)

    target = np.log(perplexity)
    beta = np.ones(m)
    lo = np.zeros(m)
    hi = np.full(m, np.inf)
    active = np.ones(m, dtype=bool)
    P, H = _conditional_rows(D, beta)
    for _ in range(max_steps):
        diff = H - target
        active &= np.abs(diff) > tol
        if not active.any():
            break
        up = active & (diff > 0)
        down = active & (diff <= 0)
        lo[up] = beta[up]
        beta[up] = np.where(np.isinf(hi[up]), beta[up] * 2.0, 0.5 * (beta[up] + hi[up]))
        hi[down] = beta[down]
        beta[down] = np.where(lo[down] == 0, beta[down] * 0.5, 0.5 * (beta[down] + lo[down]))
        Pn, Hn = _conditional_rows(D, beta)
        P[active] = Pn[active]
        H[active] = Hn[active]
    return P, beta


def tsne_p_matrix(B, perplexity: float = 30.0, tol: float = 1e-5, max_steps: int = 50,
                  floor: bool = True) -> np.ndarray:
    """Symmetrized input affinities (P + P^T) / 2m from perplexity-matched conditionals."""
    P, _ = tsne_conditional(B, perplexity, tol, max_steps)
    m = P.shape[0]
    Pj = (P + P.T) / (2.0 * m)
    np.fill_diagonal(Pj, 0.0)
    if floor:
        off = ~np.eye(m, dtype=bool)
        Pj[off] = np.maximum(Pj[off], P_FLOOR)
    return Pj


def _student_t(Y: np.ndarray):
    num = 1.0 / (1.0 + sq_dist_matrix(Y, Y))
    np.fill_diagonal(num, 0.0)
    return num, num / num.sum()


def tsne_kl(P: np.ndarray, Y: np.ndarray) -> float:
    _, Q = _student_t(Y)
    off = ~np.eye(P.shape[0], dtype=bool)
    p = P[off]
    q = np.maximum(Q[off], P_FLOOR)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def tsne_gradient(P: np.ndarray, Y: np.ndarray) -> Tuple[np.ndarray, float]:
    """Gradient 4 * sum_j (p_ij - q_ij)(1 + |y_i - y_j|^2)^-1 (y_i - y_j), plus the KL value."""
    num, Q = _student_t(Y)
    L = (P - Q) * num
    grad = 4.0 * (L.sum(axis=1)[:, None] * Y - L @ Y)
    return grad, tsne_kl(P, Y)


def tsne_step(P: np.ndarray, Y: np.ndarray, state: TsneState, cfg: TsneConfig):
    """One momentum gradient step with adaptive gains; returns (Y', state', KL at Y)."""
    it = state.iteration
    exag = cfg.exaggeration if it < cfg.exaggeration_iters else 1.0
    grad, _ = tsne_gradient(P * exag, Y)
    if not np.all(np.isfinite(grad)):
        raise NumericError(f"non-finite t-SNE gradient at iteration {it}")
    kl = tsne_kl(P, Y)
    update = np.zeros_like(Y) if state.update is None else state.update
    gains = np.ones_like(Y) if state.gains is None else state.gains
    gains = np.where(np.sign(grad) != np.sign(update), gains + 0.2, gains * 0.8)
    np.maximum(gains, cfg.min_gain, out=gains)
    momentum = cfg.initial_momentum if it < cfg.momentum_switch_iter else cfg.final_momentum
    update = momentum * update - cfg.learning_rate * (gains * grad)
    Y_new = Y + update
    Y_new = Y_new - Y_new.mean(axis=0)
    state.kl_history.append(kl)
    return Y_new, TsneState(it + 1, update, gains, state.kl_history), kl


def effective_perplexity(perplexity: float, m: int) -> float:
    return min(perplexity, max((m - 1) / 3.0, 1.0))


def embed_tsne(B, r: int, cfg: TsneConfig = TsneConfig()) -> Embedding:
    """Exact t-SNE of the base set into r dimensions."""
    X = B.centers if isinstance(B, BaseSet) else np.asarray(B, dtype=np.float64)
    m = X.shape[0]
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    P = tsne_p_matrix(X, effective_perplexity(cfg.perplexity, m))
    rng = np.random.default_rng(cfg.seed)
    Y = 1e-4 * rng.standard_normal((m, r))
    state = TsneState()
    kl0 = tsne_kl(P, Y)
    for _ in range(cfg.iters):
        Y, state, _ = tsne_step(P, Y, state, cfg)
    kl_final = tsne_kl(P, Y)
    log.debug("t-SNE m=%d r=%d KL %.4f -> %.4f", m, r, kl0, kl_final)
    if not np.all(np.isfinite(Y)):
        raise NumericError("t-SNE produced non-finite coordinates")
    if not kl_final < kl0:
        raise NumericError(f"t-SNE did not reduce KL ({kl0:.6g} -> {kl_final:.6g})")
    return Embedding.centered_from(Y)


# ---------------------------------------------------------------- PCA


def pca_directions(X: np.ndarray, r: int):
    """Mean and top-r principal directions (d x r), each with its largest loading positive."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if not 1 <= r <= min(n, d):
        raise ValueError(f"r must lie in [1, {min(n, d)}], got {r}")
    mean = X.mean(axis=0)
    _, s, Vt = np.linalg.svd(X - mean, full_matrices=False)
    V = Vt[:r].T
    signs = np.sign(V[np.abs(V).argmax(axis=0), np.arange(r)])
    signs[signs == 0] = 1.0
    return mean, V * signs, s


def embed_pca(B, r: int) -> Embedding:
    X = B.centers if isinstance(B, BaseSet) else np.asarray(B, dtype=np.float64)
    mean, V, _ = pca_directions(X, r)
    return Embedding.centered_from((X - mean) @ V)


def embed_base(backend: str, base: BaseSet, r: int, *, sigma: float, aff: Optional[AffinityMatrices] = None,
               lam: float = 2.0, tsne: TsneConfig = TsneConfig()) -> Embedding:
    if backend == "le_base":
        return embed_le_base(base_affinity(base.centers, sigma), r)
    if backend == "le_relaxed":
        if aff is None:
            raise ValueError("relaxed LE needs the training affinities")
        return embed_le_relaxed(aff, lam, r)
    if backend == "tsne":
        return embed_tsne(base, r, tsne)
    if backend == "pca":
        return embed_pca(base, r)
    raise ValueError(f"unknown embedding backend {backend!r}")
