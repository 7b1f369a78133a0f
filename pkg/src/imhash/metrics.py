"""Retrieval evaluation: Hamming ranking (MAP, precision/recall at cutoffs) and radius lookup."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .base import sq_dist_matrix
from .types import BinaryCodes, FeatureMatrix

DEFAULT_CUTOFFS = (1, 10, 50, 100, 250, 500, 1000, 2000, 5000)


def _query_words(code) -> np.ndarray:
    if isinstance(code, BinaryCodes):
        if len(code) != 1:
            raise ValueError(f"expected a single code, got {len(code)}")
        return code.words[0]
    return np.asarray(code, dtype=np.uint64)


def hamming_distance(a: BinaryCodes, b: BinaryCodes) -> int:
    if a.r != b.r:
        raise ValueError(f"code lengths differ: {a.r} vs {b.r}")
    return int(np.bitwise_count(_query_words(a) ^ _query_words(b)).sum())


def hamming_distances(query, db: BinaryCodes) -> np.ndarray:
    if isinstance(query, BinaryCodes) and query.r != db.r:
        raise ValueError(f"code lengths differ: {query.r} vs {db.r}")
    q = _query_words(query)
    return np.bitwise_count(db.words ^ q).sum(axis=1, dtype=np.int64)


def hamming_rank(query, db: BinaryCodes) -> np.ndarray:
    """Database indices by ascending Hamming distance; ties keep ascending index order."""
    return np.argsort(hamming_distances(query, db), kind="stable")


def average_precision(ranked, relevant) -> float:
    """AP over the full ranking: mean over relevant items of precision at their positions."""
    ranked = np.asarray(ranked, dtype=np.int64)
    rel = np.asarray(sorted(relevant) if isinstance(relevant, (set, frozenset)) else relevant)
    if rel.dtype != bool:
        if rel.size == 0:
            raise ValueError("average precision is undefined for an empty relevant set")
        n = int(max(ranked.max(initial=-1), rel.max())) + 1
        rel = _relevant_mask(rel, n)
    n_rel = int(rel.sum())
    if n_rel == 0:
        raise ValueError("average precision is undefined for an empty relevant set")
    return _ap_from_hits(rel[ranked], n_rel)


def _ap_from_hits(hits: np.ndarray, n_rel: int) -> float:
    pos = np.flatnonzero(hits)
    if pos.size == 0:
        return 0.0
    return float(np.sum(np.arange(1, pos.size + 1) / (pos + 1)) / n_rel)


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def lookup_radius(query, db: BinaryCodes, radius: int, relevant) -> Tuple[float, float, float]:
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    dist = hamming_distances(query, db)
    mask = _relevant_mask(relevant, len(db))
    return _lookup_from(dist, mask, radius)


def _lookup_from(dist: np.ndarray, mask: np.ndarray, radius: int) -> Tuple[float, float, float]:
    retrieved = dist <= radius
    n_ret = int(retrieved.sum())
    n_rel = int(mask.sum())
    tp = int((retrieved & mask).sum())
    p = tp / n_ret if n_ret else 0.0
    r = tp / n_rel if n_rel else 0.0
    return p, r, _f1(p, r)


def _relevant_mask(relevant, n: int) -> np.ndarray:
    rel = np.asarray(sorted(relevant) if isinstance(relevant, (set, frozenset)) else relevant)
    if rel.dtype == bool:
        return rel
    mask = np.zeros(n, dtype=bool)
    mask[rel.astype(np.int64)] = True
    return mask


@dataclass(frozen=True)
class GroundTruth:
    """Per-query relevance, either by shared label or as explicit index sets."""

    source: str
    db_labels: Optional[np.ndarray] = None
    query_labels: Optional[np.ndarray] = None
    sets: Optional[List[np.ndarray]] = None
    fraction: Optional[float] = None

    @property
    def n_queries(self) -> int:
        return len(self.query_labels) if self.source == "labels" else len(self.sets)

    def mask(self, q: int, n: int) -> np.ndarray:
        if self.source == "labels":
            return self.db_labels == self.query_labels[q]
        out = np.zeros(n, dtype=bool)
        out[self.sets[q]] = True
        return out

    def relevant(self, q: int, n: int) -> np.ndarray:
        return np.flatnonzero(self.mask(q, n))


def label_ground_truth(db: FeatureMatrix, queries: FeatureMatrix) -> GroundTruth:
    if db.labels is None or queries.labels is None:
        raise ValueError("label ground truth needs labels on database and queries")
    return GroundTruth("labels", db_labels=db.labels, query_labels=queries.labels)


def euclidean_ground_truth(db: FeatureMatrix, queries: FeatureMatrix, fraction: float = 0.02) -> GroundTruth:
    """The ceil(fraction * n) nearest database rows per query, ties by lower index."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    n = db.n
    count = min(n, max(1, math.ceil(fraction * n - 1e-9)))
    sets = []
    for s in range(0, queries.n, 256):
        D = sq_dist_matrix(queries.data[s:s + 256], db.data)
        order = np.argsort(D, axis=1, kind="stable")[:, :count]
        sets.extend(np.sort(row) for row in order)
    return GroundTruth("euclidean_fraction", sets=sets, fraction=fraction)


@dataclass
class MetricsReport:
    map: float
    queries: int
    skipped: int
    radius: int
    precision_r: float
    recall_r: float
    f1_r: float
    cutoffs: List[int] = field(default_factory=list)
    precision_at: List[float] = field(default_factory=list)
    recall_at: List[float] = field(default_factory=list)

    def summary(self) -> List[Tuple[str, str]]:
        rad = self.radius
        return [
            ("map", f"{self.map:.10g}"),
            (f"precision_r{rad}", f"{self.precision_r:.10g}"),
            (f"recall_r{rad}", f"{self.recall_r:.10g}"),
            (f"f1_r{rad}", f"{self.f1_r:.10g}"),
            ("queries", str(self.queries)),
            ("skipped_queries", str(self.skipped)),
        ]

    def to_text(self) -> str:
        lines = [f"{k}={v}" for k, v in self.summary()]
        lines.append("#cutoff\tprecision\trecall")
        for c, p, r in zip(self.cutoffs, self.precision_at, self.recall_at):
            lines.append(f"{c}\t{p:.10g}\t{r:.10g}")
        return "\n".join(lines) + "\n"


def evaluate(db_codes: BinaryCodes, query_codes: BinaryCodes, gt: GroundTruth, radius: int = 2,
             cutoffs: Sequence[int] = DEFAULT_CUTOFFS) -> MetricsReport:
    """MAP over queries with non-empty relevance, PR at top-N cutoffs, and radius lookup.

    The lookup F1 is computed from the mean precision and mean recall.
    """
    if db_codes.r != query_codes.r:
        raise ValueError(f"code lengths differ: {db_codes.r} vs {query_codes.r}")
    if len(query_codes) != gt.n_queries:
        raise ValueError(f"{len(query_codes)} query codes but ground truth has {gt.n_queries} queries")
    n = len(db_codes)
    cuts = sorted({min(int(c), n) for c in cutoffs if c >= 1})
    aps = []
    skipped = 0
    prec = np.zeros(len(cuts))
    rec = np.zeros(len(cuts))
    lp = lr = 0.0
    for q in range(len(query_codes)):
        mask = gt.mask(q, n)
        n_rel = int(mask.sum())
        if n_rel == 0:
            skipped += 1
            continue
        dist = hamming_distances(query_codes.words[q], db_codes)
        ranked = np.argsort(dist, kind="stable")
        hits = mask[ranked]
        aps.append(_ap_from_hits(hits, n_rel))
        cum = np.cumsum(hits)
        for i, c in enumerate(cuts):
            prec[i] += cum[c - 1] / c
            rec[i] += cum[c - 1] / n_rel
        p, r, _ = _lookup_from(dist, mask, radius)
        lp += p
        lr += r
    used = len(aps)
    if used == 0:
        raise ValueError("no query has a non-empty relevant set")
    lp /= used
    lr /= used
    return MetricsReport(
        map=float(np.mean(aps)), queries=used, skipped=skipped, radius=radius,
        precision_r=lp, recall_r=lr, f1_r=_f1(lp, lr), cutoffs=cuts,
        precision_at=list(prec / used), recall_at=list(rec / used),
    )
