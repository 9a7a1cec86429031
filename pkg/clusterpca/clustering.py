"""Variable clustering.

Average-linkage agglomeration cut at the largest height increment gives the
initial partition; leave-one-out principal-component regression (LOO-PCR)
refines it; the adjusted Rand index measures how much a sweep moved it.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform
from sklearn.metrics import adjusted_rand_score

from .constants import MIN_DONOR_SIZE
from .errors import ValidationError
from .logging_config import logger
from .matrix import DataMatrix, correlation_abs, pca


@dataclass(frozen=True, eq=False)
class ClusterPartition:
    """Assignment of p variables to clusters labelled 1..J."""

    labels: np.ndarray
    singleton_flags: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        flags = np.asarray(self.singleton_flags, dtype=bool)
        if labels.ndim != 1 or labels.size == 0:
            raise ValidationError("labels must be a non-empty one-dimensional sequence")
        if flags.shape != labels.shape:
            raise ValidationError("singleton_flags must match labels in length")
        J = int(labels.max())
        if labels.min() < 1 or np.unique(labels).size != J:
            raise ValidationError(f"cluster ids must occupy 1..{J} without gaps")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "singleton_flags", flags)

    @classmethod
    def from_labels(cls, labels, singleton_flags=None) -> "ClusterPartition":
        """Relabel canonically: clusters numbered by their smallest member index."""
        raw = np.asarray(labels)
        _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        canonical = order[inverse.ravel()] + 1
        flags = np.zeros(raw.size, dtype=bool) if singleton_flags is None else singleton_flags
        return cls(canonical, flags)

    @property
    def p(self) -> int:
        return self.labels.size

    @property
    def J(self) -> int:
        return int(self.labels.max())

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.labels == j)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.J + 1)[1:]

    def same_as(self, other: "ClusterPartition") -> bool:
        return bool(np.array_equal(self.labels, other.labels))


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """p−1 merge events (left, right, height, size) as produced by scipy's linkage."""

    merges: np.ndarray
    p: int

    @property
    def heights(self) -> np.ndarray:
        return self.merges[:, 2] if self.merges.size else np.empty(0)


def dissimilarity(X: DataMatrix, allow_degenerate: bool = False) -> np.ndarray:
    """1 − |corr|."""
    D = 1.0 - correlation_abs(X, allow_degenerate=allow_degenerate)
    np.fill_diagonal(D, 0.0)
    return D


def hierarchical_cluster(D: np.ndarray) -> Dendrogram:
    """Average-linkage agglomeration of a dissimilarity matrix."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValidationError(f"dissimilarity must be square, got shape {D.shape}")
    if not np.allclose(D, D.T, atol=1e-10):
        raise ValidationError("dissimilarity matrix is not symmetric")
    if np.any(D < -1e-12):
        raise ValidationError("dissimilarity matrix has negative entries")
    if np.any(np.abs(np.diag(D)) > 1e-12):
        raise ValidationError("dissimilarity matrix must have a zero diagonal")
    p = D.shape[0]
    if p < 2:
        return Dendrogram(np.empty((0, 4)), p)
    condensed = squareform(np.clip((D + D.T) / 2.0, 0.0, None), checks=False)
    return Dendrogram(linkage(condensed, method="average"), p)


def _labels_after(dend: Dendrogram, n_merges: int) -> np.ndarray:
    groups: dict[int, list[int]] = {i: [i] for i in range(dend.p)}
    for step in range(n_merges):
        left, right = int(dend.merges[step, 0]), int(dend.merges[step, 1])
        groups[dend.p + step] = groups.pop(left) + groups.pop(right)
    labels = np.empty(dend.p, dtype=int)
    for label, members in enumerate(groups.values(), start=1):
        labels[members] = label
    return labels


def cut_by_max_gap(dend: Dendrogram) -> ClusterPartition:
    """Stop agglomerating before the largest jump in merge height.

    Ties go to the smallest cluster count; at least two clusters are kept.
    """
    p = dend.p
    if p <= 2:
        return ClusterPartition.from_labels(np.arange(p))
    gaps = np.diff(dend.heights)
    # merges performed before the gap; reversed argmax picks the last (smallest J) tie
    n_merges = gaps.size - int(np.argmax(gaps[::-1])) if gaps.size else 0
    n_merges = min(n_merges, p - 2)
    return ClusterPartition.from_labels(_labels_after(dend, n_merges))


def hierarchical_partition(X: DataMatrix, allow_degenerate: bool = False) -> ClusterPartition:
    return cut_by_max_gap(hierarchical_cluster(dissimilarity(X, allow_degenerate)))


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Outcome of one LOO-PCR sweep.

    ``ssr`` holds the normalized SSR of every variable against every cluster
    of the incoming partition (NaN where the cluster could not donate).
    """

    partition: ClusterPartition
    ssr: np.ndarray
    skipped: list[tuple[int, int]] = field(default_factory=list)
    spawned: list[int] = field(default_factory=list)


def normalized_ssr(y: np.ndarray, scores: np.ndarray) -> float:
    """Residual sum of squares of y on scores, over the total sum of squares of y."""
    tss = float(y @ y)
    if tss <= 0.0:
        return 0.0
    coef, *_ = np.linalg.lstsq(scores, y, rcond=None)
    resid = y - scores @ coef
    return float(np.clip(resid @ resid / tss, 0.0, 1.0))


def loo_pcr_sweep(Xc: DataMatrix, current: ClusterPartition, ranks, tau: float) -> SweepResult:
    """Visit variables in column order and move each to its best-predicting cluster.

    ``ranks`` maps each cluster id of ``current`` to its component count
    (a sequence indexed by id−1 or a dict). Labels are updated immediately so
    later variables see earlier moves. A variable whose best normalized SSR
    exceeds ``tau`` becomes its own cluster.
    """
    if not 0.0 < tau <= 1.0:
        raise ValidationError(f"tau must lie in (0, 1], got {tau}")
    if current.p != Xc.p:
        raise ValidationError(f"partition covers {current.p} variables, panel has {Xc.p}")
    values = Xc.values
    n = Xc.n
    rank_of = dict(ranks) if isinstance(ranks, dict) else {j + 1: int(r) for j, r in enumerate(ranks)}
    labels = current.labels.copy()
    flags = current.singleton_flags.copy()
    J0 = current.J
    ssr_table = np.full((Xc.p, J0), np.nan)
    skipped: list[tuple[int, int]] = []
    spawned: list[int] = []
    next_label = J0 + 1

    for k in range(Xc.p):
        y = values[:, k]
        if float(y @ y) <= 0.0:
            continue
        best_label, best_ssr = None, np.inf
        for j in np.unique(labels):
            members = np.flatnonzero(labels == j)
            members = members[members != k]
            if members.size < MIN_DONOR_SIZE:
                skipped.append((k, int(j)))
                continue
            r = max(1, min(rank_of.get(int(j), 1), members.size, n))
            scores = pca(values[:, members], r).scores
            value = normalized_ssr(y, scores)
            if j <= J0:
                ssr_table[k, j - 1] = value
            if value < best_ssr:
                best_label, best_ssr = int(j), value
        if best_label is None:
            continue
        if best_ssr > tau:
            labels[k] = next_label
            flags[k] = True
            rank_of[next_label] = 1
            spawned.append(k)
            logger.debug("Variable %s spawned a singleton (normalized SSR %.3f)", Xc.column_ids[k], best_ssr)
            next_label += 1
        else:
            labels[k] = best_label
            flags[k] = False
    if skipped:
        logger.debug("LOO-PCR skipped %d undersized donor candidates", len(skipped))
    return SweepResult(ClusterPartition.from_labels(labels, flags), ssr_table, skipped, spawned)


def loo_pcr_assign(Xc: DataMatrix, current: ClusterPartition, ranks, tau: float) -> ClusterPartition:
    return loo_pcr_sweep(Xc, current, ranks, tau).partition


def _labels_of(partition) -> np.ndarray:
    return partition.labels if isinstance(partition, ClusterPartition) else np.asarray(partition)


def adjusted_rand_index(a, b) -> float:
    """Hubert–Arabie adjusted Rand index; label values themselves carry no meaning."""
    la, lb = _labels_of(a), _labels_of(b)
    if la.shape != lb.shape:
        raise ValidationError(f"partitions differ in length: {la.size} vs {lb.size}")
    return float(adjusted_rand_score(la.ravel(), lb.ravel()))
