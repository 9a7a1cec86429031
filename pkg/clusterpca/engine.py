"""Complement-clustering PCA (CPCA) engine.

Initial step: whole-panel PCA, complement, hierarchical clustering.
Iterative step: two-layer PCA for the common effect, LOO-PCR reassignment on
the complement, repeated until consecutive partitions agree (ARI ≥ η).
Final step: common effect on the converged partition, then per-cluster PCA
of the final complement.
"""

import threading
from dataclasses import dataclass, field

import numpy as np

from .clustering import (
    ClusterPartition,
    adjusted_rand_index,
    hierarchical_partition,
    loo_pcr_sweep,
    normalized_ssr,
)
from .config import FitConfig
from .constants import DEFAULT_COMMON_CAP, MIN_DONOR_SIZE, UNIDENTIFIABLE_CORR
from .errors import ValidationError
from .logging_config import logger
from .matrix import DataMatrix, center_columns, eigenvalues, pca
from .selection import default_cap, iterative_ratio_select, ratio_select


def _values(X) -> np.ndarray:
    return X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=float)


# ----------------------------------------------------------------------
# Model types
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClusterComponents:
    """Specific components of one cluster: scores F (n×r), loadings Γ (p_j×r)."""

    members: np.ndarray
    gamma: np.ndarray
    sigma2: float
    f_var: np.ndarray
    scores: np.ndarray | None = None

    @property
    def r(self) -> int:
        return self.gamma.shape[1]


@dataclass
class FitTrace:
    partitions: list[np.ndarray] = field(default_factory=list)
    ari: list[float] = field(default_factory=list)
    common_ranks: list[int] = field(default_factory=list)
    cluster_ranks: list[list[int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ari": [float(a) for a in self.ari],
            "partitions": [np.asarray(p).tolist() for p in self.partitions],
            "common_ranks": [int(r) for r in self.common_ranks],
            "cluster_ranks": [[int(r) for r in rs] for rs in self.cluster_ranks],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FitTrace":
        return cls(
            partitions=[np.asarray(p, dtype=int) for p in data.get("partitions", [])],
            ari=list(data.get("ari", [])),
            common_ranks=list(data.get("common_ranks", [])),
            cluster_ranks=[list(r) for r in data.get("cluster_ranks", [])],
        )


@dataclass(eq=False)
class CpcaModel:
    """Fitted homogeneity (G, Φ) plus per-cluster sub-homogeneity (F_j, Γ_j)."""

    phi: np.ndarray
    g_var: np.ndarray
    partition: ClusterPartition
    clusters: list[ClusterComponents]
    means: np.ndarray
    column_ids: tuple[str, ...]
    trace: FitTrace = field(default_factory=FitTrace)
    converged: bool = True
    G: np.ndarray | None = None

    @property
    def p(self) -> int:
        return self.phi.shape[0]

    @property
    def r_c(self) -> int:
        return self.phi.shape[1]

    @property
    def iterations(self) -> int:
        return len(self.trace.ari)

    @property
    def cluster_ranks(self) -> list[int]:
        return [c.r for c in self.clusters]

    @property
    def total_components(self) -> int:
        return self.r_c + sum(self.cluster_ranks)

    def embedded_gamma(self) -> np.ndarray:
        """Per-cluster loadings stacked side by side, zero outside each cluster's rows."""
        total = sum(self.cluster_ranks)
        out = np.zeros((self.p, total))
        offset = 0
        for c in self.clusters:
            out[c.members, offset:offset + c.r] = c.gamma
            offset += c.r
        return out

    def center(self, X: DataMatrix) -> DataMatrix:
        """Center new data with the training means."""
        if X.p != self.p:
            raise ValidationError(f"model has {self.p} columns, data has {X.p}")
        return X.with_values(X.values - self.means)

    def transform(self, X) -> tuple[np.ndarray, list[np.ndarray]]:
        """Scores of centered data: G = XΦ, F_j from the complement restricted to cluster j."""
        values = _values(X)
        if values.shape[1] != self.p:
            raise ValidationError(f"model has {self.p} columns, data has {values.shape[1]}")
        G = values @ self.phi
        complement = values - G @ self.phi.T
        F = [complement[:, c.members] @ c.gamma for c in self.clusters if c.r > 0]
        return G, F

    def training_scores(self) -> tuple[np.ndarray, list[np.ndarray]]:
        if self.G is None or any(c.scores is None for c in self.clusters):
            raise ValidationError("model carries no training scores (loaded from disk?)")
        return self.G, [c.scores for c in self.clusters if c.r > 0]

    # ------------------------------------------------------------------
    # JSON document
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "column_ids": list(self.column_ids),
            "means": self.means.tolist(),
            "r_c": self.r_c,
            "phi": self.phi.tolist(),
            "g_var": self.g_var.tolist(),
            "partition": {
                "labels": self.partition.labels.tolist(),
                "singletons": self.partition.singleton_flags.tolist(),
            },
            "clusters": [
                {
                    "members": c.members.tolist(),
                    "gamma": c.gamma.tolist(),
                    "r": c.r,
                    "sigma2": float(c.sigma2),
                    "f_var": c.f_var.tolist(),
                }
                for c in self.clusters
            ],
            "converged": bool(self.converged),
            "iterations": self.iterations,
            "trace": self.trace.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CpcaModel":
        p = len(data["means"])
        clusters = []
        for c in data["clusters"]:
            members = np.asarray(c["members"], dtype=int)
            gamma = np.asarray(c["gamma"], dtype=float).reshape(members.size, int(c["r"]))
            clusters.append(ClusterComponents(
                members=members,
                gamma=gamma,
                sigma2=float(c["sigma2"]),
                f_var=np.asarray(c.get("f_var", []), dtype=float),
            ))
        return cls(
            phi=np.asarray(data["phi"], dtype=float).reshape(p, int(data["r_c"])),
            g_var=np.asarray(data.get("g_var", []), dtype=float),
            partition=ClusterPartition(
                np.asarray(data["partition"]["labels"], dtype=int),
                np.asarray(data["partition"]["singletons"], dtype=bool),
            ),
            clusters=clusters,
            means=np.asarray(data["means"], dtype=float),
            column_ids=tuple(data["column_ids"]),
            trace=FitTrace.from_dict(data.get("trace", {})),
            converged=bool(data.get("converged", True)),
        )


# ----------------------------------------------------------------------
# Algorithm steps
# ----------------------------------------------------------------------

def _cluster_rank(values: np.ndarray, cfg: FitConfig, with_common: bool = False) -> int:
    """Per-cluster component count; a pinned count grows by r_c where the common effect is still present."""
    n, m = values.shape
    if cfg.cluster_rank is not None:
        extra = (cfg.common_rank or 0) if with_common else 0
        return min(cfg.cluster_rank + extra, n, m)
    eigs = eigenvalues(values)
    cap = min(cfg.cluster_cap or default_cap(n, m), eigs.size - 1)
    return iterative_ratio_select(eigs, cap, cfg.max_tiers)


def common_rank(values: np.ndarray, cfg: FitConfig) -> int:
    """Whole-panel component count; the ratio estimator scans only the first ``common_cap`` gaps."""
    n, m = values.shape
    if cfg.common_rank is not None:
        return min(cfg.common_rank, n, m)
    if min(n, m) < 2:
        return 1
    eigs = eigenvalues(values)
    cap = min(cfg.common_cap or min(DEFAULT_COMMON_CAP, default_cap(n, m)), eigs.size - 1)
    return ratio_select(eigs, cap)


@dataclass(frozen=True, eq=False)
class InitialEstimate:
    G: np.ndarray
    phi: np.ndarray
    Xc: DataMatrix
    partition: ClusterPartition


def initial_step(X: DataMatrix, cfg: FitConfig | None = None) -> InitialEstimate:
    """Whole-panel PCA, its complement, and the hierarchical partition of the complement."""
    cfg = cfg or FitConfig()
    values = X.values
    if cfg.common_effect:
        r = common_rank(values, cfg)
        fac = pca(values, r)
        G, phi = fac.scores, fac.loadings
    else:
        G, phi = np.zeros((X.n, 0)), np.zeros((X.p, 0))
    Xc = X.with_values(values - G @ phi.T)
    partition = hierarchical_partition(Xc, allow_degenerate=True)
    logger.debug("Initial step: r_c=%d, J0=%d", phi.shape[1], partition.J)
    return InitialEstimate(G=G, phi=phi, Xc=Xc, partition=partition)


@dataclass(frozen=True, eq=False)
class TwoLayerResult:
    G: np.ndarray
    phi: np.ndarray
    Xc: DataMatrix
    H: np.ndarray
    psi: np.ndarray
    block_ranks: list[int]


def two_layer_pca(
    X: DataMatrix,
    partition: ClusterPartition,
    cfg: FitConfig | None = None,
    strict: bool = True,
) -> TwoLayerResult:
    """Common effect from per-cluster PCA followed by PCA of the stacked cluster scores.

    Φ = ΠH where Π places each cluster's loadings on its own rows, so Φ
    keeps orthonormal columns. Single-variable clusters enter as identity
    blocks. With ``strict`` a partition without any cluster of two or more
    variables is rejected.
    """
    cfg = cfg or FitConfig()
    if partition.p != X.p:
        raise ValidationError(f"partition covers {partition.p} variables, panel has {X.p}")
    sizes = partition.sizes()
    if strict and cfg.common_effect and sizes.max() < MIN_DONOR_SIZE:
        raise ValidationError(f"no cluster has {MIN_DONOR_SIZE}+ members (sizes {sizes.tolist()})")
    values = X.values
    n = X.n
    if not cfg.common_effect:
        empty = np.zeros((X.p, 0))
        return TwoLayerResult(np.zeros((n, 0)), empty, X, np.zeros((0, 0)), np.zeros((n, 0)), [])

    blocks, loadings, ranks = [], [], []
    for j in range(1, partition.J + 1):
        members = partition.members(j)
        sub = values[:, members]
        if members.size == 1:
            blocks.append(sub)
            loadings.append((members, np.ones((1, 1))))
            ranks.append(1)
            continue
        fac = pca(sub, _cluster_rank(sub, cfg, with_common=True))
        blocks.append(fac.scores)
        loadings.append((members, fac.loadings))
        ranks.append(fac.r)

    psi = np.hstack(blocks)
    Pi = np.zeros((X.p, psi.shape[1]))
    offset = 0
    for members, block in loadings:
        Pi[members, offset:offset + block.shape[1]] = block
        offset += block.shape[1]

    second = pca(psi, common_rank(psi, cfg))
    H = second.loadings
    phi = Pi @ H
    G = second.scores
    return TwoLayerResult(G, phi, X.with_values(values - G @ phi.T), H, psi, ranks)


def complement_ranks(Xc: DataMatrix, partition: ClusterPartition, cfg: FitConfig) -> dict[int, int]:
    """Component count of each cluster of the complement (1 for undersized clusters)."""
    ranks = {}
    for j in range(1, partition.J + 1):
        members = partition.members(j)
        ranks[j] = _cluster_rank(Xc.values[:, members], cfg) if members.size >= MIN_DONOR_SIZE else 1
    return ranks


def _cluster_components(Xc: DataMatrix, partition: ClusterPartition, cfg: FitConfig) -> list[ClusterComponents]:
    out = []
    for j in range(1, partition.J + 1):
        members = partition.members(j)
        sub = Xc.values[:, members]
        if members.size < MIN_DONOR_SIZE:
            # singleton: no specific component, all of it is noise
            out.append(ClusterComponents(members, np.zeros((members.size, 0)), float(np.mean(sub ** 2)),
                                         np.zeros(0), np.zeros((Xc.n, 0))))
            continue
        fac = pca(sub, _cluster_rank(sub, cfg))
        resid = sub - fac.reconstruct()
        out.append(ClusterComponents(
            members=members,
            gamma=fac.loadings,
            sigma2=float(np.mean(resid ** 2)),
            f_var=fac.scores.var(axis=0),
            scores=fac.scores,
        ))
    return out


def _build_model(G, phi, partition, clusters, means, X, trace, converged) -> CpcaModel:
    return CpcaModel(
        phi=phi,
        g_var=G.var(axis=0) if G.shape[1] else np.zeros(0),
        partition=partition,
        clusters=clusters,
        means=means,
        column_ids=X.column_ids,
        trace=trace,
        converged=converged,
        G=G,
    )


# ----------------------------------------------------------------------
# Controller
# ----------------------------------------------------------------------

class CpcaEngine:
    """Runs the iterative CPCA fit and reports progress through callbacks."""

    def __init__(self, cfg: FitConfig | None = None):
        self.cfg = cfg or FitConfig()
        self._stop_event = threading.Event()
        self._running = False
        self._iteration = 0
        self._on_status_change = None
        self._on_iteration = None

    # ------------------------------------------------------------------
    # Public API
    # ------------------------------------------------------------------

    def set_callbacks(self, on_status_change=None, on_iteration=None):
        """Register progress callbacks.

        ``on_iteration(s, partition, ari)`` fires after every LOO-PCR sweep.
        """
        self._on_status_change = on_status_change
        self._on_iteration = on_iteration

    @property
    def running(self) -> bool:
        return self._running

    @property
    def iteration(self) -> int:
        return self._iteration

    def stop(self):
        """Ask a running fit to finish after the current sweep."""
        self._stop_event.set()

    def fit(self, X: DataMatrix, initial_partition: ClusterPartition | None = None) -> CpcaModel:
        cfg = self.cfg
        Xc0, means = center_columns(X)
        self._stop_event.clear()
        self._iteration = 0
        self._running = True
        self._notify_status(True)
        try:
            if initial_partition is None:
                partition = initial_step(Xc0, cfg).partition
            else:
                if initial_partition.p != X.p:
                    raise ValidationError(f"initial partition covers {initial_partition.p} variables, panel has {X.p}")
                partition = initial_partition
            trace = FitTrace(partitions=[partition.labels.copy()])
            converged = False

            for s in range(1, cfg.max_iterations + 1):
                if self._stop_event.is_set():
                    logger.info("Fit stopped on request after %d iterations", s - 1)
                    break
                if cfg.common_effect and partition.sizes().max() < MIN_DONOR_SIZE:
                    logger.warning("Every variable is a singleton; iteration halted")
                    break
                layer = two_layer_pca(Xc0, partition, cfg)
                ranks = complement_ranks(layer.Xc, partition, cfg)
                sweep = loo_pcr_sweep(layer.Xc, partition, ranks, cfg.tau)
                ari = adjusted_rand_index(partition, sweep.partition)
                partition = sweep.partition
                self._iteration = s
                trace.partitions.append(partition.labels.copy())
                trace.ari.append(ari)
                trace.common_ranks.append(layer.phi.shape[1])
                trace.cluster_ranks.append([ranks[j] for j in sorted(ranks)])
                logger.info("Iteration %d: J=%d, r_c=%d, ARI=%.4f", s, partition.J, layer.phi.shape[1], ari)
                self._notify_iteration(s, partition, ari)
                if ari >= cfg.eta:
                    converged = True
                    break

            if not converged:
                logger.warning("CPCA did not reach ARI >= %.2f within %d iterations", cfg.eta, cfg.max_iterations)
            final = two_layer_pca(Xc0, partition, cfg, strict=False)
            clusters = _cluster_components(final.Xc, partition, cfg)
            return _build_model(final.G, final.phi, partition, clusters, means, X, trace, converged)
        finally:
            self._running = False
            self._notify_status(False)

    def fit_initial(self, X: DataMatrix) -> CpcaModel:
        """Initial step only: hierarchical clusters of the whole-panel complement."""
        Xc0, means = center_columns(X)
        init = initial_step(Xc0, self.cfg)
        clusters = _cluster_components(init.Xc, init.partition, self.cfg)
        trace = FitTrace(partitions=[init.partition.labels.copy()])
        return _build_model(init.G, init.phi, init.partition, clusters, means, X, trace, True)

    # ------------------------------------------------------------------
    # Internal
    # ------------------------------------------------------------------

    def _notify_status(self, running: bool):
        if self._on_status_change:
            try:
                self._on_status_change(running)
            except Exception as e:
                logger.error("Status callback failed: %s", e)

    def _notify_iteration(self, s: int, partition: ClusterPartition, ari: float):
        if self._on_iteration:
            try:
                self._on_iteration(s, partition, ari)
            except Exception as e:
                logger.error("Iteration callback failed: %s", e)


def fit(X: DataMatrix, cfg: FitConfig | None = None, initial_partition: ClusterPartition | None = None) -> CpcaModel:
    return CpcaEngine(cfg).fit(X, initial_partition)


def fit_initial(X: DataMatrix, cfg: FitConfig | None = None) -> CpcaModel:
    return CpcaEngine(cfg).fit_initial(X)


def fit_pca(X: DataMatrix, cfg: FitConfig | None = None) -> CpcaModel:
    """Plain whole-panel PCA as a model without clusters (the baseline)."""
    cfg = cfg or FitConfig()
    Xc0, means = center_columns(X)
    fac = pca(Xc0.values, common_rank(Xc0.values, cfg))
    partition = ClusterPartition.from_labels(np.ones(X.p, dtype=int))
    return _build_model(fac.scores, fac.loadings, partition, [], means, X, FitTrace(), True)


# ----------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------

def recover(model: CpcaModel, X_new, mode: str = "cpca") -> np.ndarray:
    """Reconstruct centered data: common projection, then cluster projections of the rest."""
    values = _values(X_new)
    if values.ndim != 2 or values.shape[1] != model.p:
        raise ValidationError(f"model has {model.p} columns, data has shape {values.shape}")
    common = values @ model.phi @ model.phi.T
    if mode == "pca":
        return common
    if mode != "cpca":
        raise ValidationError(f"unknown recovery mode {mode!r}")
    gamma = model.embedded_gamma()
    return common + (values - common) @ gamma @ gamma.T


def msre(X_hat, X) -> float:
    """‖X̂ − X‖²_F / (n·p)."""
    a, b = _values(X_hat), _values(X)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sum((a - b) ** 2) / a.size)


@dataclass(frozen=True, eq=False)
class SeparationReport:
    fraction: float
    variables: np.ndarray
    own_minimal: np.ndarray
    unidentifiable: list[tuple[int, int]]


def _canonical_correlations(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    return np.linalg.svd(qa.T @ qb, compute_uv=False)


def separation_check(model: CpcaModel, Xc) -> SeparationReport:
    """Share of variables whose own cluster's components give the strictly smallest normalized SSR."""
    values = _values(Xc)
    labelled = [(j + 1, c) for j, c in enumerate(model.clusters) if c.r > 0]
    if any(c.scores is None for _, c in labelled):
        raise ValidationError("separation check needs the training scores of the model")
    if len(labelled) < 2:
        members = np.concatenate([c.members for _, c in labelled]) if labelled else np.zeros(0, dtype=int)
        return SeparationReport(1.0, members, np.ones(members.size, dtype=bool), [])

    unidentifiable = []
    for a in range(len(labelled)):
        for b in range(a + 1, len(labelled)):
            (la, ca), (lb, cb) = labelled[a], labelled[b]
            corr = _canonical_correlations(ca.scores, cb.scores)
            if corr.min() >= UNIDENTIFIABLE_CORR:
                unidentifiable.append((la, lb))
    if unidentifiable:
        logger.warning("Clusters with indistinguishable components: %s", unidentifiable)

    variables, own_minimal = [], []
    for own, c in labelled:
        for m in c.members:
            y = values[:, m]
            ssr = {label: normalized_ssr(y, other.scores) for label, other in labelled}
            rival = min(v for label, v in ssr.items() if label != own)
            variables.append(int(m))
            own_minimal.append(ssr[own] < rival)
    own_minimal = np.asarray(own_minimal, dtype=bool)
    return SeparationReport(float(own_minimal.mean()), np.asarray(variables), own_minimal, unidentifiable)
