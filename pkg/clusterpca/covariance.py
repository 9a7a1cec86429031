"""Covariance estimates: CPCA low-rank-plus-block-diagonal, and the PCA / POET / sample baselines."""

from dataclasses import dataclass, field

import numpy as np

from .config import FitConfig
from .constants import (
    COV_CPCA,
    COV_METHODS,
    COV_PCA,
    COV_POET,
    COV_SAMPLE,
    MAX_CONDITION,
    POET_CONSTANT,
    SIGMA2_FLOOR,
)
from .engine import common_rank, fit
from .errors import ValidationError
from .logging_config import logger
from .matrix import DataMatrix, center_columns, pca


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    sigma: np.ndarray
    method: str
    column_ids: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)


def _values(X) -> np.ndarray:
    return X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=float)


def _ids(X) -> tuple[str, ...]:
    return X.column_ids if isinstance(X, DataMatrix) else ()


def _symmetrize(S: np.ndarray) -> np.ndarray:
    return (S + S.T) / 2.0


def _ridge_to_psd(S: np.ndarray) -> tuple[np.ndarray, float]:
    """Smallest diagonal shift that lifts the bottom eigenvalue to zero."""
    lowest = float(np.linalg.eigvalsh(S)[0])
    if lowest >= 0.0:
        return S, 0.0
    ridge = -lowest
    return S + ridge * np.eye(S.shape[0]), ridge


def cpca_cov(model) -> CovarianceEstimate:
    """Φ·diag(var G)·Φᵀ + Σ_j Γ̃_j·diag(var F_j)·Γ̃_jᵀ + Σ_j Ĩ_j σ²_j."""
    p = model.p
    sigma = (model.phi * model.g_var) @ model.phi.T if model.r_c else np.zeros((p, p))
    noise = np.zeros(p)
    for c in model.clusters:
        if c.r:
            block = (c.gamma * c.f_var) @ c.gamma.T
            sigma[np.ix_(c.members, c.members)] += block
        noise[c.members] = max(c.sigma2, SIGMA2_FLOOR)
    sigma = _symmetrize(sigma) + np.diag(noise)
    return CovarianceEstimate(sigma, COV_CPCA, model.column_ids, {"r_c": model.r_c, "J": len(model.clusters)})


def sample_cov(X) -> CovarianceEstimate:
    """XᵀX/n of a centered panel."""
    values = _values(X)
    return CovarianceEstimate(_symmetrize(values.T @ values / values.shape[0]), COV_SAMPLE, _ids(X))


def pca_cov(X, r: int) -> CovarianceEstimate:
    """Top-r PCA part plus the average left-over variance on the diagonal."""
    values = _values(X)
    if r < 1:
        raise ValidationError(f"rank r must be >= 1, got {r}")
    n, p = values.shape
    fac = pca(values, r)
    low = (fac.loadings * fac.eigenvalues[:r]) @ fac.loadings.T
    total = float(np.sum(values ** 2) / n)
    sigma2 = max((total - float(np.sum(fac.eigenvalues[:r]))) / p, 0.0)
    sigma = _symmetrize(low) + sigma2 * np.eye(p)
    return CovarianceEstimate(sigma, COV_PCA, _ids(X), {"r": r, "sigma2": sigma2})


def poet_threshold(n: int, p: int) -> float:
    return POET_CONSTANT * float(np.sqrt(np.log(p) / n)) if p > 1 else 0.0


def poet_cov(X, r: int, threshold: float | None = None) -> CovarianceEstimate:
    """PCA part plus the residual covariance soft-thresholded on the correlation scale."""
    values = _values(X)
    n, p = values.shape
    if threshold is None:
        threshold = poet_threshold(n, p)
    if threshold < 0:
        raise ValidationError(f"threshold must be >= 0, got {threshold}")
    fac = pca(values, r)
    low = _symmetrize((fac.loadings * fac.eigenvalues[:r]) @ fac.loadings.T)
    residual = _symmetrize(values.T @ values / n) - low
    if np.isfinite(threshold):
        scale = np.sqrt(np.clip(np.diag(residual), 0.0, None))
        level = threshold * np.outer(scale, scale)
        shrunk = np.sign(residual) * np.clip(np.abs(residual) - level, 0.0, None)
    else:
        shrunk = np.zeros_like(residual)
    np.fill_diagonal(shrunk, np.diag(residual))
    sigma, ridge = _ridge_to_psd(low + shrunk)
    if ridge > 0.0:
        logger.info("POET estimate was indefinite; added ridge %.3g", ridge)
    return CovarianceEstimate(sigma, COV_POET, _ids(X), {"r": r, "threshold": float(threshold), "ridge": ridge})


def frob_distance(A, B) -> float:
    """Squared Frobenius distance ‖A − B‖²_F."""
    a = A.sigma if isinstance(A, CovarianceEstimate) else np.asarray(A, dtype=float)
    b = B.sigma if isinstance(B, CovarianceEstimate) else np.asarray(B, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sum((a - b) ** 2))


@dataclass(frozen=True, eq=False)
class PrecisionMatrix:
    matrix: np.ndarray
    ridge: float = 0.0
    flagged: bool = False


def precision(est) -> PrecisionMatrix:
    """Inverse covariance; an ill-conditioned input is ridged to condition 1e12 and flagged."""
    sigma = est.sigma if isinstance(est, CovarianceEstimate) else np.asarray(est, dtype=float)
    eigs = np.linalg.eigvalsh(sigma)
    top, bottom = float(eigs[-1]), float(eigs[0])
    ridge = 0.0
    if top <= 0.0:
        raise ValidationError("covariance has no positive eigenvalue")
    if bottom <= 0.0 or top / bottom > MAX_CONDITION:
        # shift so that (top + ridge) / (bottom + ridge) == MAX_CONDITION
        ridge = (top - MAX_CONDITION * bottom) / (MAX_CONDITION - 1.0)
        logger.info("Covariance condition above %.0e; ridge %.3g applied", MAX_CONDITION, ridge)
    shifted = sigma + ridge * np.eye(sigma.shape[0])
    inverse = np.linalg.solve(shifted, np.eye(sigma.shape[0]))
    return PrecisionMatrix(_symmetrize(inverse), ridge, ridge > 0.0)


def covariance_by_method(X: DataMatrix, method: str, cfg: FitConfig | None = None, model=None,
                         initial_partition=None) -> CovarianceEstimate:
    """Dispatch used by the backtest and the command line; centers X first."""
    if method not in COV_METHODS:
        raise ValidationError(f"unknown covariance method {method!r}; choose from {', '.join(COV_METHODS)}")
    cfg = cfg or FitConfig()
    if method == COV_CPCA:
        if model is None:
            model = fit(X, cfg, initial_partition)
        return cpca_cov(model)
    Xc, _ = center_columns(X)
    if method == COV_SAMPLE:
        return sample_cov(Xc)
    r = common_rank(Xc.values, cfg)
    if method == COV_PCA:
        return pca_cov(Xc, r)
    return poet_cov(Xc, r)
