"""Dense linear-algebra substrate: data panels, PCA, correlations, random frames."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constants import DEGENERATE_TOL
from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """n×p panel; rows are observations and columns are variables."""

    values: np.ndarray
    column_ids: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValidationError(f"data must be two-dimensional, got shape {values.shape}")
        n, p = values.shape
        if n < 2:
            raise ValidationError(f"need at least 2 observations, got {n}")
        if p < 1:
            raise ValidationError("need at least 1 variable")
        ids = tuple(str(c) for c in self.column_ids) if self.column_ids else tuple(f"x{m + 1}" for m in range(p))
        if len(ids) != p:
            raise ValidationError(f"{len(ids)} column ids for {p} columns")
        if not np.all(np.isfinite(values)):
            row, col = np.argwhere(~np.isfinite(values))[0]
            raise ValidationError(f"non-finite entry at row {row}, column {ids[col]}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_ids", ids)

    @classmethod
    def from_array(cls, values, column_ids: Sequence[str] | None = None) -> "DataMatrix":
        return cls(np.asarray(values, dtype=float), tuple(column_ids) if column_ids is not None else ())

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def columns(self, idx) -> "DataMatrix":
        idx = np.asarray(idx, dtype=int)
        return DataMatrix(self.values[:, idx], tuple(self.column_ids[i] for i in idx))

    def rows(self, idx) -> "DataMatrix":
        return DataMatrix(self.values[idx], self.column_ids)

    def with_values(self, values: np.ndarray) -> "DataMatrix":
        return DataMatrix(values, self.column_ids)


@dataclass(frozen=True, eq=False)
class PcaFactorization:
    """One PCA pass: scores (n×r), orthonormal loadings (p×r) and the full spectrum."""

    scores: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray

    @property
    def r(self) -> int:
        return self.loadings.shape[1]

    def reconstruct(self) -> np.ndarray:
        return self.scores @ self.loadings.T


def _as_values(X) -> np.ndarray:
    return X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=float)


def center_columns(X: DataMatrix) -> tuple[DataMatrix, np.ndarray]:
    """Subtract column means; the means are returned for later recovery."""
    means = X.values.mean(axis=0)
    return X.with_values(X.values - means), means


def fix_signs(loadings: np.ndarray) -> np.ndarray:
    """Flip each column so its entry of largest magnitude is positive."""
    if loadings.size == 0:
        return loadings
    idx = np.argmax(np.abs(loadings), axis=0)
    signs = np.sign(loadings[idx, np.arange(loadings.shape[1])])
    signs[signs == 0] = 1.0
    return loadings * signs


def pca(X, r: int) -> PcaFactorization:
    """Top-r principal components of a centered panel via the thin SVD.

    Eigenvalues are those of XᵀX/n (all min(n, p) of them, whatever r is).
    """
    values = _as_values(X)
    n, p = values.shape
    if not 1 <= r <= min(n, p):
        raise ValidationError(f"rank r={r} outside [1, {min(n, p)}]")
    _, s, vt = np.linalg.svd(values, full_matrices=False)
    eigenvalues = s ** 2 / n
    loadings = fix_signs(vt[:r].T.copy())
    return PcaFactorization(scores=values @ loadings, loadings=loadings, eigenvalues=eigenvalues)


def eigenvalues(X) -> np.ndarray:
    """Spectrum of XᵀX/n, non-increasing, length min(n, p)."""
    values = _as_values(X)
    s = np.linalg.svd(values, compute_uv=False)
    return s ** 2 / values.shape[0]


def degenerate_columns(values: np.ndarray) -> np.ndarray:
    """Mask of columns whose spread is numerically zero."""
    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    return values.std(axis=0) <= DEGENERATE_TOL * scale


def correlation_abs(X: DataMatrix, allow_degenerate: bool = False) -> np.ndarray:
    """Absolute empirical correlation matrix.

    Zero-variance columns are rejected; with ``allow_degenerate`` they get
    correlation 0 with every other column instead.
    """
    values = X.values
    flat = degenerate_columns(values)
    if flat.any() and not allow_degenerate:
        names = [X.column_ids[i] for i in np.flatnonzero(flat)]
        raise ValidationError(f"zero-variance column(s): {', '.join(names)}")
    centered = values - values.mean(axis=0)
    norms = np.linalg.norm(centered, axis=0)
    norms[flat] = 1.0
    unit = centered / norms
    unit[:, flat] = 0.0
    corr = np.clip(np.abs(unit.T @ unit), 0.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def random_orthonormal(rows: int, cols: int, rng) -> np.ndarray:
    """rows×cols matrix with orthonormal columns from a QR of a Gaussian draw."""
    if cols > rows:
        raise ValidationError(f"cannot fit {cols} orthonormal columns in {rows} rows")
    rng = np.random.default_rng(rng)
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs
