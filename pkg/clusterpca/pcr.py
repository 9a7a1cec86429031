"""Principal-component regression on CPCA features.

Groups are the common scores G and each cluster's scores F_j. The group
lasso minimizes (1/2n)‖y − ŷ‖² + λ(‖α‖₂ + Σ‖β_j‖₂) by block coordinate
descent with exact block updates.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import brentq
from sklearn.model_selection import KFold

from .config import FitConfig
from .constants import CV_GRID_SIZE, CV_GRID_SPAN, DEFAULT_FOLDS, GL_MAX_SWEEPS, GL_TOL
from .engine import CpcaModel, fit_pca
from .errors import RankDeficiencyError, ValidationError
from .logging_config import logger
from .matrix import DataMatrix


def _as_block(scores) -> np.ndarray:
    block = np.asarray(scores, dtype=float)
    return block[:, np.newaxis] if block.ndim == 1 else block


def _blocks(G, F_list) -> list[np.ndarray]:
    blocks = [_as_block(G)] + [_as_block(F) for F in F_list]
    n = blocks[0].shape[0]
    if any(b.shape[0] != n for b in blocks):
        raise ValidationError("all score blocks need the same number of rows")
    return blocks


def _split(coef: np.ndarray, blocks: list[np.ndarray]) -> list[np.ndarray]:
    bounds = np.cumsum([0] + [b.shape[1] for b in blocks])
    return [coef[bounds[g]:bounds[g + 1]] for g in range(len(blocks))]


def _check_response(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size != n:
        raise ValidationError(f"response has {y.size} entries, design has {n} rows")
    return y


@dataclass(frozen=True, eq=False)
class OlsPcrFit:
    alpha: np.ndarray
    betas: list[np.ndarray]
    y_mean: float

    @property
    def coef(self) -> np.ndarray:
        return np.concatenate([self.alpha, *self.betas])

    def predict(self, G, F_list) -> np.ndarray:
        return np.hstack(_blocks(G, F_list)) @ self.coef + self.y_mean


def fit_ols_pcr(G, F_list, y) -> OlsPcrFit:
    """Least squares of the centered response on the stacked score design."""
    blocks = _blocks(G, F_list)
    design = np.hstack(blocks)
    n, k = design.shape
    y = _check_response(y, n)
    if n <= k:
        raise ValidationError(f"need more observations ({n}) than design columns ({k})")
    _, R, piv = linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > max(n, k) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)))
    if rank < k:
        offending = sorted(int(c) for c in piv[rank:])
        raise RankDeficiencyError(f"design columns {offending} are linearly dependent on the rest", offending)
    y_mean = float(y.mean())
    coef, *_ = np.linalg.lstsq(design, y - y_mean, rcond=None)
    parts = _split(coef, blocks)
    return OlsPcrFit(alpha=parts[0], betas=parts[1:], y_mean=y_mean)


@dataclass(frozen=True, eq=False)
class GroupLassoFit:
    """Group lasso solution; group 0 is the common block."""

    alpha: np.ndarray
    betas: list[np.ndarray]
    lam: float
    objective: list[float] = field(default_factory=list)
    active: list[int] = field(default_factory=list)
    converged: bool = True
    sweeps: int = 0
    y_mean: float = 0.0

    @property
    def coef(self) -> np.ndarray:
        return np.concatenate([self.alpha, *self.betas])

    def predict(self, G, F_list) -> np.ndarray:
        return np.hstack(_blocks(G, F_list)) @ self.coef + self.y_mean


class _Block:
    """Gram eigenbasis of one group, so the block update is a scalar root search."""

    def __init__(self, X: np.ndarray, n: int):
        self.X = X
        if X.shape[1] == 0:
            self.d = np.zeros(0)
            self.Q = np.zeros((0, 0))
            return
        d, Q = np.linalg.eigh(X.T @ X / n)
        if d.min() <= 1e-12 * max(d.max(), 1.0):
            raise RankDeficiencyError("a score group has linearly dependent columns", list(range(X.shape[1])))
        self.d, self.Q = d, Q

    def solve(self, z: np.ndarray, lam: float) -> np.ndarray:
        """argmin_b ½bᵀAb − zᵀb + λ‖b‖₂ with A = XᵀX/n."""
        norm_z = float(np.linalg.norm(z))
        if norm_z <= lam:
            return np.zeros_like(z)
        zt = self.Q.T @ z
        if lam == 0.0:
            return self.Q @ (zt / self.d)

        def excess(t: float) -> float:
            return float(np.linalg.norm(zt / (self.d * t + lam))) - 1.0

        upper = norm_z / self.d.min()
        t = brentq(excess, 0.0, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        return self.Q @ (zt * t / (self.d * t + lam))


def lambda_max(G, F_list, y) -> float:
    """Smallest λ for which every group is zero: max_g ‖(1/n)X_gᵀy‖₂ on the centered response."""
    blocks = _blocks(G, F_list)
    y = _check_response(y, blocks[0].shape[0])
    yc = y - y.mean()
    n = yc.size
    return max((float(np.linalg.norm(b.T @ yc / n)) for b in blocks if b.shape[1]), default=0.0)


def _solve(blocks: list[_Block], y: np.ndarray, lam: float, start=None, tol=GL_TOL, max_sweeps=GL_MAX_SWEEPS):
    n = y.size
    coefs = [np.zeros(b.X.shape[1]) for b in blocks] if start is None else [c.copy() for c in start]
    resid = y - sum((b.X @ c for b, c in zip(blocks, coefs)), np.zeros(n))
    objective = []
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_change = 0.0
        for g, block in enumerate(blocks):
            if block.X.shape[1] == 0:
                continue
            old = coefs[g]
            z = block.X.T @ (resid + block.X @ old) / n
            new = block.solve(z, lam)
            delta = new - old
            if np.any(delta):
                resid -= block.X @ delta
                max_change = max(max_change, float(np.max(np.abs(delta))))
            coefs[g] = new
        objective.append(float(resid @ resid / (2 * n) + lam * sum(np.linalg.norm(c) for c in coefs)))
        if max_change < tol:
            converged = True
            break
    return coefs, objective, converged, sweeps


def fit_group_lasso(G, F_list, y, lam: float, start: GroupLassoFit | None = None) -> GroupLassoFit:
    """Group lasso on the centered response; ``start`` warm-starts the coefficients."""
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    raw = _blocks(G, F_list)
    y = _check_response(y, raw[0].shape[0])
    n = y.size
    blocks = [_Block(b, n) for b in raw]
    y_mean = float(y.mean())
    init = None
    if start is not None:
        init = [start.alpha, *start.betas]
    coefs, objective, converged, sweeps = _solve(blocks, y - y_mean, lam, init)
    if not converged:
        logger.warning("Group lasso did not converge in %d sweeps (lambda=%.4g)", sweeps, lam)
    active = [g for g, c in enumerate(coefs) if c.size and np.any(c != 0)]
    return GroupLassoFit(
        alpha=coefs[0],
        betas=coefs[1:],
        lam=float(lam),
        objective=objective,
        active=active,
        converged=converged,
        sweeps=sweeps,
        y_mean=y_mean,
    )


def lambda_grid(G, F_list, y, size: int = CV_GRID_SIZE, span: float = CV_GRID_SPAN) -> np.ndarray:
    """Log-spaced, descending from λ_max to λ_max·span."""
    top = lambda_max(G, F_list, y)
    return top * np.logspace(0.0, np.log10(span), size)


def cv_lambda(G, F_list, y, folds: int = DEFAULT_FOLDS) -> float:
    """λ minimizing mean validation squared error over contiguous folds (largest λ on ties)."""
    blocks = _blocks(G, F_list)
    n = blocks[0].shape[0]
    y = _check_response(y, n)
    if folds < 2:
        raise ValidationError(f"need at least 2 folds, got {folds}")
    if n < folds:
        raise ValidationError(f"{n} observations cannot fill {folds} folds")
    grid = lambda_grid(G, F_list, y)
    if grid[0] == 0.0:
        return 0.0
    errors = np.zeros(grid.size)
    for train, held in KFold(n_splits=folds, shuffle=False).split(y):
        G_tr, F_tr = blocks[0][train], [b[train] for b in blocks[1:]]
        G_va, F_va = blocks[0][held], [b[held] for b in blocks[1:]]
        previous = None
        for i, lam in enumerate(grid):
            previous = fit_group_lasso(G_tr, F_tr, y[train], lam, start=previous)
            errors[i] += mspe(previous.predict(G_va, F_va), y[held]) * held.size
    errors /= n
    best = int(np.argmin(errors))
    logger.debug("CV picked lambda %.4g (grid position %d of %d)", grid[best], best + 1, grid.size)
    return float(grid[best])


def pca_pcr(X: DataMatrix, y, cfg: FitConfig | None = None) -> tuple[CpcaModel, OlsPcrFit]:
    """Baseline: OLS on whole-panel principal components (count from the ratio estimator)."""
    model = fit_pca(X, cfg)
    return model, fit_ols_pcr(model.G, [], y)


def mspe(y_hat, y) -> float:
    """Mean squared prediction error."""
    a = np.asarray(y_hat, dtype=float).ravel()
    b = np.asarray(y, dtype=float).ravel()
    if a.size != b.size:
        raise ValidationError(f"length mismatch {a.size} vs {b.size}")
    return float(np.mean((a - b) ** 2))
