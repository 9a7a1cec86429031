"""Global minimum-variance portfolio and its rolling out-of-sample backtest."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import FitConfig
from .constants import COV_CPCA, COV_METHODS, DEFAULT_REFIT_EVERY, DEFAULT_RISK_FREE, DEFAULT_WINDOW
from .covariance import CovarianceEstimate, covariance_by_method, precision
from .engine import fit
from .errors import ValidationError
from .logging_config import logger
from .matrix import DataMatrix

MODE_WARM = "warm"
MODE_COLD = "cold"


def mvp_weights(sigma) -> np.ndarray:
    """w = Σ⁻¹1 / (1ᵀΣ⁻¹1); short positions allowed."""
    prec = precision(sigma)
    raw = prec.matrix @ np.ones(prec.matrix.shape[0])
    total = float(raw.sum())
    if total <= 0.0:
        raise ValidationError(f"1'Σ⁻¹1 = {total:.3g} is not positive")
    return raw / total


@dataclass(frozen=True)
class PerformanceMetrics:
    std: float
    ir: float
    sr: float
    mean: float
    defined: bool = True

    def to_dict(self) -> dict:
        def clean(v: float):
            return v if np.isfinite(v) else None

        return {"std": clean(self.std), "ir": clean(self.ir), "sr": clean(self.sr), "mean": clean(self.mean),
                "defined": self.defined}


def performance_metrics(series, risk_free: float = DEFAULT_RISK_FREE) -> PerformanceMetrics:
    """Sample STD, mean/STD (IR) and mean excess return/STD (SR) of daily returns."""
    values = np.asarray(series, dtype=float).ravel()
    if values.size == 0:
        raise ValidationError("return series is empty")
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else float("nan")
    if not np.isfinite(std) or std <= 1e-12 * max(1.0, abs(mean)):
        logger.warning("Return series has no variation; IR and SR are undefined")
        return PerformanceMetrics(std=std, ir=float("nan"), sr=float("nan"), mean=mean, defined=False)
    return PerformanceMetrics(std=std, ir=mean / std, sr=(mean - risk_free) / std, mean=mean)


@dataclass(frozen=True, eq=False)
class BacktestResult:
    """Out-of-sample portfolio returns with the weights of every rebalance."""

    dates: list
    returns: np.ndarray
    weights: list[np.ndarray]
    rebalance_days: list[int]
    metrics: PerformanceMetrics
    window: int
    method: str
    mode: str
    failures: list[int] = field(default_factory=list)

    def metrics_dict(self) -> dict:
        return {**self.metrics.to_dict(), "window": self.window, "method": self.method, "mode": self.mode,
                "failures": len(self.failures)}


def _window_weights(returns: DataMatrix, day: int, window: int, method: str, cfg: FitConfig, partition=None):
    """MVP weights from rows day−window..day−1; also returns the fitted partition for warm starts."""
    trailing = returns.rows(slice(day - window, day))
    model = None
    if method == COV_CPCA:
        model = fit(trailing, cfg, partition)
    est: CovarianceEstimate = covariance_by_method(trailing, method, cfg, model=model)
    return mvp_weights(est), (model.partition if model is not None else None)


def rolling_backtest(
    returns: DataMatrix,
    window: int = DEFAULT_WINDOW,
    method: str = COV_CPCA,
    cfg: FitConfig | None = None,
    refit_every: int = DEFAULT_REFIT_EVERY,
    warm_start: bool = True,
    risk_free: float = DEFAULT_RISK_FREE,
    jobs: int = 1,
    dates=None,
) -> BacktestResult:
    """Refit the covariance on each trailing window and hold the MVP for the next day.

    Windows that fail to produce weights carry the previous weights (equal
    weights before the first success). Warm-start mode seeds each CPCA fit
    with the previous window's partition and runs sequentially; cold-start
    mode fits windows independently and may use ``jobs`` threads.
    """
    cfg = cfg or FitConfig()
    if method not in COV_METHODS:
        raise ValidationError(f"unknown covariance method {method!r}; choose from {', '.join(COV_METHODS)}")
    T, p = returns.n, returns.p
    if window < 2:
        raise ValidationError(f"window must be >= 2, got {window}")
    if window >= T:
        raise ValidationError(f"window {window} leaves no out-of-sample day in {T} rows")
    if refit_every < 1:
        raise ValidationError(f"refit_every must be >= 1, got {refit_every}")
    if dates is not None and len(dates) != T:
        raise ValidationError(f"{len(dates)} dates for {T} rows")

    days = list(range(window, T))
    rebalance_days = days[::refit_every]
    warm = warm_start and method == COV_CPCA
    mode = MODE_WARM if warm else MODE_COLD

    def attempt(day, partition=None):
        try:
            return _window_weights(returns, day, window, method, cfg, partition)
        except (ValidationError, np.linalg.LinAlgError) as e:
            logger.warning("Window ending at row %d failed (%s); keeping previous weights", day, e)
            return None, partition

    fitted: list[np.ndarray | None] = []
    if warm:
        partition = None
        for day in rebalance_days:
            w, partition = attempt(day, partition)
            fitted.append(w)
    elif jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fitted = [w for w, _ in pool.map(attempt, rebalance_days)]
    else:
        fitted = [attempt(day)[0] for day in rebalance_days]

    weights, failures = [], []
    current = np.full(p, 1.0 / p)
    for day, w in zip(rebalance_days, fitted):
        if w is None:
            failures.append(day)
        else:
            current = w
        weights.append(current)

    held = np.repeat(np.arange(len(rebalance_days)), refit_every)[:len(days)]
    realized = np.array([weights[k] @ returns.values[day] for k, day in zip(held, days)])
    metrics = performance_metrics(realized, risk_free)
    logger.info("Backtest %s (%s): %d days, %d rebalances, %d failures, std=%.5g",
                method, mode, len(days), len(rebalance_days), len(failures), metrics.std)
    return BacktestResult(
        dates=list(dates[window:]) if dates is not None else days,
        returns=realized,
        weights=weights,
        rebalance_days=rebalance_days,
        metrics=metrics,
        window=window,
        method=method,
        mode=mode,
        failures=failures,
    )
