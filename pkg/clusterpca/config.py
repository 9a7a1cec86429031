"""Fit settings, with user defaults persisted as JSON in the app dir."""

import json
import os
from dataclasses import dataclass

from .constants import (
    DEFAULT_ETA,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_MAX_TIERS,
    DEFAULT_REFIT_EVERY,
    DEFAULT_RISK_FREE,
    DEFAULT_TAU,
    DEFAULT_WINDOW,
    app_dir,
)
from .errors import ValidationError


def config_path() -> str:
    return os.path.join(app_dir(), "config.json")


DEFAULTS = {
    "tau": DEFAULT_TAU,
    "eta": DEFAULT_ETA,
    "max_iterations": DEFAULT_MAX_ITERATIONS,
    "max_tiers": DEFAULT_MAX_TIERS,
    "common_cap": None,
    "cluster_cap": None,
    "seed": 0,
    "window": DEFAULT_WINDOW,
    "refit_every": DEFAULT_REFIT_EVERY,
    "risk_free": DEFAULT_RISK_FREE,
    "jobs": 1,
}


def load(path: str | None = None) -> dict:
    """Load settings from disk, returning defaults for any missing keys."""
    data = dict(DEFAULTS)
    try:
        with open(path or config_path(), "r", encoding="utf-8") as f:
            saved = json.load(f)
        if isinstance(saved, dict):
            data.update(saved)
    except (FileNotFoundError, json.JSONDecodeError, OSError):
        pass
    return data


def save(settings: dict, path: str | None = None) -> None:
    """Save settings to disk."""
    target = path or config_path()
    try:
        os.makedirs(os.path.dirname(target) or ".", exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(settings, f, indent=2)
    except OSError:
        pass


@dataclass(frozen=True)
class FitConfig:
    """Settings of one CPCA fit.

    ``common_rank`` / ``cluster_rank`` pin the component counts instead of
    estimating them; ``common_cap`` / ``cluster_cap`` bound the ratio
    estimators (None means half the smaller matrix dimension, and at most
    DEFAULT_COMMON_CAP for the whole-panel count).
    """

    tau: float = DEFAULT_TAU
    eta: float = DEFAULT_ETA
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    common_cap: int | None = None
    cluster_cap: int | None = None
    max_tiers: int = DEFAULT_MAX_TIERS
    common_rank: int | None = None
    cluster_rank: int | None = None
    common_effect: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValidationError(f"tau must lie in (0, 1], got {self.tau}")
        if not 0.0 < self.eta <= 1.0:
            raise ValidationError(f"eta must lie in (0, 1], got {self.eta}")
        if self.max_iterations < 1:
            raise ValidationError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.max_tiers < 1:
            raise ValidationError(f"max_tiers must be >= 1, got {self.max_tiers}")
        for name in ("common_cap", "cluster_cap", "common_rank", "cluster_rank"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValidationError(f"{name} must be >= 1 when given, got {value}")

    @classmethod
    def from_settings(cls, settings: dict, **overrides) -> "FitConfig":
        """Build from a settings dict (see ``load``); ``overrides`` win when not None."""
        merged = {**DEFAULTS, **settings}
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return cls(
            tau=float(merged["tau"]),
            eta=float(merged["eta"]),
            max_iterations=int(merged["max_iterations"]),
            common_cap=merged.get("common_cap"),
            cluster_cap=merged.get("cluster_cap"),
            max_tiers=int(merged["max_tiers"]),
            common_rank=merged.get("common_rank"),
            cluster_rank=merged.get("cluster_rank"),
            common_effect=bool(merged.get("common_effect", True)),
            seed=int(merged["seed"]),
        )
