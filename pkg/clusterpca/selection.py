"""Number-of-components selection by consecutive eigenvalue ratios.

The selector maximizes λ_i / λ_{i+1} over 1 ≤ i ≤ R, i.e. it picks the
largest relative spectral gap. The iterative form strips one variance tier
at a time so a cluster whose components live on different scales keeps
all of them.
"""

from dataclasses import dataclass, field

import numpy as np

from .constants import DEFAULT_MAX_TIERS, NOISE_FLOOR_FACTOR
from .errors import ValidationError
from .logging_config import logger


def default_cap(n: int, p: int) -> int:
    """⌊min(n, p)/2⌋, never below 1."""
    return max(1, min(n, p) // 2)


def _validate(eigenvalues, R: int) -> np.ndarray:
    eigs = np.asarray(eigenvalues, dtype=float)
    if eigs.ndim != 1:
        raise ValidationError("eigenvalues must be a one-dimensional sequence")
    if R < 1:
        raise ValidationError(f"cap R must be >= 1, got {R}")
    if eigs.size < R + 1:
        raise ValidationError(f"need at least R+1={R + 1} eigenvalues, got {eigs.size}")
    if np.any(eigs < 0):
        raise ValidationError("eigenvalues must be non-negative")
    return eigs


def eigenvalue_ratios(eigenvalues, R: int) -> np.ndarray:
    """λ_i / λ_{i+1} for i = 1..R; a zero denominator gives +inf."""
    eigs = _validate(eigenvalues, R)
    head, tail = eigs[:R], eigs[1:R + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(tail > 0, head / np.where(tail > 0, tail, 1.0), np.inf)
    return ratios


def ratio_select(eigenvalues, R: int) -> int:
    """Position of the largest consecutive eigenvalue ratio (first one on ties)."""
    ratios = eigenvalue_ratios(eigenvalues, R)
    return int(np.argmax(ratios)) + 1


@dataclass(frozen=True)
class ComponentSelection:
    count: int
    tiers: list[int] = field(default_factory=list)
    noise_floor: float = 0.0
    no_spike: bool = False


def select_tiers(eigenvalues, R: int, max_tiers: int = DEFAULT_MAX_TIERS) -> ComponentSelection:
    """Tier-stripping recursion behind ``iterative_ratio_select``.

    After the first ratio selection the leading block is removed and the
    selector runs again on the remainder, as long as the new leading
    eigenvalue is above twice the median of the trailing half of the spectrum.
    """
    eigs = _validate(eigenvalues, R)
    floor = NOISE_FLOOR_FACTOR * float(np.median(eigs[eigs.size // 2:]))
    tiers: list[int] = []
    total = 0
    remaining = eigs
    while len(tiers) < max_tiers:
        cap = min(R - total, remaining.size - 1)
        if cap < 1:
            break
        if tiers and remaining[0] <= floor:
            break
        k = ratio_select(remaining, cap)
        tiers.append(k)
        total += k
        remaining = remaining[k:]
    no_spike = bool(eigs[0] <= floor)
    if no_spike:
        logger.warning("No eigenvalue above the noise floor %.4g; selection %d is arbitrary", floor, total)
    return ComponentSelection(count=total, tiers=tiers, noise_floor=floor, no_spike=no_spike)


def iterative_ratio_select(eigenvalues, R: int, max_tiers: int = DEFAULT_MAX_TIERS) -> int:
    return select_tiers(eigenvalues, R, max_tiers).count
