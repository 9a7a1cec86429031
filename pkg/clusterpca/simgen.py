"""Synthetic panels with a known common effect and known cluster-specific components.

Every cluster has CLUSTER_SIZE variables and two specific components whose
variances are drawn around the example's theta table; the common block has
r_c components with variances drawn around COMMON_MEAN. 2n rows are drawn,
the first n are the training panel and the last n the test panel.
"""

from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterPartition
from .constants import (
    ALPHA_VALUE,
    BETA_ACTIVE,
    CLUSTER_SIZE,
    COMMON_MEAN,
    COMMON_VARIANCE,
    EIGEN_FLOOR,
    EXAMPLES,
    NOISE_SD,
    RESPONSE_SD,
    SPECIFIC_VARIANCE,
)
from .errors import ValidationError
from .matrix import DataMatrix, random_orthonormal


@dataclass(frozen=True, eq=False)
class SimTruth:
    """Population parameters behind one generated panel."""

    example: int
    phi: np.ndarray
    delta: np.ndarray
    gammas: list[np.ndarray]
    lambdas: list[np.ndarray]
    partition: ClusterPartition
    noise_sd: np.ndarray
    cov: np.ndarray
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    betas: list[np.ndarray] = field(default_factory=list)

    @property
    def p(self) -> int:
        return self.phi.shape[0]

    @property
    def J(self) -> int:
        return len(self.gammas)

    @property
    def r_c(self) -> int:
        return self.phi.shape[1]

    @property
    def cluster_ranks(self) -> list[int]:
        return [g.shape[1] for g in self.gammas]

    @property
    def total_rank(self) -> int:
        return self.r_c + sum(self.cluster_ranks)

    def embedded_gamma(self, j: int) -> np.ndarray:
        """Loadings of cluster j (1-based) padded with zeros outside its rows."""
        out = np.zeros((self.p, self.gammas[j - 1].shape[1]))
        out[self.partition.members(j)] = self.gammas[j - 1]
        return out


@dataclass(frozen=True, eq=False)
class SimulatedPanel:
    X_train: DataMatrix
    X_test: DataMatrix
    truth: SimTruth
    G: np.ndarray
    F: list[np.ndarray]

    @property
    def n(self) -> int:
        return self.X_train.n

    def train_scores(self) -> tuple[np.ndarray, list[np.ndarray]]:
        return self.G[:self.n], [f[:self.n] for f in self.F]

    def test_scores(self) -> tuple[np.ndarray, list[np.ndarray]]:
        return self.G[self.n:], [f[self.n:] for f in self.F]


def _variances(rng: np.random.Generator, means, variance: float) -> np.ndarray:
    draws = rng.normal(np.asarray(means, dtype=float), np.sqrt(variance))
    return np.sort(np.maximum(draws, EIGEN_FLOOR))[::-1]


def population_cov(phi, delta, gammas, lambdas, partition: ClusterPartition, noise_sd) -> np.ndarray:
    """Φ·diag(δ)·Φᵀ + block-diagonal Γ_j·diag(λ_j)·Γ_jᵀ + diag(σ_j²)."""
    sigma = (phi * delta) @ phi.T
    for j, (gamma, lam) in enumerate(zip(gammas, lambdas), start=1):
        members = partition.members(j)
        sigma[np.ix_(members, members)] += (gamma * lam) @ gamma.T + noise_sd[j - 1] ** 2 * np.eye(members.size)
    return sigma


def gen_example(example: int, seed, n: int | None = None) -> SimulatedPanel:
    """Draw one replication of a simulation design (1..4)."""
    if example not in EXAMPLES:
        raise ValidationError(f"unknown example {example!r}; choose from {sorted(EXAMPLES)}")
    design = EXAMPLES[example]
    n = design["n"] if n is None else int(n)
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    rng = np.random.default_rng(seed)
    theta = design["theta"]
    J = len(theta)
    p = J * CLUSTER_SIZE
    r_c = design["r_c"]
    rows = 2 * n

    if r_c:
        phi = random_orthonormal(p, r_c, rng)
        delta = _variances(rng, [COMMON_MEAN] * r_c, COMMON_VARIANCE)
    else:
        phi, delta = np.zeros((p, 0)), np.zeros(0)
    G = rng.standard_normal((rows, r_c)) * np.sqrt(delta)
    X = G @ phi.T

    labels = np.repeat(np.arange(1, J + 1), CLUSTER_SIZE)
    partition = ClusterPartition.from_labels(labels)
    gammas, lambdas, F = [], [], []
    for j, means in enumerate(theta, start=1):
        members = partition.members(j)
        gamma = random_orthonormal(CLUSTER_SIZE, len(means), rng)
        lam = _variances(rng, means, SPECIFIC_VARIANCE)
        scores = rng.standard_normal((rows, len(means))) * np.sqrt(lam)
        noise = rng.normal(0.0, NOISE_SD, (rows, CLUSTER_SIZE))
        X[:, members] += scores @ gamma.T + noise
        gammas.append(gamma)
        lambdas.append(lam)
        F.append(scores)

    noise_sd = np.full(J, NOISE_SD)
    betas = [np.zeros(g.shape[1]) for g in gammas]
    betas[-1] = np.full(gammas[-1].shape[1], BETA_ACTIVE)
    truth = SimTruth(
        example=example,
        phi=phi,
        delta=delta,
        gammas=gammas,
        lambdas=lambdas,
        partition=partition,
        noise_sd=noise_sd,
        cov=population_cov(phi, delta, gammas, lambdas, partition, noise_sd),
        alpha=np.full(r_c, ALPHA_VALUE),
        betas=betas,
    )
    return SimulatedPanel(
        X_train=DataMatrix.from_array(X[:n]),
        X_test=DataMatrix.from_array(X[n:]),
        truth=truth,
        G=G,
        F=F,
    )


def gen_pcr_response(truth: SimTruth, G, F_list, rng=None, noise_sd: float = RESPONSE_SD) -> np.ndarray:
    """y = Gα + Σ_j F_jβ_j + e with e ~ N(0, noise_sd²); α is empty without a common effect.

    ``rng`` (a seed or Generator) is required whenever noise is drawn.
    """
    G = np.asarray(G, dtype=float)
    if noise_sd > 0 and rng is None:
        raise ValidationError("a random stream is required to draw response noise")
    if G.shape[1] != truth.alpha.size or len(F_list) != len(truth.betas):
        raise ValidationError("scores do not match the regression truth")
    y = G @ truth.alpha
    for F, beta in zip(F_list, truth.betas):
        y = y + np.asarray(F, dtype=float) @ beta
    if noise_sd > 0:
        y = y + np.random.default_rng(rng).normal(0.0, noise_sd, G.shape[0])
    return y


def replication_streams(seed, reps: int) -> list[np.random.Generator]:
    """Independent child generators spawned from one master seed."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(reps)]
