import os
import tempfile
from types import SimpleNamespace

import numpy as np
import pytest

# the package opens its log file on import
os.environ["CLUSTERPCA_HOME"] = tempfile.mkdtemp(prefix="clusterpca-test-")

from clusterpca.clustering import ClusterPartition  # noqa: E402
from clusterpca.matrix import DataMatrix, random_orthonormal  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo acceptance checks (run with CLUSTERPCA_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("CLUSTERPCA_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set CLUSTERPCA_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def _exact_panel(seed: int = 0, n: int = 60, J: int = 3, p_j: int = 10, common: bool = True) -> SimpleNamespace:
    """Noise-free panel whose common and cluster components are exactly identifiable.

    Scores are orthogonal with mean zero and distinct variances; Φ is built
    inside each cluster's frame so it is orthogonal to every cluster's loadings.
    """
    rng = np.random.default_rng(seed)
    r_c = 3 if common else 0
    k = r_c + 2 * J
    basis, _ = np.linalg.qr(np.column_stack([np.ones(n), rng.standard_normal((n, k))]))
    S = basis[:, 1:] * np.sqrt(n)
    delta = np.array([100.0, 80.0, 60.0])[:r_c]
    G = S[:, :r_c] * np.sqrt(delta)

    p = J * p_j
    labels = np.repeat(np.arange(1, J + 1), p_j)
    partition = ClusterPartition.from_labels(labels)
    phi = np.zeros((p, r_c))
    gammas, F = [], []
    X = np.zeros((n, p))
    for j in range(1, J + 1):
        members = partition.members(j)
        frame = random_orthonormal(p_j, 5, rng)
        gamma = frame[:, :2]
        if common:
            phi[members] = frame[:, 2:5] / np.sqrt(J)
        lam = np.array([20.0 - 2 * j, 10.0 - 2 * j])
        scores = S[:, r_c + 2 * (j - 1): r_c + 2 * j] * np.sqrt(lam)
        X[:, members] += scores @ gamma.T
        gammas.append(gamma)
        F.append(scores)
    complement = X.copy()
    X += G @ phi.T
    return SimpleNamespace(
        X=DataMatrix.from_array(X),
        complement=complement,
        partition=partition,
        phi=phi,
        gammas=gammas,
        G=G,
        F=F,
        delta=delta,
    )


@pytest.fixture
def exact_panel():
    return _exact_panel
