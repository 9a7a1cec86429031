import numpy as np
import pytest

from clusterpca.errors import ValidationError
from clusterpca.simgen import gen_example, gen_pcr_response, replication_streams


def test_example_shapes() -> None:
    one = gen_example(1, seed=0)
    assert one.X_train.values.shape == (50, 100)
    assert one.X_test.values.shape == (50, 100)
    assert one.truth.r_c == 3
    assert one.truth.cluster_ranks == [2] * 5
    assert one.truth.total_rank == 13

    three = gen_example(3, seed=0)
    assert three.X_train.values.shape == (50, 200)
    assert three.truth.J == 10

    four = gen_example(4, seed=0)
    assert four.n == 30
    assert four.truth.r_c == 0
    assert four.truth.alpha.size == 0


def test_same_seed_same_panel() -> None:
    a, b = gen_example(2, seed=9), gen_example(2, seed=9)
    assert np.array_equal(a.X_train.values, b.X_train.values)
    assert np.array_equal(a.truth.phi, b.truth.phi)
    assert not np.array_equal(a.X_train.values, gen_example(2, seed=10).X_train.values)


def test_loadings_orthonormal_and_cluster_supported() -> None:
    truth = gen_example(1, seed=1).truth
    assert np.allclose(truth.phi.T @ truth.phi, np.eye(3), atol=1e-10)
    for j in range(1, truth.J + 1):
        embedded = truth.embedded_gamma(j)
        assert np.allclose(embedded.T @ embedded, np.eye(2), atol=1e-10)
        outside = truth.partition.labels != j
        assert not np.any(embedded[outside])
    assert truth.partition.labels.tolist() == np.repeat(np.arange(1, 6), 20).tolist()


def test_eigenvalue_draws_are_sorted_and_floored() -> None:
    truth = gen_example(3, seed=2).truth
    assert np.all(np.diff(truth.delta) <= 0)
    for lam in truth.lambdas:
        assert np.all(np.diff(lam) <= 0)
        assert np.all(lam >= 0.1)


def test_sample_covariance_approaches_population() -> None:
    panel = gen_example(1, seed=3, n=20000)
    X = panel.X_train.values
    sample = X.T @ X / X.shape[0]
    cov = panel.truth.cov
    assert np.linalg.norm(sample - cov) / np.linalg.norm(cov) < 0.05


@pytest.mark.slow
def test_sample_covariance_close_to_population_at_large_n() -> None:
    panel = gen_example(1, seed=3, n=100_000)
    X = panel.X_train.values
    cov = panel.truth.cov
    assert np.linalg.norm(X.T @ X / X.shape[0] - cov) / np.linalg.norm(cov) < 0.02


def test_scores_are_nearly_uncorrelated() -> None:
    panel = gen_example(1, seed=4, n=5000)
    G, F = panel.train_scores()
    corr = np.corrcoef(np.hstack([G, *F]).T)
    off = ~np.eye(corr.shape[0], dtype=bool)
    assert np.abs(corr[off]).max() < 0.1


def test_noise_free_response_is_the_linear_model() -> None:
    panel = gen_example(1, seed=5)
    G, F = panel.train_scores()
    y = gen_pcr_response(panel.truth, G, F, noise_sd=0.0)
    assert np.allclose(y, G.sum(axis=1) + 25.0 * F[-1].sum(axis=1))
    noisy = gen_pcr_response(panel.truth, G, F, rng=1)
    assert noisy.shape == (50,)
    assert not np.allclose(noisy, y)
    with pytest.raises(ValidationError):
        gen_pcr_response(panel.truth, G, F[:-1], rng=1)


def test_noisy_response_needs_a_stream() -> None:
    panel = gen_example(1, seed=5)
    G, F = panel.train_scores()
    with pytest.raises(ValidationError):
        gen_pcr_response(panel.truth, G, F)
    a = gen_pcr_response(panel.truth, G, F, rng=np.random.default_rng(9))
    assert np.array_equal(a, gen_pcr_response(panel.truth, G, F, rng=9))


def test_only_last_cluster_drives_the_response() -> None:
    truth = gen_example(3, seed=0).truth
    assert len(truth.betas) == 10
    assert all(not np.any(b) for b in truth.betas[:-1])
    assert truth.betas[-1].tolist() == [25.0, 25.0]


def test_response_without_common_effect() -> None:
    panel = gen_example(4, seed=6)
    G, F = panel.test_scores()
    y = gen_pcr_response(panel.truth, G, F, noise_sd=0.0)
    assert np.allclose(y, 25.0 * F[-1].sum(axis=1))


def test_generator_validation() -> None:
    with pytest.raises(ValidationError):
        gen_example(5, seed=0)
    with pytest.raises(ValidationError):
        gen_example(1, seed=0, n=1)


def test_replication_streams_are_independent_and_reproducible() -> None:
    first = [rng.standard_normal(3) for rng in replication_streams(7, 3)]
    again = [rng.standard_normal(3) for rng in replication_streams(7, 3)]
    assert len(first) == 3
    for a, b in zip(first, again):
        assert np.array_equal(a, b)
    assert not np.array_equal(first[0], first[1])
