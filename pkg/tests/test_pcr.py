import numpy as np
import pytest

from clusterpca.errors import RankDeficiencyError, ValidationError
from clusterpca.pcr import (
    cv_lambda,
    fit_group_lasso,
    fit_ols_pcr,
    lambda_grid,
    lambda_max,
    mspe,
    pca_pcr,
)
from clusterpca.simgen import gen_example


def _groups(seed: int = 0, n: int = 80):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, 2))
    F = [rng.standard_normal((n, 2)), rng.standard_normal((n, 3))]
    # score blocks are centered like PCA scores
    return G - G.mean(axis=0), [f - f.mean(axis=0) for f in F], rng


def _kkt_gaps(fit, G, F, y) -> list[float]:
    """Violation of the group-lasso optimality conditions per group."""
    blocks = [G] + F
    coefs = [fit.alpha] + fit.betas
    n = y.size
    resid = (y - y.mean()) - sum(b @ c for b, c in zip(blocks, coefs))
    gaps = []
    for b, c in zip(blocks, coefs):
        grad = b.T @ resid / n
        norm = np.linalg.norm(c)
        if norm > 0:
            gaps.append(float(np.linalg.norm(grad - fit.lam * c / norm)))
        else:
            gaps.append(max(0.0, float(np.linalg.norm(grad)) - fit.lam))
    return gaps


def test_ols_recovers_coefficients_without_noise() -> None:
    G, F, _ = _groups()
    alpha = np.array([1.0, -2.0])
    betas = [np.array([0.5, 0.0]), np.array([3.0, 1.0, -1.0])]
    y = 7.0 + G @ alpha + F[0] @ betas[0] + F[1] @ betas[1]
    fit = fit_ols_pcr(G, F, y)
    assert np.allclose(fit.alpha, alpha, atol=1e-8)
    assert np.allclose(fit.betas[1], betas[1], atol=1e-8)
    assert np.isclose(fit.y_mean, y.mean())
    assert np.allclose(fit.predict(G, F), y, atol=1e-8)


def test_ols_needs_more_rows_than_columns() -> None:
    G, F, _ = _groups(n=5)
    with pytest.raises(ValidationError):
        fit_ols_pcr(G, F, np.zeros(5))


def test_ols_names_dependent_columns() -> None:
    G, F, _ = _groups()
    duplicated = [F[0], np.column_stack([F[1], F[0][:, 0]])]
    with pytest.raises(RankDeficiencyError) as err:
        fit_ols_pcr(G, duplicated, np.zeros(G.shape[0]))
    assert len(err.value.columns) == 1


def test_ols_rejects_response_length_mismatch() -> None:
    G, F, _ = _groups()
    with pytest.raises(ValidationError):
        fit_ols_pcr(G, F, np.zeros(3))


def test_group_lasso_is_zero_at_lambda_max() -> None:
    G, F, rng = _groups()
    y = G[:, 0] + F[1][:, 2] + 0.1 * rng.standard_normal(G.shape[0])
    top = lambda_max(G, F, y)
    fit = fit_group_lasso(G, F, y, top)
    assert not np.any(fit.coef)
    assert fit.active == []
    assert fit_group_lasso(G, F, y, 0.99 * top).active != []


def test_group_lasso_without_penalty_matches_ols() -> None:
    G, F, rng = _groups(seed=2)
    y = G @ [1.0, 0.5] + F[0] @ [2.0, -1.0] + 0.3 * rng.standard_normal(G.shape[0])
    lasso = fit_group_lasso(G, F, y, 0.0)
    assert lasso.converged
    assert np.allclose(lasso.coef, fit_ols_pcr(G, F, y).coef, atol=1e-6)


def test_group_lasso_meets_optimality_conditions() -> None:
    G, F, rng = _groups(seed=3)
    y = G @ [1.0, 0.0] + F[1] @ [1.0, 1.0, 0.0] + 0.5 * rng.standard_normal(G.shape[0])
    lam = 0.3 * lambda_max(G, F, y)
    fit = fit_group_lasso(G, F, y, lam)
    assert fit.converged
    assert max(_kkt_gaps(fit, G, F, y)) < 1e-6


def test_group_lasso_objective_never_increases() -> None:
    G, F, rng = _groups(seed=4)
    y = F[0] @ [1.0, 2.0] + rng.standard_normal(G.shape[0])
    fit = fit_group_lasso(G, F, y, 0.05)
    assert np.all(np.diff(fit.objective) <= 1e-12)


def test_group_lasso_rejects_negative_lambda() -> None:
    G, F, _ = _groups()
    with pytest.raises(ValidationError):
        fit_group_lasso(G, F, np.zeros(G.shape[0]), -1.0)


def test_cv_picks_small_lambda_for_strong_signal() -> None:
    G, F, rng = _groups(seed=5, n=100)
    y = G @ [2.0, -1.0] + F[0] @ [1.0, 1.0] + F[1] @ [1.0, -1.0, 2.0] + 0.1 * rng.standard_normal(100)
    lam = cv_lambda(G, F, y)
    assert lam <= 1e-2 * lambda_max(G, F, y)


def test_cv_on_constant_response_returns_zero() -> None:
    G, F, _ = _groups()
    assert cv_lambda(G, F, np.full(G.shape[0], 3.0)) == 0.0


def test_cv_validates_folds() -> None:
    G, F, _ = _groups(n=4)
    with pytest.raises(ValidationError):
        cv_lambda(G, F, np.arange(4.0), folds=1)
    with pytest.raises(ValidationError):
        cv_lambda(G, F, np.arange(4.0), folds=5)


@pytest.mark.slow
def test_cv_shrinks_heavily_on_pure_noise() -> None:
    top_decile = 0
    for seed in range(50):
        G, F, rng = _groups(seed=seed)
        y = rng.standard_normal(G.shape[0])
        grid = lambda_grid(G, F, y)
        top_decile += cv_lambda(G, F, y) >= grid[grid.size // 10 - 1]
    assert top_decile >= 33


def test_mspe_hand_value() -> None:
    assert mspe([1.0, 2.0, 3.0], [1.0, 0.0, 0.0]) == pytest.approx(13.0 / 3.0)
    with pytest.raises(ValidationError):
        mspe([1.0], [1.0, 2.0])


def test_pca_pcr_uses_whole_panel_scores() -> None:
    panel = gen_example(1, seed=8)
    y = panel.G[:panel.n] @ panel.truth.alpha
    model, fit = pca_pcr(panel.X_train, y)
    assert fit.alpha.size == model.r_c
    assert fit.betas == []
    assert mspe(fit.predict(model.G, []), y) < mspe(np.full(y.size, y.mean()), y)
