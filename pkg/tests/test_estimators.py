"""
Tests des estimateurs: OLS, procédure min-max tronquée, moyenne et variance
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Ajouter le répertoire parent au path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.errors import InvalidInput, InvalidLevel
from src.estimators import (
    Dataset,
    ErrorFn,
    MinMaxConfig,
    log_ratio_loss,
    minimax_variance_estimate,
    minmax_certificate,
    minmax_fit,
    ols_fit,
    p_alpha,
    p_alpha_inverse,
    psi_k,
    sample_mean,
    sinh_ratio,
    trim_level_for_delta,
)
from src.truncation import TrimLevel


@pytest.fixture
def gaussian_data():
    """n = 400, d = 2, w* = (1, −2), bruit N(0, 1)"""
    gen = np.random.default_rng(12)
    X = gen.standard_normal((400, 2))
    y = X @ np.array([1.0, -2.0]) + gen.standard_normal(400)
    return Dataset(X, y)


@pytest.fixture
def planted_outliers():
    """X ≡ 1, y = 1 sauf quatre valeurs à 10⁶"""
    y = np.ones(64)
    y[-4:] = 1e6
    return Dataset(np.ones((64, 1)), y)


class TestErrorFn:
    """Fonctions d'erreur"""

    def test_square_value(self):
        assert ErrorFn.square().value(3.0) == 4.5

    def test_ppower_value(self):
        """Test: e(t) = |t|^p/[p(p−1)]"""
        assert float(ErrorFn.ppower(4.0).value(-2.0)) == pytest.approx(16.0 / 12.0)

    @pytest.mark.parametrize("error", [ErrorFn.square(), ErrorFn.ppower(3.0), ErrorFn.ppower(4.5)])
    def test_derivatives(self, error):
        """Test: e′ et e″ contre les différences finies"""
        t, h = 0.7, 1e-6
        first = (error.value(t + h) - error.value(t - h)) / (2 * h)
        second = (error.first(t + h) - error.first(t - h)) / (2 * h)
        assert float(error.first(t)) == pytest.approx(float(first), rel=1e-6)
        assert float(error.second(t)) == pytest.approx(float(second), rel=1e-6)

    def test_parse_and_label(self):
        assert ErrorFn.parse("ppower:4").p == 4.0
        assert ErrorFn.parse(ErrorFn.ppower(3.5).label).p == 3.5
        with pytest.raises(InvalidInput):
            ErrorFn.parse("abs")

    def test_ppower_requires_p_above_two(self):
        with pytest.raises(InvalidInput):
            ErrorFn.ppower(2.0)


class TestOLS:
    """Moindres carrés"""

    def test_noiseless_recovery(self):
        gen = np.random.default_rng(0)
        X = gen.standard_normal((30, 3))
        w_star = np.array([0.5, -1.0, 2.0])
        fit = ols_fit(Dataset(X, X @ w_star))
        assert np.allclose(fit.w_hat, w_star, atol=1e-10)
        assert not fit.singular

    def test_matches_lstsq(self, gaussian_data):
        """Test: même solution que numpy.linalg.lstsq"""
        reference = np.linalg.lstsq(gaussian_data.X, gaussian_data.y, rcond=None)[0]
        assert np.allclose(ols_fit(gaussian_data).w_hat, reference, atol=1e-10)

    def test_singular_design_flagged(self):
        """Test: plan de rang déficient signalé, solution de norme minimale"""
        X = np.column_stack([np.ones(10), np.ones(10)])
        fit = ols_fit(Dataset(X, 2.0 * np.ones(10)))
        assert fit.singular
        assert np.allclose(fit.w_hat, [1.0, 1.0])

    def test_all_zero_design(self):
        fit = ols_fit(Dataset(np.zeros((5, 2)), np.ones(5)))
        assert fit.singular
        assert np.array_equal(fit.w_hat, np.zeros(2))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInput):
            Dataset(np.ones((5, 2)), np.ones(4))


class TestMinMax:
    """Procédure min-max tronquée"""

    def test_trim_level_rule(self):
        """Test: k = round(8 ln(4/δ)) borné par ⌊n/8⌋"""
        assert trim_level_for_delta(0.05, 1000).k == 35
        assert trim_level_for_delta(0.05, 100).k == 12
        assert trim_level_for_delta(0.5, 8).k == 1
        with pytest.raises(InvalidLevel):
            trim_level_for_delta(1.0, 100)

    def test_psi_antisymmetric(self, gaussian_data):
        """Test: ψ_k(w, v) = −ψ_k(v, w) et ψ_k(w, w) = 0"""
        k = TrimLevel(10, gaussian_data.n)
        w, v = np.array([1.0, -2.0]), np.array([0.5, 0.0])
        error = ErrorFn.square()
        assert psi_k(w, v, gaussian_data, error, k) == pytest.approx(-psi_k(v, w, gaussian_data, error, k), abs=1e-12)
        assert psi_k(w, w, gaussian_data, error, k) == 0.0

    def test_gaussian_noise_close_to_truth(self, gaussian_data):
        """Test: sous bruit gaussien, ŵ proche de w* et de l'OLS"""
        config = MinMaxConfig(k=trim_level_for_delta(0.05, gaussian_data.n), outer_steps=200)
        fit = minmax_fit(gaussian_data, ErrorFn.square(), config)
        assert np.linalg.norm(fit.w_hat - np.array([1.0, -2.0])) < 0.3
        assert np.linalg.norm(fit.w_hat - ols_fit(gaussian_data).w_hat) < 0.2
        assert not fit.singular

    def test_planted_outliers(self, planted_outliers):
        """Test: quatre valeurs aberrantes déplacent l'OLS, pas la procédure min-max"""
        fit = minmax_fit(planted_outliers, ErrorFn.square(), MinMaxConfig(k=TrimLevel(5, 64)))
        assert abs(fit.w_hat[0] - 1.0) <= 0.05
        assert abs(ols_fit(planted_outliers).w_hat[0] - 1.0) > 1e4

    def test_ppower_error(self, gaussian_data):
        """Test: erreur puissance p = 4, ŵ reste proche de w*"""
        config = MinMaxConfig(k=TrimLevel(10, gaussian_data.n), outer_steps=150, inner_steps=10)
        fit = minmax_fit(gaussian_data, ErrorFn.ppower(4.0), config)
        assert np.linalg.norm(fit.w_hat - np.array([1.0, -2.0])) < 0.5

    def test_trace_kept(self, gaussian_data):
        config = MinMaxConfig(k=TrimLevel(5, gaussian_data.n), outer_steps=10, keep_trace=True)
        fit = minmax_fit(gaussian_data, ErrorFn.square(), config)
        assert len(fit.objective_trace) == fit.iterations
        assert all(value >= 0 for value in fit.objective_trace)

    def test_singular_design_flagged(self):
        X = np.zeros((20, 1))
        fit = minmax_fit(Dataset(X, np.ones(20)), ErrorFn.square(), MinMaxConfig(k=TrimLevel(2, 20), outer_steps=5))
        assert fit.singular

    def test_trim_level_size_checked(self, gaussian_data):
        with pytest.raises(InvalidInput):
            minmax_fit(gaussian_data, ErrorFn.square(), MinMaxConfig(k=TrimLevel(2, 20)))

    def test_config_validation(self):
        with pytest.raises(InvalidInput):
            MinMaxConfig(k=TrimLevel(2, 20), init="random")
        with pytest.raises(InvalidInput):
            MinMaxConfig(k=2)

    def test_certificate(self, gaussian_data):
        """Test: certificat nul au point selle approché, positif loin de w*"""
        k = TrimLevel(10, gaussian_data.n)
        error = ErrorFn.square()
        fit = minmax_fit(gaussian_data, error, MinMaxConfig(k=k, outer_steps=200))
        near = minmax_certificate(fit.w_hat, gaussian_data, error, k, rng=np.random.default_rng(1))
        far = minmax_certificate(np.array([5.0, 5.0]), gaussian_data, error, k, rng=np.random.default_rng(1))
        assert near >= 0.0
        assert far > 1.0
        assert near < 0.05 * far


class TestMeanAndVariance:
    """Moyenne empirique et estimateur minimax de la variance"""

    def test_sample_mean(self):
        assert np.array_equal(sample_mean([[1.0, 2.0], [3.0, 4.0]]), [2.0, 3.0])
        with pytest.raises(InvalidInput):
            sample_mean(np.empty((0, 2)))

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 5.0, 50.0])
    @pytest.mark.parametrize("level", [0.1, 0.5, 0.95])
    def test_p_alpha_round_trip(self, alpha, level):
        """Test: p_α(p_α⁻(ℓ)) = ℓ"""
        assert p_alpha(p_alpha_inverse(level, alpha), alpha) == pytest.approx(level, abs=1e-10)

    def test_p_alpha_increasing(self):
        values = [p_alpha(t, 5.0) for t in (0.1, 0.5, 1.0, 2.0)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_sinh_ratio(self):
        assert sinh_ratio(0.0) == 1.0
        assert sinh_ratio(1e-5) == pytest.approx(1.0 + 1e-10 / 6.0, rel=1e-15)
        assert sinh_ratio(2.0) == pytest.approx(math.sinh(2.0) / 2.0)

    def test_variance_estimate(self):
        """Test: σ̂² = second moment × sinh(t*)/t*, poids > 1"""
        samples = np.array([1.0, -1.0, 2.0, -2.0])
        est = minimax_variance_estimate(samples, 0.0, 0.1)
        assert est.weight > 1.0
        assert est.value == pytest.approx(2.5 * est.weight)
        assert est.t_star == pytest.approx(p_alpha_inverse(0.9, 2.0))
        assert not est.degenerate

    def test_degenerate_sample(self):
        est = minimax_variance_estimate(np.full(5, 3.0), 3.0, 0.1)
        assert est.degenerate
        assert est.value == 0.0

    def test_scale_equivariance(self):
        """Test: σ̂²(cX) = c²σ̂²(X)"""
        samples = np.random.default_rng(3).standard_normal(10)
        base = minimax_variance_estimate(samples, 0.0, 0.05).value
        assert minimax_variance_estimate(2.0 * samples, 0.0, 0.05).value == pytest.approx(4.0 * base, rel=1e-14)

    def test_log_ratio_loss(self):
        assert log_ratio_loss(1.0, math.e) == pytest.approx(1.0)
        assert log_ratio_loss(2.0, 2.0) == 0.0
        assert math.isinf(log_ratio_loss(1.0, 0.0))
