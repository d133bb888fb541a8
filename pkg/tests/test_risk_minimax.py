"""
Tests du risque quantile, du risque minimax exact et des bornes explicites
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Ajouter le répertoire parent au path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.distributions import (
    CoordKurtosisInput,
    DiscreteInput,
    GaussianInput,
    GaussianNoise,
    ProblemSpec,
    StudentTNoise,
    TwoPointNoise,
    matrix_params,
    sample_dataset,
)
from src.errors import InvalidInput, InvalidLevel
from src.estimators import ErrorFn, ols_fit, p_alpha_inverse
from src.numerics import RngStream, chi2_quantile, gauss_hermite_expectation
from src.risk_minimax import (
    ExcessErrorOracle,
    GuaranteeExtras,
    LemmaCheck,
    asymptotic_minimax,
    excess_error,
    fit_estimator,
    gauss_minimax_exact_mc,
    gauss_minimax_values_mc,
    guarantee_rhs,
    k_constant,
    lemma_bounds_check,
    mean_minimax_mc,
    minimax_report,
    pnorm_lower_bound,
    quantile_risk_mc,
    sample_design_replicates,
    square_bounds,
    sufficiency_check,
    sufficient_sample_size,
    variance_quantile_risk_mc,
)


def _close(a, b, slack=4.0):
    """|a − b| ≤ slack·√(se_a² + se_b²)"""
    return abs(a.value - b.value) <= slack * math.hypot(a.se_proxy, b.se_proxy)


class TestExcessErrorOracle:
    """Erreur en excès ℰ(w)"""

    def test_square_closed_form(self):
        """Test: ℰ = ½ΔᵀΣΔ"""
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        spec = ProblemSpec(GaussianInput(cov), [1.0, 1.0], StudentTNoise(3.0, 1.0))
        oracle = ExcessErrorOracle(spec)
        assert oracle.mode == "closed_form_square"
        delta = np.array([0.3, -0.2])
        assert excess_error(oracle, spec.w_star + delta) == pytest.approx(0.5 * delta @ cov @ delta, rel=1e-14)

    def test_zero_at_truth(self):
        spec = ProblemSpec(CoordKurtosisInput(2, 4.0), [1.0, 2.0], StudentTNoise(5.0, 1.0), ErrorFn.ppower(3.0))
        oracle = ExcessErrorOracle(spec, panel_size=5000)
        assert oracle.excess(spec.w_star) == 0.0

    def test_gaussian_closed_form(self):
        """Test: p = 4, X et ξ gaussiens: (3(q+σ²)² − 3σ⁴)/12"""
        spec = ProblemSpec(GaussianInput.standard(1), [0.0], GaussianNoise(1.0), ErrorFn.ppower(4.0))
        oracle = ExcessErrorOracle(spec)
        assert oracle.mode == "gaussian_closed_form"
        assert oracle.excess([0.5]) == pytest.approx(0.140625, rel=1e-13)

    def test_discrete_gaussian_noise(self):
        """Test: X ≡ 1, σ = 1, p = 4, Δ = 0.1 donne (6·0.01 + 0.0001)/12"""
        spec = ProblemSpec(DiscreteInput.unit(), [0.0], GaussianNoise(1.0), ErrorFn.ppower(4.0))
        oracle = ExcessErrorOracle(spec)
        assert oracle.mode == "discrete_exact"
        assert oracle.excess([0.1]) == pytest.approx(0.0050083333333333, rel=1e-10)

    def test_discrete_two_point_noise(self):
        """Test: somme finie exacte pour une entrée et un bruit discrets"""
        error = ErrorFn.ppower(3.0)
        spec = ProblemSpec(DiscreteInput.bernoulli(0.5), [0.0], TwoPointNoise(1.0, 0.5), error)
        oracle = ExcessErrorOracle(spec)
        xs, px = [0.0, 1.0], [0.5, 0.5]
        xis, pxi = [-1.0, 0.0, 1.0], [0.25, 0.5, 0.25]

        def expected(delta):
            return sum(
                a * b * float(error.value(delta * x + xi)) for x, a in zip(xs, px) for xi, b in zip(xis, pxi)
            )

        assert oracle.excess([0.3]) == pytest.approx(expected(0.3) - expected(0.0), rel=1e-12)

    @pytest.mark.parametrize("w_star", [0.0, 1.0, 2.0])
    def test_discrete_student_noise(self, w_star):
        """Test: X ≡ 1, ν = 5, σ² = 1, p = 4, Δ = 0.5 donne (Δ⁴ + 6Δ²σ²)/12, quel que soit w*"""
        spec = ProblemSpec(DiscreteInput.unit(), [w_star], StudentTNoise(5.0, 1.0), ErrorFn.ppower(4.0))
        oracle = ExcessErrorOracle(spec)
        assert oracle.mode == "discrete_student"
        assert oracle.excess([w_star + 0.5]) == pytest.approx((0.5**4 + 6.0 * 0.25) / 12.0, rel=1e-8)
        assert oracle.excess([w_star]) == 0.0

    def test_discrete_student_heavy_tail(self):
        """Test: p − 2 ≥ ν rend l'erreur en excès infinie hors de w*"""
        spec = ProblemSpec(DiscreteInput.unit(), [0.0], StudentTNoise(3.0, 1.0), ErrorFn.ppower(5.5))
        oracle = ExcessErrorOracle(spec)
        assert oracle.excess([0.1]) == math.inf
        assert oracle.excess([0.0]) == 0.0

    def test_panel_is_deterministic(self):
        """Test: le panel dépend du problème, pas d'un état global"""
        spec = ProblemSpec(CoordKurtosisInput(2, 4.0), [0.0, 0.0], StudentTNoise(5.0, 1.0), ErrorFn.ppower(3.0))
        a = ExcessErrorOracle(spec, panel_size=5000).excess([0.2, -0.1])
        b = ExcessErrorOracle(spec, panel_size=5000).excess([0.2, -0.1])
        assert a == b
        assert a > 0

    def test_dimension_checked(self):
        oracle = ExcessErrorOracle(ProblemSpec(GaussianInput.standard(2), [0.0, 0.0], GaussianNoise(1.0)))
        with pytest.raises(InvalidInput):
            oracle.excess_delta([1.0])


@pytest.mark.montecarlo
class TestQuantileRisk:
    """Risque quantile par Monte Carlo"""

    @pytest.fixture
    def gaussian_spec(self):
        return ProblemSpec(GaussianInput.standard(2), [1.0, -1.0], GaussianNoise(1.0))

    def test_ols_matches_minimax(self, gaussian_spec):
        """Test: l'OLS atteint le risque minimax gaussien"""
        ols = quantile_risk_mc(gaussian_spec, "ols", 40, 0.1, 4000, RngStream(1))
        exact = gauss_minimax_exact_mc(GaussianInput.standard(2), ErrorFn.square(), 1.0, 40, 0.1, 4000, RngStream(2))
        assert _close(ols.quantile_risk, exact)

    def test_singular_designs_are_infinite(self):
        """Test: risque infini sous ε_n = 2⁻⁶, fini au-dessus"""
        spec = ProblemSpec(DiscreteInput.bernoulli(0.5), [1.0], GaussianNoise(1.0))
        assert math.isinf(quantile_risk_mc(spec, "ols", 6, 0.005, 4000, RngStream(3)).quantile_risk.value)
        assert math.isfinite(quantile_risk_mc(spec, "ols", 6, 0.1, 4000, RngStream(3)).quantile_risk.value)

    def test_reproducible_and_worker_independent(self, gaussian_spec):
        a = quantile_risk_mc(gaussian_spec, "ols", 30, 0.1, 200, RngStream(4), workers=1)
        b = quantile_risk_mc(gaussian_spec, "ols", 30, 0.1, 200, RngStream(4), workers=2)
        assert np.array_equal(a.losses, b.losses)

    def test_minmax_estimator(self, gaussian_spec):
        """Test: procédure min-max avec réglages réduits, rapport complet"""
        report = quantile_risk_mc(
            gaussian_spec, "minmax", 200, 0.1, 100, RngStream(5), overrides={"outer_steps": 30, "inner_steps": 5}
        )
        assert math.isfinite(report.quantile_risk.value)
        row = report.as_row()
        assert row["estimator"] == "minmax"
        assert row["reps"] == 100

    def test_callable_estimator(self, gaussian_spec):
        """Test: un callable dataset -> FitResult est accepté"""
        report = quantile_risk_mc(gaussian_spec, ols_fit, 30, 0.1, 200, RngStream(6))
        assert report.estimator == "ols_fit"

    def test_preconditions(self, gaussian_spec):
        with pytest.raises(InvalidInput):
            quantile_risk_mc(gaussian_spec, "ols", 30, 0.1, 50, RngStream(0))
        with pytest.raises(InvalidLevel):
            quantile_risk_mc(gaussian_spec, "ols", 30, 0.001, 200, RngStream(0))
        with pytest.raises(InvalidInput):
            quantile_risk_mc(gaussian_spec, "ridge", 30, 0.1, 200, RngStream(0))

    def test_fit_estimator_trim_override(self, gaussian_spec):
        """Test: k imposé par les réglages"""
        data = sample_dataset(gaussian_spec, 100, RngStream(7))
        fit = fit_estimator("minmax", data, ErrorFn.square(), 0.1, {"k": 3, "outer_steps": 5})
        assert fit.iterations <= 5


@pytest.mark.montecarlo
class TestGaussianMinimax:
    """Risque minimax exact sur la classe gaussienne"""

    def test_unit_input_chi_square(self):
        """Test: X ≡ 1, n = 50, δ = 0.1 donne Q_{χ²₁}(0.9)/100"""
        q = gauss_minimax_exact_mc(DiscreteInput.unit(), ErrorFn.square(), 1.0, 50, 0.1, 20_000, RngStream(8))
        target = chi2_quantile(0.9, 1) / 100.0
        assert target == pytest.approx(0.027055, rel=1e-4)
        assert abs(q.value - target) <= 4.0 * q.se_proxy

    def test_infinite_regime(self):
        """Test: ∞ pour δ < ε_6 = 2⁻⁶, fini pour δ > ε_6"""
        inp = DiscreteInput.bernoulli(0.5)
        low = gauss_minimax_exact_mc(inp, ErrorFn.square(), 1.0, 6, 0.01, 5000, RngStream(9))
        high = gauss_minimax_exact_mc(inp, ErrorFn.square(), 1.0, 6, 0.1, 5000, RngStream(9))
        assert math.isinf(low.value)
        assert math.isfinite(high.value)

    def test_ppower_above_lower_bound(self):
        """Test: p = 4, X ≡ 1: risque exact au-dessus de la borne inférieure"""
        q = gauss_minimax_exact_mc(DiscreteInput.unit(), ErrorFn.ppower(4.0), 1.0, 400, 0.1, 2000, RngStream(10))
        assert q.value >= pnorm_lower_bound(4.0, 1.0, 1, 400, 0.1) - 3.0 * q.se_proxy

    def test_values_nonnegative(self):
        values = gauss_minimax_values_mc(GaussianInput.standard(3), ErrorFn.square(), 2.0, 20, 500, RngStream(11))
        assert values.size == 500
        assert np.all(values >= 0)

    def test_asymptotic_formula(self):
        """Test: σ²/2·Q_{χ²_d}(1−δ) en erreur carrée"""
        assert asymptotic_minimax(ErrorFn.square(), 1.0, 0.1, 2) == pytest.approx(0.5 * chi2_quantile(0.9, 2))

    @pytest.mark.parametrize("p", [3.5, 4.0, 6.0])
    def test_curvature_against_quadrature(self, p):
        """Test: α = E[e″(η)]/2 contre Gauss-Hermite"""
        sigma2 = 1.7
        error = ErrorFn.ppower(p)
        reference = 0.5 * gauss_hermite_expectation(lambda t: error.second(t), math.sqrt(sigma2), nodes=256)
        assert error.curvature(sigma2) == pytest.approx(reference, rel=2e-3)

    def test_asymptotic_limit(self):
        """Test: n·R* proche de la limite pour n grand (d = 1)"""
        n = 2000
        q = gauss_minimax_exact_mc(GaussianInput.standard(1), ErrorFn.square(), 1.0, n, 0.1, 10_000, RngStream(12))
        assert n * q.value == pytest.approx(asymptotic_minimax(ErrorFn.square(), 1.0, 0.1, 1), rel=0.1)


@pytest.mark.montecarlo
class TestSquareBounds:
    """Encadrement du risque minimax en erreur carrée"""

    @pytest.fixture(scope="class")
    def replicates(self):
        return sample_design_replicates(GaussianInput.standard(2), 100, 2000, RngStream(13))

    def test_sandwich(self, replicates):
        inp = GaussianInput.standard(2)
        bounds = square_bounds(inp, 1.0, 100, 0.05, 2000, RngStream(14), replicates=replicates)
        exact = gauss_minimax_exact_mc(inp, ErrorFn.square(), 1.0, 100, 0.05, 2000, RngStream(15))
        assert bounds.eps_value == 0.0
        assert bounds.lower <= exact.value <= bounds.upper

    def test_level_domain(self, replicates):
        with pytest.raises(InvalidLevel):
            square_bounds(GaussianInput.standard(2), 1.0, 100, 0.3, 2000, RngStream(14), replicates=replicates)

    def test_lemma_inequalities(self, replicates):
        """Test: les quatre inégalités sur Tr(Σ̃⁻¹) et W"""
        check = lemma_bounds_check(replicates, 0.05)
        assert set(check.slacks) == {"trace_lower", "trace_upper", "w_lower", "w_upper"}
        assert check.holds()
        assert min(check.slacks.values()) >= 0.0

    def test_negative_slack_fails_by_default(self):
        """Test: une pente négative échoue sans marge, passe avec une marge en se"""
        check = LemmaCheck(slacks={"trace_lower": -1e-9}, se={"trace_lower": 1e-3})
        assert not check.holds()
        assert check.holds(3.0)

    def test_lemma_requires_delta_above_eps(self):
        reps = sample_design_replicates(DiscreteInput.bernoulli(0.5), 6, 4000, RngStream(16))
        assert reps.singular_fraction > 0.01
        with pytest.raises(InvalidLevel):
            lemma_bounds_check(reps, 0.01)


class TestExplicitBounds:
    """Bornes en forme close"""

    def test_pnorm_lower_bound(self):
        """Test: m(2)/(16·3)·(1 + ln 10)/400 pour p = 4"""
        expected = (1.0 + math.log(10.0)) / (48.0 * 400.0)
        assert pnorm_lower_bound(4.0, 1.0, 1, 400, 0.1) == pytest.approx(expected, rel=1e-12)
        with pytest.raises(InvalidLevel):
            pnorm_lower_bound(4.0, 1.0, 1, 400, 0.5)

    def test_k_constant(self):
        assert k_constant(4.0) == pytest.approx(135.0, rel=1e-12)

    def test_guarantee_square(self):
        """Test: 100²σ²(d + log(1/δ))/n"""
        params = matrix_params(GaussianInput.standard(2))
        rhs = guarantee_rhs(ErrorFn.square(), params, GuaranteeExtras(1.0), 10_000, 2, 0.05)
        assert rhs.risk_bound == pytest.approx(2.0 + math.log(20.0), rel=1e-12)
        expected_n = 800.0**2 * (8.0 * math.log(12.0) * 4.0 + 3.0 * math.log(20.0))
        assert rhs.min_n == pytest.approx(expected_n, rel=1e-12)

    def test_guarantee_ppower_requires_extras(self):
        params = matrix_params(GaussianInput.standard(2))
        with pytest.raises(InvalidInput):
            guarantee_rhs(ErrorFn.ppower(4.0), params, GuaranteeExtras(1.0), 1000, 2, 0.05)
        rhs = guarantee_rhs(ErrorFn.ppower(4.0), params, GuaranteeExtras(1.0, mu=1.0, norm_equiv=3.0**0.25), 1000, 2, 0.05)
        assert rhs.risk_bound == pytest.approx(120.0**2 * 135.0 * (2.0 + math.log(20.0)) / 1000, rel=1e-12)
        assert rhs.min_n > 0

    def test_sufficient_sample_size(self):
        """Test: taille suffisante finie (gaussienne), infinie si S = 0 et R = 0"""
        params = matrix_params(GaussianInput.standard(2))
        n_suff = sufficient_sample_size(params, 2, 0.05)
        assert n_suff == pytest.approx(128.0 * (4.0 * math.log(6.0) * 3.0 + 2.0 * math.log(40.0)), rel=1e-12)
        assert sufficiency_check(GaussianInput.standard(2), 1.0, 10**6, 0.05)
        assert math.isinf(sufficient_sample_size(matrix_params(DiscreteInput.unit()), 1, 0.05))
        assert not sufficiency_check(DiscreteInput.unit(), 1.0, 10**9, 0.05)


@pytest.mark.montecarlo
class TestMeanAndVarianceRisk:
    """Moyenne et variance"""

    def test_variance_minimax(self):
        """Test: risque de l'estimateur pondéré ≈ t*, second moment plus risqué"""
        n, delta, reps = 10, 0.05, 20_000
        weighted = variance_quantile_risk_mc(n, delta, reps, RngStream(17), weighted=True)
        plain = variance_quantile_risk_mc(n, delta, reps, RngStream(17), weighted=False)
        target = p_alpha_inverse(1.0 - delta, 0.5 * n)
        assert abs(weighted.value - target) <= 4.0 * weighted.se_proxy
        assert plain.value > weighted.value

    def test_variance_scale_equivariance(self):
        """Test: même risque pour σ² = 1 et σ² = 4 avec les mêmes tirages"""
        a = variance_quantile_risk_mc(10, 0.05, 1000, RngStream(18), sigma2=1.0)
        b = variance_quantile_risk_mc(10, 0.05, 1000, RngStream(18), sigma2=4.0)
        assert a.value == b.value

    def test_mean_matches_direct_draw(self):
        """Test: moyenne empirique et tirage direct de Z ~ N(0, Σ/n) ont la même loi"""
        Sigma = np.array([[1.0, 0.3], [0.3, 2.0]])
        report = mean_minimax_mc(Sigma, ErrorFn.square(), 20, 0.1, 4000, RngStream(19))
        assert _close(report.sample_mean, report.direct)


@pytest.mark.montecarlo
class TestMinimaxReport:
    """Rapport minimax assemblé"""

    def test_square_report(self):
        report = minimax_report(GaussianInput.standard(2), ErrorFn.square(), 1.0, 100, 0.05, 2000, RngStream(20))
        assert report.bounds_lower <= report.exact_mc.value <= report.bounds_upper
        assert report.lower_bound_pnorm is None
        assert report.values.size == 2000
        row = report.as_row(seed=20)
        assert row["asymptotic"] == pytest.approx(0.5 * chi2_quantile(0.95, 2) / 100)
        assert row["seed"] == 20

    def test_ppower_report(self):
        report = minimax_report(DiscreteInput.unit(), ErrorFn.ppower(4.0), 1.0, 100, 0.1, 1000, RngStream(21))
        assert report.bounds_lower is None
        assert report.lower_bound_pnorm == pytest.approx(pnorm_lower_bound(4.0, 1.0, 1, 100, 0.1))
        assert math.isinf(report.sufficient_n)

    def test_bounds_skipped_outside_domain(self):
        """Test: δ ≥ 1/4 omet l'encadrement sans erreur"""
        report = minimax_report(GaussianInput.standard(2), ErrorFn.square(), 1.0, 50, 0.3, 1000, RngStream(22))
        assert report.bounds_upper is None
        assert math.isfinite(report.exact_mc.value)
