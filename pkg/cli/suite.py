"""
Batterie de validation de bout en bout: 13 critères mesurés, tableau réussite/échec
"""

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd

from src.cov_eigen import (
    angular_grid_inf,
    min_eig_quantile_mc,
    trimmed_directional_inf,
    trimmed_inf_bound,
    trimmed_inf_quantile_mc,
    upper_bound_eig,
)
from src.distributions import (
    DiscreteInput,
    GaussianInput,
    ProblemSpec,
    StudentTNoise,
    matrix_params,
    singularity_prob,
)
from src.estimators import (
    Dataset,
    ErrorFn,
    MinMaxConfig,
    minmax_fit,
    ols_fit,
    p_alpha,
    p_alpha_inverse,
)
from src.logger import get_logger
from src.numerics import (
    abs_normal_cdf,
    abs_normal_cdf_bounds,
    chi2_quantile,
    std_normal_abs_moment,
    verify_abs_moment_formula,
)
from src.quantile_core import (
    EmpiricalDistribution,
    StepFunction,
    check_transform_invariance,
    empirical_quantile,
    pseudo_inverse,
    pseudo_inverse_point,
)
from src.risk_minimax import (
    GuaranteeExtras,
    asymptotic_minimax,
    gauss_minimax_exact_mc,
    guarantee_rhs,
    k_constant,
    lemma_bounds_check,
    pnorm_lower_bound,
    quantile_risk_mc,
    sample_design_replicates,
    square_bounds,
    variance_quantile_risk_mc,
)
from src.truncation import TrimLevel, clamp, trimmed_sum

logger = get_logger(__name__)

SE_SLACK = 3.0


@dataclass(frozen=True)
class Criterion:
    number: int
    name: str
    check: Callable


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    measured: str
    required: str
    passed: bool
    seconds: float


def _combined_se(*estimates):
    return math.sqrt(sum(e.se_proxy**2 for e in estimates))


def _reps(full, quick_value, quick):
    return quick_value if quick else full


# ---------------------------------------------------------------------------
# Critères
# ---------------------------------------------------------------------------


def exact_minimax_unit(rng, quick, workers):
    """Risque minimax exact, X ≡ 1: (σ²/2n)·Q_{χ²₁}(1−δ)"""
    reps = _reps(50_000, 5_000, quick)
    tol = 0.08 if quick else 0.02
    q = gauss_minimax_exact_mc(DiscreteInput.unit(), ErrorFn.square(), 1.0, 50, 0.1, reps, rng, workers)
    target = chi2_quantile(0.9, 1) / 100.0
    rel = abs(q.value - target) / target
    return f"{q.value:.6g} (écart relatif {rel:.3%})", f"≤ {tol:.0%} de {target:.6g}", rel <= tol


def ols_minimaxity(rng, quick, workers):
    """OLS atteint le risque minimax gaussien"""
    reps = _reps(20_000, 2_000, quick)
    inp = GaussianInput.standard(2)
    spec = ProblemSpec.from_dict({"input": {"kind": "gaussian", "d": 2}, "noise": "gaussian"}, 1.0)
    risk = quantile_risk_mc(spec, "ols", 40, 0.1, reps, rng.child(0), workers)
    exact = gauss_minimax_exact_mc(inp, ErrorFn.square(), 1.0, 40, 0.1, reps, rng.child(1), workers)
    gap = abs(risk.quantile_risk.value - exact.value)
    slack = SE_SLACK * _combined_se(risk.quantile_risk, exact)
    return f"|Δ| = {gap:.4g}", f"≤ 3 se = {slack:.4g}", gap <= slack


def asymptotic_formula(rng, quick, workers):
    """n·R* à n = 4000 proche de (σ²/2)·Q_{χ²₂}(0.9)"""
    reps = _reps(20_000, 2_000, quick)
    tol = 0.15 if quick else 0.10
    n = 4000
    exact = gauss_minimax_exact_mc(GaussianInput.standard(2), ErrorFn.square(), 1.0, n, 0.1, reps, rng, workers)
    limit = asymptotic_minimax(ErrorFn.square(), 1.0, 0.1, 2)
    rel = abs(n * exact.value - limit) / limit
    return f"n·R* = {n * exact.value:.5g} (écart {rel:.2%})", f"≤ {tol:.0%} de {limit:.5g}", rel <= tol


def bounds_sandwich(rng, quick, workers):
    """Encadrement inférieur ≤ exact ≤ supérieur et inégalités sur Tr et W"""
    reps = _reps(20_000, 2_000, quick)
    inp = GaussianInput.standard(2)
    n, delta = 100, 0.05
    replicates = sample_design_replicates(inp, n, reps, rng.child(0), workers)
    bounds = square_bounds(inp, 1.0, n, delta, reps, rng.child(0), replicates=replicates)
    exact = gauss_minimax_exact_mc(inp, ErrorFn.square(), 1.0, n, delta, reps, rng.child(1), workers)
    slack = SE_SLACK * exact.se_proxy
    lemma = lemma_bounds_check(replicates, delta)
    passed = bounds.lower <= exact.value + slack and exact.value <= bounds.upper + slack and lemma.holds(0.0)
    measured = f"{bounds.lower:.3g} ≤ {exact.value:.4g} ≤ {bounds.upper:.4g}; min pente {min(lemma.slacks.values()):.3g}"
    return measured, "ordre à 3 se près, pentes ≥ 0", passed


def _dyadic_sequence(gen, n):
    return gen.integers(-512, 512, size=n) / 8.0


def truncation_calculus(rng, quick, workers):
    """Identités de troncature et d'écrêtage sur des cas aléatoires dyadiques"""
    gen = rng.generator()
    cases = _reps(1000, 200, quick)
    failures = 0
    for _ in range(cases):
        n = int(gen.integers(2, 40))
        trim = TrimLevel(int(gen.integers(1, n // 2 + 1)), n)
        a = _dyadic_sequence(gen, n)
        c = float(2.0 ** gen.integers(-3, 4)) * (1.0 if gen.random() < 0.5 else -1.0)
        shift = float(gen.integers(-64, 64)) / 8.0
        b = np.abs(_dyadic_sequence(gen, n))
        base = trimmed_sum(a, trim).clamped_total
        ok = trimmed_sum(c * a, trim).clamped_total == c * base
        ok &= trimmed_sum(a + shift, trim).clamped_total == base + n * shift
        ok &= trimmed_sum(a + b, trim).clamped_total >= base
        ok &= trimmed_sum(a + b, trim).clamped_total >= base + np.sort(b)[: n - 2 * trim.k].sum()
        x, lo = float(a[0]), float(min(a[1], a[-1]))
        hi = float(max(a[1], a[-1]))
        cp = abs(c)
        ok &= cp * clamp(x, lo, hi) == clamp(cp * x, cp * lo, cp * hi)
        ok &= -clamp(x, lo, hi) == clamp(-x, -hi, -lo)
        ok &= clamp(x, lo, hi) + shift == clamp(x + shift, lo + shift, hi + shift)
        failures += int(not ok)
    return f"{failures} échec(s) sur {cases}", "0 échec (égalité exacte)", failures == 0


def _random_step_function(gen, size):
    breakpoints = np.cumsum(gen.integers(1, 8, size=size)) / 4.0
    values = np.cumsum(gen.integers(0, 3, size=size)) / 4.0
    return StepFunction(breakpoints, values)


def quantile_calculus(rng, quick, workers):
    """Pseudo-inverse (f⁻(f(x)) ≤ x, antitonie) et invariance par transformation"""
    gen = rng.generator()
    cases = _reps(1000, 200, quick)
    failures = 0
    for _ in range(cases):
        f = _random_step_function(gen, int(gen.integers(1, 20)))
        xs = np.concatenate([f.breakpoints, gen.uniform(f.breakpoints[0] - 1, f.breakpoints[-1] + 1, 5)])
        ok = all(pseudo_inverse_point(f, f(x)) <= x for x in xs)
        g = StepFunction(f.breakpoints, f.values - gen.integers(0, 3) / 4.0)
        ys = gen.uniform(f.values[0] - 1, f.values[-1] + 1, 8)
        ok &= bool(np.all(pseudo_inverse(f, ys) <= pseudo_inverse(g, ys)))

        sample = gen.standard_normal(int(gen.integers(1, 60)))
        if gen.random() < 0.2:
            sample = np.append(sample, math.inf)
        knots = np.linspace(-10.0, 10.0, 9)
        images = np.cumsum(gen.uniform(0.1, 3.0, size=knots.size))
        level = float(gen.uniform(0.01, 0.99))

        def phi(t, knots=knots, images=images):
            return float(np.interp(t, knots, images))

        bounded = np.where(np.isinf(sample), sample, np.clip(sample, -9.5, 9.5))
        ok &= check_transform_invariance(bounded, phi, level)
        q = empirical_quantile(bounded, level).value
        values = EmpiricalDistribution(bounded).values
        ok &= np.mean(values <= q) >= level and not np.any(np.mean(values[:, None] <= values[values < q], axis=0) >= level)
        failures += int(not ok)
    return f"{failures} échec(s) sur {cases}", "0 échec", failures == 0


def abs_normal_bounds(rng, quick, workers):
    """√(1−e^{−r²/2σ²}) ≤ F_{|Z|}(r) ≤ √(1−e^{−2r²/πσ²})"""
    r = np.round(np.arange(1, 31) * 0.1, 12)
    worst = math.inf
    for sigma in (0.5, 1.0, 2.0):
        lower, upper = abs_normal_cdf_bounds(r, sigma)
        value = abs_normal_cdf(r, sigma)
        worst = min(worst, float(np.min(value - lower)), float(np.min(upper - value)))
    return f"pente minimale {worst:.3g}", "≥ −1e−12", worst >= -1e-12


def eigen_upper_bound(rng, quick, workers):
    """Q_{1−λ_min}(1−δ) ≤ borne non asymptotique"""
    reps = _reps(5000, 500, quick)
    failures = 0
    index = 0
    for d in (2, 5):
        inp = GaussianInput.standard(d)
        params = matrix_params(inp)
        for n in (100, 1000):
            for delta in (0.05, 0.2):
                q = min_eig_quantile_mc(inp, n, delta, reps, rng.child(index), workers)
                failures += int(q.value > upper_bound_eig(params, n, d, delta) + SE_SLACK * q.se_proxy)
                index += 1
    return f"{failures} violation(s) sur 8", "0 violation", failures == 0


def trimmed_infimum(rng, quick, workers):
    """Infimum directionnel tronqué contre la grille de 4096 angles, puis borne à n = 4096"""
    datasets = _reps(50, 10, quick)
    inp = GaussianInput.standard(2)
    worst = 0.0
    for i in range(datasets):
        gen = rng.child(i).generator()
        X = inp.sample(100, gen)
        found = trimmed_directional_inf(X, np.eye(2), 5, rng=gen)
        worst = max(worst, abs(found - angular_grid_inf(X, np.eye(2), 5)))
    k, n = 24, 4096
    delta = 2.0 * math.exp(-k / 8.0)
    reps = _reps(200, 100, quick)
    q = trimmed_inf_quantile_mc(inp, n, k, delta, reps, rng.child(datasets), multistarts=4, workers=workers)
    bound = trimmed_inf_bound(matrix_params(inp), n, 2, delta)
    passed = worst <= 1e-3 and q.value <= bound
    return f"écart max {worst:.2e}; Q = {q.value:.4g} ≤ {bound:.4g}", "≤ 1e−3 et Q ≤ borne", passed


def variance_estimator(rng, quick, workers):
    """Estimateur minimax de la variance contre le second moment empirique"""
    reps = _reps(100_000, 10_000, quick)
    tol = 0.06 if quick else 0.02
    n, delta = 10, 0.05
    weighted = variance_quantile_risk_mc(n, delta, reps, rng.child(0), True, workers=workers)
    scaled = variance_quantile_risk_mc(n, delta, reps, rng.child(0), True, sigma2=4.0, workers=workers)
    plain = variance_quantile_risk_mc(n, delta, reps, rng.child(0), False, workers=workers)
    target = p_alpha_inverse(1.0 - delta, 0.5 * n)
    rel = abs(weighted.value - target) / target
    gap = plain.value - weighted.value
    pairs = [(alpha, level) for alpha in (0.5, 1.0, 5.0, 50.0, 500.0) for level in (0.1, 0.5, 0.9, 0.99)]
    round_trip = max(abs(p_alpha(p_alpha_inverse(level, alpha), alpha) - level) for alpha, level in pairs)
    passed = (
        rel <= tol
        and weighted.value == scaled.value
        and gap >= SE_SLACK * _combined_se(weighted, plain)
        and round_trip <= 1e-10
    )
    measured = f"{weighted.value:.5g} vs {target:.5g} ({rel:.2%}); écart {gap:.3g}; aller-retour {round_trip:.1e}"
    return measured, f"≤ {tol:.0%}, écart ≥ 3 se, aller-retour ≤ 1e−10", passed


def robustness(rng, quick, workers):
    """Valeurs aberrantes plantées et bruit de Student à 3 degrés de liberté"""
    y = np.ones(64)
    y[-4:] = 1e6
    data = Dataset(np.ones((64, 1)), y)
    w_minmax = float(minmax_fit(data, ErrorFn.square(), MinMaxConfig(k=TrimLevel(5, 64))).w_hat[0])
    w_ols = float(ols_fit(data).w_hat[0])
    planted = abs(w_minmax - 1.0) <= 0.05 and abs(w_ols - 1.0) > 1e4

    reps = _reps(1000, 200, quick)
    n, delta = 5000, 0.05
    inp = GaussianInput.standard(2)
    spec = ProblemSpec(inp, np.zeros(2), StudentTNoise(3.0, 1.0), ErrorFn.square())
    overrides = {"outer_steps": 60, "inner_steps": 5}
    robust = quantile_risk_mc(spec, "minmax", n, delta, reps, rng.child(0), workers, overrides=overrides)
    ols = quantile_risk_mc(spec, "ols", n, delta, reps, rng.child(0), workers)
    guarantee = guarantee_rhs(ErrorFn.square(), matrix_params(inp), GuaranteeExtras(1.0), n, 2, delta)
    passed = (
        planted
        and robust.quantile_risk.value <= guarantee.risk_bound
        and robust.quantile_risk.value <= ols.quantile_risk.value
    )
    measured = (
        f"ŵ={w_minmax:.4f}, OLS={w_ols:.4g}; min-max {robust.quantile_risk.value:.4g} "
        f"vs OLS {ols.quantile_risk.value:.4g}"
    )
    return measured, f"|ŵ−1| ≤ 0.05, risque ≤ {guarantee.risk_bound:.3g} et ≤ OLS", passed


def infinite_risk(rng, quick, workers):
    """ε_n = 2⁻⁶ et risque infini sous ε_n"""
    reps = _reps(20_000, 5_000, quick)
    inp = DiscreteInput.bernoulli(0.5)
    eps = singularity_prob(inp, 6)
    low = gauss_minimax_exact_mc(inp, ErrorFn.square(), 1.0, 6, 0.01, reps, rng, workers)
    high = gauss_minimax_exact_mc(inp, ErrorFn.square(), 1.0, 6, 0.1, reps, rng, workers)
    passed = eps.exact and eps.value == 2.0**-6 and math.isinf(low.value) and math.isfinite(high.value)
    return f"ε_n={eps.value:.6g}, R(0.01)={low.value}, R(0.1)={high.value:.4g}", "ε_n = 2⁻⁶, ∞ puis fini", passed


def pnorm_bound(rng, quick, workers):
    """Borne inférieure p-norme (p = 4) et constantes m(p), K(4)"""
    reps = _reps(20_000, 2_000, quick)
    exact = gauss_minimax_exact_mc(DiscreteInput.unit(), ErrorFn.ppower(4.0), 1.0, 400, 0.1, reps, rng, workers)
    bound = pnorm_lower_bound(4.0, 1.0, 1, 400, 0.1)
    moments = max(verify_abs_moment_formula().values())
    k4 = k_constant(4.0)
    passed = (
        exact.value >= bound - SE_SLACK * exact.se_proxy
        and abs(k4 - 135.0) <= 1e-9 * 135.0
        and abs(std_normal_abs_moment(6.0) - 15.0) <= 1e-12 * 15.0
        and moments <= 1e-8
    )
    return f"{exact.value:.4g} ≥ {bound:.4g}; K(4)={k4:.10g}; m: {moments:.1e}", "borne, K(4)=135, m ≤ 1e−8", passed


CRITERIA = (
    Criterion(1, "minimax exact (X ≡ 1)", exact_minimax_unit),
    Criterion(2, "minimaxité de l'OLS", ols_minimaxity),
    Criterion(3, "formule asymptotique", asymptotic_formula),
    Criterion(4, "encadrement carré", bounds_sandwich),
    Criterion(5, "calcul de troncature", truncation_calculus),
    Criterion(6, "calcul des quantiles", quantile_calculus),
    Criterion(7, "bornes de F_|Z|", abs_normal_bounds),
    Criterion(8, "borne sur λ_min", eigen_upper_bound),
    Criterion(9, "infimum tronqué", trimmed_infimum),
    Criterion(10, "estimateur de variance", variance_estimator),
    Criterion(11, "robustesse min-max", robustness),
    Criterion(12, "régime de risque infini", infinite_risk),
    Criterion(13, "borne p-norme", pnorm_bound),
)


def run_criterion(criterion, rng, quick, workers):
    start = time.perf_counter()
    measured, required, passed = criterion.check(rng, quick, workers)
    seconds = time.perf_counter() - start
    logger.info(
        f"Critère {criterion.number} {'réussi' if passed else 'échoué'}: {criterion.name}",
        extra={"command": "suite", "seed": rng.seed, "duration_ms": round(seconds * 1000, 2)},
    )
    return CriterionResult(criterion.number, criterion.name, measured, required, bool(passed), seconds)


def run_suite(rng, quick=False, workers=1, only=None):
    """
    Exécute les critères (tous, ou ceux de only) avec le sous-flux rng.child(numéro)

    Returns:
        DataFrame (critere, nom, mesure, exigence, statut, secondes)
    """
    results = [
        run_criterion(c, rng.child(c.number), quick, workers)
        for c in CRITERIA
        if only is None or c.number in only
    ]
    return pd.DataFrame(
        {
            "critere": [r.number for r in results],
            "nom": [r.name for r in results],
            "mesure": [r.measured for r in results],
            "exigence": [r.required for r in results],
            "statut": ["OK" if r.passed else "ECHEC" for r in results],
            "secondes": [round(r.seconds, 2) for r in results],
        }
    )
