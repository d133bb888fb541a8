"""
Risque quantile d'un estimateur, risque minimax exact sur la classe gaussienne
et bornes explicites (asymptotique, encadrement, p-norme, garanties, suffisance)
"""

import math
import time
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np
from scipy import integrate, linalg, stats

from src.cov_eigen import SINGULAR_TOL
from src.distributions import (
    DiscreteInput,
    GaussianInput,
    GaussianNoise,
    ProblemSpec,
    StudentTNoise,
    TwoPointNoise,
    matrix_params,
    sample_dataset,
    singularity_prob,
)
from src.errors import InvalidInput, InvalidLevel, NotPD
from src.estimators import (
    MinMaxConfig,
    log_ratio_loss,
    minimax_variance_estimate,
    minmax_fit,
    ols_fit,
    sample_mean,
    trim_level_for_delta,
)
from src.logger import get_logger
from src.numerics import (
    HERMITE_MAX_NODES,
    HERMITE_MIN_NODES,
    RngStream,
    chi2_quantile,
    cholesky,
    inverse_sqrt,
    std_normal_abs_moment,
    sym_eigen,
    sym_part,
)
from src.quantile_core import EmpiricalDistribution, QuantileEstimate, empirical_quantile, wilson_interval
from src.replicates import run_replicates
from src.truncation import TrimLevel

logger = get_logger(__name__)

MIN_REPS = 100
PANEL_SIZE = 100_000
PANEL_CHUNK = 8192
BOUNDS_LOWER_CONSTANT = 6428.0
GUARANTEE_SQUARE = 100.0
GUARANTEE_SAMPLE_SQUARE = 800.0
GUARANTEE_PPOWER = 120.0
GUARANTEE_SAMPLE_PPOWER = 2400.0


def _check_delta(delta):
    if not 0 < delta < 1:
        raise InvalidLevel(f"δ hors de (0,1): {delta}")


def _check_reps(reps, delta):
    if reps < MIN_REPS:
        raise InvalidInput(f"reps doit être ≥ {MIN_REPS}, reçu {reps}")
    if delta < 1.0 / reps:
        raise InvalidLevel(f"δ={delta} inférieur à 1/reps={1.0 / reps:.3g}: augmenter reps")


def _is_singular(spectrum):
    return not (spectrum.lambda_max > 0 and spectrum.lambda_min > SINGULAR_TOL * spectrum.lambda_max)


# ---------------------------------------------------------------------------
# Erreur en excès
# ---------------------------------------------------------------------------


class ExcessErrorOracle:
    """
    ℰ(w) = Ẽ(w − w*) − Ẽ(0) avec Ẽ(Δ) = E[e(⟨Δ,X⟩ + ξ)]

    Modes:
        closed_form_square: ½ΔᵀΣΔ (tout bruit centré indépendant de X)
        gaussian_closed_form: puissance p, X et ξ gaussiens, m(p)(ΔᵀΣΔ+σ²)^{p/2}/[p(p−1)]
        discrete_exact: somme finie sur le support de X
        discrete_student: support fini de X, intégrale en ξ par scipy.integrate.quad
        quadrature_ppower: panel figé de 10⁵ tirages de X (graine issue du hash du problème)

    L'espérance en ξ se fait par Gauss-Hermite (bruit gaussien), par somme
    exacte (bruit à deux points), par quadrature adaptative sur la densité de
    Student (X discret) ou par tirages symétrisés ±ξ appariés au panel (Student).
    """

    def __init__(self, spec, nodes=64, panel_size=PANEL_SIZE):
        if not HERMITE_MIN_NODES <= nodes <= HERMITE_MAX_NODES:
            raise InvalidInput(f"ExcessErrorOracle: nodes hors de [8, 256]: {nodes}")
        self.spec = spec
        self.nodes = int(nodes)
        self.error = spec.error
        self.w_star = spec.w_star
        self.cov = spec.input.covariance()
        noise = spec.noise

        if self.error.kind == "square":
            self.mode = "closed_form_square"
            return
        if isinstance(spec.input, GaussianInput) and isinstance(noise, GaussianNoise):
            self.mode = "gaussian_closed_form"
            self.noise_var = noise.sigma2
            self.scale = std_normal_abs_moment(self.error.p) / (self.error.p * (self.error.p - 1.0))
            return

        if isinstance(spec.input, DiscreteInput) and isinstance(noise, StudentTNoise):
            self.mode = "discrete_student"
            self.points = spec.input.points
            self.point_weights = spec.input.probs
            self.noise_nu, self.noise_scale = noise.nu, noise.scale
            self.finite = noise.abs_moment(self.error.p - 2.0) < math.inf
            return

        gen = RngStream(int(spec.spec_hash()[:16], 16)).generator()
        if isinstance(spec.input, DiscreteInput):
            self.mode = "discrete_exact"
            self.points = spec.input.points
            self.point_weights = spec.input.probs
        else:
            self.mode = "quadrature_ppower"
            self.points = spec.input.sample(int(panel_size), gen)
            self.point_weights = np.full(int(panel_size), 1.0 / panel_size)
        self.offsets, self.offset_weights = self._noise_rule(noise, self.points.shape[0], gen)
        self.base = self._expected_error(np.zeros(spec.dim))

    def _noise_rule(self, noise, m, gen):
        """Nœuds (1, L) partagés ou (m, L) par point, avec leurs poids"""
        if isinstance(noise, GaussianNoise):
            if noise.sigma2 == 0:
                return np.zeros((1, 1)), np.ones(1)
            x, w = np.polynomial.hermite.hermgauss(self.nodes)
            return (math.sqrt(2.0 * noise.sigma2) * x)[None, :], w / math.sqrt(math.pi)
        if isinstance(noise, TwoPointNoise):
            half = 0.5 * noise.prob
            return np.array([[-noise.a, 0.0, noise.a]]), np.array([half, 1.0 - noise.prob, half])
        if isinstance(noise, StudentTNoise):
            xi = noise.sample(m, gen)
            return np.column_stack([xi, -xi]), np.array([0.5, 0.5])
        raise InvalidInput(f"ExcessErrorOracle: bruit non pris en charge {type(noise).__name__}")

    def _expected_error(self, delta):
        a = self.points @ delta
        total = 0.0
        shared = self.offsets.shape[0] == 1
        for lo in range(0, a.size, PANEL_CHUNK):
            hi = min(lo + PANEL_CHUNK, a.size)
            offsets = self.offsets if shared else self.offsets[lo:hi]
            values = self.error.value(a[lo:hi, None] + offsets) @ self.offset_weights
            total += float(np.dot(self.point_weights[lo:hi], values))
        return total

    def _student_excess(self, delta):
        """Σ_j π_j ∫_0^∞ [e(a_j+t) + e(a_j−t) − 2e(t)] f_ξ(t) dt, a_j = ⟨x_j, Δ⟩"""
        if not self.finite:
            # différence seconde ~ a²|t|^{p−2}: intégrable seulement si p − 2 < ν
            return 0.0 if not np.any(self.points @ delta) else math.inf
        value = self.error.value
        total = 0.0
        for a, weight in zip(self.points @ delta, self.point_weights):
            if a == 0.0 or weight == 0.0:
                continue

            def integrand(t, a=float(a)):
                density = stats.t.pdf(t, self.noise_nu, scale=self.noise_scale)
                return float(value(a + t) + value(a - t) - 2.0 * value(t)) * density

            part, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)
            total += float(weight) * part
        return max(0.0, total)

    def excess_delta(self, delta):
        """ℰ̃(Δ) = Ẽ(Δ) − Ẽ(0)"""
        delta = np.asarray(delta, dtype=float).ravel()
        if delta.size != self.spec.dim:
            raise InvalidInput(f"excess_error: Δ de dimension {delta.size}, attendu {self.spec.dim}")
        if self.mode == "closed_form_square":
            return 0.5 * float(delta @ self.cov @ delta)
        if self.mode == "gaussian_closed_form":
            q = float(delta @ self.cov @ delta)
            s2 = self.noise_var
            return self.scale * ((q + s2) ** (0.5 * self.error.p) - s2 ** (0.5 * self.error.p))
        if self.mode == "discrete_student":
            return self._student_excess(delta)
        # la quadrature en ξ est symétrique: Ẽ(Δ) ≥ Ẽ(0) à l'arrondi près
        return max(0.0, self._expected_error(delta) - self.base)

    def excess(self, w):
        return self.excess_delta(np.asarray(w, dtype=float).ravel() - self.w_star)


def excess_error(oracle, w):
    """ℰ(w) ≥ 0, nul en w*"""
    return oracle.excess(w)


# ---------------------------------------------------------------------------
# Risque quantile d'un estimateur
# ---------------------------------------------------------------------------


def fit_estimator(estimator, dataset, error, delta, overrides=None):
    """
    Ajuste l'estimateur nommé ('ols', 'minmax') ou un callable dataset -> FitResult

    Args:
        overrides: Champs de MinMaxConfig (outer_steps, inner_steps, step_size, tolerance, init),
            plus k entier pour imposer le niveau de troncature
    """
    if callable(estimator):
        return estimator(dataset)
    if estimator == "ols":
        return ols_fit(dataset)
    if estimator == "minmax":
        settings = dict(overrides or {})
        k = settings.pop("k", None)
        trim = TrimLevel(int(k), dataset.n) if k is not None else trim_level_for_delta(delta, dataset.n)
        config = MinMaxConfig(k=trim, **settings)
        return minmax_fit(dataset, error, config)
    raise InvalidInput(f"estimateur inconnu '{estimator}' (attendu: ols, minmax)")


@dataclass(frozen=True, eq=False)
class RiskReport:
    estimator: str
    spec_id: str
    n: int
    delta: float
    quantile_risk: QuantileEstimate
    reps: int
    seed: int
    losses: np.ndarray = field(default_factory=lambda: np.empty(0))

    def as_row(self):
        return {
            "estimator": self.estimator,
            "spec_id": self.spec_id,
            "n": self.n,
            "delta": self.delta,
            "reps": self.reps,
            "quantile_risk": self.quantile_risk.value,
            "se_proxy": self.quantile_risk.se_proxy,
            "seed": self.seed,
        }


def _risk_replicate(spec, estimator, n, delta, overrides, oracle, stream):
    dataset = sample_dataset(spec, n, stream)
    fit = fit_estimator(estimator, dataset, spec.error, delta, overrides)
    if fit.singular:
        return math.inf
    return oracle.excess(fit.w_hat)


def quantile_risk_mc(spec, estimator, n, delta, reps, rng, workers=1, overrides=None, oracle=None):
    """
    R_{n,δ}(P, ŵ) = Q_{ℰ(ŵ)}(1−δ) par Monte Carlo

    Un plan singulier signalé par l'estimateur compte comme une perte infinie.

    Args:
        spec: ProblemSpec
        estimator: 'ols', 'minmax' ou callable dataset -> FitResult
        n, delta, reps: Taille, niveau (δ ≥ 1/reps), réplications (≥ 100)
        rng: RngStream
        workers: Processus joblib
        overrides: Réglages MinMaxConfig
        oracle: ExcessErrorOracle déjà construit (sinon construit ici)

    Returns:
        RiskReport
    """
    _check_delta(delta)
    _check_reps(reps, delta)
    if n < 1:
        raise InvalidInput(f"n doit être ≥ 1, reçu {n}")
    start = time.perf_counter()
    oracle = oracle or ExcessErrorOracle(spec)
    task = partial(_risk_replicate, spec, estimator, int(n), float(delta), overrides, oracle)
    losses = np.asarray(run_replicates(task, rng, reps, workers), dtype=float)
    q = empirical_quantile(EmpiricalDistribution(losses), 1.0 - delta)
    name = estimator if isinstance(estimator, str) else getattr(estimator, "__name__", "custom")
    logger.info(
        "Risque quantile estimé",
        extra={
            "n": int(n),
            "d": spec.dim,
            "delta": delta,
            "reps": int(reps),
            "seed": rng.seed,
            "duration_ms": round((time.perf_counter() - start) * 1000, 2),
        },
    )
    return RiskReport(
        estimator=name,
        spec_id=spec.spec_hash()[:12],
        n=int(n),
        delta=float(delta),
        quantile_risk=q,
        reps=int(reps),
        seed=rng.seed,
        losses=losses,
    )


# ---------------------------------------------------------------------------
# Risque minimax exact sur la classe gaussienne
# ---------------------------------------------------------------------------


def _gauss_minimax_replicate(input_dist, W, error, sigma2, n, oracle, stream):
    gen = stream.generator()
    X = input_dist.sample(n, gen)
    d = X.shape[1]
    if error.kind == "square":
        X = X @ W
    G = sym_part(X.T @ X / n)
    if _is_singular(sym_eigen(G)):
        return math.inf
    try:
        L = cholesky(G)
    except NotPD:
        return math.inf
    solved = linalg.solve_triangular(L.T, gen.standard_normal(d), lower=False)
    if error.kind == "square":
        # A ~ N(0, Σ̃_n⁻¹)
        return sigma2 / (2.0 * n) * float(solved @ solved)
    return oracle.excess_delta(math.sqrt(sigma2 / n) * solved)


def gauss_minimax_values_mc(input_dist, error, sigma2, n, reps, rng, workers=1, nodes=64):
    """Tirages de ℰ̃(Z), Z | (X_i) ~ N(0, (σ²/n)Σ̂_n⁻¹), ∞ si Σ̂_n est singulière"""
    if reps < MIN_REPS:
        raise InvalidInput(f"reps doit être ≥ {MIN_REPS}, reçu {reps}")
    if not sigma2 > 0:
        raise InvalidInput(f"σ² doit être > 0, reçu {sigma2}")
    if n < 1:
        raise InvalidInput(f"n doit être ≥ 1, reçu {n}")
    d = input_dist.dim
    oracle = None
    W = None
    if error.kind == "square":
        W = inverse_sqrt(input_dist.covariance())
    else:
        spec = ProblemSpec(input_dist, np.zeros(d), GaussianNoise(sigma2), error)
        oracle = ExcessErrorOracle(spec, nodes=nodes)
    task = partial(_gauss_minimax_replicate, input_dist, W, error, float(sigma2), int(n), oracle)
    return np.asarray(run_replicates(task, rng, reps, workers), dtype=float)


def gauss_minimax_exact_mc(input_dist, error, sigma2, n, delta, reps, rng, workers=1, nodes=64):
    """
    R*_{n,δ}(P_Gauss(P_X, σ²)) = Q_{ℰ̃(Z)}(1−δ)

    Erreur carrée: (σ²/2n)·‖A‖² avec A ~ N(0, Σ̃_n⁻¹) (même loi, moins coûteux).

    Returns:
        QuantileEstimate
    """
    _check_delta(delta)
    _check_reps(reps, delta)
    start = time.perf_counter()
    values = gauss_minimax_values_mc(input_dist, error, sigma2, n, reps, rng, workers, nodes)
    q = empirical_quantile(EmpiricalDistribution(values), 1.0 - delta)
    logger.info(
        "Risque minimax exact estimé",
        extra={
            "n": int(n),
            "d": input_dist.dim,
            "delta": delta,
            "reps": int(reps),
            "seed": rng.seed,
            "duration_ms": round((time.perf_counter() - start) * 1000, 2),
        },
    )
    return q


def asymptotic_minimax(error, sigma2, delta, d):
    """
    lim n·R* = σ²·α·Q_{χ²_d}(1−δ), α = E[e″(η)]/2

    Args:
        error: ErrorFn (carrée: α = 1/2; puissance p: α = m(p−2)σ^{p−2}/2)
        sigma2: Variance du bruit
        delta: Niveau
        d: Dimension
    """
    _check_delta(delta)
    if d < 1:
        raise InvalidInput(f"asymptotic_minimax: d doit être ≥ 1, reçu {d}")
    return sigma2 * error.curvature(sigma2) * chi2_quantile(1.0 - delta, d)


# ---------------------------------------------------------------------------
# Bornes pour l'erreur carrée
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DesignReplicates:
    """Par plan: Tr(Σ̃_n⁻¹), λ_max(Σ̃_n⁻¹) et W ~ Exp(λ_min(Σ̃_n)), ∞ si singulier"""

    trace_inv: np.ndarray
    lam_max_inv: np.ndarray
    w_draws: np.ndarray
    n: int
    d: int

    @property
    def reps(self):
        return self.trace_inv.size

    @property
    def singular_count(self):
        return int(np.sum(np.isinf(self.trace_inv)))

    @property
    def singular_fraction(self):
        return self.singular_count / self.reps


def _design_replicate(input_dist, W, n, stream):
    gen = stream.generator()
    Xt = input_dist.sample(n, gen) @ W
    spectrum = sym_eigen(sym_part(Xt.T @ Xt / n))
    if _is_singular(spectrum):
        return math.inf, math.inf, math.inf
    lam_min = spectrum.lambda_min
    # inverse de la CDF: U dans (0, 1]
    u = 1.0 - gen.random()
    return float(np.sum(1.0 / spectrum.eigenvalues)), 1.0 / lam_min, -math.log(u) / lam_min


def sample_design_replicates(input_dist, n, reps, rng, workers=1):
    """Tirages communs à square_bounds et lemma_bounds_check"""
    if reps < MIN_REPS:
        raise InvalidInput(f"reps doit être ≥ {MIN_REPS}, reçu {reps}")
    if n < 1:
        raise InvalidInput(f"n doit être ≥ 1, reçu {n}")
    W = inverse_sqrt(input_dist.covariance())
    rows = np.asarray(run_replicates(partial(_design_replicate, input_dist, W, int(n)), rng, reps, workers))
    return DesignReplicates(
        trace_inv=rows[:, 0].copy(),
        lam_max_inv=rows[:, 1].copy(),
        w_draws=rows[:, 2].copy(),
        n=int(n),
        d=input_dist.dim,
    )


def _quantile(values, level):
    return empirical_quantile(EmpiricalDistribution(values), level)


@dataclass(frozen=True)
class SquareBounds:
    lower: float
    upper: float
    eps_value: float
    eps_lower: float
    eps_upper: float


def _singularity_interval(input_dist, replicates):
    d = input_dist.dim
    if isinstance(input_dist, GaussianInput) or d == 1 or replicates.n < d:
        est = singularity_prob(input_dist, replicates.n)
        return est.value, est.lower, est.upper
    lower, upper = wilson_interval(replicates.singular_count, replicates.reps)
    return replicates.singular_fraction, lower, upper


def square_bounds(input_dist, sigma2, n, delta, reps, rng, workers=1, replicates=None):
    """
    Encadrement de R*_{n, ε_n+δ} pour l'erreur carrée:

    supérieur 2(σ²/n)[Q_Tr(1−ε_n−δ/2) + Q_W(1−ε_n−δ/2)],
    inférieur (σ²/6428n)[Q_Tr(1−ε_n−4δ) + Q_W(1−ε_n−4δ)]

    ε_n est exact quand c'est possible, sinon estimé avec un intervalle de
    Wilson dont on prend le bord prudent de chaque côté.

    Raises:
        InvalidLevel: si δ ∉ (0, (1−ε̂_n)/4)
    """
    _check_delta(delta)
    if not sigma2 > 0:
        raise InvalidInput(f"σ² doit être > 0, reçu {sigma2}")
    if replicates is None:
        replicates = sample_design_replicates(input_dist, n, reps, rng, workers)
    eps, eps_lo, eps_hi = _singularity_interval(input_dist, replicates)
    if not delta < (1.0 - eps_hi) / 4.0:
        raise InvalidLevel(f"square_bounds: δ={delta} hors de (0, (1−ε_n)/4) avec ε_n ≤ {eps_hi:.4g}")

    upper_level = 1.0 - eps_lo - 0.5 * delta
    lower_level = 1.0 - eps_hi - 4.0 * delta
    upper = (
        2.0
        * sigma2
        / n
        * (_quantile(replicates.trace_inv, upper_level).value + _quantile(replicates.w_draws, upper_level).value)
    )
    lower = (
        sigma2
        / (BOUNDS_LOWER_CONSTANT * n)
        * (_quantile(replicates.trace_inv, lower_level).value + _quantile(replicates.w_draws, lower_level).value)
    )
    return SquareBounds(lower=lower, upper=upper, eps_value=eps, eps_lower=eps_lo, eps_upper=eps_hi)


def _slack(big, small):
    if big == small:
        return 0.0
    return big - small


@dataclass(frozen=True)
class LemmaCheck:
    """Pentes (membre de droite − membre de gauche) et erreurs standard des quantiles"""

    slacks: dict
    se: dict

    def holds(self, z=0.0):
        """Pentes ≥ −z·se; z = 0 exige des pentes positives ou nulles"""
        return all(self.slacks[key] >= -z * self.se[key] for key in self.slacks)


def lemma_bounds_check(replicates, delta):
    """
    d(1−δ) ≤ Q_Tr(1−δ) ≤ d·Q_{λ_max(Σ̃⁻¹)}(1−δ)
    log(1/δ) ≤ Q_W(1−δ) ≤ Q_{λ_max(Σ̃⁻¹)}(1−δ/2)·log(2/δ)

    Raises:
        InvalidLevel: si δ ≤ ε̂_n
    """
    _check_delta(delta)
    if not delta > replicates.singular_fraction:
        raise InvalidLevel(f"lemma_bounds_check: δ={delta} ≤ ε̂_n={replicates.singular_fraction}")
    d = replicates.d
    q_tr = _quantile(replicates.trace_inv, 1.0 - delta)
    q_lam = _quantile(replicates.lam_max_inv, 1.0 - delta)
    q_lam_half = _quantile(replicates.lam_max_inv, 1.0 - 0.5 * delta)
    q_w = _quantile(replicates.w_draws, 1.0 - delta)
    slacks = {
        "trace_lower": _slack(q_tr.value, d * (1.0 - delta)),
        "trace_upper": _slack(d * q_lam.value, q_tr.value),
        "w_lower": _slack(q_w.value, math.log(1.0 / delta)),
        "w_upper": _slack(q_lam_half.value * math.log(2.0 / delta), q_w.value),
    }
    se = {
        "trace_lower": q_tr.se_proxy,
        "trace_upper": d * q_lam.se_proxy + q_tr.se_proxy,
        "w_lower": q_w.se_proxy,
        "w_upper": q_lam_half.se_proxy * math.log(2.0 / delta) + q_w.se_proxy,
    }
    return LemmaCheck(slacks=slacks, se=se)


# ---------------------------------------------------------------------------
# Bornes explicites
# ---------------------------------------------------------------------------


def pnorm_lower_bound(p, sigma2, d, n, delta):
    """R* ≥ m(p−2)/(16(p−1))·σ^p·[d + log(1/δ)]/n"""
    if not p > 2:
        raise InvalidInput(f"pnorm_lower_bound: p doit être > 2, reçu {p}")
    if not 0 < delta < 0.5:
        raise InvalidLevel(f"pnorm_lower_bound: δ doit être dans (0, 1/2), reçu {delta}")
    coefficient = std_normal_abs_moment(p - 2.0) / (16.0 * (p - 1.0))
    return coefficient * sigma2 ** (0.5 * p) * (d + math.log(1.0 / delta)) / n


def k_constant(p):
    """K(p) = (p−1)²·m(2p−2)/m(p−2)"""
    return (p - 1.0) ** 2 * std_normal_abs_moment(2.0 * p - 2.0) / std_normal_abs_moment(p - 2.0)


@dataclass(frozen=True)
class GuaranteeExtras:
    sigma2: float
    mu: Optional[float] = None
    norm_equiv: Optional[float] = None


@dataclass(frozen=True)
class GuaranteeRHS:
    risk_bound: float
    min_n: float


def guarantee_rhs(error, params, extras, n, d, delta):
    """
    Membres de droite des garanties de la procédure min-max

    Carrée: 100²σ²(d+log(1/δ))/n pour n ≥ 800²(8log(6d)[λ_max(S)+1] + [R+1]log(1/δ)).
    Puissance p: 120²K(p)σ^p[d+log(1/δ)]/n, la taille minimale combinant r(p), μ et N(P_X, p).

    Raises:
        InvalidInput: si μ ou N(P_X, p) manquent pour l'erreur puissance
    """
    _check_delta(delta)
    if extras is None or not extras.sigma2 > 0:
        raise InvalidInput("guarantee_rhs: extras.sigma2 > 0 requis")
    sigma2 = extras.sigma2
    log_delta = math.log(1.0 / delta)
    eig_term = 8.0 * math.log(6.0 * d) * (params.lambda_max_S + 1.0) + (params.R + 1.0) * log_delta

    if error.kind == "square":
        risk = GUARANTEE_SQUARE**2 * sigma2 * (d + log_delta) / n
        return GuaranteeRHS(risk_bound=risk, min_n=GUARANTEE_SAMPLE_SQUARE**2 * eig_term)

    if extras.mu is None or extras.norm_equiv is None:
        raise InvalidInput("guarantee_rhs: μ et norm_equivalence requis pour l'erreur puissance")
    if not extras.mu > 0:
        raise InvalidInput(f"guarantee_rhs: μ doit être > 0, reçu {extras.mu}")
    p, mu = error.p, extras.mu
    r = std_normal_abs_moment(2.0 * p - 2.0) / std_normal_abs_moment(p - 2.0) * sigma2 ** (0.5 * p)
    risk = GUARANTEE_PPOWER**2 * k_constant(p) * sigma2 ** (0.5 * p) * (d + log_delta) / n
    min_n = r ** ((p - 2.0) / (p - 1.0)) * mu ** (-p / (p - 1.0)) * eig_term + (
        GUARANTEE_SAMPLE_PPOWER**2
        * r
        * mu ** (-p / (p - 2.0))
        * p**4
        * extras.norm_equiv ** (2.0 * p / (p - 2.0))
        * (d + math.log(4.0 / delta))
    )
    return GuaranteeRHS(risk_bound=risk, min_n=min_n)


def sufficient_sample_size(params, d, delta):
    """
    max{128[4log(3d)λ_max(S) + R·log(2/δ)], log(3d)/(18λ_max(S)), log(2/δ)/R}

    Un dénominateur nul donne +∞.
    """
    if not 0 < delta < 0.5:
        raise InvalidLevel(f"sufficient_sample_size: δ doit être dans (0, 1/2), reçu {delta}")
    lam, R = params.lambda_max_S, params.R
    log3d = math.log(3.0 * d)
    log2 = math.log(2.0 / delta)
    first = 128.0 * (4.0 * log3d * lam + R * log2)
    second = log3d / (18.0 * lam) if lam > 0 else math.inf
    third = log2 / R if R > 0 else math.inf
    return max(first, second, third)


def sufficiency_check(input_dist, sigma2, n, delta, params=None):
    """Vrai si n satisfait la condition suffisante pour R* ≍ σ²(d + log(1/δ))/n"""
    if not sigma2 > 0:
        raise InvalidInput(f"σ² doit être > 0, reçu {sigma2}")
    params = params or matrix_params(input_dist)
    return n >= sufficient_sample_size(params, input_dist.dim, delta)


# ---------------------------------------------------------------------------
# Moyenne et variance
# ---------------------------------------------------------------------------


def _variance_replicate(n, sigma2, mu, stream):
    x = mu + math.sqrt(sigma2) * stream.generator().standard_normal(n)
    return float(np.mean(np.square(x - mu)))


def variance_quantile_risk_mc(n, delta, reps, rng, weighted=True, sigma2=1.0, mu=0.0, workers=1):
    """
    Risque quantile de |log(σ²/σ̂²)| pour l'estimateur minimax (weighted) ou
    pour le second moment empirique (non pondéré)
    """
    _check_delta(delta)
    _check_reps(reps, delta)
    if not sigma2 > 0:
        raise InvalidInput(f"σ² doit être > 0, reçu {sigma2}")
    weight = 1.0
    if weighted:
        # le poids ne dépend que de (n, δ)
        weight = minimax_variance_estimate(np.ones(n), 0.0, delta).weight
    moments = run_replicates(partial(_variance_replicate, int(n), float(sigma2), float(mu)), rng, reps, workers)
    losses = [log_ratio_loss(sigma2, m * weight) for m in moments]
    return empirical_quantile(EmpiricalDistribution(losses), 1.0 - delta)


@dataclass(frozen=True)
class MeanMinimaxReport:
    sample_mean: QuantileEstimate
    direct: QuantileEstimate


def _mean_replicate(L, error, n, stream):
    gen = stream.generator()
    d = L.shape[0]
    X = gen.standard_normal((n, d)) @ L.T
    Z = L @ gen.standard_normal(d) / math.sqrt(n)
    loss_mean = float(error.value(np.linalg.norm(sample_mean(X))))
    loss_direct = float(error.value(np.linalg.norm(Z)))
    return loss_mean, loss_direct


def mean_minimax_mc(Sigma, error, n, delta, reps, rng, workers=1):
    """
    Risque quantile de la moyenne empirique (données N(0, Σ)) face à Q_{e(Z)}(1−δ),
    Z ~ N(0, Σ/n), pour la perte e(‖μ̂ − μ‖)
    """
    _check_delta(delta)
    _check_reps(reps, delta)
    L = cholesky(Sigma)
    rows = np.asarray(run_replicates(partial(_mean_replicate, L, error, int(n)), rng, reps, workers))
    return MeanMinimaxReport(
        sample_mean=_quantile(rows[:, 0], 1.0 - delta),
        direct=_quantile(rows[:, 1], 1.0 - delta),
    )


# ---------------------------------------------------------------------------
# Rapport minimax
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MinimaxReport:
    n: int
    d: int
    delta: float
    sigma2: float
    exact_mc: QuantileEstimate
    asymptotic_formula: float
    lower_bound_pnorm: Optional[float] = None
    bounds_upper: Optional[float] = None
    bounds_lower: Optional[float] = None
    sufficient_n: Optional[float] = None
    values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def as_row(self, seed):
        def opt(x):
            return math.nan if x is None else x

        return {
            "n": self.n,
            "d": self.d,
            "delta": self.delta,
            "sigma2": self.sigma2,
            "reps": self.exact_mc.replicates,
            "exact_mc": self.exact_mc.value,
            "se_proxy": self.exact_mc.se_proxy,
            "asymptotic": self.asymptotic_formula / self.n,
            "lower_bound_pnorm": opt(self.lower_bound_pnorm),
            "bounds_lower": opt(self.bounds_lower),
            "bounds_upper": opt(self.bounds_upper),
            "sufficient_n": opt(self.sufficient_n),
            "seed": seed,
        }


def minimax_report(input_dist, error, sigma2, n, delta, reps, rng, workers=1, params=None):
    """
    Risque minimax exact et formules associées pour un (P_X, e, σ², n, δ)

    Les bornes d'encadrement (erreur carrée) sont omises si le niveau sort de
    leur domaine de validité.
    """
    _check_delta(delta)
    _check_reps(reps, delta)
    d = input_dist.dim
    values = gauss_minimax_values_mc(input_dist, error, sigma2, n, reps, rng.child(0), workers)
    exact = empirical_quantile(EmpiricalDistribution(values), 1.0 - delta)
    asymptotic = asymptotic_minimax(error, sigma2, delta, d)

    lower_pnorm = bounds_lower = bounds_upper = sufficient_n = None
    if error.kind == "ppower" and delta < 0.5:
        lower_pnorm = pnorm_lower_bound(error.p, sigma2, d, n, delta)
    if error.kind == "square":
        try:
            bounds = square_bounds(input_dist, sigma2, n, delta, reps, rng.child(1), workers)
            bounds_lower, bounds_upper = bounds.lower, bounds.upper
        except InvalidLevel as exc:
            logger.warning(f"Bornes d'encadrement ignorées: {exc}", extra={"n": int(n), "delta": delta})
    if delta < 0.5:
        params = params or matrix_params(input_dist, rng=rng.child(2))
        sufficient_n = sufficient_sample_size(params, d, delta)
        if math.isfinite(sufficient_n):
            sufficient_n = float(math.ceil(sufficient_n))

    return MinimaxReport(
        n=int(n),
        d=d,
        delta=float(delta),
        sigma2=float(sigma2),
        exact_mc=exact,
        asymptotic_formula=asymptotic,
        lower_bound_pnorm=lower_pnorm,
        bounds_upper=bounds_upper,
        bounds_lower=bounds_lower,
        sufficient_n=sufficient_n,
        values=values,
    )
