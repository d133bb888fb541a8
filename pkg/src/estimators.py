"""
Estimateurs: moindres carrés, procédure min-max tronquée ŵ_{n,k},
moyenne empirique et estimateur minimax de la variance
"""

import math
import time
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import linalg, optimize

from src.errors import InvalidInput, InvalidLevel, NumericOverflow
from src.logger import get_logger
from src.numerics import (
    as_generator,
    cholesky,
    inv_gamma_cdf,
    std_normal_abs_moment,
    sym_eigen,
    sym_part,
)
from src.truncation import TrimLevel, trimmed_sum, trimmed_sum_subgradient

logger = get_logger(__name__)

SINGULAR_TOL = 1e-10


# ---------------------------------------------------------------------------
# Fonction d'erreur et données
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorFn:
    """
    Fonction d'erreur e: carré t²/2 ou puissance |t|^p/[p(p−1)], p > 2
    """

    kind: str = "square"
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in ("square", "ppower"):
            raise InvalidInput(f"ErrorFn: type inconnu '{self.kind}'")
        if self.kind == "square":
            object.__setattr__(self, "p", 2.0)
        elif not (self.p > 2 and math.isfinite(self.p)):
            raise InvalidInput(f"ErrorFn: p doit être dans (2, ∞), reçu {self.p}")

    @classmethod
    def square(cls):
        return cls("square")

    @classmethod
    def ppower(cls, p):
        return cls("ppower", float(p))

    @classmethod
    def parse(cls, text):
        """'square' ou 'ppower:p'"""
        text = str(text).strip().lower()
        if text == "square":
            return cls.square()
        if text.startswith("ppower:"):
            try:
                return cls.ppower(float(text.split(":", 1)[1]))
            except ValueError as exc:
                raise InvalidInput(f"ErrorFn: exposant illisible dans '{text}'") from exc
        raise InvalidInput(f"ErrorFn: '{text}' n'est ni 'square' ni 'ppower:p'")

    @property
    def label(self):
        return "square" if self.kind == "square" else f"ppower:{self.p:g}"

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "square":
            return 0.5 * t * t
        return np.abs(t) ** self.p / (self.p * (self.p - 1.0))

    def first(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "square":
            return t
        return np.sign(t) * np.abs(t) ** (self.p - 1.0) / (self.p - 1.0)

    def second(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "square":
            return np.ones_like(t)
        return np.abs(t) ** (self.p - 2.0)

    def curvature(self, sigma2):
        """α = E[e″(η)]/2 pour η ~ N(0, σ²)"""
        if self.kind == "square":
            return 0.5
        return 0.5 * std_normal_abs_moment(self.p - 2.0) * sigma2 ** (0.5 * (self.p - 2.0))


@dataclass(frozen=True, eq=False)
class Dataset:
    """n couples (x_i, y_i) en dimension d"""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != y.size or y.size == 0:
            raise InvalidInput(f"Dataset: formes incompatibles X{X.shape}, y{y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def gram(self):
        """Σ̂_n = XᵀX/n"""
        return sym_part(self.X.T @ self.X / self.n)

    def residuals(self, w):
        return self.X @ np.asarray(w, dtype=float) - self.y


@dataclass(frozen=True, eq=False)
class FitResult:
    w_hat: np.ndarray
    iterations: int = 0
    inner_iterations: int = 0
    grad_norm_final: float = 0.0
    objective_trace: tuple = ()
    singular: bool = False


@dataclass(frozen=True, eq=False)
class MinMaxConfig:
    """Réglages de la descente-montée sous-gradient"""

    k: TrimLevel
    outer_steps: int = 500
    inner_steps: int = 20
    step_size: float = 1.0
    tolerance: float = 1e-7
    init: Union[str, np.ndarray] = "ols"
    keep_trace: bool = False

    def __post_init__(self):
        if not isinstance(self.k, TrimLevel):
            raise InvalidInput("MinMaxConfig.k doit être un TrimLevel")
        if self.outer_steps < 1 or self.inner_steps < 1:
            raise InvalidInput("MinMaxConfig: outer_steps et inner_steps doivent être ≥ 1")
        if not self.step_size > 0 or not self.tolerance > 0:
            raise InvalidInput("MinMaxConfig: step_size et tolerance doivent être > 0")
        if isinstance(self.init, str) and self.init not in ("ols", "zero"):
            raise InvalidInput(f"MinMaxConfig.init inconnu: '{self.init}'")


# ---------------------------------------------------------------------------
# Moindres carrés
# ---------------------------------------------------------------------------


def ols_fit(dataset):
    """
    Moindres carrés par les équations normales.

    Cholesky si Σ̂_n est inversible (λ_min > 1e-10·λ_max), sinon solution de
    norme minimale par décomposition spectrale avec le drapeau singular.
    """
    G = dataset.gram()
    b = dataset.X.T @ dataset.y / dataset.n
    spectrum = sym_eigen(G)
    lam_max = spectrum.lambda_max
    if lam_max > 0 and spectrum.lambda_min > SINGULAR_TOL * lam_max:
        L = cholesky(G)
        w = linalg.solve_triangular(L.T, linalg.solve_triangular(L, b, lower=True), lower=False)
        singular = False
    else:
        keep = spectrum.eigenvalues > SINGULAR_TOL * max(lam_max, 0.0)
        Q = spectrum.eigenvectors[:, keep]
        w = Q @ ((Q.T @ b) / spectrum.eigenvalues[keep]) if keep.any() else np.zeros(dataset.d)
        singular = True
    grad = G @ w - b
    return FitResult(w_hat=w, grad_norm_final=float(np.linalg.norm(grad)), singular=singular)


# ---------------------------------------------------------------------------
# Procédure min-max tronquée
# ---------------------------------------------------------------------------


def trim_level_for_delta(delta, n):
    """k = clamp(round(8·ln(4/δ)), 1, ⌊n/8⌋)"""
    if not 0 < delta < 1:
        raise InvalidLevel(f"δ hors de (0,1): {delta}")
    k = int(round(8.0 * math.log(4.0 / delta)))
    k = max(1, min(k, n // 8))
    return TrimLevel(k, n)


def _differences(w, v, dataset, error):
    return error.value(dataset.residuals(w)) - error.value(dataset.residuals(v))


def psi_k(w, v, dataset, error, k):
    """ψ_k(w, v) = n⁻¹·φ_k[(e(⟨w,X_i⟩−Y_i) − e(⟨v,X_i⟩−Y_i))_i]"""
    return trimmed_sum(_differences(w, v, dataset, error), k).clamped_total / dataset.n


def _grad_w(w, v, dataset, error, k):
    a = _differences(w, v, dataset, error)
    per_sample = error.first(dataset.residuals(w))[:, None] * dataset.X
    return trimmed_sum_subgradient(a, per_sample, k) / dataset.n


def _grad_v(w, v, dataset, error, k):
    a = _differences(w, v, dataset, error)
    per_sample = -error.first(dataset.residuals(v))[:, None] * dataset.X
    return trimmed_sum_subgradient(a, per_sample, k) / dataset.n


def _initial_point(dataset, config):
    if isinstance(config.init, str):
        if config.init == "ols":
            return ols_fit(dataset).w_hat.copy()
        return np.zeros(dataset.d)
    w0 = np.asarray(config.init, dtype=float).ravel()
    if w0.size != dataset.d:
        raise InvalidInput(f"MinMaxConfig.init de dimension {w0.size}, attendu {dataset.d}")
    return w0.copy()


def _base_step(dataset, error, config, w0, lam_max):
    scale = lam_max if lam_max > 0 else 1.0
    if error.kind == "ppower":
        # courbure locale typique e″ au point initial
        curvature = float(np.median(error.second(dataset.residuals(w0))))
        scale *= max(curvature, 1e-12)
    return config.step_size / scale


def _check_finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericOverflow(
                "minmax_fit: valeur non finie (|t|^p déborde), remettre les données à l'échelle"
            )


def minmax_fit(dataset, error, config):
    """
    Descente-montée sous-gradient alternée pour argmin_w max_v ψ_k(w, v)

    À chaque pas externe: v repart de w, inner_steps pas de montée sur
    ψ_k(w, ·), puis un pas de descente sur ψ_k(·, v). Le w retenu minimise le
    substitut max_s ψ_k(w_t, v_s) sur les itérés internes.

    Args:
        dataset: Dataset
        error: ErrorFn
        config: MinMaxConfig

    Returns:
        FitResult
    """
    if config.k.n != dataset.n:
        raise InvalidInput(f"TrimLevel prévu pour n={config.k.n}, données de taille {dataset.n}")
    start = time.perf_counter()
    k = config.k
    w = _initial_point(dataset, config)
    spectrum = sym_eigen(dataset.gram())
    singular = not (spectrum.lambda_max > 0 and spectrum.lambda_min > SINGULAR_TOL * spectrum.lambda_max)
    eta = _base_step(dataset, error, config, w, spectrum.lambda_max)
    diminishing = error.kind == "ppower"

    best_w, best_value = w.copy(), math.inf
    trace = []
    grad_norm = math.inf
    inner_total = 0
    outer = 0

    for outer in range(1, config.outer_steps + 1):
        step = eta / math.sqrt(outer) if diminishing else eta
        v = w.copy()
        surrogate = 0.0
        for _ in range(config.inner_steps):
            v = v + step * _grad_v(w, v, dataset, error, k)
            _check_finite(v)
            surrogate = max(surrogate, psi_k(w, v, dataset, error, k))
            inner_total += 1
        _check_finite(np.array([surrogate]))
        if config.keep_trace:
            trace.append(surrogate)
        if surrogate < best_value:
            best_value, best_w = surrogate, w.copy()

        g = _grad_w(w, v, dataset, error, k)
        _check_finite(g)
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= config.tolerance:
            break
        w = w - step * g
        _check_finite(w)

    logger.debug(
        "minmax_fit terminé",
        extra={
            "n": dataset.n,
            "d": dataset.d,
            "duration_ms": round((time.perf_counter() - start) * 1000, 2),
        },
    )
    return FitResult(
        w_hat=best_w,
        iterations=outer,
        inner_iterations=inner_total,
        grad_norm_final=grad_norm,
        objective_trace=tuple(trace),
        singular=singular,
    )


def minmax_certificate(w, dataset, error, k, probes=32, rng=None):
    """
    max(0, max_j ψ_k(w, v_j)) sur des sondes aléatoires autour de w et sur l'OLS

    Une valeur proche de 0 indique que w est proche d'un point selle.
    """
    gen = as_generator(rng) if rng is not None else np.random.default_rng(0)
    w = np.asarray(w, dtype=float)
    residuals = dataset.residuals(w)
    lam_max = sym_eigen(dataset.gram()).lambda_max
    spread = float(np.std(residuals)) / math.sqrt(lam_max) if lam_max > 0 else 1.0
    spread = max(spread, 1e-12)
    candidates = [ols_fit(dataset).w_hat]
    for _ in range(probes):
        radius = spread * gen.uniform(0.0, 1.0)
        direction = gen.standard_normal(dataset.d)
        direction /= max(np.linalg.norm(direction), 1e-300)
        candidates.append(w + radius * direction)
    return max(0.0, max(psi_k(w, v, dataset, error, k) for v in candidates))


# ---------------------------------------------------------------------------
# Moyenne et variance
# ---------------------------------------------------------------------------


def sample_mean(samples):
    """Moyenne arithmétique de n vecteurs (ou scalaires)"""
    arr = np.asarray(samples, dtype=float)
    if arr.shape[0] == 0:
        raise InvalidInput("sample_mean: échantillon vide")
    return arr.mean(axis=0)


def _interval_bounds(t):
    lower = -math.expm1(-2.0 * t) / (2.0 * t)
    try:
        upper = math.expm1(2.0 * t) / (2.0 * t)
    except OverflowError:
        upper = math.inf
    return lower, upper


def p_alpha(t, alpha):
    """
    p_α(t) = P((1−e^{−2t})/(2t) ≤ Z ≤ (e^{2t}−1)/(2t)), Z ~ Inv-Gamma(α, α)
    """
    if not t > 0:
        raise InvalidInput(f"p_alpha: t doit être > 0, reçu {t}")
    if not alpha > 0:
        raise InvalidInput(f"p_alpha: α doit être > 0, reçu {alpha}")
    lower, upper = _interval_bounds(t)
    return inv_gamma_cdf(upper, alpha, alpha) - inv_gamma_cdf(lower, alpha, alpha)


def p_alpha_inverse(level, alpha):
    """
    p_α⁻(level) par recherche de racine sur la fonction strictement croissante p_α
    """
    if not 0 < level < 1:
        raise InvalidLevel(f"p_alpha_inverse: niveau hors de (0,1): {level}")

    def gap(t):
        return p_alpha(t, alpha) - level

    lo, hi = 1.0, 1.0
    while gap(lo) > 0:
        lo *= 0.5
    while gap(hi) < 0:
        hi *= 2.0
    return optimize.brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def sinh_ratio(x):
    """sinh(x)/x avec la limite 1 en 0"""
    if x == 0:
        return 1.0
    if abs(x) < 1e-4:
        return 1.0 + x * x / 6.0
    return math.sinh(x) / x


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    weight: float
    t_star: float
    degenerate: bool = False


def minimax_variance_estimate(samples, mu, delta):
    """
    σ̂² = (Σ(X_i−μ)²/n)·sinh(t*)/t*, t* = p_{n/2}⁻(1−δ)

    Args:
        samples: Observations réelles
        mu: Moyenne connue
        delta: Niveau δ dans (0,1)

    Returns:
        VarianceEstimate (degenerate=True si tous les points valent μ)
    """
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidInput("minimax_variance_estimate: échantillon vide")
    if not 0 < delta < 1:
        raise InvalidLevel(f"δ hors de (0,1): {delta}")
    t_star = p_alpha_inverse(1.0 - delta, 0.5 * arr.size)
    weight = sinh_ratio(t_star)
    second_moment = float(np.mean(np.square(arr - mu)))
    return VarianceEstimate(
        value=second_moment * weight,
        weight=weight,
        t_star=t_star,
        degenerate=second_moment == 0.0,
    )


def log_ratio_loss(sigma2, estimate):
    """Perte en erreur relative |log(σ²/σ̂²)|"""
    if estimate <= 0:
        return math.inf
    return abs(math.log(sigma2 / estimate))
