"""
Noyau numérique: fonctions spéciales, algèbre linéaire symétrique dense,
quadrature de Gauss-Hermite et flux aléatoires reproductibles.

Les noyaux viennent de numpy (LAPACK) et scipy.special; ce module fixe les
contrats (ordre des valeurs propres, signes, tolérances, erreurs).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from src.errors import InvalidInput, InvalidLevel, NotPD

PD_TOL = 1e-12
HERMITE_MIN_NODES = 8
HERMITE_MAX_NODES = 256


# ---------------------------------------------------------------------------
# Matrices symétriques
# ---------------------------------------------------------------------------


def _square_array(A, name="A"):
    arr = np.asarray(A, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise InvalidInput(f"{name} doit être une matrice carrée non vide, forme {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contient des valeurs non finies")
    return arr


def sym_part(A):
    """Partie symétrique (A + Aᵀ)/2, exactement symétrique en stockage"""
    arr = np.asarray(A, dtype=float)
    return 0.5 * (arr + arr.T)


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Matrice symétrique d×d finie, stockée en lecture seule"""

    entries: np.ndarray

    def __post_init__(self):
        arr = _square_array(self.entries, "SymMatrix")
        if not np.array_equal(arr, arr.T):
            raise InvalidInput("SymMatrix doit être symétrique (égalité exacte du stockage)")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @classmethod
    def from_array(cls, A):
        """Construit une SymMatrix en symétrisant A"""
        return cls(sym_part(_square_array(A)))

    @property
    def dim(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Valeurs propres croissantes et vecteurs propres orthonormés (en colonnes)"""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def lambda_min(self):
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self):
        return float(self.eigenvalues[-1])


def sym_eigen(A):
    """
    Décomposition spectrale d'une matrice symétrique

    Args:
        A: SymMatrix ou tableau carré symétrique

    Returns:
        Spectrum (valeurs propres croissantes); chaque vecteur propre a sa
        composante de plus grand module positive, pour un résultat déterministe
    """
    arr = _square_array(A)
    scale = max(1.0, float(np.max(np.abs(arr))))
    if np.max(np.abs(arr - arr.T)) > 1e-12 * scale:
        raise InvalidInput("sym_eigen: matrice non symétrique")
    values, vectors = np.linalg.eigh(sym_part(arr))
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors = vectors * signs
    values.setflags(write=False)
    vectors.setflags(write=False)
    return Spectrum(values, vectors)


def is_numerically_pd(spectrum, tol=PD_TOL):
    """λ_min > tol·λ_max (et λ_max > 0)"""
    return spectrum.lambda_max > 0 and spectrum.lambda_min > tol * spectrum.lambda_max


def cholesky(A):
    """
    Facteur de Cholesky inférieur L tel que LLᵀ = A

    Raises:
        NotPD: si λ_min ≤ 1e-12·λ_max ou si la factorisation échoue
    """
    arr = _square_array(A)
    spectrum = sym_eigen(arr)
    if not is_numerically_pd(spectrum):
        raise NotPD(
            f"cholesky: matrice non définie positive "
            f"(λ_min={spectrum.lambda_min:.3e}, λ_max={spectrum.lambda_max:.3e})"
        )
    try:
        return np.linalg.cholesky(sym_part(arr))
    except np.linalg.LinAlgError as exc:
        raise NotPD(f"cholesky: pivot non positif ({exc})") from exc


def inverse_sqrt(A):
    """Σ^{-1/2} par décomposition spectrale; NotPD si Σ est singulière"""
    spectrum = sym_eigen(A)
    if not is_numerically_pd(spectrum):
        raise NotPD(
            f"Σ singulière ou non définie positive (λ_min={spectrum.lambda_min:.3e})"
        )
    Q = spectrum.eigenvectors
    return sym_part((Q / np.sqrt(spectrum.eigenvalues)) @ Q.T)


# ---------------------------------------------------------------------------
# Fonctions spéciales
# ---------------------------------------------------------------------------


def reg_lower_gamma(a, x):
    """
    Fonction gamma incomplète inférieure régularisée P(a, x)

    Args:
        a: Paramètre de forme (> 0)
        x: Point d'évaluation (≥ 0, +∞ autorisé)

    Returns:
        P(a, x) dans [0, 1]
    """
    if not a > 0:
        raise InvalidInput(f"reg_lower_gamma: a doit être > 0, reçu {a}")
    x_arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(x_arr)) or np.any(x_arr < 0):
        raise InvalidInput(f"reg_lower_gamma: x doit être ≥ 0, reçu {x}")
    result = special.gammainc(a, x_arr)
    return float(result) if result.ndim == 0 else result


def inv_gamma_cdf(x, alpha, beta):
    """
    CDF de la loi Inv-Gamma(α, β): 1 − P(α, β/x)
    """
    if not (alpha > 0 and beta > 0):
        raise InvalidInput(f"inv_gamma_cdf: α et β doivent être > 0 (α={alpha}, β={beta})")
    x_arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(x_arr)) or np.any(x_arr <= 0):
        raise InvalidInput(f"inv_gamma_cdf: x doit être > 0, reçu {x}")
    with np.errstate(divide="ignore"):
        result = special.gammaincc(alpha, beta / x_arr)
    return float(result) if result.ndim == 0 else result


def chi2_quantile(level, dof):
    """
    Quantile Q_{χ²_dof}(level) par bissection (brentq) sur P(dof/2, x/2)
    """
    if not 0.0 < level < 1.0:
        raise InvalidLevel(f"chi2_quantile: niveau hors de (0,1): {level}")
    if not dof > 0:
        raise InvalidInput(f"chi2_quantile: degrés de liberté > 0 requis, reçu {dof}")
    half = 0.5 * dof

    def gap(x):
        return special.gammainc(half, 0.5 * x) - level

    upper = max(1.0, 2.0 * dof)
    while gap(upper) < 0:
        upper *= 2.0
    return optimize.brentq(gap, 0.0, upper, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def std_normal_abs_moment(p):
    """
    Moment absolu m(p) = E|Z|^p = 2^{p/2}·Γ((p+1)/2)/√π, Z ~ N(0, 1)
    """
    if p < 0:
        raise InvalidInput(f"std_normal_abs_moment: p doit être ≥ 0, reçu {p}")
    return math.exp(0.5 * p * math.log(2.0) + special.gammaln(0.5 * (p + 1.0)) - 0.5 * math.log(math.pi))


def abs_moment_by_quadrature(p):
    """E|Z|^p par intégration adaptative de |t|^p·φ(t) (oracle de contrôle)"""

    def integrand(t):
        return t**p * math.exp(-0.5 * t * t)

    value, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return 2.0 * value / math.sqrt(2.0 * math.pi)


def verify_abs_moment_formula(ps=(1.0, 2.0, 2.5, 3.0, 4.0, 6.0)):
    """
    Compare la forme close de m(p) à l'intégration numérique

    Returns:
        dict p -> erreur relative
    """
    errors = {}
    for p in ps:
        reference = abs_moment_by_quadrature(p)
        errors[p] = abs(std_normal_abs_moment(p) - reference) / reference
    return errors


def abs_normal_cdf(r, sigma):
    """F_{|Z|}(r) = erf(r/(σ√2)) pour Z ~ N(0, σ²)"""
    return special.erf(np.asarray(r, dtype=float) / (sigma * math.sqrt(2.0)))


def abs_normal_cdf_bounds(r, sigma):
    """
    Encadrement de F_{|Z|}(r):
    √(1 − exp(−r²/2σ²)) ≤ F_{|Z|}(r) ≤ √(1 − exp(−2r²/(πσ²)))

    Returns:
        (borne inférieure, borne supérieure)
    """
    if not sigma > 0:
        raise InvalidInput(f"σ doit être > 0, reçu {sigma}")
    r2 = np.square(np.asarray(r, dtype=float)) / (sigma * sigma)
    lower = np.sqrt(-np.expm1(-0.5 * r2))
    upper = np.sqrt(-np.expm1(-2.0 * r2 / math.pi))
    return lower, upper


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def gauss_hermite_expectation(f, sigma, nodes=64):
    """
    E[f(η)] pour η ~ N(0, σ²) par quadrature de Gauss-Hermite

    Args:
        f: Fonction réelle, vectorisée de préférence
        sigma: Écart-type (> 0)
        nodes: Nombre de nœuds dans [8, 256]

    Returns:
        Approximation de l'espérance, exacte pour les polynômes de degré ≤ 2·nodes−1
    """
    if not HERMITE_MIN_NODES <= nodes <= HERMITE_MAX_NODES:
        raise InvalidInput(f"gauss_hermite_expectation: nodes hors de [8, 256]: {nodes}")
    if not sigma > 0:
        raise InvalidInput(f"gauss_hermite_expectation: σ doit être > 0, reçu {sigma}")
    x, w = np.polynomial.hermite.hermgauss(nodes)
    points = math.sqrt(2.0) * sigma * x
    values = np.asarray(f(points), dtype=float)
    if values.shape != points.shape:
        values = np.array([f(t) for t in points], dtype=float)
    return float(np.dot(w, values) / math.sqrt(math.pi))


# ---------------------------------------------------------------------------
# Flux aléatoires
# ---------------------------------------------------------------------------

_U64 = 2**64


@dataclass(frozen=True)
class RngStream:
    """
    Flux aléatoire (graine, identifiant de flux) à base de Philox.

    Chaque appel à generator() repart du début du flux: une tâche crée son
    générateur une fois et le garde pour elle.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) < _U64:
                raise InvalidInput(f"RngStream.{name} doit être un entier 64 bits non signé, reçu {value}")
            object.__setattr__(self, name, int(value))

    def _seed_sequence(self, *extra):
        return np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *extra))

    def generator(self):
        return np.random.Generator(np.random.Philox(self._seed_sequence()))

    def child(self, index):
        """Sous-flux indépendant numéro index"""
        state = self._seed_sequence(int(index)).generate_state(1, np.uint64)[0]
        return RngStream(self.seed, int(state))


def as_generator(rng):
    """Accepte un RngStream ou un numpy Generator"""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise InvalidInput(f"rng doit être un RngStream ou un numpy Generator, reçu {type(rng).__name__}")
