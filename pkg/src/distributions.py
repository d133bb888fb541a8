"""
Lois des entrées, modèles de bruit, classes de distributions et paramètres
géométriques: Σ, S(P_X), R(P_X), ρ(P_X), θ(P_X), N(P_X, p) et ε_n.

Les quantités définies par un supremum sur la sphère (R, θ, N) sont des
minorants certifiés obtenus par maximisation sur des directions candidates,
exacts pour les entrées gaussiennes.
"""

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np
from scipy import special

from src.errors import InvalidInput, NotFullRank, NumericFailure
from src.estimators import Dataset, ErrorFn
from src.logger import get_logger
from src.numerics import (
    RngStream,
    SymMatrix,
    as_generator,
    cholesky,
    inverse_sqrt,
    is_numerically_pd,
    std_normal_abs_moment,
    sym_eigen,
    sym_part,
)
from src.quantile_core import wilson_interval
from src.replicates import run_replicates

logger = get_logger(__name__)

PROB_TOL = 1e-12
SINGULAR_TOL = 1e-10
MAX_HYPERPLANE_COMBOS = 200_000
SPHERE_ITERATIONS = 200
MAX_POINT_CANDIDATES = 16


# ---------------------------------------------------------------------------
# Lois des entrées
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianInput:
    """X ~ N(0, Σ)"""

    cov: np.ndarray

    def __post_init__(self):
        cov = SymMatrix.from_array(self.cov).entries
        if not is_numerically_pd(sym_eigen(cov)):
            raise NotFullRank("GaussianInput: Σ doit être définie positive")
        object.__setattr__(self, "cov", cov)

    kind = "gaussian"

    @classmethod
    def standard(cls, d):
        return cls(np.eye(int(d)))

    @property
    def dim(self):
        return self.cov.shape[0]

    def covariance(self):
        return self.cov

    def sample(self, n, gen):
        L = cholesky(self.cov)
        return gen.standard_normal((n, self.dim)) @ L.T

    def to_dict(self):
        return {"kind": "gaussian", "cov": self.cov.tolist()}


@dataclass(frozen=True, eq=False)
class DiscreteInput:
    """Loi discrète finie: P(X = points[j]) = probs[j]"""

    points: np.ndarray
    probs: np.ndarray

    kind = "discrete"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        probs = np.asarray(self.probs, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape[0] != probs.size or probs.size == 0:
            raise InvalidInput(f"DiscreteInput: formes incompatibles points{pts.shape}, probs{probs.shape}")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise InvalidInput(f"DiscreteInput: probabilités invalides (somme {probs.sum():.15g})")
        if not np.all(np.isfinite(pts)):
            raise InvalidInput("DiscreteInput: points non finis")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", probs)
        if not is_numerically_pd(sym_eigen(self.covariance())):
            raise NotFullRank("DiscreteInput: support contenu dans un hyperplan (covariance singulière)")

    @classmethod
    def unit(cls):
        """X ≡ 1 en dimension 1"""
        return cls([[1.0]], [1.0])

    @classmethod
    def bernoulli(cls, rho):
        """X ∈ {0, 1} avec P(X = 0) = ρ"""
        if not 0 <= rho < 1:
            raise InvalidInput(f"bernoulli: ρ doit être dans [0, 1), reçu {rho}")
        return cls([[0.0], [1.0]], [rho, 1.0 - rho])

    @classmethod
    def signed_axes(cls, d):
        """Uniforme sur {±√d·e_j}"""
        d = int(d)
        eye = math.sqrt(d) * np.eye(d)
        return cls(np.vstack([eye, -eye]), np.full(2 * d, 1.0 / (2 * d)))

    @property
    def dim(self):
        return self.points.shape[1]

    def covariance(self):
        return sym_part((self.points * self.probs[:, None]).T @ self.points)

    def sample(self, n, gen):
        idx = gen.choice(self.probs.size, size=n, p=self.probs)
        return self.points[idx]

    def to_dict(self):
        return {"kind": "discrete", "points": self.points.tolist(), "probs": self.probs.tolist()}


@dataclass(frozen=True)
class CoordKurtosisInput:
    """
    Coordonnées indépendantes de variance 1: la première vaut ±√κ₁ avec
    probabilité 1/(2κ₁) chacune et 0 sinon (kurtosis κ₁), les autres sont N(0, 1)
    """

    d: int
    kappa: float

    kind = "coord_kurtosis"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InvalidInput(f"CoordKurtosisInput: d doit être un entier ≥ 1, reçu {self.d}")
        if not (self.kappa >= 1 and math.isfinite(self.kappa)):
            raise InvalidInput(f"CoordKurtosisInput: κ₁ doit être ≥ 1, reçu {self.kappa}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def dim(self):
        return self.d

    def covariance(self):
        return np.eye(self.d)

    def sample(self, n, gen):
        X = gen.standard_normal((n, self.d))
        u = gen.random(n)
        root = math.sqrt(self.kappa)
        half = 0.5 / self.kappa
        X[:, 0] = np.where(u < half, root, np.where(u < 2 * half, -root, 0.0))
        return X

    def to_dict(self):
        return {"kind": "coord_kurtosis", "d": self.d, "kappa": self.kappa}


def input_from_dict(data):
    """Construit une loi d'entrée à partir de sa forme sérialisée"""
    if not isinstance(data, dict) or "kind" not in data:
        raise InvalidInput("input: objet avec une clé 'kind' attendu")
    kind = data["kind"]
    allowed = {
        "gaussian": {"kind", "cov", "d"},
        "discrete": {"kind", "points", "probs"},
        "coord_kurtosis": {"kind", "d", "kappa"},
        "unit": {"kind"},
        "bernoulli": {"kind", "rho"},
        "signed_axes": {"kind", "d"},
    }
    if kind not in allowed:
        raise InvalidInput(f"input.kind inconnu: '{kind}'")
    unknown = set(data) - allowed[kind]
    if unknown:
        raise InvalidInput(f"input: clé inconnue '{sorted(unknown)[0]}' pour kind='{kind}'")
    try:
        if kind == "gaussian":
            if "cov" in data:
                return GaussianInput(np.asarray(data["cov"], dtype=float))
            return GaussianInput.standard(data.get("d", 1))
        if kind == "discrete":
            return DiscreteInput(data["points"], data["probs"])
        if kind == "coord_kurtosis":
            return CoordKurtosisInput(data["d"], data["kappa"])
        if kind == "unit":
            return DiscreteInput.unit()
        if kind == "bernoulli":
            return DiscreteInput.bernoulli(data["rho"])
        return DiscreteInput.signed_axes(data["d"])
    except KeyError as exc:
        raise InvalidInput(f"input: clé manquante {exc.args[0]!r} pour kind='{kind}'") from exc


# ---------------------------------------------------------------------------
# Modèles de bruit (symétriques, indépendants de X)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianNoise:
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise InvalidInput(f"GaussianNoise: σ² doit être ≥ 0, reçu {self.sigma2}")

    @property
    def label(self):
        return f"gaussian:{self.sigma2!r}"

    def variance(self):
        return self.sigma2

    def abs_moment(self, q):
        if self.sigma2 == 0:
            return 0.0 if q > 0 else 1.0
        return std_normal_abs_moment(q) * self.sigma2 ** (0.5 * q)

    def sample(self, n, gen):
        if self.sigma2 == 0:
            return np.zeros(n)
        return math.sqrt(self.sigma2) * gen.standard_normal(n)


@dataclass(frozen=True)
class StudentTNoise:
    """s·T_ν avec s² = σ²(ν−2)/ν, de variance σ²"""

    nu: float
    sigma2: float

    def __post_init__(self):
        if not self.nu > 2:
            raise InvalidInput(f"StudentTNoise: ν doit être > 2, reçu {self.nu}")
        if not self.sigma2 > 0:
            raise InvalidInput(f"StudentTNoise: σ² doit être > 0, reçu {self.sigma2}")

    @property
    def label(self):
        return f"student-t:{self.nu!r}:{self.sigma2!r}"

    @property
    def scale(self):
        return math.sqrt(self.sigma2 * (self.nu - 2.0) / self.nu)

    def variance(self):
        return self.sigma2

    def abs_moment(self, q):
        """E|ξ|^q, infini pour q ≥ ν"""
        if q >= self.nu:
            return math.inf
        nu = self.nu
        log_t = (
            0.5 * q * math.log(nu)
            + special.gammaln(0.5 * (q + 1.0))
            + special.gammaln(0.5 * (nu - q))
            - 0.5 * math.log(math.pi)
            - special.gammaln(0.5 * nu)
        )
        return self.scale**q * math.exp(log_t)

    def sample(self, n, gen):
        return self.scale * gen.standard_t(self.nu, size=n)


@dataclass(frozen=True)
class TwoPointNoise:
    """±a avec probabilité prob/2 chacun, 0 sinon"""

    a: float
    prob: float

    def __post_init__(self):
        if not self.a > 0 or not 0 < self.prob <= 1:
            raise InvalidInput(f"TwoPointNoise: a > 0 et prob ∈ (0,1] requis (a={self.a}, prob={self.prob})")

    @property
    def label(self):
        return f"two-point:{self.a!r}:{self.prob!r}"

    def variance(self):
        return self.prob * self.a * self.a

    def abs_moment(self, q):
        if q == 0:
            return 1.0
        return self.prob * self.a**q

    def sample(self, n, gen):
        u = gen.random(n)
        half = 0.5 * self.prob
        return np.where(u < half, self.a, np.where(u < self.prob, -self.a, 0.0))


def noise_abs_moment(noise, q):
    """E|ξ|^q en forme close pour chaque modèle de bruit"""
    if not q >= 0:
        raise InvalidInput(f"noise_abs_moment: q doit être ≥ 0, reçu {q}")
    return float(noise.abs_moment(q))


def parse_noise(text, sigma2=1.0):
    """
    Lit un modèle de bruit: 'none', 'gaussian[:σ²]', 'student-t:ν[:σ²]', 'two-point:a:prob'
    """
    parts = str(text).strip().lower().split(":")
    name, args = parts[0], parts[1:]
    try:
        values = [float(a) for a in args]
    except ValueError as exc:
        raise InvalidInput(f"noise: paramètres illisibles dans '{text}'") from exc
    if name in ("none", "zero") and not values:
        return GaussianNoise(0.0)
    if name == "gaussian" and len(values) <= 1:
        return GaussianNoise(values[0] if values else sigma2)
    if name == "student-t" and 1 <= len(values) <= 2:
        return StudentTNoise(values[0], values[1] if len(values) == 2 else sigma2)
    if name == "two-point" and len(values) == 2:
        return TwoPointNoise(values[0], values[1])
    raise InvalidInput(f"noise: modèle inconnu '{text}'")


# ---------------------------------------------------------------------------
# Spécification d'un problème
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    input: object
    w_star: np.ndarray
    noise: object
    error: ErrorFn = field(default_factory=ErrorFn.square)

    def __post_init__(self):
        w = np.asarray(self.w_star, dtype=float).ravel()
        if w.size != self.input.dim:
            raise InvalidInput(f"ProblemSpec: w* de dimension {w.size}, entrée de dimension {self.input.dim}")
        object.__setattr__(self, "w_star", w)

    @property
    def dim(self):
        return self.input.dim

    def to_dict(self):
        return {
            "input": self.input.to_dict(),
            "w_star": self.w_star.tolist(),
            "noise": self.noise.label,
            "error": self.error.label,
        }

    @classmethod
    def from_dict(cls, data, sigma2=1.0):
        unknown = set(data) - {"input", "w_star", "noise", "error"}
        if unknown:
            raise InvalidInput(f"spec: clé inconnue '{sorted(unknown)[0]}'")
        if "input" not in data:
            raise InvalidInput("spec: clé manquante 'input'")
        inp = input_from_dict(data["input"])
        w_star = data.get("w_star", [0.0] * inp.dim)
        return cls(
            input=inp,
            w_star=np.asarray(w_star, dtype=float),
            noise=parse_noise(data.get("noise", "gaussian"), sigma2),
            error=ErrorFn.parse(data.get("error", "square")),
        )

    def spec_hash(self):
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def sample_dataset(spec, n, rng):
    """
    Tire n couples i.i.d.: y_i = ⟨w*, x_i⟩ + ξ_i
    """
    if n < 1:
        raise InvalidInput(f"sample_dataset: n doit être ≥ 1, reçu {n}")
    gen = as_generator(rng)
    X = spec.input.sample(n, gen)
    xi = spec.noise.sample(n, gen)
    return Dataset(X, X @ spec.w_star + xi)


# ---------------------------------------------------------------------------
# Maximisation sur la sphère
# ---------------------------------------------------------------------------


def _normalize_rows(M):
    norms = np.linalg.norm(M, axis=1)
    keep = norms > 0
    return M[keep] / norms[keep, None]


def _candidate_directions(points, weights, extra=None):
    d = points.shape[1]
    cands = [np.eye(d)]
    if extra is not None:
        cands.append(np.asarray(extra).T)
    heavy = np.argsort(-weights * np.sum(points * points, axis=1), kind="stable")[:MAX_POINT_CANDIDATES]
    cands.append(_normalize_rows(points[heavy]))
    return np.vstack([c for c in cands if c.size])


def _sphere_max_power(points, weights, q, extra=None):
    """max_{‖v‖=1} Σ w_j |⟨v, x_j⟩|^q (q ≥ 1) par itération de point fixe v ← ∇/‖∇‖"""
    best = 0.0
    for v in _candidate_directions(points, weights, extra):
        for _ in range(SPHERE_ITERATIONS):
            proj = points @ v
            value = float(weights @ np.abs(proj) ** q)
            best = max(best, value)
            grad = (weights * np.sign(proj) * np.abs(proj) ** (q - 1)) @ points
            norm = np.linalg.norm(grad)
            if norm == 0:
                break
            v_next = grad / norm
            if np.linalg.norm(v_next - v) < 1e-11:
                break
            v = v_next
        best = max(best, float(weights @ np.abs(points @ v) ** q))
    return best


def _sphere_min_abs(points, weights, extra=None, iterations=SPHERE_ITERATIONS):
    """min_{‖v‖=1} Σ w_j |⟨v, x_j⟩| par sous-gradient projeté multi-départs"""
    best = math.inf
    for v in _candidate_directions(points, weights, extra):
        for t in range(1, iterations + 1):
            proj = points @ v
            best = min(best, float(weights @ np.abs(proj)))
            grad = (weights * np.sign(proj)) @ points
            tangent = grad - (grad @ v) * v
            norm = np.linalg.norm(tangent)
            if norm < 1e-15:
                break
            v = v - (0.1 / math.sqrt(t)) * tangent / norm
            v /= np.linalg.norm(v)
        best = min(best, float(weights @ np.abs(points @ v)))
    return best


def _whitened_support(input_dist, mc_samples, rng):
    """(points blanchis, poids) exacts pour une loi discrète, empiriques sinon"""
    W = inverse_sqrt(input_dist.covariance())
    if isinstance(input_dist, DiscreteInput):
        return input_dist.points @ W, input_dist.probs
    gen = as_generator(rng if rng is not None else RngStream(0))
    sample = input_dist.sample(int(mc_samples), gen)
    return sample @ W, np.full(sample.shape[0], 1.0 / sample.shape[0])


# ---------------------------------------------------------------------------
# Paramètres matriciels
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MatrixParams:
    """S(P_X), λ_max(S) et R(P_X)"""

    S: SymMatrix
    lambda_max_S: float
    R: float
    exact: bool = True


def _empirical_S(points, weights):
    sq = np.sum(points * points, axis=1)
    d = points.shape[1]
    second = (points * weights[:, None]).T @ points
    fourth = (points * (weights * sq)[:, None]).T @ points
    return sym_part(fourth - 2.0 * second + np.eye(d))


def matrix_params(input_dist, mc_samples=200_000, rng=None, method="auto"):
    """
    S(P_X) = E[(X̃X̃ᵀ − I)²] et R(P_X) = sup_v E[(⟨v,X̃⟩² − 1)²]

    Args:
        input_dist: Loi des entrées
        mc_samples: Tirages pour la voie Monte Carlo
        rng: RngStream ou Generator (voie Monte Carlo)
        method: 'auto' (forme close si disponible) ou 'mc'

    Returns:
        MatrixParams, avec λ_max(S) ≤ R·d
    """
    if method not in ("auto", "mc"):
        raise InvalidInput(f"matrix_params: méthode inconnue '{method}'")
    d = input_dist.dim
    exact = method == "auto"

    if exact and isinstance(input_dist, GaussianInput):
        S = (d + 1.0) * np.eye(d)
        R = 2.0
    elif exact and isinstance(input_dist, CoordKurtosisInput):
        kappa = input_dist.kappa
        S = np.diag(np.full(d, d + 1.0))
        S[0, 0] = kappa + d - 2.0
        R = kappa - 1.0 if (kappa >= 3.0 or d == 1) else 2.0
    else:
        if exact and not isinstance(input_dist, DiscreteInput):
            exact = False
        points, weights = _whitened_support(input_dist, mc_samples, rng)
        S = _empirical_S(points, weights)
        eigvecs = sym_eigen(S).eigenvectors
        R = _sphere_max_power(points, weights, 4.0, extra=eigvecs) - 1.0
        R = max(R, 0.0)

    S = SymMatrix.from_array(S)
    lam_max = max(sym_eigen(S).lambda_max, 0.0)
    if lam_max > R * d:
        # minorant de Jensen: R ≥ λ_max(S)/d
        logger.debug("R relevé au minorant λ_max(S)/d", extra={"d": d})
        R = lam_max / d
    if not lam_max <= R * d * (1.0 + 1e-12) + 1e-15:
        raise NumericFailure(f"matrix_params: λ_max(S)={lam_max} > R·d={R * d}")
    return MatrixParams(S=S, lambda_max_S=lam_max, R=float(R), exact=exact)


# ---------------------------------------------------------------------------
# Hyperplans et singularité
# ---------------------------------------------------------------------------


def hyperplane_mass(input_dist):
    """
    ρ(P_X) = sup_w P(⟨w, X⟩ = 0)

    Exact pour une loi discrète (énumération des hyperplans engendrés par
    d−1 points du support), 0 pour une gaussienne.
    """
    if isinstance(input_dist, GaussianInput):
        return 0.0
    if isinstance(input_dist, CoordKurtosisInput):
        return 1.0 - 1.0 / input_dist.kappa
    if not isinstance(input_dist, DiscreteInput):
        raise InvalidInput(f"hyperplane_mass: loi non prise en charge {type(input_dist).__name__}")

    pts, probs = input_dist.points, input_dist.probs
    d = input_dist.dim
    norms = np.linalg.norm(pts, axis=1)
    zero_mass = float(probs[norms == 0].sum())
    if d == 1:
        return zero_mass

    nonzero = np.flatnonzero(norms > 0)
    n_combos = math.comb(nonzero.size, d - 1)
    if n_combos > MAX_HYPERPLANE_COMBOS:
        raise InvalidInput(f"hyperplane_mass: {n_combos} combinaisons, support trop grand pour l'énumération")

    tol = 1e-9 * np.maximum(norms, 1.0)
    best = zero_mass
    for combo in itertools.combinations(nonzero, d - 1):
        basis = pts[list(combo)]
        _, s, vt = np.linalg.svd(basis)
        if s[-1] <= 1e-10 * s[0]:
            continue
        normal = vt[-1]
        mass = float(probs[np.abs(pts @ normal) <= tol].sum())
        best = max(best, mass)
    return best


@dataclass(frozen=True)
class SingularityEstimate:
    """Estimation de ε_n = P(rang(Σ̂_n) < d)"""

    value: float
    lower: float
    upper: float
    exact: bool
    reps: int = 0


def _is_singular_design(X):
    spectrum = sym_eigen(sym_part(X.T @ X / X.shape[0]))
    return not (spectrum.lambda_max > 0 and spectrum.lambda_min > SINGULAR_TOL * spectrum.lambda_max)


def _singular_replicate(input_dist, n, stream):
    return _is_singular_design(input_dist.sample(n, stream.generator()))


def singularity_prob(input_dist, n, mc_reps=10_000, rng=None, workers=1):
    """
    ε_n: exact en dimension 1 (ρⁿ) et pour les gaussiennes, Monte Carlo sinon
    avec intervalle de Wilson
    """
    if n < 1:
        raise InvalidInput(f"singularity_prob: n doit être ≥ 1, reçu {n}")
    d = input_dist.dim
    if isinstance(input_dist, GaussianInput):
        value = 0.0 if n >= d else 1.0
        return SingularityEstimate(value, value, value, exact=True)
    if d == 1:
        value = hyperplane_mass(input_dist) ** n
        return SingularityEstimate(value, value, value, exact=True)
    if n < d:
        return SingularityEstimate(1.0, 1.0, 1.0, exact=True)

    stream = rng if isinstance(rng, RngStream) else RngStream(0)
    flags = run_replicates(partial(_singular_replicate, input_dist, n), stream, mc_reps, workers)
    hits = int(np.sum(flags))
    lower, upper = wilson_interval(hits, mc_reps)
    return SingularityEstimate(hits / mc_reps, lower, upper, exact=False, reps=mc_reps)


# ---------------------------------------------------------------------------
# Constantes d'équivalence de normes
# ---------------------------------------------------------------------------


def norm_equivalence(input_dist, p, mc_samples=200_000, rng=None):
    """
    N(P_X, p) = sup_w E[|⟨w,X⟩|^p]^{1/p} / E[⟨w,X⟩²]^{1/2}
    """
    if not p >= 2:
        raise InvalidInput(f"norm_equivalence: p doit être ≥ 2, reçu {p}")
    if isinstance(input_dist, GaussianInput):
        return std_normal_abs_moment(p) ** (1.0 / p)
    if isinstance(input_dist, CoordKurtosisInput) and p == 4:
        top = input_dist.kappa if input_dist.d == 1 else max(3.0, input_dist.kappa)
        return top**0.25
    points, weights = _whitened_support(input_dist, mc_samples, rng)
    return max(1.0, _sphere_max_power(points, weights, float(p)) ** (1.0 / p))


def small_ball_ratio(input_dist, mc_samples=200_000, rng=None):
    """
    θ(P_X) = sup_w E[⟨w,X⟩²]^{1/2} / E|⟨w,X⟩|
    """
    if isinstance(input_dist, GaussianInput):
        return math.sqrt(math.pi / 2.0)
    points, weights = _whitened_support(input_dist, mc_samples, rng)
    smallest = _sphere_min_abs(points, weights)
    if smallest <= 0:
        return math.inf
    return max(1.0, 1.0 / smallest)


# ---------------------------------------------------------------------------
# Classes de distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistributionClass:
    """PGauss(σ²), P2(σ²) ou Pp(σ², μ) pour l'erreur puissance p"""

    name: str
    sigma2: float
    mu: Optional[float] = None
    p: Optional[float] = None

    def __post_init__(self):
        if self.name not in ("PGauss", "P2", "Pp"):
            raise InvalidInput(f"classe inconnue '{self.name}'")
        if not self.sigma2 > 0:
            raise InvalidInput(f"classe {self.name}: σ² doit être > 0")
        if self.name == "Pp" and (self.mu is None or self.p is None or not self.p > 2):
            raise InvalidInput("classe Pp: μ et p > 2 requis")

    @classmethod
    def pgauss(cls, sigma2):
        return cls("PGauss", sigma2)

    @classmethod
    def p2(cls, sigma2):
        return cls("P2", sigma2)

    @classmethod
    def pp(cls, sigma2, mu, p):
        return cls("Pp", sigma2, float(mu), float(p))


def ratio_bound(p, sigma2):
    """r(p) = m(2p−2)/m(p−2)·σ^p"""
    return std_normal_abs_moment(2 * p - 2) / std_normal_abs_moment(p - 2) * sigma2 ** (0.5 * p)


@dataclass(frozen=True)
class ClassCheck:
    member: bool
    slacks: dict


def class_membership_check(spec, cls, rel_tol=1e-12):
    """
    Évalue les inégalités définissant la classe avec les moments du bruit en
    forme close (bruit indépendant de X: conditionnel = marginal)

    Returns:
        ClassCheck(member, slacks); une pente négative signale une inégalité violée
    """
    noise = spec.noise
    sigma2 = cls.sigma2
    slacks = {}
    tol = rel_tol * max(1.0, sigma2)

    if cls.name == "PGauss":
        is_gauss = isinstance(noise, GaussianNoise)
        slacks["gaussian_noise"] = 0.0 if is_gauss else -1.0
        slacks["variance"] = -abs(noise.variance() - sigma2)
        member = is_gauss and slacks["variance"] >= -tol
    elif cls.name == "P2":
        slacks["variance"] = sigma2 - noise.variance()
        member = slacks["variance"] >= -tol
    else:
        p, mu = cls.p, cls.mu
        low = noise.abs_moment(p - 2)
        high = noise.abs_moment(2 * p - 2)
        r = ratio_bound(p, sigma2)
        ratio = high / low if low > 0 else math.inf
        slacks["ratio"] = r - ratio
        slacks["mu"] = low - mu
        slacks["mu_legal"] = std_normal_abs_moment(p) * sigma2 ** (0.5 * (p - 2)) - mu
        slacks["mu_positive"] = mu
        member = (
            slacks["ratio"] >= -rel_tol * max(1.0, r)
            and slacks["mu"] >= -rel_tol * max(1.0, mu)
            and slacks["mu_legal"] >= 0
            and mu > 0
        )
    return ClassCheck(member=bool(member), slacks=slacks)
