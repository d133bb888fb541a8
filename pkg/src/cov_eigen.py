"""
Plus petite valeur propre de la covariance empirique blanchie Σ̃_n:
quantiles Monte Carlo de 1 − λ_min(Σ̃_n), borne supérieure non asymptotique,
infimum directionnel tronqué et taille d'échantillon critique
"""

import math
import time
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np

from src.errors import BudgetExceeded, InvalidInput, InvalidLevel
from src.logger import get_logger
from src.numerics import RngStream, as_generator, inverse_sqrt, sym_eigen, sym_part
from src.quantile_core import EmpiricalDistribution, empirical_quantile
from src.replicates import run_replicates
from src.truncation import TrimLevel, middle_block_sum, sort_star

logger = get_logger(__name__)

SINGULAR_TOL = 1e-10
MIN_REPS = 100
REPORT_MIN_REPS = 1000
CRITICAL_LEVEL = 0.25
POLISHED_STARTS = 3


def _check_delta(delta):
    if not 0 < delta < 1:
        raise InvalidLevel(f"δ hors de (0,1): {delta}")


def whitened_sample_cov(inputs, Sigma):
    """
    Σ̃_n = Σ^{-1/2} Σ̂_n Σ^{-1/2}

    Args:
        inputs: Tableau (n, d) des entrées
        Sigma: Covariance de la loi des entrées (définie positive)

    Returns:
        Matrice symétrique semi-définie positive d×d
    """
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    W = inverse_sqrt(Sigma)
    if W.shape[0] != X.shape[1]:
        raise InvalidInput(f"whitened_sample_cov: Σ de dimension {W.shape[0]}, entrées de dimension {X.shape[1]}")
    Xt = X @ W
    return sym_part(Xt.T @ Xt / X.shape[0])


def one_minus_lambda_min(S_tilde):
    """1 − λ_min(Σ̃_n), exactement 1 si Σ̃_n est singulière"""
    spectrum = sym_eigen(S_tilde)
    if not (spectrum.lambda_max > 0 and spectrum.lambda_min > SINGULAR_TOL * spectrum.lambda_max):
        return 1.0
    return 1.0 - spectrum.lambda_min


def _min_eig_replicate(input_dist, W, n, stream):
    Xt = input_dist.sample(n, stream.generator()) @ W
    return one_minus_lambda_min(sym_part(Xt.T @ Xt / n))


def min_eig_values_mc(input_dist, n, reps, rng, workers=1):
    """Tirages de 1 − λ_min(Σ̃_n) sur reps jeux de données"""
    if reps < MIN_REPS:
        raise InvalidInput(f"reps doit être ≥ {MIN_REPS}, reçu {reps}")
    if n < 1:
        raise InvalidInput(f"n doit être ≥ 1, reçu {n}")
    W = inverse_sqrt(input_dist.covariance())
    task = partial(_min_eig_replicate, input_dist, W, int(n))
    return np.asarray(run_replicates(task, rng, reps, workers), dtype=float)


def min_eig_quantile_mc(input_dist, n, delta, reps, rng, workers=1):
    """
    Quantile empirique Q_{1−λ_min(Σ̃_n)}(1−δ)

    Returns:
        QuantileEstimate
    """
    _check_delta(delta)
    values = min_eig_values_mc(input_dist, n, reps, rng, workers)
    return empirical_quantile(EmpiricalDistribution(values), 1.0 - delta)


def upper_bound_eig(params, n, d, delta):
    """
    √(8λ_max(S)log(3d)/n) + √(2R·log(1/δ)/n) + (2log(3d) + 4log(1/δ))/(3n)
    """
    _check_delta(delta)
    if n < 1 or d < 1:
        raise InvalidInput(f"upper_bound_eig: n et d doivent être ≥ 1 (n={n}, d={d})")
    log3d = math.log(3.0 * d)
    log_delta = math.log(1.0 / delta)
    return (
        math.sqrt(8.0 * params.lambda_max_S * log3d / n)
        + math.sqrt(2.0 * params.R * log_delta / n)
        + (2.0 * log3d + 4.0 * log_delta) / (3.0 * n)
    )


def trimmed_inf_bound(params, n, d, delta):
    """100·(√(8log(6d)(λ_max(S)+1)/n) + √((R+1)log(1/δ)/n))"""
    _check_delta(delta)
    return 100.0 * (
        math.sqrt(8.0 * math.log(6.0 * d) * (params.lambda_max_S + 1.0) / n)
        + math.sqrt((params.R + 1.0) * math.log(1.0 / delta) / n)
    )


def asymptotic_eig_lower(params, delta):
    """(1/40)·(√λ_max(S) + √(R·log(1/δ))), limite inférieure de √n·Q(1−δ)"""
    _check_delta(delta)
    return (math.sqrt(params.lambda_max_S) + math.sqrt(params.R * math.log(1.0 / delta))) / 40.0


# ---------------------------------------------------------------------------
# Infimum directionnel tronqué
# ---------------------------------------------------------------------------


def _trimmed_objective(Xt, v, k):
    return middle_block_sum((Xt @ v) ** 2, k) / Xt.shape[0]


def _trimmed_gradient(Xt, v, k):
    proj = Xt @ v
    _, perm = sort_star(proj * proj)
    middle = perm[k : Xt.shape[0] - k]
    return 2.0 * (proj[middle] @ Xt[middle]) / Xt.shape[0]


def _rotate(v, u, angle):
    w = math.cos(angle) * v + math.sin(angle) * u
    return w / np.linalg.norm(w)


def _subgradient_phase(Xt, v, k, iterations, step0):
    best_v, best = v, _trimmed_objective(Xt, v, k)
    # sous-gradient projeté, pas 1/√t
    for t in range(1, iterations + 1):
        g = _trimmed_gradient(Xt, v, k)
        tangent = g - (g @ v) * v
        norm = np.linalg.norm(tangent)
        if norm < 1e-15:
            break
        v = _rotate(v, -tangent / norm, step0 / math.sqrt(t))
        value = _trimmed_objective(Xt, v, k)
        if value < best:
            best_v, best = v, value
    return best_v, best


def _polish(Xt, best_v, best, k, gen):
    # pas vers le vecteur propre du bloc actif
    n = Xt.shape[0]
    for _ in range(5):
        proj = Xt @ best_v
        _, perm = sort_star(proj * proj)
        active = Xt[perm[k : n - k]]
        candidate = sym_eigen(sym_part(active.T @ active)).eigenvectors[:, 0]
        value = _trimmed_objective(Xt, candidate, k)
        if value >= best:
            break
        best_v, best = candidate, value

    # perturbations tangentes aléatoires de rayon décroissant
    d = Xt.shape[1]
    if d > 1:
        radius, rounds = 0.05, 0
        while radius > 1e-9 and rounds < 400:
            rounds += 1
            improved = False
            for _ in range(2 * d):
                u = gen.standard_normal(d)
                u -= (u @ best_v) * best_v
                norm = np.linalg.norm(u)
                if norm == 0:
                    continue
                for sign in (1.0, -1.0):
                    candidate = _rotate(best_v, sign * u / norm, radius)
                    value = _trimmed_objective(Xt, candidate, k)
                    if value < best:
                        best_v, best, improved = candidate, value, True
            if not improved:
                radius *= 0.5
    return best_v, best


def trimmed_directional_inf(inputs, Sigma, trim, multistarts=16, rng=None, iterations=200):
    """
    λ̄_min(Σ̃_n) = inf_{‖v‖=1} n⁻¹ Σ_{i=k+1}^{n−k} Y*_{i,v}, Y_{i,v} = ⟨v, X̃_i⟩²

    Descente de sous-gradient projetée multi-départs (vecteur propre de λ_min
    puis meilleures directions d'un tirage aléatoire), suivie d'un raffinement
    local. La valeur renvoyée est atteinte: c'est un majorant de l'infimum.

    Args:
        inputs: Tableau (n, d)
        Sigma: Covariance de la loi des entrées
        trim: TrimLevel ou entier k avec 0 ≤ 2k < n
        multistarts: Nombre de points de départ
        rng: RngStream ou Generator
        iterations: Pas de sous-gradient par départ

    Returns:
        Meilleure valeur trouvée
    """
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    k = trim.k if isinstance(trim, TrimLevel) else int(trim)
    if k < 0 or 2 * k >= n:
        raise InvalidInput(f"trimmed_directional_inf: 2k < n requis (k={k}, n={n})")
    if multistarts < 1:
        raise InvalidInput("multistarts doit être ≥ 1")
    Xt = X @ inverse_sqrt(Sigma)
    if d == 1:
        return _trimmed_objective(Xt, np.ones(1), k)

    gen = as_generator(rng if rng is not None else RngStream(0))
    spectrum = sym_eigen(sym_part(Xt.T @ Xt / n))
    step0 = 0.5

    starts = [spectrum.eigenvectors[:, 0]]
    if multistarts > 1:
        pool = gen.standard_normal((32 * multistarts, d))
        pool /= np.linalg.norm(pool, axis=1, keepdims=True)
        scores = np.array([_trimmed_objective(Xt, v, k) for v in pool])
        starts.extend(pool[np.argsort(scores, kind="stable")[: multistarts - 1]])

    phase = sorted(
        (_subgradient_phase(Xt, v0, k, iterations, step0) for v0 in starts), key=lambda item: item[1]
    )
    # raffinement des meilleurs départs seulement
    return min(_polish(Xt, v, value, k, gen)[1] for v, value in phase[:POLISHED_STARTS])


def angular_grid_inf(inputs, Sigma, k, angles=4096):
    """Oracle en dimension 2: minimum de l'objectif tronqué sur une grille d'angles de [0, π)"""
    X = np.asarray(inputs, dtype=float)
    if X.shape[1] != 2:
        raise InvalidInput("angular_grid_inf: dimension 2 uniquement")
    Xt = X @ inverse_sqrt(Sigma)
    theta = np.pi * np.arange(angles) / angles
    return min(_trimmed_objective(Xt, np.array([math.cos(t), math.sin(t)]), k) for t in theta)


def _trimmed_replicate(input_dist, n, k, multistarts, stream):
    gen = stream.generator()
    X = input_dist.sample(n, gen)
    lam_bar = trimmed_directional_inf(X, input_dist.covariance(), k, multistarts, gen)
    return (1.0 - 2.0 * k / n) - lam_bar


def trimmed_inf_quantile_mc(input_dist, n, k, delta, reps, rng, multistarts=16, workers=1):
    """Quantile Q_{(1−2k/n) − λ̄_min}(1−δ)"""
    _check_delta(delta)
    if reps < MIN_REPS:
        raise InvalidInput(f"reps doit être ≥ {MIN_REPS}, reçu {reps}")
    task = partial(_trimmed_replicate, input_dist, int(n), int(k), int(multistarts))
    values = run_replicates(task, rng, reps, workers)
    return empirical_quantile(EmpiricalDistribution(values), 1.0 - delta)


# ---------------------------------------------------------------------------
# Taille d'échantillon critique
# ---------------------------------------------------------------------------


VERIFY_OFFSET = 2**40


def critical_sample_size(input_dist, delta, reps, rng, n_max=2**20, workers=1):
    """
    n* = min{n | Q_{1−λ_min(Σ̃_n)}(1−δ/2) ≤ 1/4}

    Recherche par doublement puis bissection; la sonde en n utilise le
    sous-flux rng.child(n), et le résultat est revérifié sur un flux neuf.

    Raises:
        BudgetExceeded: si aucun n ≤ n_max ne passe la sonde
    """
    _check_delta(delta)
    if not isinstance(rng, RngStream):
        raise InvalidInput("critical_sample_size attend un RngStream")
    start = time.perf_counter()
    cache = {}

    def probe(n, offset=0):
        key = (n, offset)
        if key not in cache:
            q = min_eig_quantile_mc(input_dist, n, 0.5 * delta, reps, rng.child(offset + n), workers)
            cache[key] = q.value <= CRITICAL_LEVEL
        return cache[key]

    if probe(1):
        n_star = 1
    else:
        lo, hi = 1, 2
        while not probe(hi):
            lo, hi = hi, 2 * hi
            if hi > n_max:
                raise BudgetExceeded(f"critical_sample_size: aucun encadrement trouvé jusqu'à n_max={n_max}")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if probe(mid):
                hi = mid
            else:
                lo = mid
        n_star = hi

    while not probe(n_star, VERIFY_OFFSET):
        n_star += max(1, n_star // 16)
        if n_star > n_max:
            raise BudgetExceeded(f"critical_sample_size: revérification impossible jusqu'à n_max={n_max}")

    logger.info(
        "Taille critique trouvée",
        extra={
            "n": n_star,
            "d": input_dist.dim,
            "delta": delta,
            "reps": reps,
            "duration_ms": round((time.perf_counter() - start) * 1000, 2),
        },
    )
    return n_star


# ---------------------------------------------------------------------------
# Rapport
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EigenQuantileReport:
    n: int
    d: int
    delta: float
    empirical_quantile: float
    upper_bound: float
    trimmed_inf_quantile: Optional[float]
    reps: int
    se_proxy: float = 0.0
    values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def as_row(self, seed):
        return {
            "n": self.n,
            "d": self.d,
            "delta": self.delta,
            "reps": self.reps,
            "quantile": self.empirical_quantile,
            "se_proxy": self.se_proxy,
            "bound": self.upper_bound,
            "trimmed_quantile": math.nan if self.trimmed_inf_quantile is None else self.trimmed_inf_quantile,
            "seed": seed,
        }


def eigen_report(input_dist, params, n, delta, reps, rng, k=None, trimmed_reps=None, workers=1):
    """
    Assemble le quantile empirique, la borne supérieure et, si k est donné,
    le quantile de l'infimum tronqué

    Args:
        input_dist: Loi des entrées
        params: MatrixParams de la loi
        n, delta, reps: Taille, niveau, réplications (reps ≥ 1000)
        rng: RngStream
        k: Niveau de troncature optionnel
        trimmed_reps: Réplications pour l'infimum tronqué (défaut: reps)

    Returns:
        EigenQuantileReport
    """
    if reps < REPORT_MIN_REPS:
        raise InvalidInput(f"eigen_report: reps ≥ {REPORT_MIN_REPS} requis, reçu {reps}")
    _check_delta(delta)
    values = min_eig_values_mc(input_dist, n, reps, rng.child(0), workers)
    q = empirical_quantile(EmpiricalDistribution(values), 1.0 - delta)
    bound = upper_bound_eig(params, n, input_dist.dim, delta)
    trimmed = None
    if k is not None:
        trimmed = trimmed_inf_quantile_mc(
            input_dist, n, k, delta, trimmed_reps or reps, rng.child(1), workers=workers
        ).value
    return EigenQuantileReport(
        n=int(n),
        d=input_dist.dim,
        delta=float(delta),
        empirical_quantile=q.value,
        upper_bound=bound,
        trimmed_inf_quantile=trimmed,
        reps=int(reps),
        se_proxy=q.se_proxy,
        values=values,
    )
