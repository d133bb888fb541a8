"""
Calcul des quantiles: pseudo-inverse des fonctions croissantes,
quantile empirique inférieur et invariance par transformation croissante
"""

import math
from dataclasses import dataclass

import numpy as np

from src.errors import InvalidInput, InvalidLevel

Z_975 = 1.959963984540054


@dataclass(frozen=True, eq=False)
class StepFunction:
    """
    Fonction croissante en escalier: f(x) = left_value pour x < breakpoints[0],
    f(x) = values[j] sur [breakpoints[j], breakpoints[j+1])
    """

    breakpoints: np.ndarray
    values: np.ndarray
    left_value: float = -math.inf

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or b.shape != v.shape or b.size == 0:
            raise InvalidInput("StepFunction: breakpoints et values doivent être des vecteurs de même taille")
        if np.any(np.diff(b) <= 0):
            raise InvalidInput("StepFunction: breakpoints non triés strictement")
        if np.any(np.diff(v) < 0) or v[0] < self.left_value:
            raise InvalidInput("StepFunction: fonction non croissante")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        idx = np.searchsorted(self.breakpoints, np.asarray(x, dtype=float), side="right") - 1
        out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], self.left_value)
        return float(out) if out.ndim == 0 else out


def pseudo_inverse_point(f, y):
    """
    f⁻(y) = inf{x | f(x) ≥ y}

    Args:
        f: StepFunction
        y: Niveau

    Returns:
        −∞ si f ≥ y partout, +∞ si l'ensemble est vide, sinon le premier point de rupture atteignant y
    """
    if not isinstance(f, StepFunction):
        raise InvalidInput("pseudo_inverse_point attend une StepFunction")
    if f.left_value >= y:
        return -math.inf
    j = int(np.searchsorted(f.values, y, side="left"))
    if j >= f.values.size:
        return math.inf
    return float(f.breakpoints[j])


def pseudo_inverse(f, ys):
    """Version vectorisée de pseudo_inverse_point"""
    return np.array([pseudo_inverse_point(f, y) for y in np.atleast_1d(ys)])


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Échantillon de pertes (∞ autorisé, trié en dernier)"""

    values: np.ndarray
    sorted: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float).ravel()
        if arr.size == 0:
            raise InvalidInput("EmpiricalDistribution: échantillon vide")
        if np.any(np.isnan(arr)) or np.any(arr == -math.inf):
            raise InvalidInput("EmpiricalDistribution: NaN ou −∞ interdits")
        arr = np.sort(arr, kind="stable")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "sorted", True)

    @property
    def size(self):
        return self.values.size

    def order_statistic(self, rank):
        """Statistique d'ordre de rang rank (indexé à partir de 1, borné à [1, M])"""
        rank = min(max(int(rank), 1), self.size)
        return float(self.values[rank - 1])

    def cdf(self, t):
        """Fonction de répartition empirique"""
        return np.searchsorted(self.values, t, side="right") / self.size


@dataclass(frozen=True)
class QuantileEstimate:
    """Quantile empirique inférieur avec proxy d'erreur standard"""

    level: float
    value: float
    replicates: int
    se_proxy: float

    def as_dict(self, prefix=""):
        return {
            f"{prefix}level": self.level,
            f"{prefix}value": self.value,
            f"{prefix}replicates": self.replicates,
            f"{prefix}se_proxy": self.se_proxy,
        }


def _check_level(level):
    if not 0.0 < level < 1.0:
        raise InvalidLevel(f"niveau de quantile hors de (0,1): {level}")


def quantile_rank(level, size):
    """⌈level·M⌉ (1-indexé), robuste aux erreurs d'arrondi du produit"""
    return max(1, math.ceil(level * size - 1e-9))


def order_statistic_interval(sample, level, z=Z_975):
    """Statistiques d'ordre aux niveaux p ± z·√(p(1−p)/M)"""
    half = z * math.sqrt(level * (1.0 - level) / sample.size)
    lo = sample.order_statistic(quantile_rank(max(level - half, 0.0), sample.size))
    hi = sample.order_statistic(quantile_rank(min(level + half, 1.0), sample.size))
    return lo, hi


def empirical_quantile(sample, level):
    """
    Quantile empirique inférieur: statistique d'ordre ⌈level·M⌉

    Args:
        sample: EmpiricalDistribution ou tableau de valeurs
        level: Niveau dans (0, 1)

    Returns:
        QuantileEstimate (∞ propagé)
    """
    _check_level(level)
    if not isinstance(sample, EmpiricalDistribution):
        sample = EmpiricalDistribution(sample)
    value = sample.order_statistic(quantile_rank(level, sample.size))
    lo, hi = order_statistic_interval(sample, level)
    if math.isinf(hi):
        se = math.inf
    else:
        se = (hi - lo) / (2.0 * Z_975)
    return QuantileEstimate(level=float(level), value=value, replicates=sample.size, se_proxy=se)


def wilson_interval(successes, trials, z=Z_975):
    """Intervalle de Wilson pour une proportion"""
    if trials < 1:
        raise InvalidInput("wilson_interval: au moins un essai requis")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2.0 * trials)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / trials + z * z / (4.0 * trials * trials)) / denom
    lower = 0.0 if successes == 0 else max(0.0, centre - half)
    upper = 1.0 if successes == trials else min(1.0, centre + half)
    return lower, upper


def check_transform_invariance(sample, phi, level):
    """
    Vérifie Q_{φ(X)}(p) = φ(Q_X(p)) exactement, avec φ(∞) := ∞
    """
    if not isinstance(sample, EmpiricalDistribution):
        sample = EmpiricalDistribution(sample)

    def phi_ext(t):
        return math.inf if math.isinf(t) else float(phi(t))

    mapped = EmpiricalDistribution([phi_ext(t) for t in sample.values])
    left = empirical_quantile(mapped, level).value
    right = phi_ext(empirical_quantile(sample, level).value)
    return left == right


def empirical_cdf(sample, t):
    """F̂(t) = #{i | x_i ≤ t}/M"""
    if not isinstance(sample, EmpiricalDistribution):
        sample = EmpiricalDistribution(sample)
    return sample.cdf(t)
