"""
Calcul de troncature: écrêtage φ_{α,β}, suite triée a* et somme tronquée φ_k
"""

from dataclasses import dataclass

import numpy as np

from src.errors import InvalidInput


@dataclass(frozen=True)
class TrimLevel:
    """Niveau de troncature k pour n observations (1 ≤ k ≤ ⌊n/2⌋)"""

    k: int
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInput(f"TrimLevel: n doit être un entier ≥ 1, reçu {self.n}")
        if int(self.k) != self.k or not 1 <= self.k <= self.n // 2:
            raise InvalidInput(f"TrimLevel: k={self.k} hors de [1, ⌊n/2⌋] pour n={self.n}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "n", int(self.n))


@dataclass(frozen=True, eq=False)
class TrimmedSumBreakdown:
    sorted: np.ndarray
    lower_bound: float
    upper_bound: float
    clamped_total: float
    sort_permutation: np.ndarray


def clamp(x, alpha, beta):
    """φ_{α,β}(x) = min(max(x, α), β)"""
    if alpha > beta:
        raise InvalidInput(f"clamp: α={alpha} > β={beta}")
    return np.minimum(np.maximum(x, alpha), beta)


def sort_star(a):
    """
    Tri croissant stable

    Returns:
        (a trié, permutation π telle que a*_i = a[π(i)])
    """
    arr = np.asarray(a, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidInput("sort_star: suite vide")
    perm = np.argsort(arr, kind="stable")
    return arr[perm], perm


def _check_trim(trim, n):
    if not isinstance(trim, TrimLevel):
        raise InvalidInput("trim doit être un TrimLevel")
    if trim.n != n:
        raise InvalidInput(f"TrimLevel prévu pour n={trim.n}, suite de longueur {n}")


def trimmed_sum(a, trim):
    """
    φ_k(a) = Σ_i φ_{a*_{1+k}, a*_{n−k}}(a_i)

    La somme est faite dans l'ordre d'origine des indices.
    """
    arr = np.asarray(a, dtype=float).ravel()
    _check_trim(trim, arr.size)
    ordered, perm = sort_star(arr)
    k, n = trim.k, trim.n
    # k = n/2 (n pair) croise les deux indices: on garde la paire centrale ordonnée
    lower, upper = sorted((float(ordered[k]), float(ordered[n - k - 1])))
    total = float(np.sum(clamp(arr, lower, upper)))
    return TrimmedSumBreakdown(
        sorted=ordered,
        lower_bound=lower,
        upper_bound=upper,
        clamped_total=total,
        sort_permutation=perm,
    )


def trimmed_weights(perm, k):
    """
    Poids par observation de la sous-dérivée de φ_k (somme = n)

    Args:
        perm: Permutation de tri
        k: Niveau de troncature
    """
    n = perm.size
    weights = np.zeros(n)
    weights[perm[k : n - k]] = 1.0
    weights[perm[k]] += k
    weights[perm[n - k - 1]] += k
    return weights


def trimmed_sum_subgradient(a, grads, trim):
    """
    Σ_{i=k+1}^{n−k} g[π(i)] + k·g[π(1+k)] + k·g[π(n−k)]

    Args:
        a: Suite réelle de longueur n
        grads: Tableau (n, d) des gradients de chaque a_i
        trim: TrimLevel

    Returns:
        Vecteur de dimension d
    """
    arr = np.asarray(a, dtype=float).ravel()
    g = np.asarray(grads, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.ndim != 2 or g.shape[0] != arr.size:
        raise InvalidInput(f"trimmed_sum_subgradient: gradients de forme {g.shape} pour n={arr.size}")
    _check_trim(trim, arr.size)
    _, perm = sort_star(arr)
    return trimmed_weights(perm, trim.k) @ g


def middle_block_sum(a, k):
    """Σ_{i=k+1}^{n−k} a*_i pour 0 ≤ 2k < n"""
    arr = np.asarray(a, dtype=float).ravel()
    n = arr.size
    if k < 0 or 2 * k >= n:
        raise InvalidInput(f"middle_block_sum: k={k} incompatible avec n={n}")
    ordered = np.sort(arr, kind="stable")
    return float(np.sum(ordered[k : n - k]))
