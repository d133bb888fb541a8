"""
Exécution parallèle des réplications Monte Carlo (joblib)

La réplication r utilise toujours le sous-flux rng.child(r) et les résultats
sont rassemblés dans l'ordre des réplications: la sortie ne dépend pas du
nombre de workers.
"""

import time

import numpy as np
from joblib import Parallel, delayed

from src.errors import InvalidInput
from src.logger import get_logger
from src.numerics import RngStream

logger = get_logger(__name__)

BLOCKS_PER_WORKER = 4


def _run_block(task, rng, start, stop):
    return [task(rng.child(r)) for r in range(start, stop)]


def run_replicates(task, rng, reps, workers=1):
    """
    Exécute task(rng.child(r)) pour r = 0..reps−1

    Args:
        task: Fonction d'un RngStream (sérialisable pour les workers)
        rng: RngStream parent
        reps: Nombre de réplications
        workers: Nombre de processus joblib

    Returns:
        Liste des résultats dans l'ordre des réplications
    """
    if not isinstance(rng, RngStream):
        raise InvalidInput("run_replicates attend un RngStream parent")
    reps = int(reps)
    if reps < 1:
        raise InvalidInput(f"reps doit être ≥ 1, reçu {reps}")
    workers = max(1, int(workers))
    start = time.perf_counter()

    if workers == 1 or reps < 2 * workers:
        results = _run_block(task, rng, 0, reps)
    else:
        bounds = np.linspace(0, reps, workers * BLOCKS_PER_WORKER + 1).astype(int)
        blocks = Parallel(n_jobs=workers)(
            delayed(_run_block)(task, rng, int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
        )
        results = [value for block in blocks for value in block]

    logger.debug(
        "Réplications terminées",
        extra={
            "reps": reps,
            "seed": rng.seed,
            "duration_ms": round((time.perf_counter() - start) * 1000, 2),
        },
    )
    return results
