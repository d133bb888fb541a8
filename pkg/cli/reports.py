"""
Écriture des sorties: CSV (pandas), courbes de quantiles et manifestes JSON
"""

from pathlib import Path

import numpy as np
import pandas as pd

from src.logger import get_logger
from src.quantile_core import EmpiricalDistribution, quantile_rank

logger = get_logger(__name__)

FLOAT_FORMAT = "%.17g"
CURVE_POINTS = 50


def write_csv(rows, path, columns=None):
    """
    Écrit des lignes (liste de dict) en CSV: en-tête, 17 chiffres significatifs, inf littéral

    Returns:
        Chemin écrit
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(rows, columns=columns)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="nan")
    logger.debug(f"CSV écrit: {path}", extra={"n": len(df)})
    return path


def quantile_curve(values, max_level=None):
    """
    Courbe (niveau, quantile empirique) sur une grille de niveaux

    La grille s'arrête au niveau 1 − 1/M: au-delà le quantile empirique n'est plus informatif.
    """
    sample = EmpiricalDistribution(values)
    top = max_level if max_level is not None else 1.0 - 1.0 / sample.size
    levels = np.linspace(0.5, top, CURVE_POINTS)
    return [
        {"level": float(level), "quantile": sample.order_statistic(quantile_rank(level, sample.size))}
        for level in levels
    ]


def write_curve(values, path):
    return write_csv(quantile_curve(values), path, columns=["level", "quantile"])


def write_manifest(manifest, path):
    """Manifeste JSON d'une exécution (pydantic)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return path
