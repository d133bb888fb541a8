"""
Hiérarchie d'exceptions du calcul de risque quantile
"""


class QRiskError(Exception):
    """Erreur de base du projet"""


class InvalidInput(QRiskError, ValueError):
    """Précondition violée sur une entrée (dimension, signe, plage)"""


class InvalidLevel(InvalidInput):
    """Niveau δ (ou niveau de quantile) hors de la plage admissible"""


class NumericFailure(QRiskError, ArithmeticError):
    """Échec numérique pendant un calcul"""


class NotPD(NumericFailure):
    """Matrice non définie positive"""


class NotFullRank(NumericFailure):
    """Covariance singulière (support contenu dans un hyperplan)"""


class NumericOverflow(NumericFailure):
    """Valeur non finie pendant une optimisation"""


class BudgetExceeded(NumericFailure):
    """Budget de recherche épuisé avant de trouver un encadrement"""


def exit_code_for(exc):
    """
    Code de sortie CLI associé à une exception

    Args:
        exc: Exception levée par un pipeline

    Returns:
        2 pour une erreur de configuration, 3 pour un échec numérique, 1 sinon
    """
    if isinstance(exc, InvalidInput):
        return 2
    if isinstance(exc, NumericFailure):
        return 3
    return 1
