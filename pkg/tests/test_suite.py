"""
Tests de la batterie de validation (mode rapide, critères déterministes ou peu coûteux)
"""

import sys
from pathlib import Path

import pytest

# Ajouter le répertoire parent au path
sys.path.insert(0, str(Path(__file__).parent.parent))

from cli.suite import CRITERIA, run_suite
from src.numerics import RngStream


class TestCatalogue:
    """Liste des critères"""

    def test_thirteen_numbered_criteria(self):
        assert [c.number for c in CRITERIA] == list(range(1, 14))
        assert len({c.name for c in CRITERIA}) == 13


@pytest.mark.integration
class TestQuickSuite:
    """Exécution rapide d'un sous-ensemble"""

    @pytest.fixture(scope="class")
    def table(self):
        return run_suite(RngStream(0), quick=True, only={5, 6, 7, 12})

    def test_columns(self, table):
        assert list(table.columns) == ["critere", "nom", "mesure", "exigence", "statut", "secondes"]
        assert list(table["critere"]) == [5, 6, 7, 12]

    def test_all_pass(self, table):
        """Test: identités exactes, bornes de F_|Z| et régime de risque infini"""
        assert (table["statut"] == "OK").all(), table.to_string()

    def test_reproducible(self, table):
        """Test: même graine, mêmes mesures"""
        again = run_suite(RngStream(0), quick=True, only={5, 6, 7, 12})
        assert list(again["mesure"]) == list(table["mesure"])


@pytest.mark.integration
@pytest.mark.performance
class TestEigenCriterion:
    """Critère Monte Carlo sur λ_min en mode rapide"""

    def test_eigen_bound(self):
        table = run_suite(RngStream(1), quick=True, only={8})
        assert table.loc[0, "statut"] == "OK", table.to_string()


@pytest.mark.integration
@pytest.mark.performance
class TestBoundsCriterion:
    """Encadrement et inégalités sur Tr(Σ̃⁻¹) et W en mode rapide"""

    def test_lemma_slacks_nonnegative(self):
        """Test: pentes positives ou nulles exigées, sans marge Monte Carlo"""
        table = run_suite(RngStream(2), quick=True, only={4})
        assert table.loc[0, "statut"] == "OK", table.to_string()
        assert table.loc[0, "exigence"].endswith("pentes ≥ 0")
