"""
Tests automatisés de la ligne de commande qrisk
"""

import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

# Ajouter le répertoire parent au path
sys.path.insert(0, str(Path(__file__).parent.parent))

from cli.main import MINIMAX_COLUMNS, RISK_COLUMNS, qrisk


@pytest.fixture(autouse=True)
def isolated_logs(monkeypatch, tmp_path):
    """Logs dans tmp_path, handlers retirés après chaque test"""
    monkeypatch.setattr("cli.main.LOG_DIR", str(tmp_path / "logs"))
    root = logging.getLogger()
    before = list(root.handlers)
    level = root.level
    yield
    for handler in root.handlers[:]:
        if handler not in before:
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)


@pytest.fixture
def runner():
    return CliRunner()


def _invoke(runner, *args):
    return runner.invoke(qrisk, [str(a) for a in args])


@pytest.mark.cli
class TestMinimaxCommand:
    """Commande minimax"""

    def test_outputs_written(self, runner, tmp_path):
        """Test: tableau, courbe de quantiles et manifeste"""
        out = tmp_path / "run"
        result = _invoke(runner, "minimax", "--n", 50, "--d", 2, "--delta", 0.1, "--reps", 400,
                         "--seed", 7, "--workers", 1, "--out", out)
        assert result.exit_code == 0, result.output

        table = pd.read_csv(out / "minimax.csv")
        assert list(table.columns) == MINIMAX_COLUMNS
        assert table.loc[0, "exact_mc"] > 0
        assert table.loc[0, "bounds_lower"] <= table.loc[0, "bounds_upper"]

        curve = pd.read_csv(out / "minimax_curve.csv")
        assert list(curve.columns) == ["level", "quantile"]
        assert curve["quantile"].is_monotonic_increasing

        manifest = json.loads((out / "minimax_manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "minimax"
        assert manifest["seed"] == 7
        assert manifest["outputs"] == ["minimax.csv", "minimax_curve.csv"]
        assert len(manifest["config_hash"]) == 64

    def test_reproducible(self, runner, tmp_path):
        """Test: même graine, CSV identiques octet par octet"""
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            result = _invoke(runner, "minimax", "--n", 30, "--reps", 300, "--seed", 11,
                             "--workers", 1, "--out", out)
            assert result.exit_code == 0, result.output
            outputs.append((out / "minimax.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_manifest_stable_apart_from_timing(self, runner, tmp_path):
        """Test: manifestes égaux hors durée mesurée et répertoire de sortie"""
        manifests = []
        for name in ("a", "b"):
            out = tmp_path / name
            result = _invoke(runner, "minimax", "--n", 30, "--reps", 300, "--seed", 11,
                             "--workers", 1, "--out", out)
            assert result.exit_code == 0, result.output
            manifest = json.loads((out / "minimax_manifest.json").read_text(encoding="utf-8"))
            assert manifest.pop("wall_time_s") >= 0
            assert manifest["config"].pop("out") == str(out)
            manifests.append(manifest)
        assert manifests[0] == manifests[1]

    def test_ppower_error(self, runner, tmp_path):
        """Test: erreur puissance p = 4, borne p-norme renseignée"""
        result = _invoke(runner, "minimax", "--p", 4, "--n", 100, "--d", 1, "--reps", 300,
                         "--seed", 2, "--workers", 1, "--out", tmp_path)
        assert result.exit_code == 0, result.output
        row = pd.read_csv(tmp_path / "minimax.csv").iloc[0]
        assert math.isfinite(row["lower_bound_pnorm"])
        assert math.isnan(row["bounds_lower"])


@pytest.mark.cli
class TestConfigErrors:
    """Configuration invalide: code de sortie 2"""

    def test_unknown_key(self, runner, tmp_path):
        """Test: clé inconnue nommée dans le message"""
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"n": 50, "nombre_magique": 3}), encoding="utf-8")
        result = _invoke(runner, "minimax", "--config", config, "--out", tmp_path)
        assert result.exit_code == 2
        assert "nombre_magique" in result.output

    def test_delta_out_of_range(self, runner, tmp_path):
        result = _invoke(runner, "minimax", "--delta", 1.5, "--out", tmp_path)
        assert result.exit_code == 2
        assert "delta" in result.output

    def test_unreadable_noise(self, runner, tmp_path):
        result = _invoke(runner, "risk", "--noise", "cauchy", "--out", tmp_path)
        assert result.exit_code == 2

    def test_command_mismatch(self, runner, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"command": "eigen"}), encoding="utf-8")
        result = _invoke(runner, "minimax", "--config", config, "--out", tmp_path)
        assert result.exit_code == 2

    def test_level_below_resolution(self, runner, tmp_path):
        """Test: δ < 1/reps refusé par le pipeline, manifeste quand même écrit"""
        result = _invoke(runner, "minimax", "--delta", 0.001, "--reps", 200, "--seed", 0,
                         "--workers", 1, "--out", tmp_path)
        assert result.exit_code == 2
        manifest = json.loads((tmp_path / "minimax_manifest.json").read_text(encoding="utf-8"))
        assert manifest["outputs"] == []


@pytest.mark.cli
@pytest.mark.integration
class TestRiskCommand:
    """Commande risk: OLS et procédure min-max sur le même problème"""

    def test_ols_and_minmax(self, runner, tmp_path):
        """Test: lignes comparables pour les deux estimateurs"""
        config = tmp_path / "config.json"
        config.write_text(
            json.dumps(
                {
                    "spec": {"input": {"kind": "gaussian", "d": 2}, "w_star": [1.0, -1.0], "noise": "student-t:3"},
                    "minmax": {"outer_steps": 30, "inner_steps": 3},
                }
            ),
            encoding="utf-8",
        )
        rows = {}
        for estimator in ("ols", "minmax"):
            result = _invoke(runner, "risk", "--config", config, "--estimator", estimator, "--n", 200,
                             "--delta", 0.1, "--reps", 100, "--seed", 3, "--workers", 1, "--out", tmp_path)
            assert result.exit_code == 0, result.output
            table = pd.read_csv(tmp_path / f"risk_{estimator}.csv")
            assert list(table.columns) == RISK_COLUMNS
            rows[estimator] = table.iloc[0]

        assert rows["ols"]["spec_id"] == rows["minmax"]["spec_id"]
        for row in rows.values():
            assert 0 < row["quantile_risk"] < math.inf
            assert row["guarantee_bound"] > 0

    def test_reps_too_small(self, runner, tmp_path):
        result = _invoke(runner, "risk", "--reps", 50, "--seed", 0, "--workers", 1, "--out", tmp_path)
        assert result.exit_code == 2


@pytest.mark.cli
class TestOtherCommands:
    """fit, var-est, bounds et eigen"""

    def test_fit(self, runner, tmp_path):
        result = _invoke(runner, "fit", "--estimator", "minmax", "--n", 100, "--d", 2, "--seed", 4,
                         "--workers", 1, "--out", tmp_path)
        assert result.exit_code == 0, result.output
        row = pd.read_csv(tmp_path / "fit.csv").iloc[0]
        assert row["k"] == 12
        assert {"w_0", "w_1", "excess_error", "certificate"} <= set(row.index)
        assert row["excess_error"] >= 0

    def test_var_est(self, runner, tmp_path):
        """Test: l'estimateur minimax bat le second moment empirique"""
        result = _invoke(runner, "var-est", "--n", 10, "--delta", 0.05, "--reps", 2000, "--seed", 5,
                         "--workers", 1, "--out", tmp_path)
        assert result.exit_code == 0, result.output
        table = pd.read_csv(tmp_path / "var-est.csv").set_index("estimator")
        assert table.loc["minimax", "quantile_risk"] < table.loc["second_moment", "quantile_risk"]
        assert table.loc["minimax", "minimax_value"] == table.loc["second_moment", "minimax_value"]

    def test_bounds(self, runner, tmp_path):
        result = _invoke(runner, "bounds", "--n", 60, "--d", 2, "--delta", 0.1, "--reps", 300, "--seed", 6,
                         "--workers", 1, "--out", tmp_path)
        assert result.exit_code == 0, result.output
        row = pd.read_csv(tmp_path / "bounds.csv").iloc[0]
        assert row["eps_hat"] == 0.0
        assert row["bounds_lower"] <= row["bounds_upper"]
        assert bool(row["lemma_holds"])
        assert row["sufficient_n"] > 0

    def test_eigen(self, runner, tmp_path):
        result = _invoke(runner, "eigen", "--n", 200, "--d", 2, "--delta", 0.1, "--reps", 1000, "--seed", 8,
                         "--workers", 1, "--out", tmp_path)
        assert result.exit_code == 0, result.output
        row = pd.read_csv(tmp_path / "eigen.csv").iloc[0]
        assert row["quantile"] <= row["bound"]
        assert math.isnan(row["trimmed_quantile"])
        assert (tmp_path / "eigen_curve.csv").exists()

    def test_version(self, runner):
        result = _invoke(runner, "--version")
        assert result.exit_code == 0
        assert "qrisk" in result.output


@pytest.mark.cli
class TestNumericFailures:
    """Échecs numériques hors hiérarchie qrisk: code de sortie 3"""

    @pytest.mark.parametrize(
        "exc",
        [np.linalg.LinAlgError("matrice non définie positive"), ZeroDivisionError("division par zéro")],
    )
    def test_exit_three_with_manifest(self, runner, tmp_path, monkeypatch, exc):
        """Test: code 3, message explicite et manifeste écrit sans sorties"""

        def failing_report(*args, **kwargs):
            raise exc

        monkeypatch.setattr("cli.main.minimax_report", failing_report)
        result = _invoke(runner, "minimax", "--n", 30, "--reps", 300, "--seed", 1,
                         "--workers", 1, "--out", tmp_path)
        assert result.exit_code == 3
        assert "Échec numérique" in result.output
        manifest = json.loads((tmp_path / "minimax_manifest.json").read_text(encoding="utf-8"))
        assert manifest["outputs"] == []
        assert manifest["command"] == "minimax"
