"""
Ligne de commande qrisk: une commande par pipeline, sorties CSV et manifeste JSON

Usage:
    python -m cli.main minimax --d 2 --n 100 --delta 0.1 --reps 20000 --seed 7
"""

import math
import sys
import time
import uuid
from pathlib import Path

import click
import numpy as np
from pydantic import ValidationError

# Ajouter le répertoire parent au path
sys.path.insert(0, str(Path(__file__).parent.parent))

from cli.config import U64, RunManifest, describe_validation_error, load_config
from cli.reports import write_csv, write_curve, write_manifest
from cli.suite import run_suite
from src.cov_eigen import eigen_report
from src.distributions import matrix_params, norm_equivalence, sample_dataset
from src.errors import InvalidInput, InvalidLevel, QRiskError, exit_code_for
from src.estimators import minmax_certificate, p_alpha_inverse, trim_level_for_delta
from src.logger import get_logger, setup_logging
from src.numerics import RngStream, std_normal_abs_moment
from src.risk_minimax import (
    ExcessErrorOracle,
    GuaranteeExtras,
    fit_estimator,
    guarantee_rhs,
    lemma_bounds_check,
    minimax_report,
    pnorm_lower_bound,
    quantile_risk_mc,
    sample_design_replicates,
    square_bounds,
    sufficient_sample_size,
    variance_quantile_risk_mc,
)
from src.settings import LOG_DIR, VERSION, log_level
from src.truncation import TrimLevel

logger = get_logger(__name__)

MINIMAX_COLUMNS = [
    "n",
    "d",
    "delta",
    "sigma2",
    "reps",
    "exact_mc",
    "se_proxy",
    "asymptotic",
    "lower_bound_pnorm",
    "bounds_lower",
    "bounds_upper",
    "sufficient_n",
    "seed",
]
RISK_COLUMNS = [
    "estimator",
    "spec_id",
    "n",
    "delta",
    "reps",
    "quantile_risk",
    "se_proxy",
    "seed",
    "guarantee_bound",
    "guarantee_min_n",
    "guarantee_applies",
]
EIGEN_COLUMNS = ["n", "d", "delta", "reps", "quantile", "se_proxy", "bound", "trimmed_quantile", "seed"]
VAR_COLUMNS = ["estimator", "n", "delta", "sigma2", "reps", "quantile_risk", "se_proxy", "minimax_value", "seed"]
BOUNDS_COLUMNS = [
    "n",
    "d",
    "delta",
    "sigma2",
    "reps",
    "eps_hat",
    "eps_lower",
    "eps_upper",
    "bounds_lower",
    "bounds_upper",
    "slack_trace_lower",
    "slack_trace_upper",
    "slack_w_lower",
    "slack_w_upper",
    "lemma_holds",
    "guarantee_bound",
    "guarantee_min_n",
    "sufficient_n",
    "lower_bound_pnorm",
    "seed",
]


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def _overrides(config):
    """Réglages min-max du fichier, plus k s'il est imposé"""
    overrides = config.minmax.as_kwargs()
    if config.k is not None:
        overrides["k"] = config.k
    return overrides


def _trim(config, n):
    if config.k is not None:
        return TrimLevel(config.k, n)
    return trim_level_for_delta(config.delta, n)


def _guarantee_columns(spec, n, delta, rng):
    """Garantie de la procédure min-max pour la loi simulée (σ² = variance du bruit)"""
    error = spec.error
    d = spec.dim
    params = matrix_params(spec.input, rng=rng.child(0))
    extras = GuaranteeExtras(sigma2=spec.noise.variance())
    if error.kind == "ppower":
        extras = GuaranteeExtras(
            sigma2=spec.noise.variance(),
            mu=spec.noise.abs_moment(error.p - 2.0),
            norm_equiv=norm_equivalence(spec.input, error.p, rng=rng.child(1)),
        )
    rhs = guarantee_rhs(error, params, extras, n, d, delta)
    return {
        "guarantee_bound": rhs.risk_bound,
        "guarantee_min_n": rhs.min_n,
        "guarantee_applies": bool(n >= rhs.min_n),
    }


def fit_pipeline(config, rng, out_dir):
    spec = config.problem_spec()
    dataset = sample_dataset(spec, config.n, rng.child(0))
    fit = fit_estimator(config.estimator, dataset, spec.error, config.delta, _overrides(config))
    oracle = ExcessErrorOracle(spec)
    trim = _trim(config, dataset.n)
    certificate = minmax_certificate(fit.w_hat, dataset, spec.error, trim, rng=rng.child(1))

    row = {"estimator": config.estimator, "n": dataset.n, "d": dataset.d, "delta": config.delta, "k": trim.k}
    row.update({f"w_{j}": float(value) for j, value in enumerate(fit.w_hat)})
    row.update(
        {
            "excess_error": oracle.excess(fit.w_hat),
            "iterations": fit.iterations,
            "singular": fit.singular,
            "certificate": certificate,
            "seed": config.seed,
        }
    )
    path = write_csv([row], out_dir / "fit.csv", columns=list(row))
    return [path], 0


def risk_pipeline(config, rng, out_dir):
    spec = config.problem_spec()
    report = quantile_risk_mc(
        spec,
        config.estimator,
        config.n,
        config.delta,
        config.reps,
        rng.child(0),
        workers=config.workers,
        overrides=_overrides(config),
    )
    row = report.as_row()
    row["seed"] = config.seed
    row.update(_guarantee_columns(spec, config.n, config.delta, rng.child(1)))
    path = write_csv([row], out_dir / f"risk_{config.estimator}.csv", columns=RISK_COLUMNS)
    return [path], 0


def minimax_pipeline(config, rng, out_dir):
    input_dist = config.input_dist()
    report = minimax_report(
        input_dist,
        config.error_fn(),
        config.sigma2,
        config.n,
        config.delta,
        config.reps,
        rng,
        workers=config.workers,
    )
    table = write_csv([report.as_row(config.seed)], out_dir / "minimax.csv", columns=MINIMAX_COLUMNS)
    curve = write_curve(report.values, out_dir / "minimax_curve.csv")
    return [table, curve], 0


def eigen_pipeline(config, rng, out_dir):
    input_dist = config.input_dist()
    params = matrix_params(input_dist, rng=rng.child(2))
    trimmed_reps = max(100, config.reps // 20) if config.k is not None else None
    report = eigen_report(
        input_dist,
        params,
        config.n,
        config.delta,
        config.reps,
        rng,
        k=config.k,
        trimmed_reps=trimmed_reps,
        workers=config.workers,
    )
    table = write_csv([report.as_row(config.seed)], out_dir / "eigen.csv", columns=EIGEN_COLUMNS)
    curve = write_curve(report.values, out_dir / "eigen_curve.csv")
    return [table, curve], 0


def var_est_pipeline(config, rng, out_dir):
    # mêmes échantillons pour les deux estimateurs
    stream = rng.child(0)
    minimax_value = p_alpha_inverse(1.0 - config.delta, 0.5 * config.n)
    rows = []
    for weighted, name in ((True, "minimax"), (False, "second_moment")):
        q = variance_quantile_risk_mc(
            config.n,
            config.delta,
            config.reps,
            stream,
            weighted=weighted,
            sigma2=config.sigma2,
            workers=config.workers,
        )
        rows.append(
            {
                "estimator": name,
                "n": config.n,
                "delta": config.delta,
                "sigma2": config.sigma2,
                "reps": config.reps,
                "quantile_risk": q.value,
                "se_proxy": q.se_proxy,
                "minimax_value": minimax_value,
                "seed": config.seed,
            }
        )
    path = write_csv(rows, out_dir / "var-est.csv", columns=VAR_COLUMNS)
    return [path], 0


def bounds_pipeline(config, rng, out_dir):
    input_dist = config.input_dist()
    error = config.error_fn()
    d, n, delta, sigma2 = input_dist.dim, config.n, config.delta, config.sigma2
    replicates = sample_design_replicates(input_dist, n, config.reps, rng.child(0), config.workers)
    params = matrix_params(input_dist, rng=rng.child(2))
    row = dict.fromkeys(BOUNDS_COLUMNS, math.nan)
    row.update(
        {
            "n": n,
            "d": d,
            "delta": delta,
            "sigma2": sigma2,
            "reps": config.reps,
            "eps_hat": replicates.singular_fraction,
            "seed": config.seed,
        }
    )

    try:
        bounds = square_bounds(input_dist, sigma2, n, delta, config.reps, rng.child(1), replicates=replicates)
        row.update(
            {
                "eps_lower": bounds.eps_lower,
                "eps_upper": bounds.eps_upper,
                "bounds_lower": bounds.lower,
                "bounds_upper": bounds.upper,
            }
        )
    except InvalidLevel as exc:
        logger.warning(f"Encadrement ignoré: {exc}", extra={"n": n, "delta": delta})

    try:
        lemma = lemma_bounds_check(replicates, delta)
        row.update({f"slack_{key}": value for key, value in lemma.slacks.items()})
        row["lemma_holds"] = lemma.holds()
    except InvalidLevel as exc:
        logger.warning(f"Inégalités sur Tr et W ignorées: {exc}", extra={"n": n, "delta": delta})

    extras = GuaranteeExtras(sigma2=sigma2)
    if error.kind == "ppower":
        extras = GuaranteeExtras(
            sigma2=sigma2,
            mu=std_normal_abs_moment(error.p - 2.0) * sigma2 ** (0.5 * (error.p - 2.0)),
            norm_equiv=norm_equivalence(input_dist, error.p, rng=rng.child(3)),
        )
    rhs = guarantee_rhs(error, params, extras, n, d, delta)
    row.update({"guarantee_bound": rhs.risk_bound, "guarantee_min_n": rhs.min_n})

    if delta < 0.5:
        row["sufficient_n"] = sufficient_sample_size(params, d, delta)
        if error.kind == "ppower":
            row["lower_bound_pnorm"] = pnorm_lower_bound(error.p, sigma2, d, n, delta)

    path = write_csv([row], out_dir / "bounds.csv", columns=BOUNDS_COLUMNS)
    return [path], 0


def suite_pipeline(config, rng, out_dir):
    table = run_suite(rng, quick=config.quick, workers=config.workers)
    click.echo(table.to_string(index=False))
    path = write_csv(table.to_dict("records"), out_dir / "suite.csv", columns=list(table.columns))
    failed = int((table["statut"] != "OK").sum())
    if failed:
        click.echo(f"{failed} critère(s) en échec", err=True)
    return [path], 1 if failed else 0


# ---------------------------------------------------------------------------
# Exécution commune
# ---------------------------------------------------------------------------


def _execute(ctx, command, options, pipeline):
    """
    Valide la configuration, lance le pipeline, écrit le manifeste

    Codes de sortie: 0 succès, 1 critère en échec, 2 configuration invalide,
    3 échec numérique.
    """
    options = dict(options)
    config_path = options.pop("config_path", None)
    try:
        config = load_config(command, config_path, options)
    except ValidationError as exc:
        message = describe_validation_error(exc)
        click.echo(f"Configuration invalide: {message}", err=True)
        logger.warning(f"Configuration invalide: {message}", extra={"command": command})
        ctx.exit(2)
    except InvalidInput as exc:
        click.echo(f"Configuration invalide: {exc}", err=True)
        logger.warning(f"Configuration invalide: {exc}", extra={"command": command})
        ctx.exit(2)

    run_id = uuid.uuid4().hex[:12]
    out_dir = Path(config.out)
    context = {"run_id": run_id, "command": command, "seed": config.seed, "reps": config.reps}
    logger.info(f"Début de l'exécution '{command}'", extra=context)
    start = time.perf_counter()

    outputs = []
    try:
        outputs, code = pipeline(config, RngStream(config.seed), out_dir)
    except QRiskError as exc:
        code = exit_code_for(exc)
        if code == 3:
            click.echo(f"Échec numérique: {exc}", err=True)
            logger.error(f"Échec numérique: {exc}", exc_info=True, extra=context)
        else:
            click.echo(f"Configuration invalide: {exc}", err=True)
            logger.warning(f"Configuration invalide: {exc}", extra=context)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        code = 3
        click.echo(f"Échec numérique: {exc}", err=True)
        logger.error(f"Échec numérique: {exc}", exc_info=True, extra=context)

    wall_time = time.perf_counter() - start
    manifest = RunManifest(
        command=command,
        config_hash=config.config_hash(),
        seed=config.seed,
        wall_time_s=round(wall_time, 3),
        outputs=[Path(p).name for p in outputs],
        config=config.model_dump(mode="json"),
    )
    write_manifest(manifest, out_dir / f"{command}_manifest.json")
    logger.info(
        f"Fin de l'exécution '{command}'",
        extra={**context, "duration_ms": round(wall_time * 1000, 2), "exit_code": code},
    )
    ctx.exit(code)


def experiment_options(func):
    """Options partagées par toutes les commandes (elles priment sur le fichier --config)"""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="Fichier JSON de configuration"),
        click.option("--seed", type=click.IntRange(0, U64 - 1), default=None, help="Graine (QRISK_SEED sinon)"),
        click.option("--reps", type=int, default=None, help="Nombre de réplications Monte Carlo"),
        click.option("--delta", type=float, default=None, help="Niveau δ du risque quantile"),
        click.option("--n", "n", type=int, default=None, help="Taille d'échantillon"),
        click.option("--d", "d", type=int, default=None, help="Dimension"),
        click.option("--sigma2", type=float, default=None, help="Variance du bruit"),
        click.option("--p", "p", type=float, default=None, help="Exposant de l'erreur puissance (> 2)"),
        click.option("--estimator", type=str, default=None, help="ols ou minmax"),
        click.option("--noise", type=str, default=None, help="gaussian, student-t:ν, two-point:a:prob, none"),
        click.option("--input", "input", type=str, default=None,
                     help="gaussian, unit, bernoulli:ρ, signed-axes, coord-kurtosis:κ"),
        click.option("--k", "k", type=int, default=None, help="Niveau de troncature imposé"),
        click.option("--out", type=click.Path(file_okay=False), default=None, help="Répertoire de sortie"),
        click.option("--workers", type=int, default=None, help="Processus parallèles"),
        click.option("--quick", is_flag=True, default=None, help="Réplications réduites"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


# ---------------------------------------------------------------------------
# Commandes
# ---------------------------------------------------------------------------


@click.group(name="qrisk")
@click.version_option(VERSION, prog_name="qrisk")
def qrisk():
    """Risque quantile en régression linéaire: estimation, minimax et bornes"""
    setup_logging(log_level(), LOG_DIR)


@qrisk.command()
@experiment_options
@click.pass_context
def fit(ctx, **options):
    """Ajuste un estimateur sur un jeu simulé"""
    _execute(ctx, "fit", options, fit_pipeline)


@qrisk.command()
@experiment_options
@click.pass_context
def risk(ctx, **options):
    """Risque quantile d'un estimateur par Monte Carlo"""
    _execute(ctx, "risk", options, risk_pipeline)


@qrisk.command()
@experiment_options
@click.pass_context
def minimax(ctx, **options):
    """Risque minimax exact sur la classe gaussienne et formules associées"""
    _execute(ctx, "minimax", options, minimax_pipeline)


@qrisk.command()
@experiment_options
@click.pass_context
def eigen(ctx, **options):
    """Quantile de 1 − λ_min de la covariance empirique blanchie"""
    _execute(ctx, "eigen", options, eigen_pipeline)


@qrisk.command(name="var-est")
@experiment_options
@click.pass_context
def var_est(ctx, **options):
    """Estimateur minimax de la variance contre le second moment empirique"""
    _execute(ctx, "var-est", options, var_est_pipeline)


@qrisk.command()
@experiment_options
@click.pass_context
def bounds(ctx, **options):
    """Bornes explicites du risque minimax"""
    _execute(ctx, "bounds", options, bounds_pipeline)


@qrisk.command()
@experiment_options
@click.pass_context
def suite(ctx, **options):
    """Batterie complète de critères de validation"""
    _execute(ctx, "suite", options, suite_pipeline)


if __name__ == "__main__":
    qrisk()
