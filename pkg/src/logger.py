"""
Configuration du logging structuré des pipelines Monte Carlo
"""

import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from pythonjsonlogger.json import JsonFormatter

# Champs métier recopiés dans les logs JSON quand ils sont présents
DOMAIN_FIELDS = ("run_id", "command", "seed", "reps", "n", "d", "delta", "duration_ms")


class QRiskJSONFormatter(JsonFormatter):
    """Formateur JSON: horodatage, origine du message et champs métier"""

    def add_fields(self, log_record, record, message_dict):
        super().add_fields(log_record, record, message_dict)
        log_record["timestamp"] = datetime.now(timezone.utc).isoformat()
        log_record["level"] = record.levelname
        log_record["logger"] = record.name
        log_record["module"] = record.module
        log_record["function"] = record.funcName
        log_record["line"] = record.lineno
        for field in DOMAIN_FIELDS:
            if hasattr(record, field):
                log_record[field] = getattr(record, field)


def _json_formatter():
    return QRiskJSONFormatter("%(message)s", json_ensure_ascii=False)


def setup_logging(log_level=logging.INFO, log_dir="logs"):
    """
    Configure le logging avec sortie console et fichiers JSON

    Args:
        log_level: Niveau de log (INFO, DEBUG, WARNING, ERROR)
        log_dir: Répertoire pour les fichiers de logs

    Returns:
        Logger racine configuré
    """
    log_path = Path(log_dir)
    log_path.mkdir(parents=True, exist_ok=True)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
        handler.close()

    # Console lisible
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(
        logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )
    )
    root_logger.addHandler(console_handler)

    day = datetime.now().strftime("%Y%m%d")

    file_handler = logging.FileHandler(log_path / f"app_{day}.log", encoding="utf-8")
    file_handler.setLevel(log_level)
    file_handler.setFormatter(_json_formatter())
    root_logger.addHandler(file_handler)

    error_handler = logging.FileHandler(log_path / f"error_{day}.log", encoding="utf-8")
    error_handler.setLevel(logging.ERROR)
    error_handler.setFormatter(_json_formatter())
    root_logger.addHandler(error_handler)

    # Librairies tierces
    for noisy in ("joblib", "numexpr", "matplotlib"):
        logging.getLogger(noisy).setLevel(logging.WARNING)

    root_logger.debug(
        "Logging configuré",
        extra={"log_dir": str(log_path), "log_level": logging.getLevelName(log_level)},
    )
    return root_logger


def get_logger(name):
    """
    Récupère un logger nommé

    Args:
        name: Nom du logger (généralement __name__)

    Returns:
        Logger
    """
    return logging.getLogger(name)
