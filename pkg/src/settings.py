"""
Paramètres d'environnement (fichier .env + variables d'environnement)
"""

import logging
import os

import joblib
from dotenv import load_dotenv

load_dotenv()

VERSION = "1.0.0"

DEFAULT_SEED = int(os.getenv("QRISK_SEED", "0"))
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
LOG_DIR = os.getenv("QRISK_LOG_DIR", "logs")
OUTPUT_DIR = os.getenv("QRISK_OUTPUT_DIR", "results")


def default_workers():
    """Nombre de workers par défaut (QRISK_WORKERS ou cœurs logiques)"""
    value = os.getenv("QRISK_WORKERS")
    if value:
        return max(1, int(value))
    return max(1, joblib.cpu_count())


def env_seed():
    """Graine de repli lue à chaque appel (QRISK_SEED)"""
    return int(os.getenv("QRISK_SEED", str(DEFAULT_SEED)))


def log_level():
    """Niveau de logging numérique"""
    level = getattr(logging, LOG_LEVEL, logging.INFO)
    return level if isinstance(level, int) else logging.INFO
