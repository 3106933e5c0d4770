"""
core/logger.py
---------------
Gerencia o sistema de logs do laboratório.

Objetivos:
- Registrar início/fim de execuções, cada avaliação e avisos numéricos.
- Permitir ativar/desativar modo DEBUG em tempo de execução (API / CLI).
- Fazer rotação automática dos arquivos de log.

Usa o módulo logging do Python com RotatingFileHandler.
"""

import logging
import os
from logging.handlers import RotatingFileHandler

from .config_loader import load_config, resolve_path

LOGGER_NAME = 'ensemble_lab'

# Variável global de controle do nível de debug
DEBUG_ENABLED = False


def setup_logger():
    """
    Configura o logger principal com base no settings.ini.
    Pode ser chamada várias vezes (ex.: após reload de configuração).
    """
    global DEBUG_ENABLED

    config = load_config()
    log_file = resolve_path(config.get('LOGGING', 'log_file', fallback='logs/lab.log'))
    log_level_str = config.get('LOGGING', 'level', fallback='INFO').upper()
    log_max = config.getint('LOGGING', 'log_max', fallback=5)

    log_level = getattr(logging, log_level_str, logging.INFO)
    DEBUG_ENABLED = (log_level == logging.DEBUG)

    os.makedirs(os.path.dirname(log_file), exist_ok=True)

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(log_level)
    logger.handlers.clear()  # evita duplicação se setup_logger for chamado novamente

    handler = RotatingFileHandler(
        log_file, maxBytes=log_max * 1024 * 1024, backupCount=5, encoding='utf-8'
    )
    formatter = logging.Formatter(
        fmt='%(asctime)s [%(levelname)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    handler.setFormatter(formatter)
    logger.addHandler(handler)

    return logger


def set_debug(enabled: bool):
    """Ativa ou desativa o modo debug em tempo de execução."""
    global DEBUG_ENABLED
    logger = logging.getLogger(LOGGER_NAME)
    DEBUG_ENABLED = enabled
    logger.setLevel(logging.DEBUG if enabled else logging.INFO)
    logger.info(f"Modo debug {'ativado' if enabled else 'desativado'}.")


def get_debug_status() -> bool:
    """Retorna o status atual do modo debug."""
    return DEBUG_ENABLED


# Instância global do logger (configurado na importação inicial)
logger = setup_logger()
