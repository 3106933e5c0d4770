"""
core/config_loader.py
----------------------
Responsável por ler as configurações de serviço do arquivo settings.ini
(logging, API de monitoramento e padrões do harness).

A configuração de cada execução de treino (RunConfig) fica em arquivos
próprios e é tratada em core/run_config.py.
"""

import configparser
import os

# Raiz do projeto (caminhos relativos do settings.ini partem daqui)
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))

# Caminho absoluto para o arquivo de configuração
CONFIG_PATH = os.path.join(PROJECT_ROOT, 'config', 'settings.ini')


def load_config(path: str = CONFIG_PATH) -> configparser.ConfigParser:
    """
    Lê o settings.ini e retorna um ConfigParser com as configurações carregadas.

    Raises:
        FileNotFoundError: arquivo inexistente.
        ValueError: arquivo mal formatado.
    """
    config = configparser.ConfigParser()

    if not os.path.exists(path):
        raise FileNotFoundError(f"Arquivo de configuração não encontrado em: {path}")

    try:
        config.read(path, encoding='utf-8')
    except configparser.Error as e:
        raise ValueError(f"Erro ao ler o arquivo de configuração: {e}")

    return config


def get_config_value(section: str, key: str, default=None):
    """
    Retorna o valor de uma chave dentro de uma seção do settings.ini,
    ou `default` se ela não existir.
    """
    config = load_config()

    if config.has_option(section, key):
        return config.get(section, key)
    return default


def resolve_path(path: str) -> str:
    """Caminhos relativos do settings.ini são resolvidos a partir da raiz do projeto."""
    return path if os.path.isabs(path) else os.path.join(PROJECT_ROOT, path)
