"""
core/checkpoint.py
------------------
Persistência de um agente treinado num único arquivo .npz.

Chaves:
    critic/member{i}/{param}   parâmetros online do membro i
    critic/target{i}/{param}   parâmetros-alvo do membro i
    actor/{param}              política
    temperature/log_alpha
    meta/format_version, meta/variant, meta/config_hash

Arrays sempre gravados como float64 little-endian ("<f8").
"""

from __future__ import annotations

import numpy as np

from core.errors import ContractError
from core.logger import logger
from core.run_config import config_hash

CHECKPOINT_FORMAT_VERSION = 1


def _flatten(agent) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for i, (member, target) in enumerate(zip(agent.ensemble.members, agent.ensemble.targets)):
        for name, p in member.named_parameters():
            arrays[f"critic/member{i}/{name}"] = p.data
        for name, p in target.named_parameters():
            arrays[f"critic/target{i}/{name}"] = p.data
    for name, p in agent.policy.named_parameters():
        arrays[f"actor/{name}"] = p.data
    arrays["temperature/log_alpha"] = agent.temperature.log_alpha.data
    return arrays


def save_checkpoint(path: str, agent, config) -> None:
    """Grava redes, alvos e temperatura do agente em `path` (.npz)."""
    arrays = {key: np.asarray(value, dtype="<f8") for key, value in _flatten(agent).items()}
    arrays["meta/format_version"] = np.array(CHECKPOINT_FORMAT_VERSION)
    arrays["meta/variant"] = np.array(config.variant.value)
    arrays["meta/config_hash"] = np.array(config_hash(config))
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.info(f"Checkpoint salvo em {path} ({len(arrays)} arrays)")


def load_checkpoint(path: str, agent) -> dict[str, str | int]:
    """
    Restaura os parâmetros de `agent` a partir de `path`.
    Retorna os metadados; variante ou shapes diferentes geram ContractError.
    """
    with np.load(path) as archive:
        version = int(archive["meta/format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ContractError(f"checkpoint {path}: format_version {version} não suportada")
        variant = str(archive["meta/variant"])
        expected = agent.config.variant.value
        if variant != expected:
            raise ContractError(f"checkpoint {path}: variante {variant}, agente é {expected}")

        own = _flatten(agent)
        stored = {key for key in archive.files if not key.startswith("meta/")}
        if stored != set(own):
            missing = sorted(set(own) - stored)[:5]
            extra = sorted(stored - set(own))[:5]
            raise ContractError(f"checkpoint {path}: parâmetros não casam (faltando {missing}, sobrando {extra})")
        for key, data in own.items():
            value = archive[key]
            if value.shape != data.shape:
                raise ContractError(f"checkpoint {path}: {key} com shape {value.shape}, esperado {data.shape}")
            data[...] = value
        meta = {"format_version": version, "variant": variant, "config_hash": str(archive["meta/config_hash"])}
    logger.info(f"Checkpoint carregado de {path} (variante {variant})")
    return meta
