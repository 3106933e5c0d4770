"""
core/run_config.py
------------------
Configuração de uma execução de treino (RunConfig).

Formato: texto INI. As seções ([ENV], [ENSEMBLE], [TRAINER], [ACTOR],
[EVAL], [OUTPUT]) só agrupam as chaves para leitura; o espaço de nomes
é plano e cada chave aparece uma única vez no arquivo.

- Chaves desconhecidas são rejeitadas (pydantic, extra="forbid").
- Erros de validação viram ConfigError com o número da linha.
- serialize_run_config() escreve todas as chaves numa ordem fixa, então
  parse -> serialize -> parse devolve a mesma configuração.
- A identidade da execução é o sha256 da serialização canônica
  (semente incluída, output_dir excluído).
"""

from __future__ import annotations

import configparser
import hashlib
import re
from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.errors import ConfigError

CONFIG_FORMAT_VERSION = 1


class QVariant(str, Enum):
    """Arquitetura das Q-networks do ensemble."""
    REDQ_BASE = "REDQ_BASE"
    DROQ_BASE = "DROQ_BASE"
    MHA_REDQ = "MHA_REDQ"
    MHA_DROQ = "MHA_DROQ"
    IDENTITY_DROQ = "IDENTITY_DROQ"

    @property
    def uses_attention(self) -> bool:
        return self in (QVariant.MHA_REDQ, QVariant.MHA_DROQ)

    @property
    def uses_droq(self) -> bool:
        return self in (QVariant.DROQ_BASE, QVariant.MHA_DROQ, QVariant.IDENTITY_DROQ)

    @property
    def uses_bootstrap(self) -> bool:
        """Variantes que consomem grupos b* amostrados com reposição."""
        return self in (QVariant.MHA_REDQ, QVariant.MHA_DROQ, QVariant.IDENTITY_DROQ)


class TrainerConfig(BaseModel):
    """Parâmetros do laço de treino (N, M, G, gamma, rho, ...)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    # -- ensemble / crítico --
    variant: QVariant = QVariant.MHA_REDQ
    ensemble_size: int = Field(10, ge=1)          # N
    subset_size: int = Field(2, ge=1)             # M
    target_reduction: Literal["min", "mean"] = "min"
    subset_scope: Literal["per_update", "per_group"] = "per_update"
    d_model: int = Field(256, ge=2)
    num_heads: int = Field(8, ge=1)               # H
    group_size: int = Field(4, ge=1)              # |b*|
    groups_per_update: Literal["cover", "per_element"] = "cover"
    dropout_rate: float = Field(0.01, ge=0.0, lt=1.0)
    attention_scale: Literal["per_head", "full_model"] = "per_head"

    # -- laço de treino --
    seed: int = Field(0, ge=0)
    total_env_steps: int = Field(30000, ge=1)
    init_random_steps: int = Field(5000, ge=0)
    utd_ratio: int = Field(20, ge=1)              # G
    batch_size: int = Field(512, ge=1)            # |B|
    gamma: float = Field(0.99, gt=0.0, le=1.0)
    polyak: float = Field(0.995, ge=0.0, le=1.0)  # rho
    learning_rate: float = Field(3e-4, gt=0.0)
    grad_clip_norm: float = Field(0.0, ge=0.0)    # 0 = desligado
    buffer_capacity: int = Field(1_000_000, ge=1)
    precision: Literal["fast", "check"] = "fast"

    # -- ator / temperatura --
    policy_hidden: int = Field(256, ge=1)
    alpha_mode: Literal["auto", "fixed"] = "auto"
    init_alpha: float = Field(1.0, gt=0.0)
    target_entropy: float | None = None           # None -> -action_dim

    # -- cadência de métricas --
    eval_interval: int = Field(1000, ge=1)

    @model_validator(mode="after")
    def _cross_field(self):
        if self.subset_size > self.ensemble_size:
            raise ValueError(
                f"subset_size: M={self.subset_size} não pode exceder ensemble_size N={self.ensemble_size} (1 <= M <= N)"
            )
        if self.variant.uses_attention and self.d_model % self.num_heads != 0:
            raise ValueError(
                f"num_heads: d_model={self.d_model} deve ser divisível por H={self.num_heads}"
            )
        if self.batch_size > self.buffer_capacity:
            raise ValueError(
                f"batch_size: |B|={self.batch_size} maior que buffer_capacity={self.buffer_capacity}"
            )
        return self


class RunConfig(TrainerConfig):
    """TrainerConfig + ambiente, avaliação e diretório de saída."""

    env_name: str = "PointMass1D"
    eval_episodes: int = Field(10, ge=1)
    bias_points: int = Field(20, ge=1)
    bias_rollouts: int = Field(5, ge=1)
    bias_horizon: int = Field(200, ge=1)
    output_dir: str = "runs"

    @field_validator("env_name")
    @classmethod
    def _known_env(cls, value: str) -> str:
        from envs import ENVIRONMENTS

        if value not in ENVIRONMENTS:
            raise ValueError(f"ambiente desconhecido {value!r} (disponíveis: {sorted(ENVIRONMENTS)})")
        return value


# Ordem canônica de serialização
SECTIONS: dict[str, tuple[str, ...]] = {
    "ENV": ("env_name",),
    "ENSEMBLE": (
        "variant", "ensemble_size", "subset_size", "target_reduction", "subset_scope",
        "d_model", "num_heads", "group_size", "groups_per_update", "dropout_rate",
        "attention_scale",
    ),
    "TRAINER": (
        "seed", "total_env_steps", "init_random_steps", "utd_ratio", "batch_size",
        "gamma", "polyak", "learning_rate", "grad_clip_norm", "buffer_capacity", "precision",
    ),
    "ACTOR": ("policy_hidden", "alpha_mode", "init_alpha", "target_entropy"),
    "EVAL": ("eval_interval", "eval_episodes", "bias_points", "bias_rollouts", "bias_horizon"),
    "OUTPUT": ("output_dir",),
}

_KEY_LINE = re.compile(r"^\s*([^#;\[\s][^=:]*?)\s*[=:]")
_SECTION_LINE = re.compile(r"^\s*\[([^\]]+)\]")


# ----------------------------------------------------------------------
# Leitura
# ----------------------------------------------------------------------
def _line_index(text: str) -> tuple[dict[str, int], dict[str, int]]:
    """Mapeia chave -> linha e seção -> linha (1-based, primeira ocorrência)."""
    keys: dict[str, int] = {}
    sections: dict[str, int] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        section = _SECTION_LINE.match(line)
        if section:
            sections.setdefault(section.group(1).strip(), number)
            continue
        key = _KEY_LINE.match(line)
        if key:
            keys.setdefault(key.group(1).strip(), number)
    return keys, sections


def _raise_from_validation(error: ValidationError, lines: dict[str, int]) -> None:
    first = error.errors()[0]
    key = str(first["loc"][0]) if first["loc"] else None
    message = first["msg"]
    if key is None:
        # erro entre campos: a mensagem começa com o nome da chave
        message = message.removeprefix("Value error, ")
        match = re.match(r"(\w+):", message)
        key = match.group(1) if match else None
    if first["type"] == "extra_forbidden":
        message = f"chave desconhecida {key!r}"
    elif key is not None and not message.startswith(f"{key}:"):
        message = f"{key}: {message}"
    raise ConfigError(message, line=lines.get(key) if key else None, key=key) from error


def parse_run_config(text: str, source: str = "<string>") -> RunConfig:
    """Converte o texto INI em RunConfig validado."""
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str  # preserva maiúsculas/minúsculas das chaves
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("chave fora de qualquer seção [..]", line=e.lineno) from e
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"chave duplicada {e.option!r}", line=e.lineno, key=e.option) from e
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"seção duplicada [{e.section}]", line=e.lineno) from e
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ConfigError(f"linha inválida em {source}", line=line) from e

    lines, section_lines = _line_index(text)
    flat: dict[str, str | None] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(
                f"seção desconhecida [{section}] (válidas: {', '.join(SECTIONS)})",
                line=section_lines.get(section),
            )
        for key, value in parser.items(section, raw=True):
            if key in flat:
                raise ConfigError(f"chave {key!r} repetida em mais de uma seção", line=lines.get(key), key=key)
            flat[key] = value

    if flat.get("target_entropy", "").strip().lower() in ("auto", ""):
        flat.pop("target_entropy", None)

    try:
        return RunConfig.model_validate(flat)
    except ValidationError as e:
        _raise_from_validation(e, lines)


def load_run_config(path: str) -> RunConfig:
    """Lê e valida um arquivo de configuração de execução."""
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"não foi possível ler {path}: {e.strerror}") from e
    return parse_run_config(text, source=path)


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Nova configuração com chaves substituídas (valores podem vir como texto)."""
    data = config.model_dump()
    data.update(overrides)
    if data.get("target_entropy") in ("auto", ""):
        data["target_entropy"] = None
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        _raise_from_validation(e, {})


# ----------------------------------------------------------------------
# Escrita e identidade
# ----------------------------------------------------------------------
def _format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_run_config(config: RunConfig, include_output: bool = True) -> str:
    """Serialização canônica (ordem fixa de seções e chaves)."""
    out = [f"# run config, format_version = {CONFIG_FORMAT_VERSION}"]
    for section, keys in SECTIONS.items():
        if section == "OUTPUT" and not include_output:
            continue
        out.append("")
        out.append(f"[{section}]")
        for key in keys:
            out.append(f"{key} = {_format_value(getattr(config, key))}")
    return "\n".join(out) + "\n"


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(serialize_run_config(config, include_output=False).encode("utf-8")).hexdigest()


def run_id(config: RunConfig) -> str:
    """Identidade curta da execução (nome do diretório de saída)."""
    return config_hash(config)[:12]
