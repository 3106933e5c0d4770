"""
agent/critic.py
---------------
Q-networks e o ensemble de N críticos com parâmetros-alvo espelhados.

Arquitetura por variante:
    embed (FC) -> [MHA | conexão identidade | nada] -> tronco (2 camadas) -> cabeça (1)

- Variantes DroQ: cada camada do tronco faz linear -> dropout -> layer_norm -> ReLU.
- IDENTITY_DROQ troca a MHA por x + FF(x) sobre o embedding.
- Cada membro tem seu próprio bloco de atenção.
- Índices de membros são 0-based (0..N-1).
"""

from __future__ import annotations

import numpy as np

from core import numcore as nc
from core.errors import DimensionError, ParameterError
from core.layers import MLP, LinearLayer, MhaLayer, Module, ResidualBlock
from core.numcore import Tensor
from core.run_config import QVariant

DROQ_DROPOUT_RATE = 0.01

__all__ = [
    "QVariant", "QNetwork", "CriticEnsemble", "qnet_forward", "min_over_subset",
    "reduce_over_subset", "member_q_values", "sample_subset",
]


class QNetwork(Module):
    """Q_φ(s, a) para sequências de pares estado-ação concatenados."""

    def __init__(
        self,
        variant: QVariant | str,
        state_dim: int,
        action_dim: int,
        d_model: int,
        rng: np.random.Generator,
        num_heads: int = 8,
        dropout_rate: float = DROQ_DROPOUT_RATE,
        attention_scale: str = "per_head",
    ):
        self.variant = QVariant(variant)
        self.in_dim = state_dim + action_dim
        droq = self.variant.uses_droq

        self.embed = LinearLayer(self.in_dim, d_model, rng)
        self.mha = MhaLayer(d_model, num_heads, rng, attention_scale) if self.variant.uses_attention else None
        self.residual = (
            ResidualBlock(MLP([d_model, d_model], rng)) if self.variant is QVariant.IDENTITY_DROQ else None
        )
        self.trunk = MLP(
            [d_model, d_model, d_model], rng,
            dropout_rate=dropout_rate if droq else 0.0,
            layer_norm=droq,
        )
        self.head = LinearLayer(d_model, 1, rng)

    def forward(self, pairs, training: bool = False, rng=None) -> Tensor:
        return qnet_forward(self, pairs, training=training, rng=rng)


def qnet_forward(net: QNetwork, pairs, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """
    pairs: [.., L, state_dim + action_dim] -> Q [.., L].
    Avaliação (training=False) desliga o dropout e é determinística.
    """
    pairs = nc.as_tensor(pairs)
    if pairs.ndim < 2 or pairs.shape[-1] != net.in_dim:
        raise DimensionError(
            f"qnet: tokens com shape {pairs.shape}, esperado [.., L, {net.in_dim}]"
        )
    x = net.embed(pairs)
    if net.mha is not None:
        x = net.mha(x)
    elif net.residual is not None:
        x = net.residual(x, training=training, rng=rng)
    x = net.trunk(x, training=training, rng=rng)
    q = net.head(x)
    return nc.reshape(q, q.shape[:-1])


class CriticEnsemble:
    """N Q-networks (φ_1..φ_N) e cópias-alvo (φ_tar,1..φ_tar,N) que nunca recebem gradiente."""

    def __init__(self, members: list[QNetwork]):
        if not members:
            raise ParameterError("Ensemble precisa de ao menos um membro")
        self.members = members
        self.targets = [m.clone(requires_grad=False) for m in members]

    @classmethod
    def build(
        cls,
        size: int,
        variant: QVariant | str,
        state_dim: int,
        action_dim: int,
        d_model: int,
        rng: np.random.Generator,
        num_heads: int = 8,
        dropout_rate: float = DROQ_DROPOUT_RATE,
        attention_scale: str = "per_head",
    ) -> "CriticEnsemble":
        """Membros inicializados de forma independente (um sub-gerador por membro)."""
        streams = rng.spawn(size)
        return cls([
            QNetwork(variant, state_dim, action_dim, d_model, stream, num_heads, dropout_rate, attention_scale)
            for stream in streams
        ])

    @property
    def size(self) -> int:
        return len(self.members)

    def parameters(self) -> list[Tensor]:
        return [p for m in self.members for p in m.parameters()]

    def target_parameters(self) -> list[Tensor]:
        return [p for t in self.targets for p in t.parameters()]

    def zero_grad(self) -> None:
        for m in self.members:
            m.zero_grad()


def sample_subset(size: int, subset_size: int, rng: np.random.Generator) -> np.ndarray:
    """M índices distintos de 0..N-1, uniformes e sem reposição (ordenados)."""
    if not 1 <= subset_size <= size:
        raise ParameterError(f"subset M={subset_size} inválido para N={size}")
    return np.sort(rng.choice(size, size=subset_size, replace=False))


def _check_subset(subset, size: int) -> list[int]:
    indices = [int(i) for i in np.asarray(subset).reshape(-1)]
    if not indices or len(indices) > size:
        raise ParameterError(f"subset com {len(indices)} índices para ensemble de N={size}")
    if len(set(indices)) != len(indices):
        raise ParameterError(f"subset com índices duplicados: {indices}")
    if any(not 0 <= i < size for i in indices):
        raise ParameterError(f"subset com índice fora de 0..{size - 1}: {indices}")
    return indices


def reduce_over_subset(ensemble: CriticEnsemble, subset, pairs, reduction: str = "min") -> Tensor:
    """
    Redução (min ou mean) dos Q-alvo de um subconjunto, em modo avaliação.

    `subset` pode ser um vetor de M índices (um subconjunto para todos os
    tokens) ou uma matriz [G × M] (um subconjunto por grupo, pairs [G, L, ..]).
    """
    if reduction not in ("min", "mean"):
        raise ParameterError(f"reduction inválida: {reduction!r}")
    subset = np.asarray(subset)
    if subset.ndim == 1:
        indices = _check_subset(subset, ensemble.size)
        qs = nc.stack([qnet_forward(ensemble.targets[i], pairs) for i in indices], axis=0)
        return nc.reduce_min(qs, axis=0) if reduction == "min" else nc.reduce_mean(qs, axis=0)

    # um subconjunto por grupo: avalia a união e seleciona por linha
    pairs = nc.as_tensor(pairs)
    if subset.shape[0] != pairs.shape[0]:
        raise DimensionError(f"subsets {subset.shape} não casam com {pairs.shape[0]} grupos")
    for row in subset:
        _check_subset(row, ensemble.size)
    union = sorted(set(subset.reshape(-1).tolist()))
    q_union = np.stack([qnet_forward(ensemble.targets[i], pairs).data for i in union])  # [U, G, L]
    position = {member: k for k, member in enumerate(union)}
    rows = np.array([[position[int(i)] for i in row] for row in subset])                # [G, M]
    chosen = q_union[rows, np.arange(subset.shape[0])[:, None]]                          # [G, M, L]
    reduced = chosen.min(axis=1) if reduction == "min" else chosen.mean(axis=1)
    return Tensor(reduced)


def min_over_subset(ensemble: CriticEnsemble, subset, pairs) -> Tensor:
    """Mínimo elemento a elemento dos Q-alvo do subconjunto M (dropout desligado)."""
    return reduce_over_subset(ensemble, subset, pairs, "min")


def member_q_values(ensemble: CriticEnsemble, pairs) -> np.ndarray:
    """Q de todos os membros online para P pares isolados (L = 1): array [N × P]."""
    pairs = np.asarray(pairs.data if isinstance(pairs, Tensor) else pairs)
    tokens = pairs.reshape(pairs.shape[0], 1, pairs.shape[-1])
    with nc.no_grad():
        return np.stack([
            qnet_forward(m, tokens).data.reshape(-1).astype(np.float64) for m in ensemble.members
        ])
