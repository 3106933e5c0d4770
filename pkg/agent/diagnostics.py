"""
agent/diagnostics.py
--------------------
Métricas de avaliação do ensemble:

- retorno Monte Carlo R^π(s0, a0) a partir de um par forçado
- viés de estimação Q − R^π, absoluto e normalizado pela média de R^π (com sinal: retornos negativos invertem o sinal de Q − R^π)
- distribuição do max-Q e do min-Q entre os membros (quartis e outliers)

Somatórios usam math.fsum: o resultado não depende da ordem dos pontos.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from agent.critic import CriticEnsemble, member_q_values, sample_subset
from core.errors import DegenerateInputError, ParameterError
from envs.base import Env

Behavior = Callable[[np.ndarray, np.random.Generator], np.ndarray]

DENOMINATOR_FLOOR = 1e-6
OUTLIER_IQR_FACTOR = 1.5


@dataclass(frozen=True)
class BiasStats:
    bias: np.ndarray               # Q − R^π por ponto
    mean_bias: float
    mean_normalized_bias: float
    std_normalized_bias: float
    denominator: float             # média de R^π sobre os pontos (com sinal)

    @property
    def normalized_bias(self) -> np.ndarray:
        return self.bias / self.denominator


@dataclass(frozen=True)
class QDistStats:
    max_q: np.ndarray
    min_q: np.ndarray
    max_quartiles: tuple[float, float, float]
    min_quartiles: tuple[float, float, float]
    max_outliers: int
    min_outliers: int


# ----------------------------------------------------------------------
# Rollouts
# ----------------------------------------------------------------------
def monte_carlo_return(
    env: Env,
    policy: Behavior,
    s0,
    a0,
    gamma: float,
    horizon: int,
    rng: np.random.Generator,
    n_rollouts: int = 5,
) -> float:
    """Média de Σ γ^t r_t sobre n_rollouts, começando em (s0, a0) e seguindo π."""
    if n_rollouts < 1 or horizon < 1:
        raise ParameterError(f"monte_carlo_return: n_rollouts={n_rollouts}, horizon={horizon}")
    returns = []
    for _ in range(n_rollouts):
        env.reset(rng, state=s0)
        action = np.asarray(a0, dtype=np.float64)
        terms = []
        discount = 1.0
        for _ in range(horizon):
            result = env.step(action)
            terms.append(discount * result.reward)
            discount *= gamma
            if result.done or result.truncated or discount == 0.0:
                break
            action = policy(result.next_state, rng)
        returns.append(math.fsum(terms))
    return math.fsum(returns) / n_rollouts


def evaluation_returns(env: Env, policy: Behavior, episodes: int, rng: np.random.Generator) -> list[float]:
    """Retorno não descontado de episódios completos."""
    returns = []
    for _ in range(episodes):
        state = env.reset(rng)
        rewards = []
        while True:
            result = env.step(policy(state, rng))
            rewards.append(result.reward)
            if result.done or result.truncated:
                break
            state = result.next_state
        returns.append(math.fsum(rewards))
    return returns


def evaluation_points(env: Env, policy: Behavior, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(s, a) do primeiro passo de `count` episódios: s do reset, a ~ π(·|s)."""
    states, actions = [], []
    for _ in range(count):
        state = env.reset(rng)
        states.append(state)
        actions.append(np.asarray(policy(state, rng), dtype=np.float64))
    return np.stack(states), np.stack(actions)


# ----------------------------------------------------------------------
# Viés de estimação
# ----------------------------------------------------------------------
def bias_stats(q_pred, mc_returns) -> BiasStats:
    """Estatísticas do viés Q − R^π normalizado por E[R^π] (com sinal)."""
    q_pred = np.asarray(q_pred, dtype=np.float64).reshape(-1)
    mc_returns = np.asarray(mc_returns, dtype=np.float64).reshape(-1)
    if q_pred.shape != mc_returns.shape or q_pred.size == 0:
        raise ParameterError(f"bias_stats: {q_pred.size} previsões para {mc_returns.size} retornos")
    n = q_pred.size
    bias = q_pred - mc_returns
    mean_bias = math.fsum(bias) / n
    denominator = math.fsum(mc_returns) / n
    if abs(denominator) < DENOMINATOR_FLOOR:
        partial = BiasStats(bias, mean_bias, math.nan, math.nan, denominator)
        raise DegenerateInputError(
            f"normalização do viés degenerada: |E[R]| = {abs(denominator):.3g} < {DENOMINATOR_FLOOR}", stats=partial,
        )
    normalized = bias / denominator
    mean_norm = math.fsum(normalized) / n
    std_norm = math.sqrt(math.fsum((normalized - mean_norm) ** 2) / n)
    return BiasStats(bias, mean_bias, mean_norm, std_norm, denominator)


def estimation_bias(
    ensemble: CriticEnsemble,
    subset_size: int,
    states,
    actions,
    mc_returns,
    rng: np.random.Generator,
) -> BiasStats:
    """Q_φ(s, a) = média de um M-subconjunto sorteado para cada ponto."""
    pairs = np.concatenate([np.asarray(states, dtype=np.float64), np.asarray(actions, dtype=np.float64)], axis=-1)
    q_all = member_q_values(ensemble, pairs)
    q_pred = np.array([
        q_all[sample_subset(ensemble.size, subset_size, rng), point].mean() for point in range(pairs.shape[0])
    ])
    return bias_stats(q_pred, mc_returns)


# ----------------------------------------------------------------------
# Distribuição dos Q
# ----------------------------------------------------------------------
def _quartiles(values: np.ndarray) -> tuple[float, float, float]:
    q1, median, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    return float(q1), float(median), float(q3)


def outlier_count(values) -> int:
    """Valores fora de [Q1 − 1.5·IQR, Q3 + 1.5·IQR]."""
    values = np.asarray(values, dtype=np.float64)
    q1, _, q3 = _quartiles(values)
    spread = OUTLIER_IQR_FACTOR * (q3 - q1)
    return int(np.count_nonzero((values < q1 - spread) | (values > q3 + spread)))


def q_distribution_from_values(q_all) -> QDistStats:
    """q_all: [N × P] Q de cada membro em cada ponto."""
    q_all = np.asarray(q_all, dtype=np.float64)
    if q_all.ndim != 2 or q_all.shape[1] == 0:
        raise ParameterError(f"q_distribution_stats: nenhum ponto de avaliação (shape {q_all.shape})")
    max_q = q_all.max(axis=0)
    min_q = q_all.min(axis=0)
    return QDistStats(
        max_q=max_q,
        min_q=min_q,
        max_quartiles=_quartiles(max_q),
        min_quartiles=_quartiles(min_q),
        max_outliers=outlier_count(max_q),
        min_outliers=outlier_count(min_q),
    )


def q_distribution_stats(ensemble: CriticEnsemble, points) -> QDistStats:
    """Max e min entre os N membros por ponto (pares s‖a), em modo avaliação."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ParameterError("q_distribution_stats: lista de pontos vazia")
    return q_distribution_from_values(member_q_values(ensemble, points))
