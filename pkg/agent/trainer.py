"""
agent/trainer.py
----------------
Laço de atualização: um passo de ambiente seguido de G rodadas de crítico,
uma atualização do ator e uma da temperatura.

Aleatoriedade: todo sorteio vem de um sub-gerador derivado de
(semente, finalidade, passo, rodada, membro). Duas execuções com a mesma
configuração produzem exatamente os mesmos números.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from agent.actor import (
    GaussianPolicy, Temperature, actor_update, alpha_update, rsample, sample_action,
)
from agent.critic import CriticEnsemble, qnet_forward, reduce_over_subset, sample_subset
from agent.replay import (
    Minibatch, ReplayBuffer, Transition, bootstrap_groups, group_count, group_matrix, sample_minibatch,
)
from core import numcore as nc
from core.errors import ContractError, NumericError, ParameterError, StateError
from core.logger import logger, get_debug_status
from core.numcore import Tape, Tensor, backward
from core.optim import Adam
from core.run_config import TrainerConfig
from envs.base import Env, EnvSpec


class Stream(IntEnum):
    """Finalidade de cada sub-gerador aleatório."""
    INIT = 0
    WORLD = 1
    BATCH = 2
    SUBSET = 3
    GROUPS = 4
    DROPOUT = 5
    TARGET_POLICY = 6
    ACTOR = 7
    EVAL = 8


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Gerador determinístico para (semente, chaves...)."""
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])


# ----------------------------------------------------------------------
# Estado do agente
# ----------------------------------------------------------------------
@dataclass
class UpdateCounters:
    env_steps: int = 0
    critic_rounds: int = 0
    actor_rounds: int = 0
    polyak_calls: int = 0


@dataclass
class Agent:
    """Tudo que o treino altera: redes, otimizadores, temperatura e buffer."""
    config: TrainerConfig
    spec: EnvSpec
    policy: GaussianPolicy
    ensemble: CriticEnsemble
    temperature: Temperature
    actor_optimizer: Adam
    critic_optimizers: list[Adam]
    buffer: ReplayBuffer
    counters: UpdateCounters = field(default_factory=UpdateCounters)


def build_agent(config: TrainerConfig, spec: EnvSpec) -> Agent:
    """Inicializa redes e otimizadores a partir da semente da configuração."""
    init = substream(config.seed, Stream.INIT)
    policy_rng, critic_rng = init.spawn(2)
    policy = GaussianPolicy(spec.state_dim, spec.action_dim, config.policy_hidden, policy_rng)
    ensemble = CriticEnsemble.build(
        config.ensemble_size, config.variant, spec.state_dim, spec.action_dim, config.d_model, critic_rng,
        num_heads=config.num_heads, dropout_rate=config.dropout_rate, attention_scale=config.attention_scale,
    )
    target_entropy = config.target_entropy if config.target_entropy is not None else -float(spec.action_dim)
    clip = config.grad_clip_norm or None
    return Agent(
        config=config,
        spec=spec,
        policy=policy,
        ensemble=ensemble,
        temperature=Temperature(config.init_alpha, config.alpha_mode, target_entropy, config.learning_rate),
        actor_optimizer=Adam(policy.parameters(), lr=config.learning_rate, clip_norm=clip),
        critic_optimizers=[Adam(m.parameters(), lr=config.learning_rate, clip_norm=clip) for m in ensemble.members],
        buffer=ReplayBuffer(config.buffer_capacity, spec.state_dim, spec.action_dim),
    )


@dataclass
class World:
    """Ambiente de treino e o episódio em andamento."""
    env: Env
    rng: np.random.Generator
    state: np.ndarray
    episode_return: float = 0.0
    episode_steps: int = 0
    completed_returns: list[float] = field(default_factory=list)

    @classmethod
    def create(cls, env: Env, seed: int) -> "World":
        rng = substream(seed, Stream.WORLD)
        return cls(env=env, rng=rng, state=env.reset(rng))


@dataclass(frozen=True)
class StepMetrics:
    env_step: int
    reward: float
    episode_return: float | None  # retorno do episódio que terminou neste passo
    updated: bool
    critic_loss: float | None = None
    actor_loss: float | None = None
    alpha: float | None = None


# ----------------------------------------------------------------------
# Alvo, perda do crítico e Polyak
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class TargetBatch:
    """Alvos y, um por token, fora de qualquer Tape."""
    y: np.ndarray


def compute_target(
    rewards,
    next_states,
    dones,
    ensemble: CriticEnsemble,
    policy: GaussianPolicy,
    subset,
    gamma: float,
    alpha: float,
    rng: np.random.Generator,
    reduction: str = "min",
) -> TargetBatch:
    """
    y = r + γ·(1 − done)·(red_{i∈M} Q_tar,i(s', ã') − α·log π(ã'|s')),  ã' ~ π(·|s').

    Aceita qualquer formato de lote (ex.: [G, L]); nunca grava na Tape.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    next_states = np.asarray(next_states, dtype=np.float64)
    if rewards.shape != dones.shape or next_states.shape[:-1] != rewards.shape:
        raise ContractError(
            f"compute_target: shapes incompatíveis r={rewards.shape} done={dones.shape} s'={next_states.shape}"
        )
    with nc.no_grad():
        next_actions, logp = rsample(policy, next_states, rng)
        pairs = nc.concat([Tensor(next_states), next_actions], axis=-1)
        q = reduce_over_subset(ensemble, subset, pairs, reduction)
    soft_q = q.data.astype(np.float64) - alpha * logp.data.astype(np.float64)
    y = rewards + gamma * (1.0 - dones) * soft_q
    if not np.isfinite(y).all():
        raise NumericError("compute_target: alvo não finito")
    return TargetBatch(y)


def mse_loss(q: Tensor, y) -> Tensor:
    """Média de (Q − y)² sobre todos os tokens."""
    y = np.asarray(y)
    if q.shape != y.shape:
        raise ContractError(f"mse_loss: Q com shape {q.shape} e alvo com shape {y.shape}")
    return nc.reduce_mean(nc.square(q - y))


def critic_update(
    ensemble: CriticEnsemble,
    member_pairs: list[np.ndarray],
    member_targets: list[np.ndarray],
    optimizers: list[Adam],
    rngs: list[np.random.Generator],
) -> list[float]:
    """Um passo de gradiente por membro, cada um com seus próprios tokens e alvos."""
    if not len(member_pairs) == len(member_targets) == ensemble.size:
        raise ContractError(
            f"critic_update: {len(member_pairs)} lotes / {len(member_targets)} alvos para N={ensemble.size}"
        )
    losses = []
    for net, pairs, y, optimizer, rng in zip(ensemble.members, member_pairs, member_targets, optimizers, rngs):
        optimizer.zero_grad()
        with Tape():
            loss = mse_loss(qnet_forward(net, pairs, training=True, rng=rng), y)
        backward(loss)
        optimizer.step()
        losses.append(float(loss.data))
    return losses


def polyak_update(ensemble: CriticEnsemble, rho: float) -> None:
    """φ_tar ← ρ·φ_tar + (1 − ρ)·φ, no lugar, para os N membros."""
    if not 0.0 <= rho <= 1.0:
        raise ParameterError(f"polyak: ρ deve estar em [0, 1] (recebido {rho})")
    if rho == 1.0:
        return
    for member, target in zip(ensemble.members, ensemble.targets):
        for p_tar, p in zip(target.parameters(), member.parameters()):
            if rho == 0.0:
                p_tar.data[...] = p.data
            else:
                p_tar.data *= rho
                p_tar.data += (1.0 - rho) * p.data


# ----------------------------------------------------------------------
# Rodada de crítico
# ----------------------------------------------------------------------
def _member_token_indices(config: TrainerConfig, size: int, batch_len: int, env_step: int, round_idx: int):
    """Matrizes de índices [grupos × L] usadas por cada membro nesta rodada."""
    if not config.variant.uses_bootstrap:
        return [np.arange(batch_len).reshape(batch_len, 1)] * size, True
    count = group_count(batch_len, config.group_size, config.groups_per_update)
    if config.groups_per_update == "per_element":
        rng = substream(config.seed, Stream.GROUPS, env_step, round_idx, 0)
        shared = group_matrix(bootstrap_groups(batch_len, config.group_size, count, rng))
        return [shared] * size, True
    return [
        group_matrix(bootstrap_groups(
            batch_len, config.group_size, count, substream(config.seed, Stream.GROUPS, env_step, round_idx, i),
        ))
        for i in range(size)
    ], False


def critic_round(
    agent: Agent, env_step: int, round_idx: int, config: TrainerConfig | None = None,
) -> tuple[float, Minibatch]:
    """Amostra B, forma os grupos, calcula alvos, atualiza os N membros e aplica Polyak."""
    cfg = config if config is not None else agent.config
    ensemble = agent.ensemble
    n = ensemble.size
    batch = sample_minibatch(agent.buffer, cfg.batch_size, substream(cfg.seed, Stream.BATCH, env_step, round_idx))
    member_idx, shared = _member_token_indices(cfg, n, len(batch), env_step, round_idx)

    # alvos de todos os membros num único forward
    all_idx = member_idx[0] if shared else np.concatenate(member_idx)
    subset_rng = substream(cfg.seed, Stream.SUBSET, env_step, round_idx)
    if cfg.subset_scope == "per_group":
        subset = np.stack([sample_subset(n, cfg.subset_size, subset_rng) for _ in range(len(all_idx))])
    else:
        subset = sample_subset(n, cfg.subset_size, subset_rng)
    y_all = compute_target(
        batch.rewards[all_idx], batch.next_states[all_idx], batch.dones[all_idx],
        ensemble, agent.policy, subset, cfg.gamma, agent.temperature.alpha,
        substream(cfg.seed, Stream.TARGET_POLICY, env_step, round_idx), cfg.target_reduction,
    ).y
    if shared:
        targets = [y_all] * n
    else:
        targets = np.split(y_all, n)

    pairs = [np.concatenate([batch.states[idx], batch.actions[idx]], axis=-1) for idx in member_idx]
    rngs = [substream(cfg.seed, Stream.DROPOUT, env_step, round_idx, i) for i in range(n)]
    losses = critic_update(ensemble, pairs, targets, agent.critic_optimizers, rngs)
    polyak_update(ensemble, cfg.polyak)

    agent.counters.critic_rounds += 1
    agent.counters.polyak_calls += 1
    if get_debug_status():
        logger.debug(
            f"[critic] passo={env_step} rodada={round_idx} subset={np.asarray(subset).tolist()[:4]} "
            f"perdas={[round(v, 6) for v in losses]}"
        )
    return float(np.mean(losses)), batch


def updates_ready(agent: Agent, env_step: int, config: TrainerConfig) -> bool:
    """Atualizações começam no primeiro passo após o aquecimento com buffer >= |B|."""
    return env_step >= config.init_random_steps and len(agent.buffer) >= config.batch_size


# ----------------------------------------------------------------------
# Passo completo
# ----------------------------------------------------------------------
def train_step(world: World, agent: Agent, config: TrainerConfig | None = None) -> StepMetrics:
    """Interage uma vez com o ambiente e executa G rodadas de crítico + ator + α."""
    cfg = config if config is not None else agent.config
    env_step = agent.counters.env_steps

    if env_step < cfg.init_random_steps:
        action = world.rng.uniform(-1.0, 1.0, size=agent.spec.action_dim)
    else:
        action, _ = sample_action(agent.policy, world.state, world.rng)

    try:
        result = world.env.step(action)
    except NumericError as e:
        e.add_note(f"passo de ambiente {env_step} ({agent.spec.name})")
        raise
    except Exception as e:
        raise StateError(f"passo de ambiente {env_step} ({agent.spec.name}): {e}") from e

    agent.buffer.push(Transition(world.state, action, result.reward, result.next_state, result.done))
    world.episode_return += result.reward
    world.episode_steps += 1
    finished = None
    if result.done or result.truncated:
        finished = world.episode_return
        world.completed_returns.append(finished)
        world.state = world.env.reset(world.rng)
        world.episode_return = 0.0
        world.episode_steps = 0
    else:
        world.state = result.next_state
    agent.counters.env_steps += 1

    if not updates_ready(agent, env_step, cfg):
        return StepMetrics(agent.counters.env_steps, result.reward, finished, updated=False)

    losses = []
    batch = None
    for round_idx in range(cfg.utd_ratio):
        loss, batch = critic_round(agent, env_step, round_idx, cfg)
        losses.append(loss)

    step = actor_update(
        agent.policy, agent.ensemble, batch.states, agent.temperature, agent.actor_optimizer,
        substream(cfg.seed, Stream.ACTOR, env_step),
    )
    alpha = alpha_update(agent.temperature, step.logp)
    agent.counters.actor_rounds += 1
    return StepMetrics(
        agent.counters.env_steps, result.reward, finished, updated=True,
        critic_loss=float(np.mean(losses)), actor_loss=step.loss, alpha=alpha,
    )
