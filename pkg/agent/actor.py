"""
agent/actor.py
--------------
Política gaussiana com tanh (SAC) e temperatura de entropia α.

- rsample: a = tanh(μ + σ·ε), com log π(a|s) já corrigido pelo tanh.
- actor_update: minimiza E[α·log π(ã|s) − média_i Q_φi(s, ã)].
- alpha_update: ajusta log α para manter a entropia perto do alvo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from agent.critic import CriticEnsemble, qnet_forward
from core import numcore as nc
from core.errors import NumericError, ParameterError
from core.layers import MLP, LinearLayer, Module
from core.numcore import Tape, Tensor, backward
from core.optim import Adam

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
ACTION_EDGE = 1e-6  # ações entregues ao ambiente ficam em [-1+ε, 1-ε]

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_2 = math.log(2.0)


class GaussianPolicy(Module):
    """π_θ(a|s): tronco MLP com duas cabeças (média e log-desvio)."""

    def __init__(self, state_dim: int, action_dim: int, hidden: int, rng: np.random.Generator):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.trunk = MLP([state_dim, hidden, hidden], rng)
        self.mean_head = LinearLayer(hidden, action_dim, rng)
        self.log_std_head = LinearLayer(hidden, action_dim, rng)

    def distribution(self, states) -> tuple[Tensor, Tensor]:
        """(μ, log σ) para cada estado; log σ limitado a [LOG_STD_MIN, LOG_STD_MAX]."""
        h = self.trunk(states)
        mu = self.mean_head(h)
        log_std = nc.clip(self.log_std_head(h), LOG_STD_MIN, LOG_STD_MAX)
        return mu, log_std

    def forward(self, x, training: bool = False, rng=None) -> Tensor:
        return self.distribution(x)[0]


def _tanh_log_det(u: Tensor) -> Tensor:
    """log(1 − tanh(u)²) na forma estável 2·(log 2 − u − softplus(−2u))."""
    return 2.0 * (_LOG_2 - u - nc.softplus(-2.0 * u))


def rsample(policy: GaussianPolicy, states, rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    """
    Amostra reparametrizada.

    states [.., state_dim] -> (ações [.., action_dim], log π [..]).
    O gradiente flui de ambos os resultados para θ.
    """
    mu, log_std = policy.distribution(nc.as_tensor(states))
    eps = rng.standard_normal(mu.shape)
    u = mu + nc.exp(log_std) * eps
    actions = nc.tanh(u)
    gauss = (-0.5 * eps**2 - _HALF_LOG_2PI) - log_std
    logp = nc.reduce_sum(gauss - _tanh_log_det(u), axis=-1)
    return actions, logp


def log_prob(policy: GaussianPolicy, states, actions) -> np.ndarray:
    """log π(a|s) para ações dadas em (-1, 1) (sem gradiente)."""
    actions = np.clip(np.asarray(actions, dtype=np.float64), -1.0 + ACTION_EDGE, 1.0 - ACTION_EDGE)
    with nc.no_grad():
        mu, log_std = policy.distribution(nc.as_tensor(states))
    mu = mu.data.astype(np.float64)
    log_std = log_std.data.astype(np.float64)
    u = np.arctanh(actions)
    z = (u - mu) / np.exp(log_std)
    log_det = 2.0 * (_LOG_2 - u - np.logaddexp(0.0, -2.0 * u))
    return np.sum(-0.5 * z**2 - _HALF_LOG_2PI - log_std - log_det, axis=-1)


def _check_state(state) -> np.ndarray:
    s = np.asarray(state, dtype=np.float64)
    if not np.isfinite(s).all():
        raise NumericError(f"estado não finito entregue à política: {s}")
    return s


def sample_action(policy: GaussianPolicy, state, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Uma ação estocástica a ~ π(·|s) e seu log π."""
    s = _check_state(state).reshape(1, -1)
    with nc.no_grad():
        a, logp = rsample(policy, s, rng)
    action = np.clip(a.data[0].astype(np.float64), -1.0 + ACTION_EDGE, 1.0 - ACTION_EDGE)
    return action, float(logp.data[0])


def act_deterministic(policy: GaussianPolicy, state) -> np.ndarray:
    """tanh(μ(s)), usado nos episódios de avaliação."""
    s = _check_state(state).reshape(1, -1)
    with nc.no_grad():
        mu, _ = policy.distribution(s)
    return np.clip(np.tanh(mu.data[0].astype(np.float64)), -1.0 + ACTION_EDGE, 1.0 - ACTION_EDGE)


def behavior(policy: GaussianPolicy, deterministic: bool = False) -> Callable[[np.ndarray, np.random.Generator], np.ndarray]:
    """Adapta a política para a interface (estado, rng) -> ação usada nos rollouts."""
    if deterministic:
        return lambda state, rng: act_deterministic(policy, state)
    return lambda state, rng: sample_action(policy, state, rng)[0]


# ----------------------------------------------------------------------
# Temperatura
# ----------------------------------------------------------------------
class Temperature:
    """α = exp(log α). Em modo `fixed` o valor inicial nunca muda."""

    def __init__(self, init_alpha: float = 1.0, mode: str = "auto", target_entropy: float = -1.0, lr: float = 3e-4):
        if init_alpha <= 0.0:
            raise ParameterError(f"init_alpha deve ser > 0 (recebido {init_alpha})")
        if mode not in ("auto", "fixed"):
            raise ParameterError(f"alpha_mode inválido: {mode!r}")
        self.mode = mode
        self.target_entropy = float(target_entropy)
        self.log_alpha = Tensor(math.log(init_alpha), requires_grad=True, name="log_alpha")
        self.optimizer = Adam([self.log_alpha], lr=lr) if mode == "auto" else None

    @property
    def alpha(self) -> float:
        return float(math.exp(float(self.log_alpha.data)))


def alpha_loss(temperature: Temperature, logp) -> Tensor:
    """−log α · média(log π + H̄)."""
    shift = float(np.mean(np.asarray(logp, dtype=np.float64) + temperature.target_entropy))
    return -(temperature.log_alpha * shift)


def alpha_update(temperature: Temperature, logp) -> float:
    """Um passo de Adam em log α; devolve o novo α."""
    if temperature.mode == "fixed":
        return temperature.alpha
    temperature.optimizer.zero_grad()
    with Tape():
        loss = alpha_loss(temperature, logp)
    backward(loss)
    temperature.optimizer.step()
    return temperature.alpha


# ----------------------------------------------------------------------
# Atualização do ator
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ActorStep:
    loss: float
    logp: np.ndarray  # log π das ações amostradas, reaproveitado por alpha_update


def actor_loss(
    policy: GaussianPolicy,
    ensemble: CriticEnsemble,
    states,
    alpha: float,
    rng: np.random.Generator,
) -> tuple[Tensor, Tensor]:
    """Perda do ator com a média dos N críticos em modo avaliação (tokens L = 1)."""
    s = nc.as_tensor(states)
    batch = s.shape[0]
    actions, logp = rsample(policy, s, rng)
    pairs = nc.reshape(nc.concat([s, actions], axis=-1), (batch, 1, policy.state_dim + policy.action_dim))
    qs = nc.stack([qnet_forward(m, pairs) for m in ensemble.members], axis=0)
    q_mean = nc.reshape(nc.reduce_mean(qs, axis=0), (batch,))
    return nc.reduce_mean(alpha * logp - q_mean), logp


def actor_update(
    policy: GaussianPolicy,
    ensemble: CriticEnsemble,
    states,
    temperature: Temperature,
    optimizer: Adam,
    rng: np.random.Generator,
) -> ActorStep:
    """Um passo de gradiente em θ. Os críticos não são alterados."""
    states = np.asarray(states)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ParameterError(f"actor_update: lote de estados vazio ou mal formado (shape {states.shape})")
    optimizer.zero_grad()
    with Tape():
        loss, logp = actor_loss(policy, ensemble, states, temperature.alpha, rng)
    backward(loss)
    optimizer.step()
    ensemble.zero_grad()  # gradientes dos críticos produzidos aqui são descartados
    return ActorStep(float(loss.data), logp.data.astype(np.float64))
