"""
envs/tabular.py
---------------
MDPs discretos pequenos atrás do mesmo contrato de Env.

Servem de oráculo para os diagnósticos: Q^π e Q* são calculados
exatamente (sistema linear / value iteration) e comparados com os
retornos Monte Carlo e com o pipeline de viés.

- Observação: one-hot do estado.
- Ação: 1 dimensão em [-1, 1], dividida em A faixas iguais
  (a faixa i corresponde à ação discreta i).
"""

import numpy as np

from core.errors import ParameterError
from envs.base import Env, EnvSpec


class TabularMDP(Env):

    def __init__(self, transitions, rewards, initial, name: str = "TabularMDP", max_episode_steps: int = 200):
        super().__init__()
        self.transitions = np.asarray(transitions, dtype=np.float64)   # [S, A, S']
        self.rewards = np.asarray(rewards, dtype=np.float64)           # [S, A]
        self.initial = np.asarray(initial, dtype=np.float64)           # [S]
        n_states, n_actions, _ = self.transitions.shape
        if self.rewards.shape != (n_states, n_actions) or self.initial.shape != (n_states,):
            raise ParameterError(f"{name}: shapes inconsistentes de P/R/initial")
        if not np.allclose(self.transitions.sum(axis=-1), 1.0) or not np.isclose(self.initial.sum(), 1.0):
            raise ParameterError(f"{name}: distribuições de probabilidade devem somar 1")
        self.n_states = n_states
        self.n_actions = n_actions
        self.spec = EnvSpec(
            name, state_dim=n_states, action_dim=1, max_episode_steps=max_episode_steps,
            reward_range=(float(self.rewards.min()), float(self.rewards.max())),
        )

    def action_index(self, action) -> int:
        a = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0], -1.0, 1.0))
        return min(int((a + 1.0) / 2.0 * self.n_actions), self.n_actions - 1)

    def action_value(self, index: int) -> np.ndarray:
        """Ação contínua no centro da faixa da ação discreta `index`."""
        return np.array([-1.0 + (2 * index + 1) / self.n_actions])

    def _initial_state(self, rng):
        return np.array([rng.choice(self.n_states, p=self.initial)], dtype=np.float64)

    def _restore(self, observation):
        return np.array([float(np.argmax(observation))])

    def _advance(self, action):
        s = int(self._state[0])
        a = self.action_index(action)
        reward = self.rewards[s, a]
        self._state = np.array([float(self._rng.choice(self.n_states, p=self.transitions[s, a]))])
        return float(reward), False

    def _observe(self):
        obs = np.zeros(self.n_states)
        obs[int(self._state[0])] = 1.0
        return obs


# ----------------------------------------------------------------------
# Soluções exatas
# ----------------------------------------------------------------------
def policy_q_values(mdp: TabularMDP, policy_probs, gamma: float) -> np.ndarray:
    """Q^π exato: resolve (I - γ P_π) q = r sobre os pares (s, a)."""
    pi = np.asarray(policy_probs, dtype=np.float64)
    S, A = mdp.n_states, mdp.n_actions
    # P_pi[(s,a), (s',a')] = P(s'|s,a) * pi(a'|s')
    p_pi = (mdp.transitions[:, :, :, None] * pi[None, None, :, :]).reshape(S * A, S * A)
    q = np.linalg.solve(np.eye(S * A) - gamma * p_pi, mdp.rewards.reshape(-1))
    return q.reshape(S, A)


def optimal_q_values(mdp: TabularMDP, gamma: float, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Q* por value iteration."""
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iter):
        updated = mdp.rewards + gamma * mdp.transitions @ q.max(axis=1)
        if np.max(np.abs(updated - q)) < tol:
            return updated
        q = updated
    return q


# ----------------------------------------------------------------------
# MDPs de teste
# ----------------------------------------------------------------------
def three_state_mdp() -> TabularMDP:
    """Cadeia de 3 estados, 2 ações (esquerda/direita) com escorregão de 20%."""
    P = np.zeros((3, 2, 3))
    for s in range(3):
        left, right = max(s - 1, 0), min(s + 1, 2)
        P[s, 0, left] += 0.8
        P[s, 0, right] += 0.2
        P[s, 1, right] += 0.8
        P[s, 1, left] += 0.2
    R = np.array([[0.0, 0.0], [0.0, 0.5], [1.0, 1.0]])
    return TabularMDP(P, R, initial=[1.0, 0.0, 0.0], name="Chain3")


def five_state_mdp() -> TabularMDP:
    """MDP aleatório fixo com 5 estados e 2 ações, recompensas positivas."""
    rng = np.random.default_rng(5)
    P = rng.dirichlet(np.ones(5), size=(5, 2))
    R = rng.uniform(0.5, 1.5, size=(5, 2))
    return TabularMDP(P, R, initial=np.full(5, 0.2), name="Random5")
