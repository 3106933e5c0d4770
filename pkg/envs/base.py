"""
envs/base.py
------------
Contrato comum dos ambientes de controle contínuo.

- Ações em [-1, 1]^action_dim; valores fora da caixa são cortados e
  contados em `clipped_actions` (com aviso no log na primeira vez).
- `done` marca término verdadeiro; `truncated` só o limite de tempo.
- step() depois do fim do episódio é erro de estado.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from core.errors import DimensionError, NumericError, ParameterError, StateError
from core.logger import logger, get_debug_status

DEFAULT_MAX_EPISODE_STEPS = 200


@dataclass(frozen=True)
class EnvSpec:
    """Dimensões e limites declarados de um ambiente."""
    name: str
    state_dim: int
    action_dim: int
    max_episode_steps: int = DEFAULT_MAX_EPISODE_STEPS
    reward_range: tuple[float, float] = (-np.inf, np.inf)

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1:
            raise ParameterError(f"{self.name}: state_dim/action_dim devem ser >= 1")
        if self.max_episode_steps < 1:
            raise ParameterError(f"{self.name}: max_episode_steps deve ser >= 1")


class StepResult(NamedTuple):
    next_state: np.ndarray
    reward: float
    done: bool
    truncated: bool


class Env:
    """Base: subclasses implementam _initial_state, _restore, _advance e _observe."""

    spec: EnvSpec

    def __init__(self):
        self.clipped_actions = 0
        self._state: np.ndarray | None = None
        self._rng: np.random.Generator | None = None
        self._t = 0
        self._finished = True

    # -- contrato público ---------------------------------------------
    def reset(self, rng: np.random.Generator, state=None) -> np.ndarray:
        """
        Novo episódio. Se `state` (uma observação) for dado, o episódio
        começa exatamente nele; senão é sorteado da distribuição inicial.
        """
        self._rng = rng
        if state is None:
            self._state = self._initial_state(rng)
        else:
            state = np.asarray(state, dtype=np.float64).reshape(-1)
            if state.shape != (self.spec.state_dim,):
                raise DimensionError(
                    f"{self.spec.name}: estado forçado com shape {state.shape}, esperado ({self.spec.state_dim},)"
                )
            self._state = self._restore(state)
        self._t = 0
        self._finished = False
        return self._observe()

    def step(self, action) -> StepResult:
        if self._finished:
            raise StateError(f"{self.spec.name}: step() após o fim do episódio; chame reset()")
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (self.spec.action_dim,):
            raise DimensionError(
                f"{self.spec.name}: ação com shape {a.shape}, esperado ({self.spec.action_dim},)"
            )
        if np.any(np.abs(a) > 1.0):
            self.clipped_actions += 1
            if self.clipped_actions == 1:
                logger.warning(f"{self.spec.name}: ação fora de [-1, 1] cortada ({a.tolist()})")
            a = np.clip(a, -1.0, 1.0)

        reward, done = self._advance(a)
        if not np.isfinite(reward):
            raise NumericError(f"{self.spec.name}: recompensa não finita no passo {self._t}")
        self._t += 1
        truncated = (not done) and self._t >= self.spec.max_episode_steps
        self._finished = done or truncated
        if get_debug_status():
            logger.debug(f"[{self.spec.name}] t={self._t} a={a.tolist()} r={reward:.6g} done={done}")
        return StepResult(self._observe(), float(reward), bool(done), bool(truncated))

    @property
    def elapsed_steps(self) -> int:
        return self._t

    # -- implementado pelas subclasses --------------------------------
    def _initial_state(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _restore(self, observation: np.ndarray) -> np.ndarray:
        return observation.copy()

    def _advance(self, action: np.ndarray) -> tuple[float, bool]:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        return self._state.copy()
