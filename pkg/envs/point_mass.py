"""
envs/point_mass.py
------------------
Massa pontual em 1D e 2D (integração de Euler explícita).

Dinâmica por eixo, dt = 0.05:
    x <- x + v*dt
    v <- v + a*dt
Recompensa: -|x|^2 - 0.1*|a|^2. Sem término; episódio truncado em 200 passos.
Paredes em |x| <= 5 e |v| <= 2 mantêm o estado numa caixa limitada.
"""

import numpy as np

from envs.base import Env, EnvSpec

DT = 0.05
ACTION_COST = 0.1
POSITION_LIMIT = 5.0
VELOCITY_LIMIT = 2.0
INIT_POSITION = 1.0   # x0 ~ U(-1, 1)
INIT_VELOCITY = 0.1   # v0 ~ U(-0.1, 0.1)


class PointMass(Env):
    """Massa pontual com `dims` eixos independentes; estado = [posições, velocidades]."""

    def __init__(self, dims: int, name: str):
        super().__init__()
        self.dims = dims
        worst = -(dims * POSITION_LIMIT ** 2 + ACTION_COST * dims)
        self.spec = EnvSpec(name, state_dim=2 * dims, action_dim=dims, reward_range=(worst, 0.0))
        self.init_low = np.concatenate([np.full(dims, -INIT_POSITION), np.full(dims, -INIT_VELOCITY)])
        self.init_high = -self.init_low

    def _initial_state(self, rng):
        return rng.uniform(self.init_low, self.init_high)

    def _advance(self, action):
        pos, vel = self._state[: self.dims], self._state[self.dims:]
        new_pos = pos + vel * DT
        new_vel = vel + action * DT
        # parede: posição limitada zera a velocidade daquele eixo
        hit = np.abs(new_pos) > POSITION_LIMIT
        new_pos = np.clip(new_pos, -POSITION_LIMIT, POSITION_LIMIT)
        new_vel = np.where(hit, 0.0, np.clip(new_vel, -VELOCITY_LIMIT, VELOCITY_LIMIT))
        reward = -float(pos @ pos) - ACTION_COST * float(action @ action)
        self._state = np.concatenate([new_pos, new_vel])
        return reward, False


class PointMass1D(PointMass):
    def __init__(self):
        super().__init__(1, "PointMass1D")


class PointMass2D(PointMass):
    def __init__(self):
        super().__init__(2, "PointMass2D")


def pd_controller(state: np.ndarray, kp: float = 4.0, kd: float = 4.0) -> np.ndarray:
    """
    Controlador proporcional-derivativo de referência.
    kp = kd = 4 coloca os dois polos de x'' = -kp*x - kd*v em -2 (amortecimento crítico).
    """
    dims = state.shape[0] // 2
    return np.clip(-kp * state[:dims] - kd * state[dims:], -1.0, 1.0)
