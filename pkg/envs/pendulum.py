"""
envs/pendulum.py
----------------
Pêndulo com swing-up. Observação [cos θ, sin θ, θ'], θ = 0 é a posição de pé.

Constantes: g = 10, m = 1, l = 1, dt = 0.05, torque máximo 2 (ação 1 -> 2 N·m),
|θ'| <= 8. Integração de Euler explícita:
    θ  <- θ + θ'*dt
    θ' <- θ' + (3g/(2l)·sin θ + 3/(m l²)·u)*dt
Recompensa: -(θ_norm² + 0.1·θ'² + 0.001·u²), máximo 0 com o pêndulo em pé e parado.
"""

import numpy as np

from envs.base import Env, EnvSpec

GRAVITY = 10.0
MASS = 1.0
LENGTH = 1.0
DT = 0.05
MAX_TORQUE = 2.0
MAX_SPEED = 8.0


def angle_normalize(theta: float) -> float:
    return ((theta + np.pi) % (2 * np.pi)) - np.pi


class PendulumSwingUp(Env):

    def __init__(self):
        super().__init__()
        worst = -(np.pi ** 2 + 0.1 * MAX_SPEED ** 2 + 0.001 * MAX_TORQUE ** 2)
        self.spec = EnvSpec("Pendulum", state_dim=3, action_dim=1, reward_range=(worst, 0.0))

    def _initial_state(self, rng):
        return np.array([rng.uniform(-np.pi, np.pi), rng.uniform(-1.0, 1.0)])

    def _restore(self, observation):
        cos, sin, speed = observation
        return np.array([np.arctan2(sin, cos), speed])

    def _advance(self, action):
        theta, speed = self._state
        u = MAX_TORQUE * float(action[0])
        reward = -(angle_normalize(theta) ** 2 + 0.1 * speed ** 2 + 0.001 * u ** 2)
        accel = 3 * GRAVITY / (2 * LENGTH) * np.sin(theta) + 3.0 / (MASS * LENGTH ** 2) * u
        new_theta = theta + speed * DT
        new_speed = np.clip(speed + accel * DT, -MAX_SPEED, MAX_SPEED)
        self._state = np.array([new_theta, new_speed])
        return reward, False

    def _observe(self):
        theta, speed = self._state
        return np.array([np.cos(theta), np.sin(theta), speed])
