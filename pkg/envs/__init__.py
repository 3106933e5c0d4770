"""
envs
----
Ambientes de controle contínuo em escala de bancada e registro por nome.
"""

from core.errors import ParameterError
from envs.base import Env, EnvSpec, StepResult
from envs.pendulum import PendulumSwingUp
from envs.point_mass import PointMass1D, PointMass2D

ENVIRONMENTS = {
    "PointMass1D": PointMass1D,
    "PointMass2D": PointMass2D,
    "Pendulum": PendulumSwingUp,
}


def make_env(name: str) -> Env:
    """Instancia um ambiente pelo nome usado no arquivo de configuração."""
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise ParameterError(f"Ambiente desconhecido: {name!r} (disponíveis: {sorted(ENVIRONMENTS)})") from None


__all__ = ["ENVIRONMENTS", "Env", "EnvSpec", "StepResult", "make_env"]
