"""
conftest.py
-----------
Fixtures compartilhadas e a opção --runslow (testes de aprendizado em
escala de bancada, marcados com @pytest.mark.slow).
"""

import numpy as np
import pytest

from core.numcore import precision
from core.run_config import RunConfig


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="executa também os testes de aprendizado (minutos de CPU)",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: teste de aprendizado longo (habilitar com --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="use --runslow para executar")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def check_precision():
    """Perfil float64 durante o teste."""
    with precision("check"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(0)


TINY = dict(
    env_name="PointMass1D",
    variant="MHA_REDQ",
    ensemble_size=3,
    subset_size=2,
    d_model=8,
    num_heads=2,
    group_size=4,
    total_env_steps=40,
    init_random_steps=20,
    utd_ratio=2,
    batch_size=16,
    buffer_capacity=1000,
    policy_hidden=8,
    eval_interval=20,
    eval_episodes=2,
    bias_points=3,
    bias_rollouts=2,
    bias_horizon=20,
    precision="check",
)


@pytest.fixture
def tiny_config():
    """Fábrica de RunConfig minúsculo; kwargs sobrepõem os valores padrão."""
    def make(**overrides) -> RunConfig:
        return RunConfig(**(TINY | overrides))
    return make
