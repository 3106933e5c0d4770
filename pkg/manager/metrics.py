"""
manager/metrics.py
------------------
Registro de métricas por avaliação e os arquivos da execução:

- metrics.csv : uma linha por avaliação, colunas em ordem fixa, floats
                com 17 dígitos significativos (releitura exata)
- timing.csv  : env_step, wall_time (fica fora do metrics.csv para que
                execuções idênticas gerem arquivos idênticos byte a byte)

Os dois arquivos só recebem linhas novas no fim e são descarregados a
cada registro; uma execução interrompida deixa um prefixo legível.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass

import pandas as pd

METRIC_COLUMNS = (
    "env_step",
    "episode_return",
    "avg_q_prediction",
    "mean_bias",
    "mean_normalized_bias",
    "std_normalized_bias",
    "critic_loss",
    "actor_loss",
    "alpha",
    "max_q_q1", "max_q_median", "max_q_q3", "max_q_outliers",
    "min_q_q1", "min_q_median", "min_q_q3", "min_q_outliers",
)
TIMING_COLUMNS = ("env_step", "wall_time")

METRICS_FILE = "metrics.csv"
TIMING_FILE = "timing.csv"

_NAN3 = (math.nan, math.nan, math.nan)


@dataclass(frozen=True)
class MetricRecord:
    """Resultado de uma avaliação no passo env_step."""
    env_step: int
    episode_return: float
    avg_q_prediction: float
    mean_bias: float
    mean_normalized_bias: float
    std_normalized_bias: float
    critic_loss: float
    actor_loss: float
    alpha: float
    max_q_quartiles: tuple[float, float, float] = _NAN3
    min_q_quartiles: tuple[float, float, float] = _NAN3
    max_q_outliers: int = 0
    min_q_outliers: int = 0
    wall_time: float = 0.0

    def row(self) -> list[str]:
        return [format_value(v) for v in self._flat()]

    def as_dict(self) -> dict:
        """Forma plana (mesmas chaves do metrics.csv + wall_time), usada pela API."""
        data = dict(zip(METRIC_COLUMNS, (_json_safe(v) for v in self._flat())))
        data["wall_time"] = self.wall_time
        return data

    def _flat(self) -> list:
        return [
            self.env_step, self.episode_return, self.avg_q_prediction, self.mean_bias,
            self.mean_normalized_bias, self.std_normalized_bias, self.critic_loss, self.actor_loss,
            self.alpha, *self.max_q_quartiles, self.max_q_outliers, *self.min_q_quartiles, self.min_q_outliers,
        ]


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def format_value(value) -> str:
    """Inteiros como estão; floats com 17 dígitos significativos; None/NaN como 'nan'."""
    if value is None:
        return "nan"
    if isinstance(value, (bool, int)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    return f"{value:.17g}"


class MetricsWriter:
    """Cria metrics.csv/timing.csv em `run_dir` (truncando) e acrescenta registros."""

    def __init__(self, run_dir: str):
        self.metrics_path = os.path.join(run_dir, METRICS_FILE)
        self.timing_path = os.path.join(run_dir, TIMING_FILE)
        self.count = 0
        self._write(self.metrics_path, METRIC_COLUMNS, mode="w")
        self._write(self.timing_path, TIMING_COLUMNS, mode="w")

    @staticmethod
    def _write(path: str, row, mode: str = "a") -> None:
        with open(path, mode, newline="", encoding="utf-8") as f:
            csv.writer(f, lineterminator="\n").writerow(row)
            f.flush()

    def write(self, record: MetricRecord) -> None:
        self._write(self.metrics_path, record.row())
        self._write(self.timing_path, [str(record.env_step), format_value(record.wall_time)])
        self.count += 1


def read_metrics(path: str) -> pd.DataFrame:
    """
    Lê um metrics.csv (ou timing.csv) como DataFrame.
    Uma última linha sem '\\n' (escrita interrompida) é descartada.
    """
    with open(path, encoding="utf-8") as f:
        text = f.read()
    if text and not text.endswith("\n"):
        text = text[: text.rfind("\n") + 1]
    if not text:
        return pd.DataFrame(columns=list(METRIC_COLUMNS))
    return pd.read_csv(io.StringIO(text))
