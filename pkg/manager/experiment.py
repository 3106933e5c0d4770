"""
manager/experiment.py
---------------------
Execução de experimentos: run, sweep e compare.

Layout em disco:
    <output_dir>/<run_id>/config.ini      serialização canônica da configuração
    <output_dir>/<run_id>/metrics.csv     um registro por avaliação
    <output_dir>/<run_id>/timing.csv      tempo de parede por avaliação
    <output_dir>/<run_id>/checkpoint.npz  agente ao final do treino

Um sweep cria <output_dir>/sweep_<hash>/ com um diretório por célula
(mesmo layout acima) e summary.csv.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from threading import Event
from typing import Callable

import numpy as np
import pandas as pd

from agent.actor import behavior
from agent.critic import member_q_values
from agent.diagnostics import (
    estimation_bias, evaluation_points, evaluation_returns, monte_carlo_return, q_distribution_from_values,
)
from agent.trainer import Agent, Stream, UpdateCounters, World, build_agent, substream, train_step
from core.checkpoint import save_checkpoint
from core.errors import AlignmentError, DegenerateInputError, LabError, ParameterError
from core.logger import logger
from core.numcore import precision
from core.run_config import RunConfig, parse_run_config, run_id, serialize_run_config, with_overrides
from envs import make_env
from manager.metrics import METRICS_FILE, MetricRecord, MetricsWriter, read_metrics

CONFIG_FILE = "config.ini"
CHECKPOINT_FILE = "checkpoint.npz"
SUMMARY_FILE = "summary.csv"


@dataclass
class RunResult:
    run_id: str
    run_dir: str
    records: list[MetricRecord]
    counters: UpdateCounters
    stopped: bool = False


@dataclass
class _LossWindow:
    """Médias de perda e α entre duas avaliações."""
    critic: list[float] = field(default_factory=list)
    actor: list[float] = field(default_factory=list)
    alpha: float = math.nan

    def add(self, metrics) -> None:
        if metrics.updated:
            self.critic.append(metrics.critic_loss)
            self.actor.append(metrics.actor_loss)
            self.alpha = metrics.alpha

    def flush(self) -> tuple[float, float, float]:
        critic = math.fsum(self.critic) / len(self.critic) if self.critic else math.nan
        actor = math.fsum(self.actor) / len(self.actor) if self.actor else math.nan
        self.critic.clear()
        self.actor.clear()
        return critic, actor, self.alpha


# ----------------------------------------------------------------------
# Avaliação
# ----------------------------------------------------------------------
def evaluate(agent: Agent, config: RunConfig, env_step: int, losses: tuple[float, float, float]) -> MetricRecord:
    """Episódios determinísticos, viés de estimação e distribuição dos Q no passo atual."""
    rng = substream(config.seed, Stream.EVAL, env_step)
    env = make_env(config.env_name)
    returns = evaluation_returns(env, behavior(agent.policy, deterministic=True), config.eval_episodes, rng)

    stochastic = behavior(agent.policy)
    states, actions = evaluation_points(env, stochastic, config.bias_points, rng)
    mc_returns = [
        monte_carlo_return(env, stochastic, s, a, config.gamma, config.bias_horizon, rng, config.bias_rollouts)
        for s, a in zip(states, actions)
    ]
    q_all = member_q_values(agent.ensemble, np.concatenate([states, actions], axis=-1))
    try:
        bias = estimation_bias(agent.ensemble, config.subset_size, states, actions, mc_returns, rng)
    except DegenerateInputError as e:
        logger.warning(f"[passo {env_step}] {e}")
        bias = e.stats
    qdist = q_distribution_from_values(q_all)

    critic_loss, actor_loss, alpha = losses
    return MetricRecord(
        env_step=env_step,
        episode_return=math.fsum(returns) / len(returns),
        avg_q_prediction=float(np.mean(q_all)),
        mean_bias=bias.mean_bias,
        mean_normalized_bias=bias.mean_normalized_bias,
        std_normalized_bias=bias.std_normalized_bias,
        critic_loss=critic_loss,
        actor_loss=actor_loss,
        alpha=alpha if not math.isnan(alpha) else agent.temperature.alpha,
        max_q_quartiles=qdist.max_quartiles,
        min_q_quartiles=qdist.min_quartiles,
        max_q_outliers=qdist.max_outliers,
        min_q_outliers=qdist.min_outliers,
    )


# ----------------------------------------------------------------------
# Execução
# ----------------------------------------------------------------------
def prepare_run_dir(config: RunConfig, output_root: str | None = None) -> str:
    run_dir = os.path.join(output_root or config.output_dir, run_id(config))
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, CONFIG_FILE), "w", encoding="utf-8") as f:
        f.write(serialize_run_config(config))
    return run_dir


def run_experiment(
    config: RunConfig,
    output_root: str | None = None,
    stop_event: Event | None = None,
    on_record: Callable[[MetricRecord], None] | None = None,
    on_started: Callable[[str], None] | None = None,
) -> RunResult:
    """Treina até total_env_steps (ou até stop_event), avaliando a cada eval_interval passos."""
    with precision(config.precision):
        env = make_env(config.env_name)
        agent = build_agent(config, env.spec)
        world = World.create(env, config.seed)
        rid = run_id(config)
        run_dir = prepare_run_dir(config, output_root)
        writer = MetricsWriter(run_dir)
        window = _LossWindow()
        records: list[MetricRecord] = []
        started = time.monotonic()
        logger.info(
            f"Execução {rid} iniciada: {config.variant.value} em {config.env_name}, "
            f"N={config.ensemble_size} M={config.subset_size} G={config.utd_ratio} seed={config.seed}"
        )
        if on_started:
            on_started(rid)

        def emit() -> None:
            record = evaluate(agent, config, agent.counters.env_steps, window.flush())
            record = replace(record, wall_time=time.monotonic() - started)
            writer.write(record)
            records.append(record)
            logger.info(
                f"[{rid}] passo {record.env_step}: retorno={record.episode_return:.4g} "
                f"viés_norm={record.mean_normalized_bias:.4g}±{record.std_normalized_bias:.4g} α={record.alpha:.4g}"
            )
            if on_record:
                on_record(record)

        stopped = False
        while agent.counters.env_steps < config.total_env_steps:
            if stop_event is not None and stop_event.is_set():
                stopped = True
                logger.info(f"Execução {rid} interrompida no passo {agent.counters.env_steps}.")
                break
            try:
                metrics = train_step(world, agent, config)
            except LabError as e:
                e.add_note(f"execução {rid}, passo {agent.counters.env_steps}")
                raise
            window.add(metrics)
            if agent.counters.env_steps % config.eval_interval == 0:
                emit()

        # avaliação final quando total_env_steps não é múltiplo de eval_interval
        if not stopped and agent.counters.env_steps % config.eval_interval != 0:
            emit()

        save_checkpoint(os.path.join(run_dir, CHECKPOINT_FILE), agent, config)
        logger.info(f"Execução {rid} finalizada ({agent.counters.env_steps} passos, {len(records)} avaliações).")
        return RunResult(rid, run_dir, records, agent.counters, stopped)


# ----------------------------------------------------------------------
# Sweep
# ----------------------------------------------------------------------
def parse_axes(specs: list[str]) -> dict[str, list[str]]:
    """['group_size=2,4,8', 'd_model=256,512'] -> {'group_size': [...], 'd_model': [...]}"""
    axes: dict[str, list[str]] = {}
    for spec in specs:
        key, sep, values = spec.partition("=")
        key = key.strip()
        items = [v.strip() for v in values.split(",") if v.strip()]
        if not sep or not key or not items:
            raise ParameterError(f"eixo de sweep inválido {spec!r} (use chave=v1,v2,...)")
        if key in axes:
            raise ParameterError(f"eixo de sweep repetido: {key}")
        axes[key] = items
    return axes


def sweep_cells(base: RunConfig, axes: dict[str, list]) -> list[tuple[dict, RunConfig]]:
    """Produto cartesiano dos eixos; a célula i usa seed = base.seed + i (se seed não for eixo)."""
    keys = list(axes)
    cells = []
    for i, combo in enumerate(itertools.product(*(axes[k] for k in keys))):
        overrides = dict(zip(keys, combo))
        if "seed" not in overrides:
            overrides["seed"] = base.seed + i
        cells.append((dict(zip(keys, combo)), with_overrides(base, **overrides)))
    return cells


def _sweep_dir(base: RunConfig, axes: dict[str, list], output_root: str | None) -> str:
    signature = serialize_run_config(base, include_output=False) + repr(sorted(axes.items()))
    digest = hashlib.sha256(signature.encode("utf-8")).hexdigest()[:12]
    return os.path.join(output_root or base.output_dir, f"sweep_{digest}")


def _run_cell(config_text: str, root: str) -> dict:
    """Executa uma célula (também em subprocesso); nunca levanta exceção."""
    try:
        config = parse_run_config(config_text)
        result = run_experiment(config, output_root=root)
        returns = [r.episode_return for r in result.records]
        last = result.records[-1] if result.records else None
        return {
            "run_id": result.run_id,
            "status": "ok",
            "final_env_step": result.counters.env_steps,
            "final_return": last.episode_return if last else math.nan,
            "min_return": min(returns) if returns else math.nan,
            "max_return": max(returns) if returns else math.nan,
            "final_mean_normalized_bias": last.mean_normalized_bias if last else math.nan,
            "final_std_normalized_bias": last.std_normalized_bias if last else math.nan,
        }
    except Exception as e:
        logger.warning(f"Célula de sweep falhou: {e}")
        return {"run_id": None, "status": f"failed: {e}"}


@dataclass
class SweepResult:
    sweep_dir: str
    summary: pd.DataFrame

    @property
    def failed(self) -> int:
        return int((self.summary["status"] != "ok").sum())


def sweep(base: RunConfig, axes: dict[str, list], output_root: str | None = None, workers: int = 1) -> SweepResult:
    """Uma execução por célula do produto cartesiano + summary.csv."""
    cells = sweep_cells(base, axes)
    root = _sweep_dir(base, axes, output_root)
    os.makedirs(root, exist_ok=True)
    logger.info(f"Sweep com {len(cells)} células em {root} (workers={workers})")

    texts = [serialize_run_config(config) for _, config in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, texts, [root] * len(texts)))
    else:
        outcomes = [_run_cell(text, root) for text in texts]

    rows = []
    for i, ((axis_values, config), outcome) in enumerate(zip(cells, outcomes)):
        rows.append({"cell": i, **axis_values, "seed": config.seed, **outcome})
    summary = pd.DataFrame(rows)
    summary.to_csv(os.path.join(root, SUMMARY_FILE), index=False, float_format="%.17g")

    result = SweepResult(root, summary)
    if result.failed:
        logger.warning(f"Sweep terminou com {result.failed} célula(s) com falha.")
    return result


# ----------------------------------------------------------------------
# Compare
# ----------------------------------------------------------------------
def _labels(run_dirs: list[str]) -> list[str]:
    labels, seen = [], {}
    for path in run_dirs:
        name = os.path.basename(os.path.normpath(path))
        seen[name] = seen.get(name, 0) + 1
        labels.append(name if seen[name] == 1 else f"{name}#{seen[name]}")
    return labels


def compare(run_dirs: list[str]) -> pd.DataFrame:
    """
    Tabela alinhada por env_step: retorno e viés normalizado de cada execução,
    mais return_mean e return_spread (max − min entre execuções).

    Execuções em andamento entram com o prefixo já escrito; a tabela
    cobre os passos comuns a todas.
    """
    if not run_dirs:
        raise ParameterError("compare: nenhuma execução informada")
    labels = _labels(run_dirs)
    frames = [read_metrics(os.path.join(path, METRICS_FILE)) for path in run_dirs]

    steps = [tuple(int(s) for s in df["env_step"]) for df in frames]
    common = min(len(s) for s in steps)
    reference = steps[0][:common]
    offending = [label for label, s in zip(labels, steps) if s[:common] != reference]
    if offending:
        raise AlignmentError("cadência de avaliação diferente", [labels[0], *offending])

    table = pd.DataFrame({"env_step": list(reference)})
    for label, df in zip(labels, frames):
        head = df.iloc[:common].reset_index(drop=True)
        table[f"return[{label}]"] = head["episode_return"].astype(float)
        table[f"mean_normalized_bias[{label}]"] = head["mean_normalized_bias"].astype(float)
        table[f"std_normalized_bias[{label}]"] = head["std_normalized_bias"].astype(float)

    returns = table[[f"return[{label}]" for label in labels]]
    table["return_mean"] = returns.mean(axis=1)
    table["return_spread"] = returns.max(axis=1) - returns.min(axis=1)
    return table
