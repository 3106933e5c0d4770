"""
test_harness.py
---------------
Testes da configuração de execução, de run/sweep/compare e da CLI.
Todas as execuções usam a configuração minúscula do conftest.
"""

import math
import os
import threading

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

import manager.experiment as experiment
from core.errors import AlignmentError, ConfigError, NumericError, ParameterError
from core.run_config import (
    config_hash,
    load_run_config,
    parse_run_config,
    run_id,
    serialize_run_config,
    with_overrides,
)
from main import EXIT_ALIGNMENT, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SWEEP_FAILED, cli
from manager.experiment import (
    CHECKPOINT_FILE,
    CONFIG_FILE,
    SUMMARY_FILE,
    compare,
    parse_axes,
    run_experiment,
    sweep,
    sweep_cells,
)
from manager.metrics import METRIC_COLUMNS, METRICS_FILE, MetricRecord, MetricsWriter, format_value, read_metrics


def _metrics_bytes(run_dir) -> bytes:
    with open(os.path.join(run_dir, METRICS_FILE), "rb") as f:
        return f.read()


def _write_config(path, config) -> str:
    path.write_text(serialize_run_config(config), encoding="utf-8")
    return str(path)


def _record(step: int) -> MetricRecord:
    nan = math.nan
    return MetricRecord(
        env_step=step, episode_return=-1.5, avg_q_prediction=0.5, mean_bias=nan,
        mean_normalized_bias=nan, std_normalized_bias=nan, critic_loss=nan, actor_loss=nan,
        alpha=1.0, wall_time=0.25,
    )


# ----------------------------------------------------------------------
# Configuração de execução
# ----------------------------------------------------------------------
def test_config_round_trip(tiny_config):
    config = tiny_config(target_reduction="mean", alpha_mode="fixed", init_alpha=0.05)
    again = parse_run_config(serialize_run_config(config))
    assert again == config
    assert serialize_run_config(again) == serialize_run_config(config)


def test_preset_files_are_valid():
    presets = os.path.join(os.path.dirname(__file__), "config", "runs")
    for name in sorted(os.listdir(presets)):
        config = load_run_config(os.path.join(presets, name))
        assert 1 <= config.subset_size <= config.ensemble_size
    reference = load_run_config(os.path.join(os.path.dirname(__file__), "config", "run_base.ini"))
    assert reference == parse_run_config("[ENV]\nenv_name = PointMass1D\n")


def test_subset_larger_than_ensemble_reports_line(tiny_config):
    text = serialize_run_config(tiny_config())
    expected_line = text.splitlines().index("subset_size = 2") + 1
    with pytest.raises(ConfigError) as info:
        parse_run_config(text.replace("subset_size = 2", "subset_size = 7"))
    assert info.value.line == expected_line
    assert info.value.key == "subset_size"


def test_heads_must_divide_width(tiny_config):
    with pytest.raises(ConfigError) as info:
        with_overrides(tiny_config(), d_model=10, num_heads=4)
    assert info.value.key == "num_heads"


@pytest.mark.parametrize(
    "text",
    [
        "env_name = PointMass1D\n",
        "[ENV]\nenv_name = PointMass1D\n[ROBOT]\nspeed = 1\n",
        "[ENV]\nenv_name = PointMass1D\nwarp_factor = 9\n",
        "[ENV]\nenv_name = HalfCheetah\n",
        "[TRAINER]\ngamma = 1.5\n",
        "[ENSEMBLE]\nvariant = SAC\n",
    ],
)
def test_invalid_config_text(text):
    with pytest.raises(ConfigError):
        parse_run_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "nao_existe.ini"))


def test_run_id_ignores_output_dir(tiny_config):
    config = tiny_config()
    moved = with_overrides(config, output_dir="/tmp/outro")
    assert run_id(config) == run_id(moved) == config_hash(config)[:12]
    assert run_id(with_overrides(config, seed=1)) != run_id(config)


# ----------------------------------------------------------------------
# Métricas
# ----------------------------------------------------------------------
def test_format_value():
    assert format_value(3) == "3"
    assert format_value(True) == "1"
    assert format_value(None) == "nan"
    assert format_value(float("nan")) == "nan"
    assert float(format_value(0.1)) == 0.1


def test_metrics_writer_and_partial_line(tmp_path):
    writer = MetricsWriter(str(tmp_path))
    for step in (10, 20):
        writer.write(_record(step))
    assert writer.count == 2

    path = tmp_path / METRICS_FILE
    full = read_metrics(str(path))
    assert list(full.columns) == list(METRIC_COLUMNS)
    assert full["env_step"].tolist() == [10, 20]
    assert math.isnan(full["critic_loss"].iloc[0])

    with open(path, "a", encoding="utf-8") as f:
        f.write("30,-1.2,0.")
    assert read_metrics(str(path))["env_step"].tolist() == [10, 20]


def test_read_metrics_header_only(tmp_path):
    MetricsWriter(str(tmp_path))
    assert read_metrics(str(tmp_path / METRICS_FILE)).empty


# ----------------------------------------------------------------------
# run
# ----------------------------------------------------------------------
def test_run_smoke(tiny_config, tmp_path):
    seen = []
    result = run_experiment(tiny_config(), output_root=str(tmp_path), on_record=seen.append)

    assert result.run_dir == os.path.join(str(tmp_path), result.run_id)
    assert [r.env_step for r in result.records] == [20, 40]
    assert seen == result.records
    assert result.counters.env_steps == 40 and not result.stopped
    for name in (CONFIG_FILE, METRICS_FILE, CHECKPOINT_FILE, "timing.csv"):
        assert os.path.exists(os.path.join(result.run_dir, name))

    table = read_metrics(os.path.join(result.run_dir, METRICS_FILE))
    assert table["env_step"].tolist() == [20, 40]
    assert np.isfinite(table["episode_return"]).all()
    assert (table["max_q_q1"] <= table["max_q_q3"]).all()
    assert (table["min_q_median"] <= table["max_q_median"]).all()


def test_config_file_written_is_canonical(tiny_config, tmp_path):
    config = tiny_config()
    result = run_experiment(config, output_root=str(tmp_path))
    assert load_run_config(os.path.join(result.run_dir, CONFIG_FILE)) == config


def test_final_record_when_not_multiple(tiny_config, tmp_path):
    result = run_experiment(tiny_config(total_env_steps=30), output_root=str(tmp_path))
    assert [r.env_step for r in result.records] == [20, 30]


def test_stop_event_before_start(tiny_config, tmp_path):
    stop = threading.Event()
    stop.set()
    result = run_experiment(tiny_config(), output_root=str(tmp_path), stop_event=stop)
    assert result.stopped and result.records == []
    assert os.path.exists(os.path.join(result.run_dir, CHECKPOINT_FILE))


def test_metrics_byte_identical_across_runs(tiny_config, tmp_path):
    config = tiny_config(variant="MHA_DROQ", dropout_rate=0.1)
    a = run_experiment(config, output_root=str(tmp_path / "a"))
    b = run_experiment(config, output_root=str(tmp_path / "b"))
    assert a.run_id == b.run_id
    assert _metrics_bytes(a.run_dir) == _metrics_bytes(b.run_dir)


# ----------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------
def test_parse_axes():
    assert parse_axes(["group_size=2,4,8", " d_model = 8, 16 "]) == {
        "group_size": ["2", "4", "8"],
        "d_model": ["8", "16"],
    }


@pytest.mark.parametrize("specs", [["group_size"], ["=2,4"], ["group_size="], ["seed=1", "seed=2"]])
def test_parse_axes_rejects(specs):
    with pytest.raises(ParameterError):
        parse_axes(specs)


def test_sweep_cells_seeds(tiny_config):
    base = tiny_config(seed=5)
    cells = sweep_cells(base, {"group_size": ["2", "4"]})
    assert [c.seed for _, c in cells] == [5, 6]
    assert [c.group_size for _, c in cells] == [2, 4]
    seeded = sweep_cells(base, {"seed": ["3", "9"]})
    assert [c.seed for _, c in seeded] == [3, 9]


def test_sweep_cell_invalid_combination(tiny_config):
    with pytest.raises(ConfigError):
        sweep_cells(tiny_config(), {"subset_size": ["2", "9"]})


def test_sweep_grid(tiny_config, tmp_path):
    base = tiny_config()
    result = sweep(base, parse_axes(["group_size=2,4,8", "d_model=8,16"]), output_root=str(tmp_path))

    summary = result.summary
    assert len(summary) == 6 and result.failed == 0
    assert sorted(zip(summary["group_size"], summary["d_model"])) == sorted(
        (g, d) for g in ("2", "4", "8") for d in ("8", "16")
    )
    assert os.path.exists(os.path.join(result.sweep_dir, SUMMARY_FILE))
    for _, row in summary.iterrows():
        table = read_metrics(os.path.join(result.sweep_dir, row["run_id"], METRICS_FILE))
        assert row["final_env_step"] == 40
        assert row["min_return"] == table["episode_return"].min()
        assert row["max_return"] == table["episode_return"].max()
        assert row["final_return"] == table["episode_return"].iloc[-1]

    on_disk = pd.read_csv(os.path.join(result.sweep_dir, SUMMARY_FILE))
    np.testing.assert_array_equal(on_disk["max_return"].to_numpy(), summary["max_return"].to_numpy())


def test_single_cell_sweep_matches_plain_run(tiny_config, tmp_path):
    base = tiny_config()
    plain = run_experiment(base, output_root=str(tmp_path / "plain"))
    result = sweep(base, {"group_size": [str(base.group_size)]}, output_root=str(tmp_path / "sweep"))
    assert result.summary["run_id"].tolist() == [plain.run_id]
    cell_dir = os.path.join(result.sweep_dir, plain.run_id)
    assert _metrics_bytes(cell_dir) == _metrics_bytes(plain.run_dir)


def test_failed_cell_does_not_stop_sweep(tiny_config, tmp_path, monkeypatch):
    real = experiment.run_experiment

    def flaky(config, output_root=None, **kwargs):
        if config.group_size == 4:
            raise NumericError("perda não finita")
        return real(config, output_root=output_root, **kwargs)

    monkeypatch.setattr(experiment, "run_experiment", flaky)
    result = sweep(tiny_config(), {"group_size": ["2", "4", "8"]}, output_root=str(tmp_path))
    assert result.failed == 1
    statuses = dict(zip(result.summary["group_size"], result.summary["status"]))
    assert statuses["2"] == "ok" and statuses["8"] == "ok"
    assert statuses["4"].startswith("failed:")


# ----------------------------------------------------------------------
# compare
# ----------------------------------------------------------------------
def test_compare_with_itself(tiny_config, tmp_path):
    run = run_experiment(tiny_config(), output_root=str(tmp_path))
    table = compare([run.run_dir, run.run_dir])
    label = run.run_id
    assert f"return[{label}]" in table.columns and f"return[{label}#2]" in table.columns
    assert (table["return_spread"] == 0.0).all()
    assert table["env_step"].tolist() == [20, 40]


def test_compare_two_seeds(tiny_config, tmp_path):
    runs = [run_experiment(tiny_config(seed=s), output_root=str(tmp_path)) for s in (0, 1)]
    table = compare([r.run_dir for r in runs])
    columns = [f"return[{r.run_id}]" for r in runs]
    assert table[columns].notna().all().all()
    np.testing.assert_allclose(table["return_mean"], table[columns].mean(axis=1), atol=1e-12)
    np.testing.assert_allclose(
        table["return_spread"], table[columns].max(axis=1) - table[columns].min(axis=1), atol=1e-12
    )


def test_compare_misaligned(tiny_config, tmp_path):
    a = run_experiment(tiny_config(), output_root=str(tmp_path))
    b = run_experiment(tiny_config(eval_interval=10), output_root=str(tmp_path))
    with pytest.raises(AlignmentError) as info:
        compare([a.run_dir, b.run_dir])
    assert b.run_id in info.value.runs


def test_compare_empty():
    with pytest.raises(ParameterError):
        compare([])


# ----------------------------------------------------------------------
# CLI
# ----------------------------------------------------------------------
def test_cli_validate_config(tiny_config, tmp_path):
    runner = CliRunner()
    good = _write_config(tmp_path / "good.ini", tiny_config())
    result = runner.invoke(cli, ["validate-config", good])
    assert result.exit_code == 0 and "ok" in result.output

    bad = tmp_path / "bad.ini"
    bad.write_text(serialize_run_config(tiny_config()).replace("subset_size = 2", "subset_size = 7"))
    result = runner.invoke(cli, ["validate-config", str(bad)])
    assert result.exit_code == EXIT_CONFIG


def test_cli_run_and_compare(tiny_config, tmp_path):
    runner = CliRunner()
    out = tmp_path / "out"
    path = _write_config(tmp_path / "run.ini", tiny_config())
    result = runner.invoke(cli, ["run", path, "--output-dir", str(out)])
    assert result.exit_code == 0, result.output
    run_dir = out / run_id(tiny_config())
    assert (run_dir / METRICS_FILE).exists()

    table_path = tmp_path / "cmp.csv"
    result = runner.invoke(cli, ["compare", str(run_dir), str(run_dir), "--output", str(table_path)])
    assert result.exit_code == 0
    assert (pd.read_csv(table_path)["return_spread"] == 0.0).all()


def test_cli_compare_misaligned(tiny_config, tmp_path):
    a = run_experiment(tiny_config(), output_root=str(tmp_path))
    b = run_experiment(tiny_config(eval_interval=10), output_root=str(tmp_path))
    result = CliRunner().invoke(cli, ["compare", a.run_dir, b.run_dir])
    assert result.exit_code == EXIT_ALIGNMENT


def test_cli_numeric_failure(tiny_config, tmp_path, monkeypatch):
    def broken(config, output_root=None, **kwargs):
        raise NumericError("NaN na perda do crítico")

    monkeypatch.setattr(experiment, "run_experiment", broken)
    path = _write_config(tmp_path / "run.ini", tiny_config())
    result = CliRunner().invoke(cli, ["run", path, "--output-dir", str(tmp_path)])
    assert result.exit_code == EXIT_NUMERIC


def test_cli_sweep_reports_failed_cell(tiny_config, tmp_path, monkeypatch):
    real = experiment.run_experiment

    def flaky(config, output_root=None, **kwargs):
        if config.d_model == 16:
            raise NumericError("perda não finita")
        return real(config, output_root=output_root, **kwargs)

    monkeypatch.setattr(experiment, "run_experiment", flaky)
    path = _write_config(tmp_path / "base.ini", tiny_config())
    runner = CliRunner()
    result = runner.invoke(cli, ["sweep", path, "--axis", "d_model=8,16", "--output-dir", str(tmp_path), "--workers", "1"])
    assert result.exit_code == EXIT_SWEEP_FAILED

    result = runner.invoke(cli, ["sweep", path, "--axis", "d_model=8", "--output-dir", str(tmp_path), "--workers", "1"])
    assert result.exit_code == 0



def test_cli_sweep_bad_axis(tiny_config, tmp_path):
    path = _write_config(tmp_path / "base.ini", tiny_config())
    result = CliRunner().invoke(cli, ["sweep", path, "--axis", "group_size", "--workers", "1"])
    assert result.exit_code == EXIT_CONFIG

