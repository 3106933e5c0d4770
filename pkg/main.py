"""
main.py
-------
Ponto de entrada do laboratório.

Comandos:
- run              treina uma configuração e grava métricas + checkpoint
- sweep            uma execução por célula do produto cartesiano dos eixos
- compare          tabela alinhada de várias execuções
- validate-config  só valida o arquivo de configuração
- serve            sobe a API de acompanhamento (FastAPI/uvicorn)

Códigos de saída: 0 ok, 1 célula de sweep com falha, 2 configuração
inválida, 3 erro numérico, 4 cadências incompatíveis no compare.
"""

import signal
import sys

import click

from core.config_loader import get_config_value, load_config
from core.errors import AlignmentError, ConfigError, NumericError, ParameterError
from core.logger import logger, set_debug

EXIT_SWEEP_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ALIGNMENT = 4


def _fail(message: str, code: int):
    click.echo(f"erro: {message}", err=True)
    sys.exit(code)


@click.group()
@click.option("--debug", is_flag=True, help="Ativa logs em nível DEBUG.")
def cli(debug):
    """Laboratório de Q-learning em ensemble (REDQ, DroQ, MHA)."""
    if debug:
        set_debug(True)


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--output-dir", default=None, help="Sobrepõe output_dir da configuração.")
def run(config_path, output_dir):
    """Executa um treino completo."""
    from core.run_config import load_run_config
    from manager.experiment import run_experiment

    try:
        config = load_run_config(config_path)
        result = run_experiment(config, output_root=output_dir)
    except ConfigError as e:
        _fail(f"{config_path}: {e}", EXIT_CONFIG)
    except NumericError as e:
        notes = "; ".join(getattr(e, "__notes__", []))
        _fail(f"{e} ({notes})" if notes else str(e), EXIT_NUMERIC)
    click.echo(f"{result.run_id} {result.run_dir} ({len(result.records)} registros)")


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--axis", "axes", multiple=True, required=True, help="Eixo no formato chave=v1,v2,...")
@click.option("--output-dir", default=None)
@click.option("--workers", type=int, default=None, help="Processos paralelos (padrão: [HARNESS] sweep_workers).")
def sweep(config_path, axes, output_dir, workers):
    """Executa um sweep sobre o produto cartesiano dos eixos."""
    from core.run_config import load_run_config
    from manager.experiment import parse_axes, sweep as run_sweep

    if workers is None:
        workers = int(get_config_value("HARNESS", "sweep_workers", 1))
    try:
        base = load_run_config(config_path)
        result = run_sweep(base, parse_axes(list(axes)), output_root=output_dir, workers=workers)
    except ConfigError as e:
        _fail(f"{config_path}: {e}", EXIT_CONFIG)
    except ParameterError as e:
        _fail(str(e), EXIT_CONFIG)
    click.echo(result.summary.to_string(index=False))
    click.echo(f"\n{result.sweep_dir}")
    if result.failed:
        _fail(f"{result.failed} célula(s) com falha", EXIT_SWEEP_FAILED)


@cli.command()
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--output", "output_path", default=None, help="Grava a tabela em CSV.")
def compare(run_dirs, output_path):
    """Alinha as métricas de várias execuções por env_step."""
    from manager.experiment import compare as compare_runs

    try:
        table = compare_runs(list(run_dirs))
    except AlignmentError as e:
        _fail(str(e), EXIT_ALIGNMENT)
    if output_path:
        table.to_csv(output_path, index=False, float_format="%.17g")
        click.echo(output_path)
    else:
        click.echo(table.to_string(index=False))


@cli.command("validate-config")
@click.argument("config_path", type=click.Path(dir_okay=False))
def validate_config(config_path):
    """Valida um arquivo de configuração de execução."""
    from core.run_config import load_run_config, run_id

    try:
        config = load_run_config(config_path)
    except ConfigError as e:
        _fail(f"{config_path}: {e}", EXIT_CONFIG)
    click.echo(f"ok ({config.variant.value}, run_id {run_id(config)})")


@cli.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(host, port):
    """Sobe a API REST de acompanhamento do treino."""
    import uvicorn

    from api.server_api import app
    from manager.experiment_manager import ExperimentManager

    logger.info("Iniciando serviço de acompanhamento do laboratório.")
    cfg = load_config()
    api_host = host or cfg.get("API", "host", fallback="0.0.0.0")
    api_port = port or cfg.getint("API", "port", fallback=8000)

    manager = ExperimentManager()
    app.state.manager = manager

    def handle_shutdown(sig, frame):
        logger.info(f"Sinal recebido ({sig}). Encerrando serviço.")
        manager.stop_run()
        sys.exit(0)

    signal.signal(signal.SIGTERM, handle_shutdown)
    signal.signal(signal.SIGINT, handle_shutdown)

    uvicorn.run(app, host=api_host, port=api_port, log_level="info")


if __name__ == "__main__":
    cli()
