"""
manager/experiment_manager.py
-----------------------------
Gerencia o ciclo de vida de uma execução de treino em segundo plano.
Controla start, stop, restart, status e acesso às métricas.
"""

import threading
import time
from datetime import datetime

from core.config_loader import get_config_value, resolve_path
from core.errors import ConfigError
from core.logger import logger, set_debug, get_debug_status
from core.run_config import load_run_config
from manager.training_worker import TrainingWorker

STARTUP_TIMEOUT = 3.0


class ExperimentManager:
    """
    Classe de gerenciamento do treino.
    Mantém o worker atual e estatísticas de uso.
    """

    def __init__(self, output_root: str | None = None):
        self.worker: TrainingWorker | None = None
        self.start_time = None
        self.config_path: str | None = None
        self.output_root = output_root
        self._lock = threading.Lock()
        self.stats = {"starts": 0, "stops": 0, "errors": 0}

    # ----------------------------------------------------------------------
    # Controle principal
    # ----------------------------------------------------------------------
    def start_run(self, config_path: str | None = None) -> bool:
        """Carrega a configuração e inicia o treino numa thread."""
        with self._lock:
            if self.worker and self.worker.is_running():
                logger.warning("Tentativa de iniciar treino já em execução.")
                return False

            path = config_path or self.config_path or get_config_value(
                "HARNESS", "default_run_config", "config/runs/pointmass1d_mha_redq.ini"
            )
            try:
                config = load_run_config(resolve_path(path))
            except ConfigError as e:
                self.stats["errors"] += 1
                logger.error(f"Configuração inválida ({path}): {e}")
                return False
            self.config_path = path

            logger.info(f"Iniciando treino com {path}.")
            self.worker = TrainingWorker(config, output_root=self.output_root)
            self.worker.start()

            # --- Aguarda inicialização da thread ---
            deadline = time.time() + STARTUP_TIMEOUT
            while time.time() < deadline:
                if self.worker._startup_error or self.worker.is_running() or not self.worker.is_alive():
                    break
                time.sleep(0.05)

            if self.worker._startup_error:
                self.stats["errors"] += 1
                self.worker = None
                return False

            if not self.worker.is_running() and self.worker.result is None:
                self.stats["errors"] += 1
                logger.error("Treino não iniciou dentro do tempo limite. Encerrando thread por segurança.")
                self.worker.shutdown()
                self.worker = None
                return False

            self.start_time = datetime.now().astimezone()
            self.stats["starts"] += 1
            logger.info(f"Treino {self.worker.run_id} iniciado com sucesso.")
            return True

    def stop_run(self) -> bool:
        """Pede a parada do treino em andamento."""
        with self._lock:
            if not self.worker or not self.worker.is_running():
                logger.warning("Tentativa de parar treino que não está em execução.")
                return False
            self.worker.shutdown()
            self.worker.join(timeout=STARTUP_TIMEOUT)
            self.stats["stops"] += 1
            logger.info("Treino parado manualmente (API ou terminal).")
            return True

    def restart_run(self) -> bool:
        """Para (se necessário) e inicia de novo com a mesma configuração."""
        logger.info("Reiniciando treino.")
        if self.worker and self.worker.is_running():
            self.stop_run()
        return self.start_run()

    # ----------------------------------------------------------------------
    # Status, métricas e debug
    # ----------------------------------------------------------------------
    def get_status(self) -> dict:
        """Retorna o status atual do treino."""
        uptime = None
        if self.start_time:
            uptime = str(datetime.now().astimezone() - self.start_time).split(".")[0]

        return {
            "running": self.worker.is_running() if self.worker else False,
            "uptime": uptime,
            "debug": get_debug_status(),
            "stats": self.stats,
            "config_path": self.config_path,
            "run": self.worker.progress() if self.worker else None,
        }

    def metrics_since(self, env_step: int = 0) -> list[dict] | None:
        """Registros com env_step > `env_step`; None se nenhum treino foi iniciado."""
        if not self.worker:
            return None
        return [r.as_dict() for r in self.worker.records_since(env_step)]

    def set_debug_mode(self, enable: bool) -> bool:
        """Ativa ou desativa modo debug."""
        set_debug(enable)
        return get_debug_status()


# ----------------------------------------------------------------------
# Teste local manual
# ----------------------------------------------------------------------
if __name__ == "__main__":
    manager = ExperimentManager()
    print("Iniciando treino...")
    manager.start_run()

    print("Treino em execução. Aguarde alguns segundos.")
    time.sleep(5)

    print("\nStatus atual:")
    print(manager.get_status())

    print("\nParando treino...")
    manager.stop_run()
    print("Status final:")
    print(manager.get_status())
