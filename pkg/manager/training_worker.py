"""
manager/training_worker.py
--------------------------
Execução de treino em thread própria.

- Guarda os registros de métricas já emitidos (lidos pela API)
- Sinaliza erro de inicialização em `_startup_error`
- shutdown() só pede a parada: o laço verifica o evento entre passos
"""

from datetime import datetime
from threading import Event, Lock, Thread

from core.logger import logger
from core.run_config import RunConfig
from manager.experiment import RunResult, run_experiment
from manager.metrics import MetricRecord


class TrainingWorker(Thread):
    """Uma execução de run_experiment numa thread daemon."""

    def __init__(self, config: RunConfig, output_root: str | None = None):
        super().__init__(daemon=True)

        self._startup_error = None   # exceção antes do primeiro passo
        self._error = None           # exceção durante o treino
        self._running = False
        self._stop_event = Event()
        self._records_lock = Lock()

        self.config = config
        self.output_root = output_root
        self.run_id: str | None = None
        self.started_at: datetime | None = None
        self.records: list[MetricRecord] = []
        self.result: RunResult | None = None

    # ------------------------------------------------------------------
    def run(self):
        try:
            self.result = run_experiment(
                self.config,
                output_root=self.output_root,
                stop_event=self._stop_event,
                on_record=self._on_record,
                on_started=self._on_started,
            )
        except Exception as e:
            if self.run_id is None:
                self._startup_error = e
                logger.error(f"Erro ao preparar execução de treino: {e}")
            else:
                self._error = e
                logger.error(f"Erro na execução {self.run_id}: {e}")
        finally:
            self._running = False
            logger.info("Thread de treino finalizada.")

    def _on_started(self, run_id: str) -> None:
        self.run_id = run_id
        self.started_at = datetime.now().astimezone()
        self._running = True

    def _on_record(self, record: MetricRecord) -> None:
        with self._records_lock:
            self.records.append(record)

    # ------------------------------------------------------------------
    def shutdown(self):
        """Pede a parada cooperativa do laço de treino."""
        if self._running:
            logger.info(f"Solicitando parada da execução {self.run_id}.")
        self._stop_event.set()

    def is_running(self) -> bool:
        return self._running

    def records_since(self, env_step: int) -> list[MetricRecord]:
        with self._records_lock:
            return [r for r in self.records if r.env_step > env_step]

    def progress(self) -> dict:
        """Instantâneo do andamento para /status."""
        with self._records_lock:
            last = self.records[-1] if self.records else None
        return {
            "run_id": self.run_id,
            "variant": self.config.variant.value,
            "env_name": self.config.env_name,
            "total_env_steps": self.config.total_env_steps,
            "records": len(self.records),
            "last_record": last.as_dict() if last else None,
            "error": str(self._error or self._startup_error) if (self._error or self._startup_error) else None,
        }
