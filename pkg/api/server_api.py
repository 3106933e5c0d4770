"""
api/server_api.py
-----------------
API REST de acompanhamento do treino.
Usa FastAPI; só lê métricas e controla start/stop da execução.
"""

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.encoders import jsonable_encoder
from fastapi.responses import JSONResponse
import uvicorn

from core.logger import logger

app = FastAPI(title="Ensemble Q-Learning Lab API", version="1.0.0")


def get_manager():
    m = getattr(app.state, "manager", None)
    if not m:
        raise HTTPException(status_code=500, detail="Manager não inicializado")
    return m


@app.get("/status")
def get_status():
    """Retorna o status atual do treino."""
    m = get_manager()
    status = m.get_status()
    return JSONResponse(content=jsonable_encoder(status))


@app.post("/start")
def start_run(data: dict | None = Body(default=None)):
    """
    Inicia um treino. Corpo opcional:
    {
        "config_path": "config/runs/pointmass1d_redq_base.ini"
    }
    """
    m = get_manager()
    config_path = (data or {}).get("config_path")
    ok = m.start_run(config_path)
    if ok:
        return {"message": "Treino iniciado com sucesso.", "run_id": m.worker.run_id}
    return JSONResponse(status_code=400, content={"error": "Falha ao iniciar treino."})


@app.post("/stop")
def stop_run():
    """Para o treino em andamento."""
    m = get_manager()
    ok = m.stop_run()
    if ok:
        return {"message": "Treino parado com sucesso."}
    return JSONResponse(status_code=400, content={"error": "Falha ao parar treino."})


@app.post("/restart")
def restart_run():
    """Reinicia o treino com a última configuração."""
    m = get_manager()
    ok = m.restart_run()
    if ok:
        return {"message": "Treino reiniciado com sucesso."}
    return JSONResponse(status_code=400, content={"error": "Falha ao reiniciar treino."})


@app.post("/debug/on")
def enable_debug():
    """Ativa modo debug."""
    m = get_manager()
    m.set_debug_mode(True)
    return {"message": "Modo debug ativado."}


@app.post("/debug/off")
def disable_debug():
    """Desativa modo debug."""
    m = get_manager()
    m.set_debug_mode(False)
    return {"message": "Modo debug desativado."}


# --------------------------------------------------------------
# Métricas a partir de um passo de ambiente
# --------------------------------------------------------------
@app.get("/metrics")
def get_metrics(since_step: int = Query(default=0, ge=0)):
    """Registros de avaliação com env_step > since_step."""
    m = get_manager()
    records = m.metrics_since(since_step)
    if records is None:
        return JSONResponse(status_code=503, content={"error": "Nenhum treino foi iniciado"})
    return JSONResponse(content=jsonable_encoder({"since_step": since_step, "records": records}))


if __name__ == "__main__":
    from manager.experiment_manager import ExperimentManager

    app.state.manager = ExperimentManager()
    logger.info("Iniciando API REST do laboratório (porta 8000)...")
    uvicorn.run(app, host="0.0.0.0", port=8000, reload=False)
