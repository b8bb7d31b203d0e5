"""
FastAPI Backend for the Highway Platoon Simulator
Submits single scenario runs and serves their event logs
"""

import logging
from typing import Dict, List, Optional

import uvicorn
from fastapi import BackgroundTasks, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from core.world import SimulationIntegrityError
from services.controllers import ControllerKind
from services.scenario import ScenarioSpec, run_scenario
from services.traffic import TrafficStateKind
from utils.config import ConfigValidator, SimulationParameters, load_env_settings
from utils.storage import RunStore

settings = load_env_settings()

# Configure logging
logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)

app = FastAPI(
    title="Highway Platoon Simulator API",
    description="Runs single subject-vehicle scenarios on the two-lane highway",
    version="1.0.0"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

run_store = RunStore(f"{settings.output_dir}/api_runs")


class RunRequest(BaseModel):
    """One scenario to simulate"""
    controller: str = "OC_LM0"
    state: str = "free"
    vot: float = Field(0.0, ge=0)
    seed: int = Field(2019, ge=0)
    overrides: Dict[str, float] = Field(default_factory=dict)
    network: Optional[List[str]] = None


class RunResponse(BaseModel):
    run_id: str
    status: str


def _execute(run_id: str, request: RunRequest):
    spec = ScenarioSpec(
        controller=ControllerKind(request.controller),
        state=TrafficStateKind(request.state),
        vot=request.vot,
        seed=request.seed,
    )
    params = SimulationParameters().with_overrides(request.overrides)
    run_store.update_meta(run_id, status="running")
    try:
        network = params.network_from_lines(request.network) if request.network else None
        result = run_scenario(spec, params=params, network=network, out_dir=run_store.get_run_dir(run_id))
        run_store.update_meta(run_id, status="finished", summary=result.to_row())
        logger.info(f"✅ Run {run_id} finished")
    except SimulationIntegrityError as e:
        logger.error(f"Run {run_id} failed an integrity check: {str(e)}")
        run_store.update_meta(run_id, status="failed", error=str(e))
    except Exception as e:
        logger.error(f"Error in run {run_id}: {str(e)}")
        run_store.update_meta(run_id, status="failed", error=str(e))


@app.post("/runs", response_model=RunResponse)
async def submit_run(request: RunRequest, background_tasks: BackgroundTasks):
    """
    Submit a scenario run

    Args:
        request: Controller, traffic state, value of time, seed and parameter overrides

    Returns:
        RunResponse with the id to poll
    """
    for is_valid, error_msg in (
        ConfigValidator.validate_controllers([request.controller]),
        ConfigValidator.validate_states([request.state]),
        ConfigValidator.validate_parameter_overrides(request.overrides),
    ):
        if not is_valid:
            raise HTTPException(status_code=400, detail=error_msg)
    if request.network:
        try:
            SimulationParameters().with_overrides(request.overrides).network_from_lines(request.network)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=f"Invalid network: {str(e)}")

    run_id = run_store.create_run(request.model_dump())
    background_tasks.add_task(_execute, run_id, request)
    return RunResponse(run_id=run_id, status="pending")


@app.get("/runs/{run_id}")
async def get_run(run_id: str):
    """Status and summary of a run"""
    if not run_store.exists(run_id):
        raise HTTPException(status_code=404, detail="Run not found")
    return run_store.read_meta(run_id)


@app.get("/runs/{run_id}/events")
async def get_events(run_id: str, kind: Optional[str] = None) -> Dict[str, List[str]]:
    """
    Event log of a finished run

    Args:
        run_id: Run identifier
        kind: Only return events of this kind

    Returns:
        The event lines
    """
    if not run_store.exists(run_id):
        raise HTTPException(status_code=404, detail="Run not found")
    lines = run_store.read_events(run_id)
    if lines is None:
        raise HTTPException(status_code=409, detail="Run has not finished")
    if kind is not None:
        lines = [line for line in lines if line.split("\t")[1:2] == [kind]]
    return {"events": lines}


@app.delete("/runs/{run_id}")
async def delete_run(run_id: str):
    """Remove a run and all its outputs"""
    if not run_store.cleanup_run(run_id):
        raise HTTPException(status_code=404, detail="Run not found")
    return {"message": f"Run {run_id} cleaned up successfully"}


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {"status": "healthy", "controllers": [kind.value for kind in ControllerKind]}


if __name__ == "__main__":
    uvicorn.run(app, host=settings.api_host, port=settings.api_port)
