"""HTTP service wrapping the toolkit: simulation, LQR synthesis, gain
tuning, policy-net training, and benchmark reproduction as JSON endpoints.

All heavy computation stays in the core modules; endpoints validate
requests with pydantic models, run the corresponding pipeline, and return
structured results (rendered CSV text for anything that is a file on the
client side).  The bundled CLI is a thin client of this API.
"""
from __future__ import annotations

import base64
from typing import Literal, Optional, Union

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .control import LqrWeights, solve_care
from .experiments import (
    ExperimentConfig,
    NltaSettings,
    ObjectiveModel,
    PlantParamsModel,
    ReproduceResult,
    RunReport,
    config_json_schema,
    render_trace_csv,
    reproduce,
    run_scenario,
    train_policy_pipeline,
    tune_gains,
)
from .nlta import render_log_csv
from .plant import DivergenceError, linearize, paper_model
from .policy_nn import DEFAULT_DT_NN, save_policy_net


class HealthResponse(BaseModel):
    status: str
    version: str


class SimulateRequest(BaseModel):
    config: ExperimentConfig = ExperimentConfig()
    scenario_name: str = "scenario"


class SimulateResponse(BaseModel):
    report: RunReport
    trace_csv: str


class LqrRequest(BaseModel):
    plant: Union[Literal["paper"], PlantParamsModel] = "paper"
    q_diag: list[float] = [1.0, 1.0, 500.0, 250.0]
    r: float = Field(1.0, gt=0)


class LqrResponse(BaseModel):
    k: list[float]
    p: list[list[float]]
    residual: float
    closed_loop_eig_real: list[float]


class GainsModel(BaseModel):
    kp_theta: float
    ki_theta: float
    kd_theta: float
    kp_x: float
    ki_x: float
    kd_x: float


class TuneRunSummary(BaseModel):
    run_index: int
    best_cost: float
    best_gains: GainsModel


class TuneRequest(BaseModel):
    objective: ObjectiveModel = ObjectiveModel()
    nlta: NltaSettings = NltaSettings()
    seed: int = 0
    include_log: bool = True


class TuneResponse(BaseModel):
    best_gains: GainsModel
    best_cost: float
    runs: list[TuneRunSummary]
    log_csv: Optional[str] = None


class TrainNnRequest(BaseModel):
    seed: int = 0
    dt_nn: float = Field(DEFAULT_DT_NN, gt=0)
    r_nn: float = Field(0.016, gt=0)
    max_epochs: int = Field(200, ge=1)


class TrainingReportModel(BaseModel):
    train_mse: float
    val_mse: float
    test_mse: float
    label_variance: float
    normalized_test_mse: float
    epochs: int
    final_damping: float
    stop_reason: str


class TrainNnResponse(BaseModel):
    report: TrainingReportModel
    net_base64: str


class ReproduceRequest(BaseModel):
    seed: int = 42
    retune: bool = False


def _gains_model(gains) -> GainsModel:
    return GainsModel(kp_theta=gains.kp_theta, ki_theta=gains.ki_theta,
                      kd_theta=gains.kd_theta, kp_x=gains.kp_x,
                      ki_x=gains.ki_x, kd_x=gains.kd_x)


def create_app() -> FastAPI:
    app = FastAPI(title="balancekit", version=__version__,
                  description="Inverted-pendulum balance-system simulation "
                              "and gain-tuning service")

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.get("/schema/config")
    def schema():
        return config_json_schema()

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest):
        try:
            trace, report = run_scenario(req.config, req.scenario_name)
        except DivergenceError as exc:
            raise HTTPException(
                status_code=422,
                detail=f"scenario {req.scenario_name!r} diverged at "
                       f"t = {exc.time!r} s") from exc
        return SimulateResponse(report=report, trace_csv=render_trace_csv(trace))

    @app.post("/lqr", response_model=LqrResponse)
    def lqr(req: LqrRequest):
        if len(req.q_diag) != 4 or any(v < 0 for v in req.q_diag):
            raise HTTPException(status_code=422,
                                detail="q_diag needs 4 nonnegative entries")
        model = paper_model() if req.plant == "paper" else linearize(req.plant.to_params())
        gain = solve_care(model, LqrWeights(np.diag(req.q_diag), req.r))
        closed = model.a - np.outer(model.b, gain.k)
        return LqrResponse(k=gain.k.tolist(), p=gain.p.tolist(),
                           residual=gain.residual,
                           closed_loop_eig_real=sorted(
                               np.real(np.linalg.eigvals(closed)).tolist()))

    @app.post("/tune", response_model=TuneResponse)
    def tune(req: TuneRequest):
        objective = req.objective.to_spec()
        config = req.nlta.to_config(req.seed)
        best, records = tune_gains(objective, config, keep_log=req.include_log)
        best_cost = min(r.best_cost for r in records)
        return TuneResponse(
            best_gains=_gains_model(best),
            best_cost=best_cost,
            runs=[TuneRunSummary(run_index=r.run_index, best_cost=r.best_cost,
                                 best_gains=_gains_model(r.best_gains))
                  for r in records],
            log_csv=render_log_csv(records) if req.include_log else None)

    @app.post("/train-nn", response_model=TrainNnResponse)
    def train_nn(req: TrainNnRequest):
        import io
        import tempfile
        import os

        net, report = train_policy_pipeline(rng_seed=req.seed, dt_nn=req.dt_nn,
                                            r_nn=req.r_nn,
                                            max_epochs=req.max_epochs)
        fd, path = tempfile.mkstemp(suffix=".bin")
        os.close(fd)
        try:
            save_policy_net(net, path)
            with open(path, "rb") as fh:
                blob = fh.read()
        finally:
            os.unlink(path)
        return TrainNnResponse(
            report=TrainingReportModel(**report.__dict__),
            net_base64=base64.b64encode(blob).decode("ascii"))

    @app.post("/reproduce", response_model=ReproduceResult)
    def reproduce_endpoint(req: ReproduceRequest):
        return reproduce(seed=req.seed, retune=req.retune)

    return app


app = create_app()
