"""FastAPI service wrapping the session runner.

Sessions are directories under a data root; each holds the resolved config
and every artifact a run produces (session.jsonl, features.jsonl,
model.json, results.csv). Endpoints are synchronous: desk-scale runs finish
in well under a second of wall time.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..classifier import InsufficientData
from ..config import ConfigError, SessionConfig, load_config
from ..session import ModelMissing, SessionError, SessionRunner
from . import schemas

DEFAULT_DATA_ROOT = "./nirsloop-sessions"


def create_app(data_root: str | os.PathLike | None = None) -> FastAPI:
    root = Path(data_root or os.environ.get("NIRSLOOP_DATA_DIR", DEFAULT_DATA_ROOT))
    app = FastAPI(title="nirsloop", version=__version__)

    def workdir(session_id: str, must_exist: bool = True) -> Path:
        d = root / session_id
        if must_exist and not (d / "config.json").exists():
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return d

    def runner(session_id: str) -> SessionRunner:
        d = workdir(session_id)
        cfg = SessionConfig(raw=json.loads((d / "config.json").read_text()))
        return SessionRunner(cfg, d)

    def info(session_id: str) -> schemas.SessionInfo:
        d = workdir(session_id)
        cfg = json.loads((d / "config.json").read_text())
        return schemas.SessionInfo(
            session_id=session_id,
            seed=int(cfg["seed"]),
            workdir=str(d),
            calibrated=(d / "calibration.json").exists(),
            trained=(d / "model.json").exists(),
            results_with_feedback=(d / "results_feedback_on.json").exists(),
            results_without_feedback=(d / "results_feedback_off.json").exists(),
            detection_evaluated=(d / "detection.json").exists(),
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/sessions", response_model=schemas.SessionInfo)
    def create_session(req: schemas.CreateSessionRequest):
        try:
            cfg = load_config(overrides=req.config, seed=req.seed)
        except ConfigError as e:
            raise HTTPException(status_code=422, detail=str(e))
        d = workdir(req.session_id, must_exist=False)
        d.mkdir(parents=True, exist_ok=True)
        (d / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
        return info(req.session_id)

    @app.get("/sessions", response_model=list[schemas.SessionInfo])
    def list_sessions():
        if not root.exists():
            return []
        out = []
        for d in sorted(root.iterdir()):
            if (d / "config.json").exists():
                out.append(info(d.name))
        return out

    @app.get("/sessions/{session_id}", response_model=schemas.SessionInfo)
    def get_session(session_id: str):
        return info(session_id)

    @app.post("/sessions/{session_id}/calibrate", response_model=schemas.CalibrationResponse)
    def calibrate(session_id: str):
        return runner(session_id).calibrate()

    @app.post("/sessions/{session_id}/train", response_model=schemas.TrainResponse)
    def train(session_id: str):
        try:
            return runner(session_id).train()
        except InsufficientData as e:
            raise HTTPException(status_code=409, detail=str(e))

    @app.post("/sessions/{session_id}/run", response_model=schemas.RunResponse)
    def run(session_id: str, req: schemas.RunRequest):
        r = runner(session_id)
        try:
            results = r.run_tests(feedback=req.feedback, phases=req.phases)
        except ModelMissing as e:
            raise HTTPException(status_code=409, detail=str(e))
        except ConfigError as e:
            raise HTTPException(status_code=422, detail=str(e))
        feedback = req.feedback if req.feedback is not None else r.cfg.biofeedback
        return schemas.RunResponse(
            feedback=feedback,
            phases=[schemas.PhaseResultModel(**p.to_dict()) for p in results],
        )

    @app.post("/sessions/{session_id}/detect-eval", response_model=schemas.DetectEvalResponse)
    def detect_eval(session_id: str, req: schemas.DetectEvalRequest):
        try:
            return runner(session_id).detection_eval(repetitions=req.repetitions)
        except ConfigError as e:
            raise HTTPException(status_code=422, detail=str(e))
        except InsufficientData as e:
            raise HTTPException(status_code=409, detail=str(e))

    @app.get("/sessions/{session_id}/report", response_model=schemas.ReportResponse)
    def report(session_id: str):
        try:
            return runner(session_id).report()
        except SessionError as e:
            raise HTTPException(status_code=409, detail=str(e))

    return app


app = create_app()
