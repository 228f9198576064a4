"""Request/response models for the session service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class CreateSessionRequest(BaseModel):
    session_id: str = Field(..., pattern=r"^[A-Za-z0-9._-]+$")
    seed: Optional[int] = None
    config: Optional[dict] = None


class SessionInfo(BaseModel):
    session_id: str
    seed: int
    workdir: str
    calibrated: bool
    trained: bool
    results_with_feedback: bool
    results_without_feedback: bool
    detection_evaluated: bool


class CalibrationResponse(BaseModel):
    i0: dict[str, float]
    ambient: dict[str, float]


class TrainResponse(BaseModel):
    training_samples: int
    class_counts: dict[str, int]
    pca_dimensions: int
    leave_one_out_accuracy: float
    model_path: str


class RunRequest(BaseModel):
    feedback: Optional[bool] = None
    phases: Optional[int] = Field(None, ge=1)


class GroupRecord(BaseModel):
    t_end: int
    label: int
    stressful: bool


class PhaseResultModel(BaseModel):
    phase_id: int
    stressed_fraction: float
    answer_accuracy: float
    truth_stressed_fraction: float
    groups: list[GroupRecord]


class RunResponse(BaseModel):
    feedback: bool
    phases: list[PhaseResultModel]


class DetectEvalRequest(BaseModel):
    repetitions: Optional[int] = Field(None, ge=2)


class ConfusionMatrixModel(BaseModel):
    tp: int
    fn: int
    fp: int
    tn: int


class DetectEvalResponse(BaseModel):
    repetitions: int
    groups_scored: int
    confusion_matrix: ConfusionMatrixModel
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    undefined: list[str]


class ReportRow(BaseModel):
    phase: str
    stress_reduction_pct: Optional[float]
    performance_enhancement_pp: float


class ReportResponse(BaseModel):
    arms: dict[str, list[ReportRow]]
    csv: str
