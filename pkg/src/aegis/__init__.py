"""Controllable generative-content pipeline with integrated watermark
protection and tamper-evident provenance."""

from .generator import Component, GenConfig
from .orchestrator import Intervention, Session, SessionConfig, run, start_session, step
from .planner import Plan, PlanEdit, PromptSpec, Subtask
from .provenance import Ledger, verify
from .raster import Image, read_ppm, write_ppm
from .reviewer import ReviewPolicy, ReviewScore
from .watermark import DetectionResult, WatermarkConfig, WatermarkPayload, build_payload, detect, embed

__version__ = "0.1.0"

__all__ = [
    "Component",
    "DetectionResult",
    "GenConfig",
    "Image",
    "Intervention",
    "Ledger",
    "Plan",
    "PlanEdit",
    "PromptSpec",
    "ReviewPolicy",
    "ReviewScore",
    "Session",
    "SessionConfig",
    "Subtask",
    "WatermarkConfig",
    "WatermarkPayload",
    "build_payload",
    "detect",
    "embed",
    "read_ppm",
    "run",
    "start_session",
    "step",
    "verify",
    "write_ppm",
    "__version__",
]
