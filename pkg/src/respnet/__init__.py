"""respnet: event-sourced responsibility management.

Weighted duty lists across a company/enterprise/station hierarchy, an
append-only score-event ledger folded into clamped monthly scores, IoT
threshold deductions, periodic duty sweeps, immutable daily snapshots, and
reminder/accountability/safety-band reporting over HTTP and a CLI.
"""

from .config import ServiceConfig, load_config
from .model import GraphStore, PeriodicRule, Role, ScoreMethod
from .scoring import (
    Band,
    BandPolicy,
    DailySnapshot,
    EventKind,
    EventSource,
    Notification,
    ScoreEvent,
    ScoringEngine,
    classify_band,
)
from .scheduler import DutyInstance, DutyScheduler, DutyStatus
from .simulate import ScenarioSpec, run_scenario
from .storage import Store
from .telemetry import Comparator, DeductionMode, SensorReading, TelemetryEngine, ThresholdRule

__all__ = [
    "Band",
    "BandPolicy",
    "Comparator",
    "DailySnapshot",
    "DeductionMode",
    "DutyInstance",
    "DutyScheduler",
    "DutyStatus",
    "EventKind",
    "EventSource",
    "GraphStore",
    "Notification",
    "PeriodicRule",
    "Role",
    "ScenarioSpec",
    "ScoreEvent",
    "ScoreMethod",
    "ScoringEngine",
    "SensorReading",
    "ServiceConfig",
    "Store",
    "TelemetryEngine",
    "ThresholdRule",
    "classify_band",
    "load_config",
    "run_scenario",
]

__version__ = "0.1.0"
