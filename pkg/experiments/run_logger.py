#!/usr/bin/env python3
"""
run_logger.py

Structured JSON-lines log of experiment runs.

Every event goes to ``<out>/run.jsonl``. Failed acceptance checks, config
errors and exceptions also go to ``<out>/failures.jsonl`` and the console.
"""

import json
import logging
import threading
import time
import uuid
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

BUFFER_SIZE = 1000


class EventType(Enum):
    RUN_STARTED = "run_started"
    RUN_FINISHED = "run_finished"
    SEED_COMPLETED = "seed_completed"
    ACCEPTANCE_CHECK = "acceptance_check"
    CONFIG_ERROR = "config_error"
    ERROR = "error"


class Severity(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


@dataclass
class RunEvent:
    event_id: str
    timestamp: datetime
    event_type: EventType
    severity: Severity
    run_id: Optional[str]
    experiment: Optional[str]
    seed: Optional[int]
    parameters: Dict[str, Any]
    elapsed_ms: float
    error_message: Optional[str]
    additional_data: Dict[str, Any]


class RunLogger:
    """JSON-lines event log for one output directory."""

    def __init__(self, log_dir: str = "results"):
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self._setup_logging()
        self._event_buffer: List[RunEvent] = []
        self._buffer_lock = threading.Lock()

    def _setup_logging(self):
        formatter = logging.Formatter("%(message)s")

        self.logger = logging.getLogger("sqpe.run")
        self.logger.setLevel(logging.INFO)
        self.logger.propagate = False
        for handler in self.logger.handlers[:]:
            handler.close()
            self.logger.removeHandler(handler)
        run_handler = logging.FileHandler(self.log_dir / "run.jsonl")
        run_handler.setFormatter(formatter)
        self.logger.addHandler(run_handler)

        self.failure_logger = logging.getLogger("sqpe.failures")
        self.failure_logger.setLevel(logging.WARNING)
        self.failure_logger.propagate = False
        for handler in self.failure_logger.handlers[:]:
            handler.close()
            self.failure_logger.removeHandler(handler)
        failure_handler = logging.FileHandler(self.log_dir / "failures.jsonl")
        failure_handler.setFormatter(formatter)
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.WARNING)
        console_handler.setFormatter(formatter)
        self.failure_logger.addHandler(failure_handler)
        self.failure_logger.addHandler(console_handler)

    def close(self):
        for log in (self.logger, self.failure_logger):
            for handler in log.handlers[:]:
                handler.close()
                log.removeHandler(handler)

    def log_event(self, event_type: EventType, severity: Severity = Severity.LOW,
                  run_id: str = None, experiment: str = None, seed: int = None,
                  parameters: Dict[str, Any] = None, elapsed_ms: float = 0.0,
                  error_message: str = None, additional_data: Dict[str, Any] = None) -> RunEvent:
        event = RunEvent(
            event_id=str(uuid.uuid4()),
            timestamp=datetime.now(timezone.utc),
            event_type=event_type,
            severity=severity,
            run_id=run_id,
            experiment=experiment,
            seed=seed,
            parameters=parameters or {},
            elapsed_ms=elapsed_ms,
            error_message=error_message,
            additional_data=additional_data or {},
        )
        event_json = json.dumps(asdict(event), default=_json_default, ensure_ascii=False)

        self.logger.info(event_json)
        data = event.additional_data
        failed_check = (event_type == EventType.ACCEPTANCE_CHECK and not data.get("passed", True)
                        and data.get("gating", True))
        if failed_check or event_type in (EventType.CONFIG_ERROR, EventType.ERROR) \
                or severity in (Severity.HIGH, Severity.CRITICAL):
            self.failure_logger.warning(event_json)

        with self._buffer_lock:
            self._event_buffer.append(event)
            if len(self._event_buffer) > BUFFER_SIZE:
                self._event_buffer = self._event_buffer[-BUFFER_SIZE:]
        return event

    @contextmanager
    def experiment_context(self, run_id: str, experiment: str, seed: int,
                           parameters: Dict[str, Any] = None):
        """Time one seed of an experiment and log its outcome."""
        start = time.time()
        error = None
        try:
            yield
        except Exception as e:
            error = str(e)
            raise
        finally:
            self.log_event(
                event_type=EventType.ERROR if error else EventType.SEED_COMPLETED,
                severity=Severity.HIGH if error else Severity.LOW,
                run_id=run_id,
                experiment=experiment,
                seed=seed,
                parameters=parameters,
                elapsed_ms=(time.time() - start) * 1000,
                error_message=error,
            )

    def log_acceptance(self, run_id: str, experiment: str, name: str, measured: Any,
                       tolerance: str, passed: bool, gating: bool = True):
        self.log_event(
            event_type=EventType.ACCEPTANCE_CHECK,
            severity=Severity.LOW if passed or not gating else Severity.MEDIUM,
            run_id=run_id,
            experiment=experiment,
            additional_data={"check": name, "measured": measured, "tolerance": tolerance, "passed": passed,
                             "gating": gating},
        )

    def get_recent_events(self, count: int = 100, event_type: EventType = None) -> List[RunEvent]:
        with self._buffer_lock:
            events = self._event_buffer.copy()
        if event_type:
            events = [e for e in events if e.event_type == event_type]
        return sorted(events, key=lambda e: e.timestamp, reverse=True)[:count]

    def summarize(self, run_id: str = None) -> Dict[str, Any]:
        """Event counts per type and the failed acceptance checks."""
        with self._buffer_lock:
            events = [e for e in self._event_buffer if run_id is None or e.run_id == run_id]
        counts: Dict[str, int] = {}
        for event in events:
            counts[event.event_type.value] = counts.get(event.event_type.value, 0) + 1
        failed = [
            e.additional_data.get("check")
            for e in events
            if e.event_type == EventType.ACCEPTANCE_CHECK and not e.additional_data.get("passed", True)
        ]
        errors = [e.error_message for e in events if e.event_type in (EventType.ERROR, EventType.CONFIG_ERROR)]
        return {"run_id": run_id, "counts": counts, "failed_checks": failed, "errors": errors}


def _json_default(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    return str(value)


_run_logger: Optional[RunLogger] = None


def get_run_logger(log_dir: str = None) -> RunLogger:
    """Get the run logger, re-targeting it when a different directory is requested."""
    global _run_logger
    if _run_logger is None or (log_dir is not None and Path(log_dir) != _run_logger.log_dir):
        if _run_logger is not None:
            _run_logger.close()
        _run_logger = RunLogger(log_dir or "results")
    return _run_logger


def new_run_id() -> str:
    return str(uuid.uuid4())
