"""Progress of a study run, collected from the runner and polled by the CLI."""

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from threading import Lock
from typing import Callable, List, Optional, Tuple


class StudyStage(Enum):
    INITIALIZING = "initializing"
    SCENARIO = "scenario"
    DISPATCH = "dispatch"
    LOADFLOW = "loadflow"
    REINFORCEMENT = "reinforcement"
    PERIODS = "periods"
    OPF = "opf"
    FLEXIBILITY = "flexibility"
    REPORTING = "reporting"
    COMPLETED = "completed"
    FAILED = "failed"


TERMINAL_STAGES = (StudyStage.COMPLETED, StudyStage.FAILED)


@dataclass(frozen=True)
class ProgressUpdate:
    stage: StudyStage
    scenario: str
    message: str
    timestamp: datetime = field(default_factory=datetime.now)
    mode: Optional[str] = None
    error: Optional[str] = None

    @property
    def is_complete(self) -> bool:
        return self.stage in TERMINAL_STAGES

    def line(self) -> str:
        """One console line: ``[s055 with_storage] opf: message``."""
        where = f"{self.scenario} {self.mode}" if self.mode else self.scenario
        return f"[{where}] {self.stage.value}: {self.message}"


class ProgressTracker:
    """Append-only update log; the runner writes, a poller reads by cursor."""

    def __init__(self):
        self._updates: List[ProgressUpdate] = []
        self._lock = Lock()

    def report(self, update: ProgressUpdate) -> None:
        with self._lock:
            self._updates.append(update)

    def get_updates_since(self, cursor: int) -> Tuple[List[ProgressUpdate], int]:
        """Return the updates after ``cursor`` and the cursor to poll from next."""
        with self._lock:
            return self._updates[cursor:], len(self._updates)


def create_progress_callback(tracker: ProgressTracker, default_scenario: str = "study") -> Callable[..., None]:
    """Create the callback a study runner reports through.

    The callback takes ``(stage, message, scenario=None, mode=None, error=None)``;
    updates without a scenario label are filed under ``default_scenario``.
    Unknown stage names are filed as INITIALIZING.
    """
    def callback(stage: str, message: str, scenario: Optional[str] = None,
                 mode: Optional[str] = None, error: Optional[str] = None):
        try:
            study_stage = StudyStage(stage)
        except ValueError:
            study_stage = StudyStage.INITIALIZING

        tracker.report(ProgressUpdate(
            stage=study_stage,
            scenario=scenario or default_scenario,
            message=message,
            mode=mode,
            error=error,
        ))

    return callback
