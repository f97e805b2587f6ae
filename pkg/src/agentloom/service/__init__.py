from .advantages import ESTIMATORS, GroupTooSmall, compute_advantages, mean_baseline_exact
from .app import BindError, ServiceHandle, ServiceSettings, create_app, default_settings, serve
from .jobs import (
    BatchItem,
    JobManager,
    JobNotDone,
    JobNotFound,
    JobStore,
    JobTask,
    RolloutJob,
    TrainingBatch,
    job_from_request,
)
from .sessions import NotAwaitingUser, SessionManager, SessionNotFound, SessionState

__all__ = [
    "ESTIMATORS",
    "BatchItem",
    "BindError",
    "GroupTooSmall",
    "JobManager",
    "JobNotDone",
    "JobNotFound",
    "JobStore",
    "JobTask",
    "NotAwaitingUser",
    "RolloutJob",
    "ServiceHandle",
    "ServiceSettings",
    "SessionManager",
    "SessionNotFound",
    "SessionState",
    "TrainingBatch",
    "compute_advantages",
    "create_app",
    "default_settings",
    "job_from_request",
    "mean_baseline_exact",
    "serve",
]
